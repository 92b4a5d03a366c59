import numpy as np
import pytest

from aerotrack.corridor import Corridor, build_corridor
from aerotrack.errors import BarrierDomainViolated, OutOfDomain, SingularSystem
from aerotrack.grid import Cube, OccupancyGrid
from aerotrack.kino_search import KinoState, SearchWeights, search
from aerotrack.perception import TargetObservation
from aerotrack.prediction import fit_predicted_trajectory
from aerotrack.traj_opt import (
    BoundaryConditions,
    OptWeights,
    PiecewiseTrajectory,
    cost_and_gradient,
    inner_trajectory,
    optimize,
)


def chain_corridor(n_cubes=4, span=2.0, overlap=0.8, size=1.6):
    """Axis-aligned cube chain marching along +x."""
    cubes = []
    x = 0.0
    for _ in range(n_cubes):
        cubes.append(Cube((x, 0.0, 0.0), (x + size, size, size)))
        x += size - overlap
    return Corridor(cubes)


class TestInnerTrajectory:
    def test_rest_to_rest_classic_quintic(self):
        p0 = np.array([0.0, 0.0, 0.0])
        p1 = np.array([2.0, -1.0, 0.5])
        T = 3.0
        traj = inner_trajectory([p0, p1], [T], BoundaryConditions.rest_to_rest(p0, p1))
        for t in np.linspace(0, T, 40):
            s = t / T
            ref = p0 + (p1 - p0) * (10 * s**3 - 15 * s**4 + 6 * s**5)
            assert np.allclose(traj.sample(t)[0], ref, atol=1e-9)

    def test_collinear_matches_single_piece(self):
        # waypoints on a line with proportional timing: same jerk cost as the
        # single quintic across the whole interval
        p0 = np.zeros(3)
        p1 = np.array([4.0, 0.0, 0.0])
        bc = BoundaryConditions.rest_to_rest(p0, p1)
        single = inner_trajectory([p0, p1], [2.0], bc)
        multi = inner_trajectory(
            [p0, 0.25 * p1, 0.5 * p1, p1], [0.5, 0.5, 1.0], bc)
        # the multi-piece solution can only do as well or worse; with the
        # waypoints taken from the single-piece optimum it matches it
        way = [p0, single.sample(0.7)[0], single.sample(1.3)[0], p1]
        matched = inner_trajectory(way, [0.7, 0.6, 0.7], bc)
        assert matched.jerk_cost() == pytest.approx(single.jerk_cost(), abs=1e-9)
        assert multi.jerk_cost() >= single.jerk_cost() - 1e-9

    def test_boundary_hit_exactly(self):
        bc = BoundaryConditions(
            p0=(0, 0, 0), v0=(1, 0, 0), a0=(0, 1, 0),
            p1=(3, 1, 1), v1=(0, -1, 0), a1=(0, 0, 0))
        traj = inner_trajectory([(0, 0, 0), (1.5, 0.4, 0.6), (3, 1, 1)], [1.0, 1.2], bc)
        p, v, a, _ = traj.sample(0.0)
        assert np.allclose(p, bc.p0) and np.allclose(v, bc.v0) and np.allclose(a, bc.a0)
        p, v, a, _ = traj.sample(traj.duration)
        assert np.allclose(p, bc.p1) and np.allclose(v, bc.v1) and np.allclose(a, bc.a1)

    def test_junction_continuity(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = rng.integers(2, 6)
            way = np.cumsum(rng.uniform(-1, 1, (n + 1, 3)), axis=0)
            T = rng.uniform(0.5, 2.0, n)
            bc = BoundaryConditions(way[0], rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3),
                                    way[-1], rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
            traj = inner_trajectory(way, T, bc)
            assert traj.junction_mismatch() < 1e-9

    def test_nonpositive_duration_rejected(self):
        bc = BoundaryConditions.rest_to_rest((0, 0, 0), (1, 0, 0))
        with pytest.raises(SingularSystem):
            inner_trajectory([(0, 0, 0), (1, 0, 0)], [-1.0], bc)


class TestSample:
    def test_out_of_domain(self):
        bc = BoundaryConditions.rest_to_rest((0, 0, 0), (1, 0, 0))
        traj = inner_trajectory([(0, 0, 0), (1, 0, 0)], [1.0], bc)
        with pytest.raises(OutOfDomain):
            traj.sample(1.5)

    def test_derivatives_match_finite_differences(self):
        bc = BoundaryConditions(
            p0=(0, 0, 0), v0=(0.5, 0, 0), a0=(0, 0.5, 0),
            p1=(2, 1, 0), v1=(0, 0, 0), a1=(0, 0, 0))
        traj = inner_trajectory([(0, 0, 0), (1, 0.5, 0.2), (2, 1, 0)], [1.0, 1.5], bc)
        eps = 1e-6
        for t in np.linspace(0.1, traj.duration - 0.1, 25):
            p_m = traj.sample(t - eps)[0]
            p_p = traj.sample(t + eps)[0]
            v_m = traj.sample(t - eps)[1]
            v_p = traj.sample(t + eps)[1]
            _, v, a, _ = traj.sample(t)
            assert np.allclose((p_p - p_m) / (2 * eps), v, atol=1e-6)
            assert np.allclose((v_p - v_m) / (2 * eps), a, atol=1e-6)


class TestCostAndGradient:
    def test_symmetric_barrier_gradient_zero(self):
        huge = Corridor([Cube((-10, -10, -10), (10, 10, 10)),
                         Cube((-10, -10, -10), (10, 10, 10))])
        bc = BoundaryConditions.rest_to_rest((-1, 0, 0), (1, 0, 0))
        w = OptWeights(rho_v=0.0, rho_a=0.0, rho_t=0.0)
        # only the barrier depends on the waypoint once smoothness is removed:
        # compare barrier gradient at the exact center
        q = np.array([[0.0, 0.0, 0.0]])
        T = np.array([1.0, 1.0])
        _, dq1, _ = cost_and_gradient(q, T, huge, bc, OptWeights(kappa=1.0, rho_t=0.0,
                                                                 rho_v=0.0, rho_a=0.0))
        _, dq0, _ = cost_and_gradient(q, T, huge, bc, OptWeights(kappa=1e-12, rho_t=0.0,
                                                                 rho_v=0.0, rho_a=0.0))
        barrier_part = dq1 - dq0
        assert np.allclose(barrier_part, 0.0, atol=1e-9)

    def test_slow_trajectory_time_penalty_only(self):
        cor = chain_corridor(3)
        bc = BoundaryConditions.rest_to_rest((0.4, 0.8, 0.8), (3.0, 0.8, 0.8))
        w = OptWeights(kappa=1e-12, rho_t=7.0, v_max=50.0, a_max=50.0)
        q = np.array([c.center for c in cor.intersections()])
        T = np.full(3, 4.0)
        J, _, _ = cost_and_gradient(q, T, cor, bc, w)
        J_smooth, _, _ = cost_and_gradient(q, T, cor, bc,
                                           OptWeights(kappa=1e-12, rho_t=0.0,
                                                      v_max=50.0, a_max=50.0))
        assert J - J_smooth == pytest.approx(7.0 * float(np.sum(T)), rel=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        cor = chain_corridor(4)
        inters = cor.intersections()
        bc = BoundaryConditions(
            p0=cor.cubes[0].center + rng.uniform(-0.2, 0.2, 3),
            v0=rng.uniform(-1, 1, 3), a0=rng.uniform(-1, 1, 3),
            p1=cor.cubes[-1].center + rng.uniform(-0.2, 0.2, 3),
            v1=rng.uniform(-1, 1, 3), a1=rng.uniform(-1, 1, 3))
        # tight limits so the soft penalties are active
        w = OptWeights(kappa=0.05, rho_t=5.0, rho_v=40.0, rho_a=40.0,
                       v_max=0.8, a_max=0.8)
        for _ in range(10):
            q = np.array([
                i.center + rng.uniform(-0.3, 0.3, 3) * (i.sides / 2) for i in inters])
            T = rng.uniform(0.6, 2.0, len(cor))
            J, dq, dT = cost_and_gradient(q, T, cor, bc, w)
            eps = 1e-6
            for idx in np.ndindex(q.shape):
                qp = q.copy(); qp[idx] += eps
                qm = q.copy(); qm[idx] -= eps
                fd = (cost_and_gradient(qp, T, cor, bc, w)[0]
                      - cost_and_gradient(qm, T, cor, bc, w)[0]) / (2 * eps)
                assert dq[idx] == pytest.approx(fd, rel=1e-4, abs=1e-6)
            for i in range(len(T)):
                Tp = T.copy(); Tp[i] += eps
                Tm = T.copy(); Tm[i] -= eps
                fd = (cost_and_gradient(q, Tp, cor, bc, w)[0]
                      - cost_and_gradient(q, Tm, cor, bc, w)[0]) / (2 * eps)
                assert dT[i] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_barrier_domain_violation(self):
        cor = chain_corridor(2)
        bc = BoundaryConditions.rest_to_rest(cor.cubes[0].center, cor.cubes[1].center)
        q = np.array([[50.0, 0.5, 0.5]])
        with pytest.raises(BarrierDomainViolated):
            cost_and_gradient(q, np.array([1.0, 1.0]), cor, bc, OptWeights())


class TestOptimize:
    def test_single_cube_matches_analytic_quintic(self):
        cor = Corridor([Cube((0, 0, 0), (4, 2, 2))])
        p0 = np.array([0.5, 1.0, 1.0])
        p1 = np.array([3.5, 1.0, 1.0])
        traj = optimize(cor, BoundaryConditions.rest_to_rest(p0, p1))
        # shape comparison at matched normalized times
        T = traj.duration
        for s in np.linspace(0, 1, 60):
            ref = p0 + (p1 - p0) * (10 * s**3 - 15 * s**4 + 6 * s**5)
            assert np.linalg.norm(traj.sample(s * T)[0] - ref) < 1e-3
        # duration balances jerk against the time weight:
        # d/dT [720 |dp|^2 / T^5 + rho_t T] = 0
        w = OptWeights()
        T_star = (3600.0 * float((p1 - p0) @ (p1 - p0)) / w.rho_t) ** (1.0 / 6.0)
        assert T == pytest.approx(T_star, rel=1e-2)

    def test_descent_and_containment(self):
        cor = chain_corridor(5)
        bc = BoundaryConditions.rest_to_rest((0.4, 0.8, 0.8), (4.4, 0.8, 0.8))
        traj = optimize(cor, bc)
        hist = traj.info["history"]
        assert all(h2 <= h1 + 1e-12 for h1, h2 in zip(hist, hist[1:]))
        assert traj.info["contained"]
        assert traj.junction_mismatch() < 1e-9
        ts = np.arange(0.0, traj.duration, 0.01)
        pts = traj.sample_many(ts)
        assert cor.contains_all(pts, margin=1e-9)

    def test_kappa_sweep_monotone_toward_unconstrained(self):
        # staircase corridor with tight intersections placed off the natural
        # route, so the barrier genuinely binds
        cor = Corridor([
            Cube((0.0, 0.0, 0.0), (2.0, 2.0, 2.0)),
            Cube((1.6, 1.6, 0.0), (3.6, 3.6, 2.0)),
            Cube((3.2, 3.2, 0.0), (5.2, 5.2, 2.0)),
        ])
        bc = BoundaryConditions.rest_to_rest((0.3, 0.9, 1.0), (4.9, 4.3, 1.0))
        opts = dict(grad_tol=1e-7, max_iter=600)
        free = optimize(cor, bc, OptWeights(kappa=1e-10, **opts))
        dists = []
        for kappa in (1.0, 1e-1, 1e-2):
            traj = optimize(cor, bc, OptWeights(kappa=kappa, **opts))
            dists.append(float(np.max(np.abs(traj.waypoints[1:-1] - free.waypoints[1:-1]))))
        assert dists[0] >= dists[1] >= dists[2] - 1e-6
        assert dists[0] > dists[2] + 1e-3  # the sweep actually moves the waypoints

    def test_speed_and_accel_within_soft_bounds(self):
        grid = OccupancyGrid((0, 0, 0), 0.1, (120, 80, 30))
        grid.set_occupied_box((5.0, 0.0, 0.0), (5.4, 5.0, 3.0))
        times = np.linspace(0, 2, 14)
        obs = [TargetObservation(np.array([10.0, 6.0, 1.5]), float(t), True) for t in times]
        traj_pred = fit_predicted_trajectory(obs, t_c=2.0)
        start = KinoState(p=(2.0, 2.0, 1.5), v=(0.5, 0.0, 0.0))
        path = search(start, traj_pred, grid, SearchWeights(freeze_z=True))
        cor = build_corridor(path, grid)
        bc = BoundaryConditions(
            p0=start.p, v0=start.v, a0=np.zeros(3),
            p1=path.end_state.p, v1=path.end_state.v, a1=np.zeros(3))
        w = OptWeights()
        traj = optimize(cor, bc, w)
        speeds, accels = [], []
        for t in np.arange(0, traj.duration, 0.01):
            _, v, a, _ = traj.sample(t)
            speeds.append(np.linalg.norm(v))
            accels.append(np.linalg.norm(a))
        assert max(speeds) <= w.v_max * 1.05
        assert max(accels) <= w.a_max * 1.05

    def test_penalty_ablation_monotone(self):
        cor = chain_corridor(5, size=1.2, overlap=0.5)
        bc = BoundaryConditions.rest_to_rest((0.2, 0.6, 0.6), (3.4, 0.6, 0.6))
        max_speeds = []
        for scale in (1.0, 10.0):
            w = OptWeights(rho_v=100.0 * scale, rho_a=100.0 * scale,
                           v_max=0.8, a_max=1.0)
            traj = optimize(cor, bc, w)
            sp = max(np.linalg.norm(traj.sample(t)[1])
                     for t in np.arange(0, traj.duration, 0.01))
            max_speeds.append(sp)
        assert max_speeds[1] <= max_speeds[0] + 1e-9
