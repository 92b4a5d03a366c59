"""Occlusion-aware kinodynamic path search over acceleration motion primitives.

Best-first search in (position, velocity) space. Each edge applies a constant
acceleration for a fixed duration; accumulated cost trades control effort
against time. The heuristic combines the closed-form energy-time cost of the
double-integrator boundary value problem toward a blended goal state, a time
penalty on the remaining optimal duration, and a visibility penalty on nodes
that cannot see the predicted target position.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import NoPath, StartOccupied
from .grid import OccupancyGrid
from .prediction import PredictedTrajectory

_SCAN_T = np.arange(1e-3, 20.0 + 1e-3, 1e-3)


@dataclass(frozen=True)
class KinoState:
    p: np.ndarray   # position [m]
    v: np.ndarray   # velocity [m/s]
    t: float = 0.0  # time since search start [s]

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True)
class MotionPrimitive:
    u: np.ndarray
    tau: float
    start: KinoState
    end: KinoState


@dataclass
class SearchWeights:
    """Weights, control set, bounds, and budgets for the search."""

    rho: float = 1.0                      # time weight inside the energy-time cost
    w_goal: float = 0.7                   # blend toward the predicted target state
    c_time: float = 1.0                   # multiplier on the heuristic's optimal duration
    p_occ: float = 60.0                   # penalty for nodes without line of sight
    tau: float = 0.3                      # primitive duration [s]
    u_grid: tuple = (-3.0, 0.0, 3.0)      # per-axis acceleration choices [m/s^2]
    v_max: float = 3.0                    # per-axis speed bound [m/s]
    a_max: float = 3.0                    # acceleration bound [m/s^2]
    t_lookahead: float = 1.0              # how far into the prediction the goal looks [s]
    r_goal: float = 0.5                   # goal position tolerance [m]
    v_goal_tol: float = 1.5               # goal velocity tolerance [m/s]
    vel_bin: float = 0.5                  # velocity quantization for node identity [m/s]
    node_budget: int = 30000
    freeze_z: bool = False                # planar scenarios: no vertical control


@dataclass
class KinoPath:
    primitives: list
    end_state: KinoState
    total_cost: float
    info: dict = field(default_factory=dict)

    def states(self) -> list[KinoState]:
        if not self.primitives:
            return [self.end_state]
        return [self.primitives[0].start] + [m.end for m in self.primitives]

    def sample_positions(self, spacing: float) -> np.ndarray:
        """Dense positions along the path at roughly ``spacing`` metres."""
        if not self.primitives:
            return self.end_state.p[None, :]
        chunks = [self.primitives[0].start.p[None, :]]
        for m in self.primitives:
            speed = max(np.linalg.norm(m.start.v), np.linalg.norm(m.end.v), 0.1)
            n = max(int(np.ceil(speed * m.tau / spacing)), 2)
            ts = np.linspace(0.0, m.tau, n + 1)[1:]
            pos = m.start.p + np.outer(ts, m.start.v) + 0.5 * np.outer(ts**2, m.u)
            chunks.append(pos)
        return np.vstack(chunks)


def propagate(s: KinoState, u, tau: float) -> KinoState:
    """Closed-form double-integrator step under constant acceleration."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    u = np.asarray(u, dtype=float)
    p = s.p + s.v * tau + 0.5 * u * tau * tau
    v = s.v + u * tau
    return KinoState(p=p, v=v, t=s.t + tau)


def edge_cost(u, tau: float, w: SearchWeights) -> float:
    """Per-primitive contribution to the energy-time path cost."""
    u = np.asarray(u, dtype=float)
    return float((u @ u) * tau + w.rho * tau)


# ----------------------------------------------------------------------
# Optimal boundary value problem (heuristic distance)
# ----------------------------------------------------------------------

def _obvp_coeffs(dp, v0, vf):
    """J(T) = rho*T + alpha/T^3 + beta/T^2 + gamma/T for the two-point problem."""
    alpha = 12.0 * np.sum(dp * dp, axis=-1)
    beta = -12.0 * np.sum(dp * (v0 + vf), axis=-1)
    gamma = 4.0 * np.sum(v0 * v0 + v0 * vf + vf * vf, axis=-1)
    return alpha, beta, gamma


def _scan_minimum(alpha, beta, gamma, rho):
    J = rho * _SCAN_T + alpha / _SCAN_T**3 + beta / _SCAN_T**2 + gamma / _SCAN_T
    i = int(np.argmin(J))
    return float(J[i]), float(_SCAN_T[i])


def obvp_cost(x_c: KinoState, x_g: KinoState, rho: float) -> tuple[float, float]:
    """Minimal energy-time cost and its duration between two full states.

    Minimizes ``integral |u|^2 dt + rho*T`` over T for the double integrator
    with both endpoint positions and velocities fixed; the stationary points
    are the positive real roots of a quartic. Falls back to a dense scan over
    (0, 20] when root finding yields no usable minimum.
    """
    dp = x_g.p - x_c.p
    alpha, beta, gamma = _obvp_coeffs(dp[None, :], x_c.v[None, :], x_g.v[None, :])
    alpha, beta, gamma = float(alpha[0]), float(beta[0]), float(gamma[0])
    if alpha < 1e-14 and gamma < 1e-14:
        return 0.0, 0.0
    if rho <= 0:
        return _scan_minimum(alpha, beta, gamma, max(rho, 0.0))
    roots = np.roots([rho, 0.0, -gamma, -2.0 * beta, -3.0 * alpha])
    best = None
    for r in roots:
        if abs(r.imag) > 1e-8 * max(1.0, abs(r.real)) or r.real <= 1e-9:
            continue
        T = float(r.real)
        J = rho * T + alpha / T**3 + beta / T**2 + gamma / T
        if best is None or J < best[0]:
            best = (J, T)
    if best is None:
        return _scan_minimum(alpha, beta, gamma, rho)
    return best


def _quartic_roots(p, q, r):
    """Roots of x^4 + p x^2 + q x + r per row (Ferrari, complex), shape (B, 4)."""
    p = p.astype(complex)
    q = q.astype(complex)
    r = r.astype(complex)
    # resolvent cubic in w = u^2: w^3 + 2p w^2 + (p^2 - 4r) w - q^2 = 0
    a2, a1, a0 = 2.0 * p, p * p - 4.0 * r, -q * q
    P = a1 - a2 * a2 / 3.0
    Q = 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0 + a0
    S = np.sqrt(0.25 * Q * Q + P**3 / 27.0)
    C = (-0.5 * Q + S) ** (1.0 / 3.0)
    alt = (-0.5 * Q - S) ** (1.0 / 3.0)
    C = np.where(np.abs(C) < 1e-12, alt, C)
    C = np.where(np.abs(C) < 1e-12, 1e-12, C)
    w = C - P / (3.0 * C) - a2 / 3.0
    u = np.sqrt(w)
    small_u = np.abs(u) < 1e-9
    u_safe = np.where(small_u, 1.0, u)
    s = 0.5 * (p + w - q / u_safe)
    t = 0.5 * (p + w + q / u_safe)
    d1 = np.sqrt(u_safe * u_safe - 4.0 * s)
    d2 = np.sqrt(u_safe * u_safe - 4.0 * t)
    roots = np.stack([
        0.5 * (-u_safe + d1), 0.5 * (-u_safe - d1),
        0.5 * (u_safe + d2), 0.5 * (u_safe - d2),
    ], axis=-1)
    if small_u.any():  # q ~ 0: biquadratic x^2 = (-p +/- sqrt(p^2 - 4r)) / 2
        disc = np.sqrt(p * p - 4.0 * r)
        x2a = 0.5 * (-p + disc)
        x2b = 0.5 * (-p - disc)
        bi = np.stack([np.sqrt(x2a), -np.sqrt(x2a), np.sqrt(x2b), -np.sqrt(x2b)], axis=-1)
        roots = np.where(small_u[..., None], bi, roots)
    return roots


def _obvp_batch(dp, v0, vf, rho):
    """Vectorized obvp_cost over rows; returns (J, T*) arrays."""
    alpha, beta, gamma = _obvp_coeffs(dp, v0, vf)
    B = alpha.shape[0]
    J_out = np.zeros(B)
    T_out = np.zeros(B)
    live = ~((alpha < 1e-14) & (gamma < 1e-14))
    if not live.any():
        return J_out, T_out
    a, b, g = alpha[live], beta[live], gamma[live]
    # dJ/dT = 0  <=>  T^4 - (g/rho) T^2 - (2b/rho) T - (3a/rho) = 0
    roots = _quartic_roots(-g / rho, -2.0 * b / rho, -3.0 * a / rho)
    T_re = roots.real
    ok = (np.abs(roots.imag) <= 1e-4 * np.maximum(1.0, np.abs(T_re))) & (T_re > 1e-9)
    T_c = np.where(ok, T_re, 1.0)
    for _ in range(3):  # Newton polish of dJ/dT roots
        f = rho * T_c**4 - g[:, None] * T_c**2 - 2.0 * b[:, None] * T_c - 3.0 * a[:, None]
        df = 4.0 * rho * T_c**3 - 2.0 * g[:, None] * T_c - 2.0 * b[:, None]
        T_c = np.where(ok & (np.abs(df) > 1e-12), T_c - f / np.where(df == 0, 1, df), T_c)
    ok &= T_c > 1e-9
    T_safe = np.where(ok, T_c, 1.0)
    J = rho * T_safe + a[:, None] / T_safe**3 + b[:, None] / T_safe**2 + g[:, None] / T_safe
    J = np.where(ok, J, np.inf)
    pick = np.argmin(J, axis=1)
    J_best = J[np.arange(len(pick)), pick]
    T_best = T_safe[np.arange(len(pick)), pick]
    for i in np.nonzero(~np.isfinite(J_best))[0]:  # rare: no positive real root
        J_best[i], T_best[i] = _scan_minimum(a[i], b[i], g[i], rho)
    J_out[live] = J_best
    T_out[live] = T_best
    return J_out, T_out


# ----------------------------------------------------------------------
# Goal construction and occlusion penalty
# ----------------------------------------------------------------------

def goal_state(traj: PredictedTrajectory, t_c: float, w: SearchWeights) -> KinoState:
    """Blend of the target's current and predicted states."""
    p_now, v_now = traj.evaluate(t_c)
    t_ahead = min(t_c + w.t_lookahead, traj.t_p)
    p_pred, v_pred = traj.evaluate(t_ahead)
    p = (1.0 - w.w_goal) * p_now + w.w_goal * p_pred
    v = (1.0 - w.w_goal) * v_now + w.w_goal * v_pred
    return KinoState(p=p, v=v, t=t_c)


def occlusion_penalty(x_c: KinoState, target_pred, grid: OccupancyGrid,
                      w: SearchWeights) -> float:
    """Zero when the node sees the predicted target position, else the penalty."""
    if grid.line_of_sight(x_c.p, np.asarray(target_pred, dtype=float)):
        return 0.0
    return w.p_occ


# ----------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------

def _controls(w: SearchWeights) -> np.ndarray:
    axes = [np.asarray(w.u_grid, dtype=float)] * 2
    axes.append(np.array([0.0]) if w.freeze_z else np.asarray(w.u_grid, dtype=float))
    return np.array(list(product(*axes)))


def search(start: KinoState, traj: PredictedTrajectory | None, grid: OccupancyGrid,
           w: SearchWeights, goal: KinoState | None = None,
           occlusion_target=None) -> KinoPath:
    """Best-first kinodynamic search toward the (blended) goal state.

    ``goal`` overrides the blended goal from the prediction (used when
    relocating toward a static point). ``occlusion_target`` overrides the
    position used for visibility checks; by default it is the prediction
    evaluated at the lookahead time.
    """
    if grid.is_occupied(start.p):
        raise StartOccupied(f"search start {start.p.tolist()} is occupied")
    if goal is None:
        if traj is None:
            raise ValueError("search needs a prediction or an explicit goal")
        goal = goal_state(traj, traj.t_c, w)
    if occlusion_target is None and traj is not None:
        occlusion_target, _ = traj.evaluate(min(traj.t_c + w.t_lookahead, traj.t_p))
    x_tp = None if occlusion_target is None else np.asarray(occlusion_target, dtype=float)

    def reached(s: KinoState) -> bool:
        return (np.linalg.norm(s.p - goal.p) <= w.r_goal
                and np.linalg.norm(s.v - goal.v) <= w.v_goal_tol)

    if reached(start):
        return KinoPath([], start, 0.0, info={"expansions": 0, "reached_goal": True})

    res = grid.resolution
    inv_res = 1.0 / res
    inv_bin = 1.0 / w.vel_bin
    ox, oy, oz = (float(v) for v in grid.origin)
    floor = np.floor

    def node_key(s: KinoState):
        p, v = s.p, s.v
        return (int((p[0] - ox) * inv_res // 1), int((p[1] - oy) * inv_res // 1),
                int((p[2] - oz) * inv_res // 1), int(v[0] * inv_bin // 1),
                int(v[1] * inv_bin // 1), int(v[2] * inv_bin // 1))

    occ_memo: dict[tuple, float] = {}

    def occ_pen(p: np.ndarray, vox_key: tuple) -> float:
        if x_tp is None or w.p_occ == 0.0:
            return 0.0
        pen = occ_memo.get(vox_key)
        if pen is None:
            pen = 0.0 if grid.line_of_sight(p, x_tp) else w.p_occ
            occ_memo[vox_key] = pen
        return pen

    controls = _controls(w)
    n_ctrl = len(controls)
    tau = w.tau
    edge_costs = (np.sum(controls**2, axis=1) + w.rho) * tau
    # collision sampling times, quarter-voxel spacing at the speed bound
    n_samp = max(int(np.ceil(np.sqrt(3) * w.v_max * tau / (0.25 * res))), 4)
    ts = np.linspace(0.0, tau, n_samp + 1)[1:]

    start_key = node_key(start)
    nodes = {start_key: (0.0, start, None, None)}  # key -> (g, state, parent_key, u)
    h0, T0 = obvp_cost(start, goal, w.rho)
    open_heap = [(h0 + w.c_time * T0 + occ_pen(start.p, start_key[:3]), 0.0, start_key)]
    expansions = 0
    best_fb = (float(np.linalg.norm(start.p - goal.p)), 0.0, start_key)
    goal_key = None

    while open_heap and expansions < w.node_budget:
        f, neg_g, key = heapq.heappop(open_heap)
        g, state, _, _ = nodes[key]
        if -neg_g < g - 1e-12:  # stale heap entry
            continue
        if reached(state):
            goal_key = key
            break
        expansions += 1
        dist = float(np.linalg.norm(state.p - goal.p))
        if (dist, f) < (best_fb[0], best_fb[1]):
            best_fb = (dist, f, key)

        end_v = state.v[None, :] + controls * tau
        feasible = np.all(np.abs(end_v) <= w.v_max + 1e-9, axis=1)
        # sample all primitives at once: (n_ctrl, n_samp, 3)
        pos = (state.p[None, None, :]
               + state.v[None, None, :] * ts[None, :, None]
               + 0.5 * controls[:, None, :] * (ts[None, :, None] ** 2))
        idx = np.floor((pos - grid.origin) / res).astype(int)
        oob = np.any(idx < 0, axis=2) | np.any(idx >= grid.dims, axis=2)
        idx_safe = np.clip(idx, 0, grid.dims - 1)
        hit = grid._occ[idx_safe[..., 0], idx_safe[..., 1], idx_safe[..., 2]] | oob
        collision_free = ~hit.any(axis=1)
        keep = feasible & collision_free
        if not keep.any():
            continue
        end_p = pos[:, -1, :]
        # dominance check first; the heuristic is only solved for survivors
        survivors = []
        for ci in np.nonzero(keep)[0]:
            child = KinoState(p=end_p[ci], v=end_v[ci], t=state.t + tau)
            ckey = node_key(child)
            g_child = g + edge_costs[ci]
            existing = nodes.get(ckey)
            if existing is not None and existing[0] <= g_child + 1e-12:
                continue
            survivors.append((ci, child, ckey, g_child))
        if not survivors:
            continue
        sel = np.array([s[0] for s in survivors])
        dp = goal.p[None, :] - end_p[sel]
        D, T_star = _obvp_batch(dp, end_v[sel], np.tile(goal.v, (len(sel), 1)), w.rho)
        for j, (ci, child, ckey, g_child) in enumerate(survivors):
            nodes[ckey] = (g_child, child, key, controls[ci])
            h = D[j] + w.c_time * T_star[j] + occ_pen(child.p, ckey[:3])
            heapq.heappush(open_heap, (g_child + h, -g_child, ckey))

    if goal_key is None and len(nodes) == 1:
        raise NoPath("no primitive could be expanded from the start state")
    final_key = goal_key if goal_key is not None else best_fb[2]

    # reconstruct
    chain = []
    key = final_key
    while True:
        g, state, parent_key, u = nodes[key]
        if parent_key is None:
            break
        chain.append((parent_key, u, state))
        key = parent_key
    chain.reverse()
    primitives = []
    for parent_key, u, end_state in chain:
        start_state = nodes[parent_key][1]
        primitives.append(MotionPrimitive(u=u, tau=tau, start=start_state, end=end_state))
    end_state = nodes[final_key][1]
    return KinoPath(primitives, end_state, nodes[final_key][0],
                    info={"expansions": expansions, "reached_goal": goal_key is not None})
