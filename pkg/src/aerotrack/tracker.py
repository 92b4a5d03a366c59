"""Closed-loop tracking simulator: perceive, predict, search, optimize, repeat.

Each cycle advances the scripted target, steps the gimbal, synthesizes an
observation, refits the prediction, plans an occlusion-aware path toward a
standoff goal, wraps it in a corridor, optimizes the tracking trajectory, and
advances the quadrotor along it as a perfect follower. Stage failures keep the
previous trajectory. Losing the target long enough switches to relocation:
the quadrotor flies toward the last prediction's endpoint while the gimbal
sweeps all bearings until the target is reacquired.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import corridor as corridor_mod
from . import kino_search, traj_opt
from .errors import CorridorFailed, InsufficientData
from .grid import build_map
from .perception import (
    GimbalState,
    Pose,
    fit_regression,
    gimbal_search_step,
    gimbal_track_step,
    localize,
    make_calibration_dataset,
    project_target,
    TargetObservation,
)
from .prediction import fit_predicted_trajectory
from .scenario import Scenario

TRACKING = "TRACKING"
RELOCATING = "RELOCATING"

VARIANTS = ("full", "no_occlusion_penalty", "no_gimbal_search")
_VARIANT_ALIASES = {
    "full": "full",
    "no_occ": "no_occlusion_penalty",
    "no_occlusion_penalty": "no_occlusion_penalty",
    "no_search": "no_gimbal_search",
    "no_gimbal_search": "no_gimbal_search",
}

TRACE_COLUMNS = [
    "cycle", "t", "tgt_x", "tgt_y", "tgt_z", "obs_valid", "obs_x", "obs_y", "obs_z",
    "pred_t0_x", "pred_t0_y", "pred_t0_z", "pred_tp_x", "pred_tp_y", "pred_tp_z",
    "mode", "path_cost", "corridor_m", "j_sigma", "quad_x", "quad_y", "quad_z",
    "quad_yaw", "los", "path_los", "plan_ok",
]


@dataclass
class ModeState:
    """Tracking/relocating machine with the memory relocation needs."""

    mode: str = TRACKING
    last_valid_prediction: object = None
    time_since_loss: float = 0.0
    invalid_streak: float = 0.0


def relocation_update(state: ModeState, obs: TargetObservation, dt: float,
                      loss_timeout: float = 0.5) -> ModeState:
    """Advance the mode machine on one observation.

    ``time_since_loss`` keeps the final relocation duration after rediscovery
    so the caller can record it; it resets when relocation is entered again.
    """
    if obs.valid:
        state.mode = TRACKING
        state.invalid_streak = 0.0
        return state
    state.invalid_streak += dt
    if state.mode == TRACKING and state.invalid_streak >= loss_timeout:
        state.mode = RELOCATING
        state.time_since_loss = 0.0
    elif state.mode == RELOCATING:
        state.time_since_loss += dt
    return state


@dataclass
class Metrics:
    success: bool = True
    fail_reason: str = ""
    mean_target_distance: float = 0.0
    max_target_distance: float = 0.0
    los_fraction: float = 0.0
    loss_episodes: int = 0
    mean_relocation_time: float = float("nan")
    relocation_times: list = field(default_factory=list)
    cycles: int = 0
    plan_failures: int = 0
    stage_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["stage_ms"] = {k: round(v, 3) for k, v in self.stage_ms.items()}
        return out


class TrackerWorld:
    """Mutable simulation state for one scenario run."""

    def __init__(self, scenario: Scenario, variant: str = "full",
                 regression_params=None):
        self.scenario = scenario
        self.variant = _VARIANT_ALIASES.get(variant, variant)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.grid = build_map(scenario.map_spec)
        self.dt = 1.0 / scenario.tracker.replan_hz
        self.rng = np.random.default_rng(scenario.seed)
        self.params = regression_params or default_regression_params(scenario)
        self.search_w = scenario.search
        if self.variant == "no_occlusion_penalty":
            self.search_w = replace(scenario.search, p_occ=0.0)

        self.quad_p = scenario.quad_start.astype(float).copy()
        self.quad_v = np.zeros(3)
        self.quad_a = np.zeros(3)
        self.quad_yaw = 0.0
        self.quad_z = (scenario.tracker.quad_z
                       if scenario.tracker.quad_z is not None
                       else float(self.quad_p[2]))
        self.gimbal = GimbalState(yaw=0.0, yaw_rate_limit=scenario.perception.yaw_rate_limit)
        self.mode = ModeState()
        self.observations: list[TargetObservation] = []
        self.prediction = None
        self.trajectory = None
        self.traj_clock = 0.0
        self.last_u: float | None = None
        self.cycle = 0
        self.trace_rows: list[list] = []
        self.stage_totals: dict[str, float] = {}
        self.collided = False
        self.fail_streak = 0.0
        self.distances: list[float] = []
        self.los_flags: list[bool] = []
        self.loss_episodes = 0
        self.relocation_times: list[float] = []
        self._relocating_prev = False
        self.plan_failures = 0
        self.last_plan_error = ""

    # -- helpers ---------------------------------------------------------

    def _time(self) -> float:
        return self.cycle * self.dt

    def _stage(self, name: str, t0: float):
        self.stage_totals[name] = self.stage_totals.get(name, 0.0) + (
            time.perf_counter() - t0) * 1000.0


def default_regression_params(scenario: Scenario):
    """Fit the localization regression once from a synthetic mocap dataset."""
    cfg = scenario.perception
    dataset = make_calibration_dataset(
        cfg.camera, cfg.body_len, n=320, seed=0,
        sigma_u=cfg.sigma_u, sigma_len=cfg.sigma_len)
    return fit_regression(dataset)


def _free_goal(world: TrackerWorld, goal_p: np.ndarray) -> np.ndarray:
    """Pull an occupied or out-of-bounds goal back toward the quadrotor.

    Predictions extrapolate freely, so goal points regularly land inside
    obstacles; searching toward them would burn the whole node budget.
    """
    if not world.grid.is_occupied(goal_p):
        return goal_p
    direction = world.quad_p - goal_p
    dist = float(np.linalg.norm(direction))
    if dist < 1e-6:
        return world.quad_p.copy()
    n = max(int(dist / (world.grid.resolution / 2.0)), 1)
    for frac in np.linspace(0.0, 1.0, n + 1)[1:]:
        candidate = goal_p + frac * direction
        if not world.grid.is_occupied(candidate):
            return candidate
    return world.quad_p.copy()


def _plan_goal(world: TrackerWorld):
    """Goal state, occlusion target, and goal velocity for this cycle."""
    sc = world.scenario
    t_now = world._time()
    if world.mode.mode == RELOCATING or world.prediction is None:
        pred = world.mode.last_valid_prediction
        if pred is None:
            return None, None
        p_end, _ = pred.evaluate(pred.t_p)
        goal_p = _free_goal(world, np.array([p_end[0], p_end[1], world.quad_z]))
        return kino_search.KinoState(p=goal_p, v=np.zeros(3)), goal_p

    traj = world.prediction
    w = world.search_w
    t_eval = float(np.clip(t_now, traj.t0, traj.t_p))
    p_now, v_now = traj.evaluate(t_eval)
    t_ahead = min(t_eval + w.t_lookahead, traj.t_p)
    p_pred, v_pred = traj.evaluate(t_ahead)
    x_g_p = (1.0 - w.w_goal) * p_now + w.w_goal * p_pred
    x_g_v = (1.0 - w.w_goal) * v_now + w.w_goal * v_pred
    # standoff: back off along the goal velocity, or toward the quadrotor
    # for a near-stationary target
    speed = float(np.linalg.norm(x_g_v[:2]))
    if speed > 0.3:
        back = x_g_v / max(np.linalg.norm(x_g_v), 1e-9)
    else:
        to_quad = world.quad_p - x_g_p
        to_quad[2] = 0.0
        norm = float(np.linalg.norm(to_quad))
        back = -(to_quad / norm) if norm > 1e-6 else np.array([1.0, 0.0, 0.0])
    goal_p = x_g_p - sc.tracker.d_track * back
    goal_p[2] = world.quad_z
    goal_p = _free_goal(world, goal_p)
    goal_v = x_g_v.copy()
    goal_v[2] = 0.0
    occl = p_pred.copy()
    return kino_search.KinoState(p=goal_p, v=goal_v), occl


def step(world: TrackerWorld, dt: float | None = None) -> TrackerWorld:
    """Advance the closed loop by one replanning cycle."""
    sc = world.scenario
    dt = world.dt if dt is None else dt
    t_now = world._time()

    # target motion
    target_p, target_v = sc.target.state(t_now)

    # gimbal step using the previous frame's pixel coordinate
    t0 = time.perf_counter()
    allow_search = world.variant != "no_gimbal_search"
    if world.mode.mode == RELOCATING and allow_search:
        world.gimbal = replace(world.gimbal, mode="searching")
        world.gimbal = gimbal_search_step(world.gimbal, dt, sc.perception.omega_search)
    elif world.last_u is not None and world.mode.mode == TRACKING:
        world.gimbal = gimbal_track_step(
            world.gimbal, world.last_u, sc.perception.camera, dt,
            kp=sc.perception.kp, ki=sc.perception.ki)

    # synthetic perception
    cam_pose = Pose(
        position=world.quad_p + np.array([0.0, 0.0, sc.perception.camera.mount_height]),
        yaw=world.gimbal.yaw)
    feats = project_target(
        target_p, sc.perception.body_len, sc.perception.camera, cam_pose,
        timestamp=t_now, grid=world.grid,
        sigma_u=sc.perception.sigma_u, sigma_len=sc.perception.sigma_len,
        rng=world.rng)
    if feats is not None:
        obs = localize(feats, world.params, cam_pose)
        world.last_u = feats.u_px
    else:
        obs = TargetObservation.invalid(t_now)
        world.last_u = None
    world._stage("perception", t0)

    # mode machine
    world.mode = relocation_update(world.mode, obs, dt, sc.tracker.loss_timeout)
    if world.mode.mode == RELOCATING and not world._relocating_prev:
        world.loss_episodes += 1
    if world.mode.mode == TRACKING and world._relocating_prev:
        world.relocation_times.append(world.mode.time_since_loss + dt)
    world._relocating_prev = world.mode.mode == RELOCATING

    # prediction update
    t0 = time.perf_counter()
    if obs.valid:
        world.observations.append(obs)
    horizon_cut = t_now - sc.prediction.window
    world.observations = [o for o in world.observations if o.timestamp >= horizon_cut - 1e-9]
    if world.mode.mode == TRACKING and obs.valid:
        try:
            world.prediction = fit_predicted_trajectory(
                world.observations, t_now, sc.prediction)
            world.mode.last_valid_prediction = world.prediction
        except InsufficientData:
            pass
    world._stage("prediction", t0)

    # plan: search, corridor, optimize
    plan_ok = False
    path_cost = float("nan")
    corridor_m = 0
    j_sigma = float("nan")
    path_los = ""
    goal, occl_target = _plan_goal(world)
    if goal is not None:
        start = kino_search.KinoState(p=world.quad_p.copy(), v=world.quad_v.copy())
        try:
            t0 = time.perf_counter()
            use_pred = world.mode.mode == TRACKING and world.prediction is not None
            path = kino_search.search(
                start, world.prediction if use_pred else None, world.grid,
                world.search_w, goal=goal, occlusion_target=occl_target)
            world._stage("search", t0)

            t0 = time.perf_counter()
            cor = corridor_mod.build_corridor(path, world.grid)
            world._stage("corridor", t0)

            t0 = time.perf_counter()
            bc = traj_opt.BoundaryConditions(
                p0=world.quad_p, v0=world.quad_v, a0=world.quad_a,
                p1=path.end_state.p, v1=path.end_state.v, a1=np.zeros(3))
            traj = traj_opt.optimize(cor, bc, sc.opt)
            world._stage("optimize", t0)

            # fail-safe: never hand over a trajectory that clips an obstacle
            ts = np.arange(0.0, traj.duration + 1e-9, 4 * world.grid.resolution
                           / max(sc.opt.v_max, 1e-6))
            samples = traj.sample_many(ts)
            if world.grid.any_occupied(samples):
                raise CorridorFailed("optimized trajectory touches occupancy")
            world.trajectory = traj
            world.traj_clock = 0.0
            plan_ok = True
            path_cost = path.total_cost
            corridor_m = len(cor)
            j_sigma = traj.info.get("objective", float("nan"))
            if occl_target is not None:
                path_los = int(all(
                    world.grid.line_of_sight(s.p, occl_target) for s in path.states()))
        except Exception as exc:  # stage failure: keep the previous trajectory
            world.plan_failures += 1
            world.last_plan_error = f"{type(exc).__name__}: {exc}"
    else:
        world.plan_failures += 1

    # execute along the current trajectory (perfect follower)
    if world.trajectory is not None:
        world.traj_clock += dt
        if world.traj_clock >= world.trajectory.duration:
            p = world.trajectory.sample(world.trajectory.duration)[0]
            v = np.zeros(3)  # hover once the trajectory is exhausted
            a = np.zeros(3)
            world.traj_clock = world.trajectory.duration
        else:
            p, v, a, _ = world.trajectory.sample(world.traj_clock)
        world.quad_p, world.quad_v, world.quad_a = p, v, a
        if np.linalg.norm(v[:2]) > 0.1:
            world.quad_yaw = float(np.arctan2(v[1], v[0]))

    # bookkeeping
    dist = float(np.linalg.norm(world.quad_p - target_p))
    world.distances.append(dist)
    los = world.grid.line_of_sight(world.quad_p, target_p)
    world.los_flags.append(los)
    if world.grid.is_occupied(world.quad_p):
        world.collided = True
    if dist > sc.tracker.d_fail:
        world.fail_streak += dt
    else:
        world.fail_streak = 0.0

    pred = world.prediction
    if pred is not None:
        pred_t0 = pred.evaluate(pred.t0)[0]
        pred_tp = pred.evaluate(pred.t_p)[0]
    else:
        pred_t0 = pred_tp = (float("nan"),) * 3
    obs_p = obs.position_world if obs.valid else (float("nan"),) * 3
    world.trace_rows.append([
        world.cycle, t_now, *target_p, int(obs.valid), *obs_p,
        *pred_t0, *pred_tp, world.mode.mode, path_cost, corridor_m, j_sigma,
        *world.quad_p, world.quad_yaw, int(los), path_los, int(plan_ok),
    ])
    world.cycle += 1
    return world


def run_scenario(scenario: Scenario, variant: str = "full",
                 regression_params=None) -> tuple[Metrics, list]:
    """Run a scenario to completion and score it.

    Success requires never entering an occupied voxel and never exceeding the
    losing distance for longer than the configured grace time.
    """
    world = TrackerWorld(scenario, variant, regression_params)
    n_cycles = int(round(scenario.duration * scenario.tracker.replan_hz))
    failed_at = None
    for _ in range(n_cycles):
        step(world)
        if failed_at is None and world.fail_streak > scenario.tracker.t_fail:
            failed_at = world._time()
    metrics = Metrics(
        mean_target_distance=float(np.mean(world.distances)),
        max_target_distance=float(np.max(world.distances)),
        los_fraction=float(np.mean(world.los_flags)),
        loss_episodes=world.loss_episodes,
        relocation_times=list(world.relocation_times),
        mean_relocation_time=(float(np.mean(world.relocation_times))
                              if world.relocation_times else float("nan")),
        cycles=world.cycle,
        plan_failures=world.plan_failures,
        stage_ms={k: v / max(world.cycle, 1) for k, v in world.stage_totals.items()},
    )
    planning = sum(metrics.stage_ms.get(k, 0.0) for k in ("search", "corridor", "optimize"))
    metrics.stage_ms["planning"] = planning
    if world.collided:
        metrics.success = False
        metrics.fail_reason = "collision"
    elif failed_at is not None:
        metrics.success = False
        metrics.fail_reason = f"lost target at t={failed_at:.2f}s"
    return metrics, world.trace_rows


def format_trace_csv(rows: list) -> str:
    """Deterministic CSV text for a trace (no wall-clock content)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        out = []
        for v in row:
            if isinstance(v, float):
                out.append(f"{v:.10g}")
            elif isinstance(v, (np.floating,)):
                out.append(f"{float(v):.10g}")
            else:
                out.append(v)
        writer.writerow(out)
    return buf.getvalue()


def write_trace(rows: list, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_trace_csv(rows))


# ----------------------------------------------------------------------
# Benchmark harness
# ----------------------------------------------------------------------

def _bench_one(args):
    scenario_dict, variant, run_idx = args
    base = Scenario.from_dict(scenario_dict)
    scenario = replace(base, seed=base.seed + run_idx)
    metrics, _ = run_scenario(scenario, variant)
    return {
        "scenario": scenario.name,
        "variant": variant,
        "run": run_idx,
        "seed": scenario.seed,
        "success": int(metrics.success),
        "mean_dist": round(metrics.mean_target_distance, 4),
        "max_dist": round(metrics.max_target_distance, 4),
        "los_fraction": round(metrics.los_fraction, 4),
        "loss_episodes": metrics.loss_episodes,
        "plan_ms": round(metrics.stage_ms.get("planning", 0.0), 3),
    }


def benchmark(scenario_dicts: list, variants: list, n_runs: int,
              workers: int = 1) -> list:
    """Seeded repeated runs per (scenario, variant); rows sorted and merged."""
    variants = [_VARIANT_ALIASES.get(v, v) for v in variants]
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown benchmark variant {v!r}")
    jobs = [(sd, v, i)
            for sd in scenario_dicts for v in variants for i in range(n_runs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]
    rows.sort(key=lambda r: (r["scenario"], r["variant"], r["run"]))
    return rows


def benchmark_table(rows: list) -> str:
    """Aligned text table of success counts and aggregate metrics."""
    if not rows:
        return "(no benchmark rows)\n"
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["variant"]), []).append(r)
    header = f"{'scenario':<28} {'variant':<24} {'success':>8} {'mean_dist':>10} " \
             f"{'los_frac':>9} {'plan_ms':>8}"
    lines = [header, "-" * len(header)]
    for (scenario, variant), rs in sorted(groups.items()):
        n_ok = sum(r["success"] for r in rs)
        lines.append(
            f"{scenario:<28} {variant:<24} {n_ok}/{len(rs):<6} "
            f"{np.mean([r['mean_dist'] for r in rs]):>10.3f} "
            f"{np.mean([r['los_fraction'] for r in rs]):>9.3f} "
            f"{np.mean([r['plan_ms'] for r in rs]):>8.1f}")
    return "\n".join(lines) + "\n"


def write_benchmark_csv(rows: list, path) -> None:
    if not rows:
        with open(path, "w") as fh:
            fh.write("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
