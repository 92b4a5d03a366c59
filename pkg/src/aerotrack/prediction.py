"""Target motion prediction: constrained Bezier fitting over recent observations.

A degree-n Bezier curve is fit to the valid observations inside a sliding
window and read out over an extended horizon, so evaluating past the newest
observation time is the motion prediction. The fit is a small convex QP per
axis: a time-weighted residual term plus an integrated-acceleration
regularizer, with box bounds on the hodograph (derivative) control points so
the curve respects speed and acceleration limits everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import InsufficientData, OutOfDomain
from .solvers import active_set_qp, qp_kkt_residual


def bernstein(n: int, i: int, t: float) -> float:
    """Bernstein basis polynomial b_{n,i}(t) = C(n,i) t^i (1-t)^(n-i)."""
    if i < 0 or i > n:
        raise IndexError(f"bernstein index {i} outside 0..{n}")
    return comb(n, i) * t**i * (1.0 - t) ** (n - i)


def hodograph(control_points: np.ndarray, n: int, scale: float) -> np.ndarray:
    """Control points of the derivative curve: d_i = n (c_{i+1} - c_i) / scale."""
    cp = np.asarray(control_points, dtype=float)
    return n * np.diff(cp, axis=0) / scale


def de_casteljau(control_points: np.ndarray, s: float) -> np.ndarray:
    pts = np.asarray(control_points, dtype=float).copy()
    while len(pts) > 1:
        pts = (1.0 - s) * pts[:-1] + s * pts[1:]
    return pts[0]


def _bezier_l2_matrix(m: int) -> np.ndarray:
    """Gram matrix of the degree-m Bernstein basis on [0, 1]."""
    M = np.empty((m + 1, m + 1))
    for i in range(m + 1):
        for j in range(m + 1):
            M[i, j] = comb(m, i) * comb(m, j) / (comb(2 * m, i + j) * (2 * m + 1))
    return M


@dataclass
class PredictionWeights:
    """Weights and limits for the prediction QP."""

    smooth_weight: float = 0.05   # multiplier on the integrated-acceleration term
    tau_w: float = 1.0            # time-decay constant of observation confidence [s]
    v_max: float = 3.0            # predicted speed bound per axis [m/s]
    a_max: float = 3.0            # predicted acceleration bound per axis [m/s^2]
    horizon: float = 2.0          # prediction span past the newest fit time [s]
    window: float = 2.0           # observation window length [s]
    degree: int = 5


@dataclass
class PredictedTrajectory:
    """Bezier curve over [t0, t_p]; (t_c, t_p] is the extrapolated part."""

    control_points: np.ndarray   # (degree+1, 3)
    degree: int
    t0: float
    t_c: float
    t_p: float
    fit_info: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return self.t_p - self.t0

    def evaluate(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and velocity at time ``t`` via de Casteljau."""
        if t < self.t0 - 1e-9 or t > self.t_p + 1e-9:
            raise OutOfDomain(f"t={t} outside [{self.t0}, {self.t_p}]; re-fit instead")
        s = np.clip((t - self.t0) / self.scale, 0.0, 1.0)
        pos = de_casteljau(self.control_points, s)
        vel_cp = hodograph(self.control_points, self.degree, self.scale)
        vel = de_casteljau(vel_cp, s)
        return pos, vel


def evaluate(traj: PredictedTrajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    return traj.evaluate(t)


def _fit_matrices(times_s: np.ndarray, weights: np.ndarray, w: PredictionWeights, scale: float):
    """Quadratic form pieces shared by all three axes."""
    n = w.degree
    Phi = np.empty((len(times_s), n + 1))
    for i in range(n + 1):
        Phi[:, i] = [bernstein(n, i, s) for s in times_s]
    PhiW = Phi * weights[:, None]
    # second hodograph: f = D2 c with f_i = n(n-1)(c_{i+2} - 2 c_{i+1} + c_i)
    D2 = np.zeros((n - 1, n + 1))
    for i in range(n - 1):
        D2[i, i] = 1.0
        D2[i, i + 1] = -2.0
        D2[i, i + 2] = 1.0
    D2 *= n * (n - 1)
    M = _bezier_l2_matrix(n - 2)
    R = (w.smooth_weight / scale**3) * (D2.T @ M @ D2)
    H = 2.0 * (PhiW.T @ Phi + R)
    return Phi, PhiW, H


def _constraint_rows(n: int, scale: float):
    """Stacked inequality rows: |velocity cp| and |acceleration cp| bounds."""
    D1 = np.zeros((n, n + 1))
    for i in range(n):
        D1[i, i] = -1.0
        D1[i, i + 1] = 1.0
    V = n * D1 / scale
    D2 = np.zeros((n - 1, n + 1))
    for i in range(n - 1):
        D2[i, i] = 1.0
        D2[i, i + 1] = -2.0
        D2[i, i + 2] = 1.0
    A = n * (n - 1) * D2 / scale**2
    return np.vstack([V, -V, A, -A]), V.shape[0], A.shape[0]


def fit_predicted_trajectory(observations, t_c: float, w: PredictionWeights | None = None
                             ) -> PredictedTrajectory:
    """Fit the prediction curve to the valid observations inside the window.

    Solves, per axis, min over control points c of
    ``sum_j w_j (Phi_j c - p_j)^2 + w_r * integral |curve''|^2`` subject to the
    hodograph box bounds, with w_j = exp(-(t_c - t_j)/tau_w). The curve's time
    parameterization spans [t_c - window, t_c + horizon] so evaluation past
    t_c is the extrapolation.
    """
    if w is None:
        w = PredictionWeights()
    n = w.degree
    t0 = t_c - w.window
    t_p = t_c + w.horizon
    scale = t_p - t0
    usable = [o for o in observations
              if o.valid and t0 - 1e-9 <= o.timestamp <= t_c + 1e-9]
    if len(usable) < n + 1:
        raise InsufficientData(
            f"need at least {n + 1} valid observations in window, got {len(usable)}")
    times = np.array([o.timestamp for o in usable])
    if np.any(np.diff(times) <= 0):
        raise InsufficientData("observation timestamps must strictly increase")
    pts = np.array([o.position_world for o in usable])
    conf = np.exp(-(t_c - times) / w.tau_w)
    s_vals = (times - t0) / scale

    Phi, PhiW, H = _fit_matrices(s_vals, conf, w, scale)
    G, n_v, n_a = _constraint_rows(n, scale)
    h = np.concatenate([np.full(2 * n_v, w.v_max), np.full(2 * n_a, w.a_max)])

    cp = np.empty((n + 1, 3))
    kkt = 0.0
    objective = 0.0
    for axis in range(3):
        f = -2.0 * (PhiW.T @ pts[:, axis])
        x0 = np.full(n + 1, np.average(pts[:, axis], weights=conf))  # constant curve: feasible
        x, lam = active_set_qp(H, f, G, h, x0)
        cp[:, axis] = x
        kkt = max(kkt, qp_kkt_residual(H, f, G, h, x, lam))
        r = Phi @ x - pts[:, axis]
        objective += float(conf @ r**2)
    return PredictedTrajectory(
        control_points=cp, degree=n, t0=t0, t_c=t_c, t_p=t_p,
        fit_info={"kkt_residual": kkt, "n_obs": len(usable), "residual": objective},
    )


def unconstrained_fit_oracle(observations, t_c: float, w: PredictionWeights) -> np.ndarray:
    """Dense weighted normal-equation solution, ignoring the box constraints."""
    n = w.degree
    t0 = t_c - w.window
    scale = w.window + w.horizon
    usable = [o for o in observations
              if o.valid and t0 - 1e-9 <= o.timestamp <= t_c + 1e-9]
    times = np.array([o.timestamp for o in usable])
    pts = np.array([o.position_world for o in usable])
    conf = np.exp(-(t_c - times) / w.tau_w)
    s_vals = (times - t0) / scale
    Phi, PhiW, H = _fit_matrices(s_vals, conf, w, scale)
    rhs = 2.0 * (PhiW.T @ pts)
    return np.linalg.solve(H, rhs)
