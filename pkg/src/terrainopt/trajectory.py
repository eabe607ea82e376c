"""Polynomial flat-output trajectories, smoothness costs and linear constraints.

Positions are ``x = W c_x``, ``y = W c_y`` on a uniform time grid; ``Wd`` and
``Wdd`` hold the exact first and second time derivatives of the same basis.

Two polynomial bases of the same order are available:

* ``"monomial"``: ``t_hat**p`` with ``t_hat = t / horizon``.
* ``"whitened"`` (default): columns 0 and 1 are ``1`` and ``t_hat``; the
  higher-degree columns are recombined so that the acceleration Gram matrix
  over the horizon is the identity. Same function space, but gradient descent
  on the acceleration cost is well conditioned (the monomial basis has a
  reduced Hessian condition number around 1e7 at order 10).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleBox, InsufficientOrder


@dataclass(frozen=True)
class BasisMatrices:
    W: np.ndarray
    Wd: np.ndarray
    Wdd: np.ndarray
    times: np.ndarray
    horizon: float
    kind: str = "whitened"
    mix: np.ndarray = None  # recombination of columns 2.. (identity for monomials)

    @property
    def n_steps(self):
        return self.W.shape[0]

    @property
    def n_coeffs(self):
        return self.W.shape[1]


def _monomials(t_hat, order, horizon):
    p = np.arange(order + 1)
    T = t_hat[:, None]
    W = T**p
    Wd = np.zeros_like(W)
    Wdd = np.zeros_like(W)
    Wd[:, 1:] = p[1:] * T ** (p[1:] - 1) / horizon
    Wdd[:, 2:] = p[2:] * (p[2:] - 1) * T ** (p[2:] - 2) / horizon**2
    return W, Wd, Wdd


def _mixed(mats, mix):
    return tuple(np.hstack([M[:, :2], M[:, 2:] @ mix]) for M in mats)


def build_basis(n_steps=50, horizon=10.0, order=10, kind="whitened"):
    if order < 5:
        raise InsufficientOrder("boundary conditions need order >= 5")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    times = np.linspace(0.0, horizon, n_steps)
    if kind == "whitened":
        # whiten against a fine-grid estimate of sum_k Wdd_k^T Wdd_k
        fine = np.linspace(0.0, 1.0, 1024)
        _, _, Wdd_f = _monomials(fine, order, horizon)
        G = Wdd_f[:, 2:].T @ Wdd_f[:, 2:] * (n_steps / len(fine))
        mix = np.linalg.inv(np.linalg.cholesky(G)).T
    elif kind == "monomial":
        mix = np.eye(order - 1)
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    W, Wd, Wdd = _mixed(_monomials(times / horizon, order, horizon), mix)
    return BasisMatrices(W, Wd, Wdd, times, float(horizon), kind, mix)


def evaluate_basis(basis, t):
    """(W, Wd, Wdd) of the same basis at arbitrary times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    order = basis.n_coeffs - 1
    return _mixed(_monomials(t / basis.horizon, order, basis.horizon), basis.mix)


@dataclass(frozen=True)
class TrajectoryParams:
    cx: np.ndarray
    cy: np.ndarray

    def __post_init__(self):
        cx, cy = np.asarray(self.cx, dtype=float), np.asarray(self.cy, dtype=float)
        if cx.shape != cy.shape or cx.ndim != 1:
            raise ValueError("cx and cy must be 1-D with equal length")
        if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
            raise ValueError("trajectory coefficients must be finite")
        object.__setattr__(self, "cx", cx)
        object.__setattr__(self, "cy", cy)

    @property
    def xi(self):
        return np.concatenate([self.cx, self.cy])

    @classmethod
    def from_xi(cls, xi):
        xi = np.asarray(xi, dtype=float)
        n = len(xi) // 2
        return cls(xi[:n], xi[n:])


@dataclass(frozen=True)
class FlatOutputs:
    x: np.ndarray
    y: np.ndarray
    xd: np.ndarray
    yd: np.ndarray
    xdd: np.ndarray
    ydd: np.ndarray
    alpha: np.ndarray
    zero_velocity: np.ndarray  # steps where the heading was held

    @property
    def states(self):
        """(n_steps, 3) yaw-plane states."""
        return np.column_stack([self.x, self.y, self.alpha])


def _split(basis, params):
    if isinstance(params, TrajectoryParams):
        return params.cx, params.cy
    xi = np.asarray(params, dtype=float)
    n = basis.n_coeffs
    return xi[..., :n], xi[..., n:]


def flat_outputs(basis, params, v_min=1e-10):
    cx, cy = _split(basis, params)
    x, y = basis.W @ cx, basis.W @ cy
    xd, yd = basis.Wd @ cx, basis.Wd @ cy
    xdd, ydd = basis.Wdd @ cx, basis.Wdd @ cy
    alpha = np.arctan2(yd, xd)
    slow = xd**2 + yd**2 < v_min
    if slow.any():
        alpha = alpha.copy()
        for k in np.flatnonzero(slow):
            alpha[k] = alpha[k - 1] if k > 0 else 0.0
        # a stopped start takes the first well-defined heading
        if slow[0] and not slow.all():
            first = np.flatnonzero(~slow)[0]
            alpha[:first] = alpha[first]
    return FlatOutputs(x, y, xd, yd, xdd, ydd, alpha, slow)


def heading_batch(basis, XI):
    """(B, n_steps, 3) states for a batch of coefficient vectors (B, 2n)."""
    XI = np.atleast_2d(XI)
    n = basis.n_coeffs
    cx, cy = XI[:, :n], XI[:, n:]
    x, y = cx @ basis.W.T, cy @ basis.W.T
    xd, yd = cx @ basis.Wd.T, cy @ basis.Wd.T
    return np.stack([x, y, np.arctan2(yd, xd)], axis=-1)


@dataclass(frozen=True)
class CostConfig:
    eps_curv: float = 1e-6
    w_accel: float = 1.0
    w_curv: float = 1.0

    def __post_init__(self):
        if self.eps_curv <= 0:
            raise ValueError("eps_curv must be positive")


def curvature_terms(xd, yd, xdd, ydd, eps):
    """Per-step ``kappa = (ydd xd - xdd yd) / (xd^2 + yd^2 + eps)^1.5``."""
    s = xd**2 + yd**2 + eps
    return (ydd * xd - xdd * yd) / s**1.5


def smoothness_cost(basis, params, config=None):
    """``c_r = sum_k w_a (xdd^2 + ydd^2) + w_c kappa^2`` and its gradient w.r.t. xi."""
    config = config or CostConfig()
    cx, cy = _split(basis, params)
    xd, yd = basis.Wd @ cx, basis.Wd @ cy
    xdd, ydd = basis.Wdd @ cx, basis.Wdd @ cy
    s = xd**2 + yd**2 + config.eps_curv
    num = ydd * xd - xdd * yd
    kappa = num / s**1.5
    value = config.w_accel * np.sum(xdd**2 + ydd**2) + config.w_curv * np.sum(kappa**2)

    k2 = 2 * config.w_curv * kappa
    dk_dxd = ydd / s**1.5 - 3 * num * xd / s**2.5
    dk_dyd = -xdd / s**1.5 - 3 * num * yd / s**2.5
    dk_dxdd = -yd / s**1.5
    dk_dydd = xd / s**1.5
    g_cx = basis.Wd.T @ (k2 * dk_dxd) + basis.Wdd.T @ (2 * config.w_accel * xdd + k2 * dk_dxdd)
    g_cy = basis.Wd.T @ (k2 * dk_dyd) + basis.Wdd.T @ (2 * config.w_accel * ydd + k2 * dk_dydd)
    return float(value), np.concatenate([g_cx, g_cy])


def smoothness_cost_batch(basis, XI, config=None):
    """Values only, for a batch of coefficient vectors (B, 2n)."""
    config = config or CostConfig()
    XI = np.atleast_2d(XI)
    n = basis.n_coeffs
    cx, cy = XI[:, :n], XI[:, n:]
    xd, yd = cx @ basis.Wd.T, cy @ basis.Wd.T
    xdd, ydd = cx @ basis.Wdd.T, cy @ basis.Wdd.T
    kappa = curvature_terms(xd, yd, xdd, ydd, config.eps_curv)
    return config.w_accel * np.sum(xdd**2 + ydd**2, axis=1) + config.w_curv * np.sum(kappa**2, axis=1)


@dataclass(frozen=True)
class ConstraintSet:
    """``A_eq xi = b_eq`` and ``A xi <= b``."""

    A_eq: np.ndarray
    b_eq: np.ndarray
    A: np.ndarray
    b: np.ndarray

    @property
    def n_vars(self):
        return self.A_eq.shape[1] if self.A_eq.size else self.A.shape[1]

    def residuals(self, xi):
        """(max |equality violation|, max inequality violation)."""
        xi = np.asarray(xi, dtype=float)
        eq = np.abs(self.A_eq @ xi - self.b_eq).max() if len(self.b_eq) else 0.0
        ineq = max(float((self.A @ xi - self.b).max()), 0.0) if len(self.b) else 0.0
        return float(eq), ineq

    def feasible(self, xi, tol=1e-8):
        eq, ineq = self.residuals(xi)
        return eq <= tol and ineq <= tol


def inscribed_box(center, radius):
    """Axis-aligned square inscribed in the sensing circle: (x_lo, x_hi, y_lo, y_hi)."""
    half = radius / np.sqrt(2.0)
    cx, cy = center
    return (cx - half, cx + half, cy - half, cy + half)


def assemble_constraints(b0, bn, box, basis):
    """Boundary conditions ``(x, y, xd, yd, xdd, ydd)`` at both ends plus a position box."""
    b0, bn = np.asarray(b0, dtype=float), np.asarray(bn, dtype=float)
    if b0.shape != (6,) or bn.shape != (6,):
        raise ValueError("boundary vectors must have 6 entries (x, y, vx, vy, ax, ay)")
    x_lo, x_hi, y_lo, y_hi = box
    if not (x_lo < x_hi and y_lo < y_hi):
        raise ValueError("box bounds must satisfy lo < hi")
    for name, pt in (("start", b0), ("goal", bn)):
        if not (x_lo <= pt[0] <= x_hi and y_lo <= pt[1] <= y_hi):
            raise InfeasibleBox(f"{name} point ({pt[0]}, {pt[1]}) lies outside the box")
    n = basis.n_coeffs
    W, Wd, Wdd = basis.W, basis.Wd, basis.Wdd
    rows = np.vstack([W[0], Wd[0], Wdd[0], W[-1], Wd[-1], Wdd[-1]])
    Z = np.zeros_like(rows)
    A_eq = np.block([[rows, Z], [Z, rows]])
    b_eq = np.array([b0[0], b0[2], b0[4], bn[0], bn[2], bn[4],
                     b0[1], b0[3], b0[5], bn[1], bn[3], bn[5]])
    K = basis.n_steps
    Zw = np.zeros((K, n))
    A = np.block([[W, Zw], [-W, Zw], [Zw, W], [Zw, -W]])
    b = np.concatenate([np.full(K, x_hi), np.full(K, -x_lo), np.full(K, y_hi), np.full(K, -y_lo)])
    return ConstraintSet(A_eq, b_eq, A, b)


def straight_line_init(basis, constraints, start, goal):
    """Coefficients closest (in position) to the straight segment, meeting the equalities."""
    start, goal = np.asarray(start, dtype=float), np.asarray(goal, dtype=float)
    s = basis.times / basis.horizon
    target = np.concatenate([start[0] + s * (goal[0] - start[0]), start[1] + s * (goal[1] - start[1])])
    n = basis.n_coeffs
    Z = np.zeros_like(basis.W)
    P = np.block([[basis.W, Z], [Z, basis.W]])
    E = constraints.A_eq
    m = E.shape[0]
    kkt = np.block([[P.T @ P, E.T], [E, np.zeros((m, m))]])
    rhs = np.concatenate([P.T @ target, constraints.b_eq])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return TrajectoryParams.from_xi(sol[: 2 * n])
