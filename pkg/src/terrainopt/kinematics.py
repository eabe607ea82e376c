"""Wheel-terrain loop-closure kinematics and the NLS pose predictor.

Unknown vector ``u`` (15 entries)::

    [z, beta, gamma, xc1, yc1, zc1, ..., xc4, yc4, zc4]

Residual vector ``g`` (16 entries): for each wheel the three components of
``p_og + R b_i - p_oc_i`` followed by the four terrain residuals
``zc_i - f(xc_i, yc_i)``. The rotation is ``R = Rz(alpha) Ry(gamma) Rx(beta)``.

Both the solver and the implicit Jacobian are vectorised over a leading batch
axis; the single-state functions are thin wrappers.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import dual
from .terrain import height_and_gradient
from .errors import NonFinite, SingularHessian, SingularJacobian, SolverDiverged

N_U = 15
N_G = 16
DELTA = np.array([1.0, -1.0, -1.0, 1.0])
R_SIGN = np.array([(2.5 - i) / abs(2.5 - i) for i in range(1, 5)])

# convergence codes reported by solve_pose_batch
CONVERGED, MAX_ITER, DAMPING_EXHAUSTED, GIMBAL = 0, 1, 2, 3

# relative cost change treated as a rounding-level tie in the LM acceptance test
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class VehicleGeometry:
    """Chassis half-dimensions (body x: ``h``, body y: ``w``) and leg lengths.

    Defaults roughly match a Husky-class chassis.
    """

    h: float = 0.28
    w: float = 0.33
    legs: tuple = (0.165, 0.165, 0.165, 0.165)
    mass: float = 50.0

    def __post_init__(self):
        legs = tuple(float(l) for l in self.legs)
        object.__setattr__(self, "legs", legs)
        if len(legs) != 4:
            raise ValueError("need four leg lengths")
        if self.h <= 0 or self.w <= 0 or min(legs) <= 0:
            raise ValueError("h, w and leg lengths must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")

    @property
    def delta(self):
        return DELTA

    @property
    def r(self):
        return R_SIGN

    @property
    def body_offsets(self):
        """(4, 3) wheel-contact offsets in the body frame."""
        return np.column_stack([DELTA * self.h, R_SIGN * self.w, -np.array(self.legs)])

    def to_dict(self):
        return {"h": self.h, "w": self.w, "legs": list(self.legs), "mass": self.mass}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"h", "w", "legs", "mass"}
        if unknown:
            raise ValueError(f"unknown vehicle keys: {sorted(unknown)}")
        defaults = cls()
        return cls(d.get("h", defaults.h), d.get("w", defaults.w),
                   tuple(d.get("legs", defaults.legs)), d.get("mass", defaults.mass))


@dataclass(frozen=True)
class YawState:
    x: float
    y: float
    alpha: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.alpha])):
            raise NonFinite("yaw state must be finite")

    def as_array(self):
        return np.array([self.x, self.y, self.alpha], dtype=float)


@dataclass(frozen=True)
class PoseSolution:
    z: float
    beta: float
    gamma: float
    contacts: np.ndarray  # (4, 3)
    residual_norm: float = 0.0
    iterations: int = 0
    converged: bool = True

    def vector(self):
        return np.concatenate([[self.z, self.beta, self.gamma], np.asarray(self.contacts).ravel()])

    @classmethod
    def from_vector(cls, u, residual_norm=0.0, iterations=0, converged=True):
        u = np.asarray(u, dtype=float)
        return cls(float(u[0]), float(u[1]), float(u[2]), u[3:].reshape(4, 3).copy(),
                   float(residual_norm), int(iterations), bool(converged))

    def to_dict(self):
        return {
            "z": self.z, "beta": self.beta, "gamma": self.gamma,
            "contacts": np.asarray(self.contacts).tolist(),
            "residual_norm": self.residual_norm,
            "converged": self.converged, "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["z"]), float(d["beta"]), float(d["gamma"]), np.array(d["contacts"], dtype=float),
                   float(d["residual_norm"]), int(d["iterations"]), bool(d["converged"]))

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass
class PoseBatch:
    """Result of :func:`solve_pose_batch`; arrays carry a leading batch axis."""

    U: np.ndarray  # (K, 15)
    residual_norm: np.ndarray
    grad_norm: np.ndarray
    iterations: np.ndarray
    status: np.ndarray

    @property
    def converged(self):
        return self.status == CONVERGED

    def __len__(self):
        return len(self.U)

    def solution(self, k):
        return PoseSolution.from_vector(self.U[k], self.residual_norm[k], self.iterations[k],
                                        self.status[k] == CONVERGED)

    def solutions(self):
        return [self.solution(k) for k in range(len(self))]


@dataclass(frozen=True)
class ImplicitJacobian:
    matrix: np.ndarray  # (15, 3): d u* / d (x, y, alpha)
    conditioning: float

    @property
    def pose_block(self):
        """Rows for (z, beta, gamma)."""
        return self.matrix[:3]


# -- rotations -----------------------------------------------------------------

KX = np.array([[0.0, 0, 0], [0, 0, -1], [0, 1, 0]])
KY = np.array([[0.0, 0, 1], [0, 0, 0], [-1, 0, 0]])
KZ = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 0]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def rotation(alpha, beta, gamma):
    """``Rz(alpha) @ Ry(gamma) @ Rx(beta)``, batched over array inputs."""
    alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (alpha, beta, gamma))
    return _rz(alpha) @ _ry(gamma) @ _rx(beta)


def rotation_derivatives(alpha, beta, gamma, second=False):
    """First (and optionally second) partials of the rotation w.r.t. (alpha, beta, gamma)."""
    Rz, Ry, Rx = _rz(alpha), _ry(gamma), _rx(beta)
    R = Rz @ Ry @ Rx
    Rg = Rz @ KY @ Ry @ Rx
    first = {"a": KZ @ R, "b": R @ KX, "g": Rg}
    if not second:
        return R, first
    sec = {
        "aa": KZ @ KZ @ R,
        "bb": R @ KX @ KX,
        "gg": Rz @ KY @ KY @ Ry @ Rx,
        "ab": KZ @ R @ KX,
        "ag": KZ @ Rg,
        "bg": Rg @ KX,
    }
    return R, first, sec


def rotation_generic(alpha, beta, gamma):
    """Same rotation written with scalar ops so it also accepts dual numbers."""
    ca, sa = dual.cos(alpha), dual.sin(alpha)
    cb, sb = dual.cos(beta), dual.sin(beta)
    cg, sg = dual.cos(gamma), dual.sin(gamma)
    return [
        [ca * cg, ca * sg * sb - sa * cb, ca * sg * cb + sa * sb],
        [sa * cg, sa * sg * sb + ca * cb, sa * sg * cb - ca * sb],
        [-sg, cg * sb, cg * cb],
    ]


# -- residuals -----------------------------------------------------------------

def _terrain_generic(terrain, x, y):
    xv, yv = dual.value(x), dual.value(y)
    f = np.asarray(terrain.height(xv, yv), dtype=float)
    if not isinstance(x, dual.Dual) and not isinstance(y, dual.Dual):
        return f
    fx, fy = (np.asarray(v, dtype=float) for v in terrain.gradient(xv, yv))
    fxx, fxy, fyy = (np.asarray(v, dtype=float) for v in terrain.hessian(xv, yv))
    return dual.binary(x, y, f, fx, fy, fxx, fxy, fyy)


def residuals_generic(state, u, geom, terrain):
    """Loop-closure residuals from scalar (float or dual) entries of ``state`` and ``u``."""
    x, y, alpha = state
    z, beta, gamma = u[0], u[1], u[2]
    R = rotation_generic(alpha, beta, gamma)
    b = geom.body_offsets
    p_og = (x, y, z)
    out = []
    for i in range(4):
        c = u[3 + 3 * i: 6 + 3 * i]
        for row in range(3):
            rb = R[row][0] * b[i, 0] + R[row][1] * b[i, 1] + R[row][2] * b[i, 2]
            out.append(p_og[row] + rb - c[row])
    for i in range(4):
        xc, yc, zc = u[3 + 3 * i], u[4 + 3 * i], u[5 + 3 * i]
        out.append(zc - _terrain_generic(terrain, xc, yc))
    return out


def _as_state(state):
    if isinstance(state, YawState):
        return state.as_array()
    return np.asarray(state, dtype=float)


def _as_u(u):
    if isinstance(u, PoseSolution):
        return u.vector()
    return np.asarray(u, dtype=float)


def residuals_batch(states, U, geom, terrain):
    """(K, 16) residuals for (K, 3) states and (K, 15) unknowns."""
    states, U = np.asarray(states, dtype=float), np.asarray(U, dtype=float)
    R = rotation(states[:, 2], U[:, 1], U[:, 2])
    b = geom.body_offsets
    p_og = np.column_stack([states[:, 0], states[:, 1], U[:, 0]])
    C = U[:, 3:].reshape(-1, 4, 3)
    loop = p_og[:, None, :] + np.einsum("kij,wj->kwi", R, b) - C
    terr = C[:, :, 2] - terrain.height(C[:, :, 0], C[:, :, 1])
    return np.concatenate([loop.reshape(-1, 12), terr], axis=1)


def loop_closure_residuals(state, u, geom, terrain):
    """16 stacked residuals for a single state and unknown vector."""
    s, uu = _as_state(state), _as_u(u)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(uu))):
        raise NonFinite("non-finite state or pose")
    return residuals_batch(s[None], uu[None], geom, terrain)[0]


def jacobians_batch(states, U, geom, terrain):
    """Residuals with analytic Jacobians w.r.t. ``u`` (K, 16, 15) and state (K, 16, 3)."""
    states, U = np.asarray(states, dtype=float), np.asarray(U, dtype=float)
    K = len(states)
    R, d = rotation_derivatives(states[:, 2], U[:, 1], U[:, 2])
    b = geom.body_offsets
    p_og = np.column_stack([states[:, 0], states[:, 1], U[:, 0]])
    C = U[:, 3:].reshape(K, 4, 3)
    loop = p_og[:, None, :] + np.einsum("kij,wj->kwi", R, b) - C
    f, (fx, fy) = height_and_gradient(terrain, C[:, :, 0], C[:, :, 1])
    terr = C[:, :, 2] - f
    g = np.concatenate([loop.reshape(K, 12), terr], axis=1)

    Ju = np.zeros((K, N_G, N_U))
    Jx = np.zeros((K, N_G, 3))
    dRb = {key: np.einsum("kij,wj->kwi", M, b) for key, M in d.items()}  # (K, 4, 3)
    for i in range(4):
        rows = slice(3 * i, 3 * i + 3)
        Ju[:, 3 * i + 2, 0] = 1.0
        Ju[:, rows, 1] = dRb["b"][:, i]
        Ju[:, rows, 2] = dRb["g"][:, i]
        Ju[:, rows, 3 + 3 * i: 6 + 3 * i] = -np.eye(3)
        Jx[:, 3 * i, 0] = 1.0
        Jx[:, 3 * i + 1, 1] = 1.0
        Jx[:, rows, 2] = dRb["a"][:, i]
        t = 12 + i
        Ju[:, t, 3 + 3 * i] = -fx[:, i]
        Ju[:, t, 4 + 3 * i] = -fy[:, i]
        Ju[:, t, 5 + 3 * i] = 1.0
    return g, Ju, Jx


def default_init(states, geom, terrain):
    """Flat-pose initial guess: chassis level at mean terrain height plus mean leg."""
    states = np.asarray(states, dtype=float)
    alpha = states[:, 2]
    b = geom.body_offsets
    ca, sa = np.cos(alpha), np.sin(alpha)
    cx = states[:, 0:1] + ca[:, None] * b[:, 0] - sa[:, None] * b[:, 1]
    cy = states[:, 1:2] + sa[:, None] * b[:, 0] + ca[:, None] * b[:, 1]
    z = terrain.height(cx, cy).mean(axis=1) + np.mean(geom.legs)
    U = np.zeros((len(states), N_U))
    U[:, 0] = z
    C = np.stack([cx, cy, z[:, None] + b[:, 2]], axis=-1)
    U[:, 3:] = C.reshape(-1, 12)
    return U


def solve_pose_batch(states, geom, terrain, warm_start=None, max_iter=100, lam0=1e-3,
                     method="lm", grad_tol=1e-10, step_tol=1e-12, lam_max=1e12):
    """Levenberg-Marquardt on each of ``K`` independent pose problems at once.

    ``method="gn"`` runs undamped Gauss-Newton steps instead.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if not np.all(np.isfinite(states)):
        raise NonFinite("non-finite yaw state")
    K = len(states)
    U = default_init(states, geom, terrain) if warm_start is None else np.array(warm_start, dtype=float).reshape(K, N_U)
    lam = np.full(K, lam0 if method == "lm" else 0.0)
    status = np.full(K, MAX_ITER)
    iters = np.zeros(K, dtype=int)
    gnorm = np.full(K, np.inf)
    g, Ju, _ = jacobians_batch(states, U, geom, terrain)
    cost = np.einsum("kj,kj->k", g, g)
    active = np.arange(K)
    eye = np.eye(N_U)

    for _ in range(max_iter):
        if active.size == 0:
            break
        ga, Ja = g[active], Ju[active]
        JtJ = np.einsum("kji,kjl->kil", Ja, Ja)
        Jtg = np.einsum("kji,kj->ki", Ja, ga)
        gn = 2 * np.linalg.norm(Jtg, axis=1)
        gnorm[active] = gn
        try:
            step = -np.linalg.solve(JtJ + lam[active, None, None] * eye, Jtg[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([-np.linalg.lstsq(A + l * eye, v, rcond=None)[0]
                             for A, v, l in zip(JtJ, Jtg, lam[active])])
        sn = np.linalg.norm(step, axis=1)
        done = (gn <= grad_tol) & (sn <= step_tol)
        status[active[done]] = CONVERGED
        keep = ~done
        active, step = active[keep], step[keep]
        if active.size == 0:
            break
        iters[active] += 1
        U_try = U[active] + step
        g_try, Ju_try, _ = jacobians_batch(states[active], U_try, geom, terrain)
        cost_try = np.einsum("kj,kj->k", g_try, g_try)
        # near a non-zero-residual minimum the cost change drops below the rounding
        # of residuals computed from metre-scale coordinates; such ties are broken
        # by the objective gradient
        gn_try = 2 * np.linalg.norm(np.einsum("kji,kj->ki", Ju_try, g_try), axis=1)
        tie = (cost_try <= cost[active] * (1 + TIE_RTOL)) & (gn_try < gn[keep])
        accept = np.isfinite(cost_try) & ((cost_try < cost[active]) | tie | (method == "gn"))
        acc = active[accept]
        U[acc], g[acc], Ju[acc], cost[acc] = U_try[accept], g_try[accept], Ju_try[accept], cost_try[accept]
        if method == "lm":
            lam[acc] /= 10.0
            rej = active[~accept]
            lam[rej] *= 10.0
            exhausted = rej[lam[rej] > lam_max]
            status[exhausted] = DAMPING_EXHAUSTED
            active = active[~np.isin(active, exhausted)]

    gimbal = (status == CONVERGED) & ((np.abs(U[:, 1]) >= np.pi / 2) | (np.abs(U[:, 2]) >= np.pi / 2))
    status[gimbal] = GIMBAL
    return PoseBatch(U, np.sqrt(cost), gnorm, iters, status)


def solve_pose(state, geom, terrain, warm_start=None, **kwargs):
    """Solve a single pose; raises on failure instead of returning a status."""
    s = _as_state(state)
    warm = None if warm_start is None else _as_u(warm_start)[None]
    res = solve_pose_batch(s[None], geom, terrain, warm, **kwargs)
    code = res.status[0]
    if code == DAMPING_EXHAUSTED:
        raise SingularJacobian(f"LM damping exhausted at state {s}")
    if code != CONVERGED:
        raise SolverDiverged(f"pose solver did not converge at state {s} (status {code})")
    return res.solution(0)


# -- implicit differentiation ----------------------------------------------------

def _second_order_terms(states, U, g, geom, terrain):
    """Sum_j g_j * d2 g_j as (K, 15, 15) and (K, 15, 3) corrections."""
    K = len(states)
    _, _, sec = rotation_derivatives(states[:, 2], U[:, 1], U[:, 2], second=True)
    b = geom.body_offsets
    loop = g[:, :12].reshape(K, 4, 3)

    def contract(M):
        return np.einsum("kwi,kij,wj->k", loop, M, b)

    Huu = np.zeros((K, N_U, N_U))
    Hux = np.zeros((K, N_U, 3))
    Huu[:, 1, 1] = contract(sec["bb"])
    Huu[:, 2, 2] = contract(sec["gg"])
    Huu[:, 1, 2] = Huu[:, 2, 1] = contract(sec["bg"])
    Hux[:, 1, 2] = contract(sec["ab"])
    Hux[:, 2, 2] = contract(sec["ag"])
    C = U[:, 3:].reshape(K, 4, 3)
    fxx, fxy, fyy = terrain.hessian(C[:, :, 0], C[:, :, 1])
    t = g[:, 12:]
    for i in range(4):
        ix, iy = 3 + 3 * i, 4 + 3 * i
        Huu[:, ix, ix] = -t[:, i] * fxx[:, i]
        Huu[:, ix, iy] = Huu[:, iy, ix] = -t[:, i] * fxy[:, i]
        Huu[:, iy, iy] = -t[:, i] * fyy[:, i]
    return Huu, Hux


def objective_hessians_batch(states, U, geom, terrain, mode="exact"):
    """``H = d2L/du2`` (K, 15, 15) and ``B = d2L/du dx`` (K, 15, 3) for ``L = sum g_j^2``."""
    states, U = np.atleast_2d(states), np.atleast_2d(U)
    if mode == "dual":
        H, B = [], []
        for s, u in zip(states, U):
            h, bb = objective_hessians_dual(s, u, geom, terrain)
            H.append(h)
            B.append(bb)
        return np.array(H), np.array(B)
    g, Ju, Jx = jacobians_batch(states, U, geom, terrain)
    H = 2 * np.einsum("kji,kjl->kil", Ju, Ju)
    B = 2 * np.einsum("kji,kjl->kil", Ju, Jx)
    if mode == "exact":
        Huu, Hux = _second_order_terms(states, U, g, geom, terrain)
        H = H + 2 * Huu
        B = B + 2 * Hux
    elif mode != "gn":
        raise ValueError(f"unknown hessian mode {mode!r}")
    return H, B


def objective_hessians_dual(state, u, geom, terrain):
    """Exact H and B via second-order forward-mode dual numbers (independent check)."""
    z0 = np.concatenate([_as_u(u), _as_state(state)])

    def objective(v):
        res = residuals_generic(v[15:], v[:15], geom, terrain)
        return sum(r * r for r in res)

    _, _, hess = dual.hessian(objective, z0)
    return hess[:15, :15], hess[:15, 15:]


def implicit_jacobian_batch(states, U, geom, terrain, mode="exact"):
    """``-H^{-1} B`` per problem. Returns (K, 15, 3) Jacobians and condition numbers."""
    H, B = objective_hessians_batch(states, U, geom, terrain, mode)
    cond = np.linalg.cond(H)
    D = -np.linalg.solve(H, B)
    return D, cond


def implicit_jacobian(state, solution, geom, terrain, mode="exact", cond_max=1e12):
    """Jacobian of the optimal pose w.r.t. the yaw-plane state (x, y, alpha)."""
    if isinstance(solution, PoseSolution) and not solution.converged:
        raise SolverDiverged("implicit Jacobian needs a converged pose")
    s, u = _as_state(state), _as_u(solution)
    H, B = objective_hessians_batch(s[None], u[None], geom, terrain, mode)
    cond = float(np.linalg.cond(H[0]))
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularHessian(f"cond(H) = {cond:.3g} exceeds {cond_max:.1e}")
    D = -np.linalg.solve(H[0], B[0])
    return ImplicitJacobian(D, cond)
