"""Independent reference computations for the test suite.

Nothing here imports the rotation, residual, stability or QP code it is used
to check; the formulas are rederived from scratch.
"""

import itertools
from dataclasses import dataclass

import numpy as np

# body-frame corner signs, same traversal as the solver but written out by hand
_CORNERS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


@dataclass(frozen=True)
class PlanePoseOracle:
    """Plane ``{p : normal . p = offset}`` and a rigid chassis with equal legs."""

    normal: tuple
    offset: float
    geometry: object  # VehicleGeometry; only h, w and legs are read

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or n[2] <= 0:
            raise ValueError("plane normal must be a 3-vector with positive z")
        object.__setattr__(self, "normal", tuple(n / np.linalg.norm(n)))
        legs = self.geometry.legs
        if max(legs) - min(legs) > 1e-12:
            raise ValueError("plane oracle needs equal leg lengths")

    @classmethod
    def from_slopes(cls, slope_x, slope_y, offset, geometry):
        """Plane ``z = slope_x x + slope_y y + offset``."""
        n = np.array([-slope_x, -slope_y, 1.0])
        s = np.linalg.norm(n)
        return cls(tuple(n / s), offset / s, geometry)


def plane_pose(oracle, state):
    """Exact (z, beta, gamma, contacts) for a chassis resting on the plane.

    The chassis frame is parallel to the plane and sits one leg length above it.
    Roll and pitch come from writing the plane normal in the heading-aligned
    frame: ``n' = (sin g cos b, -sin b, cos g cos b)``.
    """
    x, y, alpha = (float(v) for v in np.asarray(state, dtype=float).ravel()[:3])
    nx, ny, nz = oracle.normal
    leg = oracle.geometry.legs[0]
    ca, sa = np.cos(alpha), np.sin(alpha)
    mx = ca * nx + sa * ny
    my = -sa * nx + ca * ny
    mz = nz
    beta = -np.arcsin(my)
    gamma = np.arctan2(mx, mz)
    z = (oracle.offset + leg - nx * x - ny * y) / nz

    # body axes: x is the heading direction tilted by pitch, z is the plane normal
    cg, sg = np.cos(gamma), np.sin(gamma)
    bx = np.array([ca * cg, sa * cg, -sg])
    bz = np.array([nx, ny, nz])
    by = np.cross(bz, bx)
    origin = np.array([x, y, z])
    h, w = oracle.geometry.h, oracle.geometry.w
    contacts = np.array([origin + dh * h * bx + dw * w * by - leg * bz for dh, dw in _CORNERS])
    return z, beta, gamma, contacts


def finite_diff_jacobian(fn, point, h=1e-5):
    """Central-difference Jacobian, one column per input coordinate."""
    point = np.asarray(point, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(point), dtype=float))
    J = np.zeros((f0.size, point.size))
    for j in range(point.size):
        e = np.zeros_like(point)
        e[j] = h
        fp = np.atleast_1d(np.asarray(fn(point + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fn(point - e), dtype=float))
        J[:, j] = (fp - fm) / (2 * h)
    return J


def tipover_angle_2d(com_offset, axis_half_span, com_height):
    """Planar force angle about an edge at ``+axis_half_span`` under gravity."""
    return float(np.arctan2(axis_half_span - com_offset, com_height))


def tipover_2d(com_offset, axis_half_span, com_height):
    """True when the gravity line through the COM falls outside the edge."""
    if axis_half_span <= 0 or com_height <= 0:
        raise ValueError("spans must be positive")
    return com_offset > axis_half_span


def brute_force_projection(xi_bar, E, e, A, b, tol=1e-9):
    """Projection QP by enumerating every candidate active set.

    Only practical for a handful of variables. Returns (x, active) or
    ``(None, None)`` when no subset yields a KKT point.
    """
    xi_bar = np.asarray(xi_bar, dtype=float)
    n = len(xi_bar)
    m_eq = len(e)
    best, best_val, best_set = None, np.inf, None
    for k in range(0, n - m_eq + 1):
        for S in itertools.combinations(range(len(b)), k):
            C = np.vstack([E, A[list(S)]]) if S else E
            c = np.concatenate([e, b[list(S)]])
            if C.shape[0] and np.linalg.matrix_rank(C) < C.shape[0]:
                continue
            if C.shape[0]:
                y = np.linalg.solve(C @ C.T, C @ xi_bar - c)
                x = xi_bar - C.T @ y
                mu = y[m_eq:]
            else:
                x, mu = xi_bar.copy(), np.zeros(0)
            if np.any(mu < -tol) or np.any(A @ x - b > tol):
                continue
            val = 0.5 * np.sum((x - xi_bar) ** 2)
            if val < best_val - 1e-12:
                best, best_val, best_set = x, val, S
    return best, best_set


def min_accel_spline(basis, constraints):
    """Closed-form minimiser of the acceleration energy under the equalities only."""
    Z = np.zeros_like(basis.Wdd)
    P = np.block([[basis.Wdd, Z], [Z, basis.Wdd]])
    E, e = constraints.A_eq, constraints.b_eq
    m = E.shape[0]
    kkt = np.block([[2 * P.T @ P, E.T], [E, np.zeros((m, m))]])
    rhs = np.concatenate([np.zeros(P.shape[1]), e])
    return np.linalg.lstsq(kkt, rhs, rcond=None)[0][: P.shape[1]]
