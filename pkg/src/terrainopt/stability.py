"""Force-angle tip-over stability measure and its cost.

Tip-over axes are the edges of the support polygon traced through the four
contacts in wheel order (closing back to wheel 1). For each axis the COM-to-axis
normal and the net force are projected onto the plane orthogonal to the axis;
the signed angle between them is positive while the force line stays inside
the polygon.

The core routine works on 3-vectors given as component triples, so it accepts
scalars, batched arrays and :class:`~terrainopt.dual.Dual` numbers alike.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import DegenerateSupportPolygon, ZeroProjectedForce

GRAVITY = 9.81


@dataclass(frozen=True)
class StabilityConfig:
    epsilon: float = 0.05  # margin on the tip-over angles, rad
    w_theta: float = 0.05  # weight on adjacent-angle differences
    force: tuple = (0.0, 0.0, -50.0 * GRAVITY)  # net force on the vehicle, N

    def __post_init__(self):
        object.__setattr__(self, "force", tuple(float(f) for f in self.force))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.w_theta < 0:
            raise ValueError("w_theta must be non-negative")
        if len(self.force) != 3 or np.linalg.norm(self.force) <= 0:
            raise ValueError("force must be a non-zero 3-vector")

    @classmethod
    def gravity(cls, mass, epsilon=0.05, w_theta=0.05):
        """Quasi-static gravity-only force for a vehicle of ``mass`` kg."""
        return cls(epsilon, w_theta, (0.0, 0.0, -mass * GRAVITY))


@dataclass(frozen=True)
class StabilityReport:
    axes: np.ndarray  # (4, 3)
    normals: np.ndarray  # (4, 3)
    force_components: np.ndarray  # (4, 3)
    angles: np.ndarray  # (4,)
    signs: np.ndarray  # (4,)
    cost: float
    min_angle: float

    def to_dict(self):
        return {
            "axes": self.axes.tolist(),
            "normals": self.normals.tolist(),
            "force_components": self.force_components.tolist(),
            "angles": self.angles.tolist(),
            "signs": self.signs.astype(int).tolist(),
            "cost": float(self.cost),
            "min_angle": float(self.min_angle),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _sub(a, b):
    return tuple(ai - bi for ai, bi in zip(a, b))


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _scale(a, s):
    return tuple(ai * s for ai in a)


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _norm(a):
    return dual.sqrt(_dot(a, a))


def tipover_terms(contacts, com, force, check=True):
    """Axes, projected normals/forces and signed angles.

    ``contacts`` is a list of four component triples, ``com`` and ``force``
    component triples. Returns a dict of per-axis lists.
    """
    # polygon orientation relative to "up" = against the force
    vals = [tuple(np.asarray(dual.value(c), dtype=float) for c in p) for p in contacts]
    area_vec = (0.0, 0.0, 0.0)
    for i in range(4):
        area_vec = tuple(a + c for a, c in zip(area_vec, _cross(vals[i], vals[(i + 1) % 4])))
    fval = tuple(np.asarray(dual.value(f), dtype=float) for f in force)
    area = 0.5 * np.sqrt(_dot(area_vec, area_vec))
    if check and np.any(area <= 1e-6):
        raise DegenerateSupportPolygon("support polygon area below 1e-6 m^2")
    signed_area = -0.5 * _dot(area_vec, fval) / np.sqrt(_dot(fval, fval))
    # a force lying in the polygon plane gives no orientation; fall back to +z
    signed_area = np.where(np.abs(signed_area) > 1e-9 * area, signed_area, area_vec[2])
    orient = np.where(signed_area >= 0, 1.0, -1.0)

    out = {"axes": [], "normals": [], "forces": [], "angles": [], "s": [], "c": []}
    for i in range(4):
        nxt = contacts[(i + 1) % 4]
        e = _sub(nxt, contacts[i])
        e_hat = _scale(e, 1.0 / _norm(e))
        d = _sub(nxt, com)
        pi = _sub(d, _scale(e_hat, _dot(e_hat, d)))
        nu = _sub(force, _scale(e_hat, _dot(e_hat, force)))
        nu_norm = _norm(nu)
        pi_norm = _norm(pi)
        if check and np.any(dual.value(nu_norm) < 1e-12):
            raise ZeroProjectedForce(f"force is parallel to tip-over axis {i + 1}")
        if check and np.any(dual.value(pi_norm) < 1e-12):
            raise DegenerateSupportPolygon(f"centre of mass lies on tip-over axis {i + 1}")
        pi_hat = _scale(pi, 1.0 / pi_norm)
        nu_hat = _scale(nu, 1.0 / nu_norm)
        s = _dot(_cross(pi_hat, nu_hat), e_hat) * orient
        c = _dot(pi_hat, nu_hat)
        out["axes"].append(e)
        out["normals"].append(pi)
        out["forces"].append(nu)
        out["s"].append(s)
        out["c"].append(c)
        # equals sign * arccos(c) with sign = +1 iff s > 0, but smooth at 0
        out["angles"].append(dual.arctan2(s, c))
    return out


def stability_cost_from_angles(angles, epsilon, w_theta):
    cost = 0.0
    for i in range(4):
        margin = dual.relu(epsilon - angles[i])
        diff = angles[i] - angles[(i + 1) % 4]
        cost = cost + margin + w_theta * diff * diff
    return cost


def _triples(contacts):
    contacts = np.asarray(contacts, dtype=float)
    return [tuple(contacts[..., i, j] for j in range(3)) for i in range(4)]


def stability_report(pose, com, config=None):
    """Full force-angle report for a single pose solution and COM position."""
    config = config or StabilityConfig()
    if hasattr(pose, "converged") and not pose.converged:
        raise ValueError("stability report needs a converged pose")
    contacts = pose.contacts if hasattr(pose, "contacts") else pose
    com = tuple(float(c) for c in com)
    t = tipover_terms(_triples(contacts), com, config.force)
    angles = np.array([float(a) for a in t["angles"]])
    signs = np.where(np.array([float(s) for s in t["s"]]) > 0, 1, -1)
    cost = float(stability_cost_from_angles(angles, config.epsilon, config.w_theta))
    return StabilityReport(
        axes=np.array([[float(v) for v in e] for e in t["axes"]]),
        normals=np.array([[float(v) for v in p] for p in t["normals"]]),
        force_components=np.array([[float(v) for v in n] for n in t["forces"]]),
        angles=angles,
        signs=signs,
        cost=cost,
        min_angle=float(angles.min()),
    )


def angles_batch(contacts, com, force, check=True):
    """(K, 4) tip-over angles for (K, 4, 3) contacts and (K, 3) COM positions."""
    contacts, com = np.asarray(contacts, dtype=float), np.asarray(com, dtype=float)
    t = tipover_terms(_triples(contacts), tuple(com[..., j] for j in range(3)),
                      tuple(np.full(com.shape[:-1], f) for f in force), check)
    return np.stack(t["angles"], axis=-1)


def stability_cost_batch(contacts, com, config, check=True):
    """Per-problem stability cost and minimum tip-over angle."""
    theta = angles_batch(contacts, com, config.force, check)
    cost = stability_cost_from_angles([theta[:, i] for i in range(4)], config.epsilon, config.w_theta)
    return cost, theta.min(axis=1)


def cost_gradient_wrt_geometry(contacts, com, config):
    """d c_s / d (com, contacts) as (K, 15) via forward-mode duals.

    Column order: com (3), then contacts wheel by wheel (12).
    """
    contacts, com = np.asarray(contacts, dtype=float), np.asarray(com, dtype=float)
    K = len(com)
    seeds = dual.variables(np.concatenate([com, contacts.reshape(K, 12)], axis=1))
    com_d = tuple(seeds[0:3])
    cont_d = [tuple(seeds[3 + 3 * i: 6 + 3 * i]) for i in range(4)]
    force = tuple(np.full(K, f) for f in config.force)
    t = tipover_terms(cont_d, com_d, force)
    cost = stability_cost_from_angles(t["angles"], config.epsilon, config.w_theta)
    return cost.grad


def stability_cost_gradient_batch(contacts, com, D, config):
    """Total derivative of c_s w.r.t. yaw state (x, y, alpha), (K, 3).

    The COM is taken to sit at the chassis reference point ``p_og = (x, y, z)``,
    so it moves with x, y directly and with z through the implicit Jacobian
    ``D`` (K, 15, 3).
    """
    G = cost_gradient_wrt_geometry(contacts, com, config)
    K = len(G)
    dcom = np.zeros((K, 3, 3))
    dcom[:, 0, 0] = 1.0
    dcom[:, 1, 1] = 1.0
    dcom[:, 2, :] = D[:, 0, :]
    return np.einsum("ki,kij->kj", G[:, :3], dcom) + np.einsum("ki,kij->kj", G[:, 3:], D[:, 3:, :])


def stability_cost_gradient(pose, jac, com, config=None):
    """Single-pose version of :func:`stability_cost_gradient_batch`."""
    config = config or StabilityConfig()
    D = jac.matrix if hasattr(jac, "matrix") else np.asarray(jac)
    contacts = np.asarray(pose.contacts)[None]
    return stability_cost_gradient_batch(contacts, np.asarray(com, dtype=float)[None], D[None], config)[0]
