"""Analytic terrain models fitted to scattered elevation data.

The main model is a sum of ``N`` Fourier terms

    f(x, y) = sum_n a_n cos(w1_n X + w2_n Y) + b_n sin(w3_n X + w4_n Y)

in patch-centred coordinates ``X = x - cx``, ``Y = y - cy``. Frequencies come
from a deterministic low-discrepancy dictionary; the weights are then a linear
(ridge) least-squares problem. Every terrain exposes ``height``, ``gradient``
and ``hessian`` evaluated elementwise on arrays, which is all the kinematics
code needs.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateCloud, NonFinite


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("non-finite coordinate")


@dataclass(frozen=True)
class ElevationCloud:
    points: np.ndarray  # (M, 3) of x, y, z in meters
    patch_center: tuple = (0.0, 0.0)
    patch_radius: float = np.inf

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (M, 3), got {pts.shape}")
        _check_finite(pts)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "patch_center", tuple(float(c) for c in self.patch_center))
        d2 = (pts[:, 0] - self.patch_center[0]) ** 2 + (pts[:, 1] - self.patch_center[1]) ** 2
        if np.any(d2 > self.patch_radius**2 * (1 + 1e-12) + 1e-12):
            raise ValueError("points lie outside the patch radius")

    @classmethod
    def from_points(cls, points, center=None, radius=None):
        """Wrap points, inferring the patch as the enclosing circle about the centroid."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _check_finite(pts)
        if center is None:
            center = pts[:, :2].mean(axis=0) if len(pts) else (0.0, 0.0)
        center = np.asarray(center, dtype=float)
        if radius is None:
            radius = float(np.sqrt(((pts[:, :2] - center) ** 2).sum(axis=1)).max()) if len(pts) else 0.0
        return cls(pts, tuple(center), radius)

    def __len__(self):
        return len(self.points)

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @property
    def z(self):
        return self.points[:, 2]


def read_cloud_csv(path, center=None, radius=None):
    """Read a ``x,y,z`` CSV file (header required)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        if header != ["x", "y", "z"]:
            raise ValueError(f"{path}: expected header 'x,y,z', got {','.join(header)!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    if any(len(r) != 3 for r in rows):
        raise ValueError(f"{path}: every row needs exactly three values")
    return ElevationCloud.from_points(np.array(rows, dtype=float).reshape(-1, 3), center, radius)


def write_cloud_csv(cloud, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for p in cloud.points:
            w.writerow([repr(float(v)) for v in p])


@dataclass(frozen=True)
class TerrainModel:
    """Fourier-basis height field ``f(x, y)`` with analytic derivatives."""

    frequencies: np.ndarray  # (N, 4) rad/m: w1, w2 (cosine), w3, w4 (sine)
    weights: np.ndarray  # (N, 2): a_n, b_n
    center: tuple = (0.0, 0.0)
    fit_rmse: float = 0.0

    def __post_init__(self):
        freqs = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if freqs.shape[1] != 4 or weights.shape[1] != 2 or len(freqs) != len(weights) or len(freqs) < 1:
            raise ValueError("need N >= 1 frequency quadruples and N weight pairs")
        _check_finite(freqs, weights)
        freqs.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def n(self):
        return len(self.frequencies)

    def _phases(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _check_finite(x, y)
        X = (x - self.center[0])[..., None]
        Y = (y - self.center[1])[..., None]
        w = self.frequencies
        return w[:, 0] * X + w[:, 1] * Y, w[:, 2] * X + w[:, 3] * Y

    def height(self, x, y):
        pc, ps = self._phases(x, y)
        a, b = self.weights[:, 0], self.weights[:, 1]
        return np.cos(pc) @ a + np.sin(ps) @ b

    def gradient(self, x, y):
        pc, ps = self._phases(x, y)
        a, b = self.weights[:, 0], self.weights[:, 1]
        w1, w2, w3, w4 = self.frequencies.T
        sc, cs = -np.sin(pc) * a, np.cos(ps) * b
        return sc @ w1 + cs @ w3, sc @ w2 + cs @ w4

    def height_and_gradient(self, x, y):
        """``f, (f_x, f_y)`` sharing one phase evaluation."""
        pc, ps = self._phases(x, y)
        a, b = self.weights[:, 0], self.weights[:, 1]
        w1, w2, w3, w4 = self.frequencies.T
        c, s = np.cos(pc), np.sin(ps)
        f = c @ a + s @ b
        sc, cs = -np.sin(pc) * a, np.cos(ps) * b
        return f, (sc @ w1 + cs @ w3, sc @ w2 + cs @ w4)

    def hessian(self, x, y):
        pc, ps = self._phases(x, y)
        a, b = self.weights[:, 0], self.weights[:, 1]
        w1, w2, w3, w4 = self.frequencies.T
        cc, ss = -np.cos(pc) * a, -np.sin(ps) * b
        fxx = cc @ (w1 * w1) + ss @ (w3 * w3)
        fxy = cc @ (w1 * w2) + ss @ (w3 * w4)
        fyy = cc @ (w2 * w2) + ss @ (w4 * w4)
        return fxx, fxy, fyy

    __call__ = height

    def to_dict(self):
        return {
            "n": self.n,
            "center": list(self.center),
            "frequencies": self.frequencies.tolist(),
            "weights": self.weights.tolist(),
            "fit_rmse": float(self.fit_rmse),
        }

    @classmethod
    def from_dict(cls, d):
        model = cls(np.array(d["frequencies"]), np.array(d["weights"]), tuple(d["center"]), float(d["fit_rmse"]))
        if model.n != int(d["n"]):
            raise ValueError(f"model declares n={d['n']} but has {model.n} terms")
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class PlaneTerrain:
    """Exact plane ``z = slope_x x + slope_y y + offset``; used by the plane-pose checks."""

    slope_x: float = 0.0
    slope_y: float = 0.0
    offset: float = 0.0

    def height(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        _check_finite(x, y)
        return self.slope_x * x + self.slope_y * y + self.offset

    def gradient(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        _check_finite(x, y)
        shape = np.broadcast_shapes(x.shape, y.shape)
        return np.full(shape, float(self.slope_x)), np.full(shape, float(self.slope_y))

    def height_and_gradient(self, x, y):
        return self.height(x, y), self.gradient(x, y)

    def hessian(self, x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.zeros(shape), np.zeros(shape), np.zeros(shape)

    __call__ = height


def height(model, x, y):
    return model.height(x, y)


def height_gradient(model, x, y):
    return model.gradient(x, y)


def height_and_gradient(model, x, y):
    """Falls back to two calls for surfaces without a fused method."""
    fused = getattr(model, "height_and_gradient", None)
    if fused is not None:
        return fused(x, y)
    return model.height(x, y), model.gradient(x, y)


def frequency_dictionary(n_frequencies, patch_radius, seed=0, cycles=4.0):
    """Deterministic scrambled-Halton frequency quadruples.

    The first row is the zero frequency so the cosine term carries a constant
    offset. The remaining rows cover ``w1, w3`` in ``[0, w_max]`` and
    ``w2, w4`` in ``[-w_max, w_max]`` (a half-plane of directions, which is all
    of them up to sign) with ``w_max = 2 pi cycles / radius``.
    """
    if n_frequencies < 1:
        raise ValueError("n_frequencies must be >= 1")
    radius = float(patch_radius) if np.isfinite(patch_radius) and patch_radius > 0 else 1.0
    w_max = 2 * np.pi * cycles / radius
    freqs = np.zeros((n_frequencies, 4))
    if n_frequencies > 1:
        u = qmc.Halton(d=4, scramble=True, seed=seed).random(n_frequencies - 1)
        freqs[1:, 0] = u[:, 0] * w_max
        freqs[1:, 1] = (2 * u[:, 1] - 1) * w_max
        freqs[1:, 2] = u[:, 2] * w_max
        freqs[1:, 3] = (2 * u[:, 3] - 1) * w_max
    return freqs


def design_matrix(frequencies, X, Y):
    """Basis evaluated at centred points: ``[cos(...)_1..N, sin(...)_1..N]``."""
    w = np.asarray(frequencies)
    pc = np.outer(X, w[:, 0]) + np.outer(Y, w[:, 1])
    ps = np.outer(X, w[:, 2]) + np.outer(Y, w[:, 3])
    return np.hstack([np.cos(pc), np.sin(ps)])


def _solve_weights(Phi, z, ridge):
    n = Phi.shape[1]
    A = np.vstack([Phi, np.sqrt(ridge) * np.eye(n)])
    rhs = np.concatenate([z, np.zeros(n)])
    w, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return w


def _refine_frequencies(freqs, X, Y, z, ridge, steps):
    """Variable-projection gradient steps on the frequencies (weights re-solved)."""
    n = len(freqs)

    def loss_and_grad(f):
        Phi = design_matrix(f, X, Y)
        w = _solve_weights(Phi, z, ridge)
        r = Phi @ w - z
        loss = r @ r + ridge * w @ w
        a, b = w[:n], w[n:]
        pc = np.outer(X, f[:, 0]) + np.outer(Y, f[:, 1])
        ps = np.outer(X, f[:, 2]) + np.outer(Y, f[:, 3])
        gc = -(2 * r[:, None] * np.sin(pc)) * a  # dL/d(phase_c)
        gs = (2 * r[:, None] * np.cos(ps)) * b
        grad = np.stack([X @ gc, Y @ gc, X @ gs, Y @ gs], axis=1)
        grad[0] = 0.0  # keep the constant term pinned
        return loss, grad

    loss, grad = loss_and_grad(freqs)
    step = 1e-3 / max(np.abs(grad).max(), 1e-12)
    for _ in range(steps):
        for _ in range(20):
            trial = freqs - step * grad
            trial_loss, trial_grad = loss_and_grad(trial)
            if trial_loss < loss:
                freqs, loss, grad = trial, trial_loss, trial_grad
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return freqs


def fit_terrain(cloud, n_frequencies=100, seed=0, frequencies=None, ridge=1e-8,
                refine_steps=0, cycles=4.0):
    """Fit a :class:`TerrainModel` to an elevation cloud.

    ``frequencies`` overrides the generated dictionary (shape ``(N, 4)``).
    ``refine_steps > 0`` additionally runs gradient steps on the frequencies.
    """
    if not isinstance(cloud, ElevationCloud):
        cloud = ElevationCloud.from_points(cloud)
    if frequencies is None:
        if n_frequencies < 1:
            raise ValueError("n_frequencies must be >= 1")
        freqs = frequency_dictionary(n_frequencies, cloud.patch_radius, seed, cycles)
    else:
        freqs = np.atleast_2d(np.asarray(frequencies, dtype=float))
        _check_finite(freqs)
    M, N = len(cloud), len(freqs)
    if M == 0 or M < 2 * N:
        raise DegenerateCloud(f"need at least {2 * N} points for {N} frequencies, got {M}")
    X = cloud.x - cloud.patch_center[0]
    Y = cloud.y - cloud.patch_center[1]
    xy = np.column_stack([X, Y])
    sv = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateCloud("points are collinear in the x-y plane")

    if refine_steps > 0:
        freqs = _refine_frequencies(freqs, X, Y, cloud.z, ridge, refine_steps)
    Phi = design_matrix(freqs, X, Y)
    w = _solve_weights(Phi, cloud.z, ridge)
    r = Phi @ w - cloud.z
    rmse = float(np.sqrt(np.mean(r**2)))
    return TerrainModel(freqs, np.column_stack([w[:N], w[N:]]), cloud.patch_center, rmse)


# -- synthetic terrains --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSurface:
    """Closed-form test surfaces: ``flat``, ``incline``, ``sinusoidal``, ``hills``."""

    kind: str
    slope: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 1.0
    seed: int = 0
    extent: float = 10.0
    bumps: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("flat", "incline", "sinusoidal", "hills"):
            raise ValueError(f"unknown terrain kind {self.kind!r}")
        if self.kind == "sinusoidal" and self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.kind == "hills" and self.bumps is None:
            rng = np.random.default_rng(self.seed)
            k = 8
            half = self.extent / 2
            centers = rng.uniform(-0.8 * half, 0.8 * half, size=(k, 2))
            amps = rng.uniform(0.25, 0.7, size=k) * rng.choice([-1.0, 1.0], size=k)
            sigmas = rng.uniform(0.12, 0.25, size=k) * self.extent
            object.__setattr__(self, "bumps", np.column_stack([centers, amps, sigmas]))

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.kind == "flat":
            return np.zeros(np.broadcast_shapes(x.shape, y.shape))
        if self.kind == "incline":
            return self.slope * x + 0.0 * y
        if self.kind == "sinusoidal":
            k = 2 * np.pi / self.wavelength
            return self.amplitude * np.sin(k * x) * np.cos(k * y)
        z = np.zeros(np.broadcast_shapes(x.shape, y.shape))
        for cx, cy, a, s in self.bumps:
            z = z + a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
        return z


def synth_terrain(kind, extent=10.0, sample_spacing=0.25, slope=0.2, amplitude=0.5,
                  wavelength=4.0, seed=0):
    """Grid-sample a synthetic surface over the disc of diameter ``extent``."""
    if extent <= 0 or sample_spacing <= 0:
        raise ValueError("extent and sample_spacing must be positive")
    surface = SyntheticSurface(kind, slope=slope, amplitude=amplitude, wavelength=wavelength,
                               seed=seed, extent=extent)
    half = extent / 2
    n = int(np.floor(half / sample_spacing + 1e-9))
    ticks = np.arange(-n, n + 1) * sample_spacing
    X, Y = np.meshgrid(ticks, ticks, indexing="ij")
    inside = X**2 + Y**2 <= half**2 + 1e-12
    x, y = X[inside], Y[inside]
    pts = np.column_stack([x, y, surface(x, y)])
    return ElevationCloud(pts, (0.0, 0.0), half)
