"""Forward-mode automatic differentiation with multi-directional dual numbers.

A :class:`Dual` carries a value together with its gradient with respect to
``n`` seed directions and, optionally, the ``n x n`` Hessian (second-order
truncated Taylor arithmetic). Values may be arrays, in which case the
derivative parts carry the value shape as leading axes, so the same scalar-style
code differentiates a whole batch at once.

The elementary functions below (``sin``, ``cos``, ...) accept plain floats and
numpy arrays as well, which lets model code be written once and evaluated
either numerically or with derivatives.
"""

import numpy as np


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class Dual:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100  # make ndarray <op> Dual defer to Dual

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = None if hess is None else np.asarray(hess, dtype=float)

    @property
    def order(self):
        return 1 if self.hess is None else 2

    @property
    def nvars(self):
        return self.grad.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(val={self.val!r}, order={self.order}, nvars={self.nvars})"

    def __getitem__(self, idx):
        hess = None if self.hess is None else self.hess[idx]
        return Dual(self.val[idx], self.grad[idx], hess)

    # -- construction helpers -------------------------------------------------

    def _const(self, c):
        c = np.asarray(c, dtype=float)
        n = self.nvars
        grad = np.zeros(c.shape + (n,))
        hess = None if self.hess is None else np.zeros(c.shape + (n, n))
        return Dual(c, grad, hess)

    def _lift(self, other):
        return other if isinstance(other, Dual) else self._const(other)

    def _unary(self, f0, f1, f2=None):
        grad = f1[..., None] * self.grad
        hess = None
        if self.hess is not None:
            hess = f1[..., None, None] * self.hess + f2[..., None, None] * _outer(self.grad, self.grad)
        return Dual(f0, grad, hess)

    # -- arithmetic -----------------------------------------------------------

    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if not isinstance(other, Dual):
            c = np.asarray(other, dtype=float)
            val = self.val + c
            grad = self.grad + np.zeros(c.shape)[..., None]
            hess = None if self.hess is None else self.hess + np.zeros(c.shape)[..., None, None]
            return Dual(val, grad, hess)
        hess = None
        if self.hess is not None and other.hess is not None:
            hess = self.hess + other.hess
        elif self.hess is not None or other.hess is not None:
            raise ValueError("cannot mix first- and second-order duals")
        return Dual(self.val + other.val, self.grad + other.grad, hess)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Dual):
            c = np.asarray(other, dtype=float)
            hess = None if self.hess is None else self.hess * c[..., None, None]
            return Dual(self.val * c, self.grad * c[..., None], hess)
        a, b = self, other
        grad = a.grad * b.val[..., None] + b.grad * a.val[..., None]
        hess = None
        if a.hess is not None:
            cross = _outer(a.grad, b.grad)
            hess = (a.hess * b.val[..., None, None] + b.hess * a.val[..., None, None]
                    + cross + np.swapaxes(cross, -1, -2))
        return Dual(a.val * b.val, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self):
        x = self.val
        return self._unary(1.0 / x, -1.0 / x**2, 2.0 / x**3)

    def __truediv__(self, other):
        if not isinstance(other, Dual):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("Dual exponents are not supported")
        x = self.val
        if p == 0:
            return self._const(np.ones_like(x))
        f1 = p * x ** (p - 1)
        f2 = p * (p - 1) * x ** (p - 2) if p != 1 else np.zeros_like(x)
        return self._unary(x**p, f1, f2)

    # comparisons act on values only
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)


def value(x):
    """Strip derivative information."""
    return x.val if isinstance(x, Dual) else x


def variables(values, order=1):
    """Seed one independent variable per entry along the last axis of ``values``.

    For ``values`` of shape ``(..., n)`` returns a list of ``n`` duals whose
    values have shape ``(...)`` and whose gradients are one-hot.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    batch = values.shape[:-1]
    eye = np.eye(n)
    out = []
    for j in range(n):
        grad = np.broadcast_to(eye[j], batch + (n,)).copy()
        hess = np.zeros(batch + (n, n)) if order == 2 else None
        out.append(Dual(values[..., j], grad, hess))
    return out


def binary(a, b, f, fa, fb, faa=None, fab=None, fbb=None):
    """Apply a bivariate function with known partials to (possibly dual) args.

    ``f, fa, fb, ...`` are the function value and partial derivatives already
    evaluated at the values of ``a`` and ``b``.
    """
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return f
    ref = a if isinstance(a, Dual) else b
    a = ref._lift(a)
    b = ref._lift(b)
    grad = fa[..., None] * a.grad + fb[..., None] * b.grad
    hess = None
    if ref.hess is not None:
        ab = _outer(a.grad, b.grad)
        hess = (fa[..., None, None] * a.hess + fb[..., None, None] * b.hess
                + faa[..., None, None] * _outer(a.grad, a.grad)
                + fab[..., None, None] * (ab + np.swapaxes(ab, -1, -2))
                + fbb[..., None, None] * _outer(b.grad, b.grad))
    return Dual(f, grad, hess)


def sin(x):
    if isinstance(x, Dual):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._unary(s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._unary(c, -s, -c)
    return np.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.val)
        return x._unary(r, 0.5 / r, -0.25 / (r * x.val))
    return np.sqrt(x)


def arccos(x):
    if isinstance(x, Dual):
        v = x.val
        one_m = 1.0 - v * v
        return x._unary(np.arccos(v), -1.0 / np.sqrt(one_m), -v / one_m**1.5)
    return np.arccos(x)


def arctan2(y, x):
    yv, xv = value(y), value(x)
    f = np.arctan2(yv, xv)
    if not isinstance(x, Dual) and not isinstance(y, Dual):
        return f
    r2 = xv * xv + yv * yv
    fy, fx = xv / r2, -yv / r2
    fyy = -2.0 * xv * yv / r2**2
    fxx = -fyy
    fxy = (yv * yv - xv * xv) / r2**2
    return binary(y, x, f, fy, fx, fyy, fxy, fxx)


def relu(x):
    """max(0, x) with subgradient 0 at the kink."""
    if isinstance(x, Dual):
        active = (x.val > 0).astype(float)
        return x._unary(np.maximum(x.val, 0.0), active, np.zeros_like(x.val))
    return np.maximum(x, 0.0)


def clip(x, lo, hi):
    if isinstance(x, Dual):
        inside = ((x.val >= lo) & (x.val <= hi)).astype(float)
        return x._unary(np.clip(x.val, lo, hi), inside, np.zeros_like(x.val))
    return np.clip(x, lo, hi)


def jacobian(fn, x):
    """Jacobian of a vector function ``fn`` (returning a list of outputs) at ``x``."""
    xs = variables(np.asarray(x, dtype=float))
    out = fn(xs)
    if isinstance(out, Dual):
        return out.grad
    return np.stack([o.grad for o in out], axis=-2)


def hessian(fn, x):
    """Value, gradient and Hessian of a scalar function at ``x``."""
    xs = variables(np.asarray(x, dtype=float), order=2)
    out = fn(xs)
    return out.val, out.grad, out.hess
