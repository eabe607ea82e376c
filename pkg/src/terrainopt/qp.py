"""Dense Euclidean projection onto ``{xi : E xi = e, A xi <= b}``.

Dual active-set method in the style of Goldfarb and Idnani, specialised to the
identity Hessian: start from the equality-constrained projection (the
unconstrained minimiser of the dual), then repeatedly pick the most violated
inequality and move along the primal/dual path that enforces it, dropping
active constraints whose multipliers would turn negative. Every intermediate
point is dual feasible, so there is no need for a feasible starting point.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ProjectionInfeasible


@dataclass
class QPResult:
    x: np.ndarray
    lam_eq: np.ndarray  # multipliers of the equality rows
    mu: np.ndarray  # multipliers of every inequality row (zero when inactive)
    active: list
    iterations: int


def _independent_rows(E, e, tol=1e-10):
    if E.shape[0] == 0:
        return E, e, np.arange(0)
    _, R, piv = scipy.linalg.qr(E.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag.max(), 1.0)))
    keep = np.sort(piv[:rank])
    if rank < E.shape[0]:
        sol = np.linalg.lstsq(E[keep], e[keep], rcond=None)[0]
        if np.abs(E @ sol - e).max() > 1e-8 * max(1.0, np.abs(e).max()):
            raise ProjectionInfeasible("equality constraints are inconsistent")
    return E[keep], e[keep], keep


def _solve_gram(C, v):
    G = C @ C.T
    try:
        return np.linalg.solve(G, v)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, v, rcond=None)[0]


def solve_projection(xi_bar, E, e, A, b, tol=1e-10, max_iter=1000):
    """Minimise ``0.5 ||xi - xi_bar||^2`` subject to ``E xi = e`` and ``A xi <= b``."""
    xi_bar = np.asarray(xi_bar, dtype=float)
    n = len(xi_bar)
    E = np.asarray(E, dtype=float).reshape(-1, n)
    e = np.asarray(e, dtype=float).ravel()
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).ravel()
    E_full_rows = E.shape[0]
    E, e, eq_rows = _independent_rows(E, e)
    me = E.shape[0]

    if me:
        y = _solve_gram(E, E @ xi_bar - e)
        x = xi_bar - E.T @ y
    else:
        y = np.zeros(0)
        x = xi_bar.copy()
    lam = y.copy()
    active, mu_act = [], []
    it = 0
    scale = 1.0 + np.abs(b)

    while True:
        viol = (A @ x - b) / scale
        if active:
            viol[active] = -np.inf
        if viol.size == 0:
            break
        p = int(np.argmax(viol))
        if viol[p] <= tol:
            break
        a_p = A[p]
        mu_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise ProjectionInfeasible("active-set iteration limit reached")
            C = np.vstack([E, A[active]]) if active else E
            if C.shape[0]:
                # least squares on C^T keeps z reliable when a_p is nearly spanned
                r = -np.linalg.lstsq(C.T, a_p, rcond=None)[0]
                z = -a_p - C.T @ r
            else:
                r = np.zeros(0)
                z = -a_p
            r_act = r[me:]
            t1, block = np.inf, None
            for k, rk in enumerate(r_act):
                if rk < -1e-14:
                    ratio = mu_act[k] / -rk
                    if ratio < t1:
                        t1, block = ratio, k
            zz = a_p @ z
            if C.shape[0] >= n or np.linalg.norm(z) <= 1e-10 * np.linalg.norm(a_p):
                # a_p is spanned by the working set: only a dual step is possible
                if block is None:
                    raise ProjectionInfeasible(f"inequality row {p} cannot be satisfied")
                t = t1
                lam = lam + t * r[:me]
                mu_act = [m + t * rk for m, rk in zip(mu_act, r_act)]
                mu_p += t
                active.pop(block)
                mu_act.pop(block)
                continue
            t2 = (b[p] - a_p @ x) / zz
            t = min(t1, t2)
            x = x + t * z
            lam = lam + t * r[:me]
            mu_act = [max(m + t * rk, 0.0) for m, rk in zip(mu_act, r_act)]
            mu_p += t
            if t2 <= t1:
                active.append(p)
                mu_act.append(mu_p)
                break
            active.pop(block)
            mu_act.pop(block)

    # polish: exact KKT solve on the final working set
    C = np.vstack([E, A[active]]) if active else E
    if C.shape[0]:
        yp = _solve_gram(C, C @ xi_bar - np.concatenate([e, b[active]]))
        xp = xi_bar - C.T @ yp
        ok = (np.all(yp[me:] >= -1e-12) and
              np.all((A @ xp - b) / scale <= tol) and
              (me == 0 or np.abs(E @ xp - e).max() <= 1e-9 * max(1.0, np.abs(e).max())))
        if ok:
            x, lam = xp, yp[:me]
            mu_act = list(np.maximum(yp[me:], 0.0))

    lam_full = np.zeros(E_full_rows)
    lam_full[eq_rows] = lam
    mu = np.zeros(A.shape[0])
    mu[active] = mu_act
    return QPResult(x, lam_full, mu, sorted(active), it)


def kkt_residuals(result, xi_bar, E, e, A, b):
    """Stationarity, primal, dual and complementarity residuals (inf-norms)."""
    x, lam, mu = result.x, result.lam_eq, result.mu
    stat = x - xi_bar + (E.T @ lam if len(lam) else 0.0) + (A.T @ mu if len(mu) else 0.0)
    slack = A @ x - b if len(b) else np.zeros(0)
    return {
        "stationarity": float(np.abs(stat).max()),
        "primal_eq": float(np.abs(E @ x - e).max()) if len(e) else 0.0,
        "primal_ineq": float(max(slack.max(), 0.0)) if len(slack) else 0.0,
        "dual": float(max((-mu).max(), 0.0)) if len(mu) else 0.0,
        "complementarity": float(np.abs(mu * slack).max()) if len(mu) else 0.0,
    }
