"""Bounded Levenberg-Marquardt solver used by the trace fitters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    jac: np.ndarray
    n_iter: int
    converged: bool
    gradient: float
    message: str

    @property
    def cost(self) -> float:
        return float(self.residual @ self.residual)

    def covariance(self) -> np.ndarray:
        """Parameter covariance ``s**2 (J^T J)^-1`` with ``s**2 = SSR/(n-p)``."""
        n, p = self.jac.shape
        dof = max(n - p, 1)
        jtj = self.jac.T @ self.jac
        return self.cost / dof * np.linalg.pinv(jtj)


def numerical_jacobian(fun, x, rel_step=1e-6):
    """Central-difference Jacobian of ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * abs(x[i]) if x[i] != 0 else rel_step
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def _projected_gradient(g, x, lower, upper):
    g = g.copy()
    # components pushing into an active bound do not count
    g[(x <= lower) & (g > 0)] = 0.0
    g[(x >= upper) & (g < 0)] = 0.0
    return g


def levenberg_marquardt(
    fun,
    x0,
    jac=None,
    lower=None,
    upper=None,
    scale: float = 1.0,
    max_iter: int = 200,
    gtol: float = 1e-8,
    xtol: float = 1e-14,
    polish: float = 1e-6,
) -> LMResult:
    """Minimize ``sum(fun(x)**2)`` subject to ``lower <= x <= upper``.

    Steps solve ``(J^T J + lam * diag(J^T J)) dx = -J^T r``; a trial point is
    projected onto the box and kept only if it lowers the cost. Convergence
    means the projected gradient satisfies
    ``max_i |(J^T r)_i| / (|J_i| * scale) < gtol`` where ``scale`` is the norm
    of the data being fitted. Iteration continues past that point, down to
    ``polish * gtol``, while steps still lower the cost, so in-model data are
    fitted close to machine precision. Non-convergence is reported, never raised.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = np.clip(x, lower, upper)
    if jac is None:
        jac = lambda p: numerical_jacobian(fun, p)  # noqa: E731
    scale = float(scale) if scale > 0 else 1.0

    r = np.asarray(fun(x), dtype=float)
    J = np.asarray(jac(x), dtype=float)
    cost = float(r @ r)
    lam = 1e-3
    message = "iteration cap reached"

    def rel_gradient(J, r, x):
        g = _projected_gradient(J.T @ r, x, lower, upper)
        col = np.linalg.norm(J, axis=0)
        col[col == 0] = 1.0
        return float(np.max(np.abs(g) / col) / scale)

    grad = rel_gradient(J, r, x)
    it = 0
    while it < max_iter:
        if grad < gtol * polish:
            message = "gradient below tolerance"
            break
        it += 1
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + step, lower, upper)
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            message = "gradient below tolerance" if grad < gtol else "no downhill step"
            break
        dx = x_new - x
        x, r, cost = x_new, r_new, cost_new
        J = np.asarray(jac(x), dtype=float)
        lam = max(lam / 10.0, 1e-12)
        grad = rel_gradient(J, r, x)
        if np.all(np.abs(dx) <= xtol * (np.abs(x) + xtol)):
            message = "gradient below tolerance" if grad < gtol else "step below tolerance"
            break
    return LMResult(
        x=x, residual=r, jac=J, n_iter=it, converged=grad < gtol, gradient=grad, message=message
    )
