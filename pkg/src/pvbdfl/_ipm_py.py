"""Pure-numpy interior-point kernel for the daily scheduling problem.

This is the fallback twin of the compiled kernel in ``_ipm_cy``; both
implement the same Mehrotra predictor-corrector method on the same
variable layout and must stay numerically interchangeable (covered by
tests). The problem solved is

    min  pr_im.p_im - pr_ex.p_ex + eps*(|p_im|^2+|p_ex|^2+|p_ch|^2+|p_dis|^2)
    s.t. p_im - p_ex - p_ch + p_dis = net          (hourly balance)
         soc[t] - soc[t-1] - p_ch[t-1] + p_dis[t-1] = 0
         soc[0] = soc[T] = soc_init
         0 <= p_ch <= pmax*mode,  0 <= p_dis <= pmax*(1-mode)
         0 <= mode <= 1,  p_im >= 0,  p_ex >= 0
         soc_lo <= soc <= soc_hi

with the variable order x = [p_im, p_ex, p_ch, p_dis, mode, soc] of size
n = 6T+1. The KKT matrix is dense; the weighted normal matrix is
assembled from the constraint structure instead of generic matrix
products, which is what makes the hourly problem cheap to solve.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

# status codes shared with the compiled kernel
CONVERGED = 0
MAX_ITER = 1
NUMERICAL_FAILURE = 2

_STEP_SHRINK = 0.995  # fraction-to-boundary factor
_DELTA_KKT = 1e-11  # static regularization of the saddle system


def layout(T: int) -> dict:
    """Column offsets of the variable blocks for horizon T."""
    return {
        "p_im": (0, T),
        "p_ex": (T, 2 * T),
        "p_ch": (2 * T, 3 * T),
        "p_dis": (3 * T, 4 * T),
        "mode": (4 * T, 5 * T),
        "soc": (5 * T, 6 * T + 1),
    }


def problem_dims(T: int) -> tuple[int, int, int]:
    """(n_vars, n_eq, n_ineq) for horizon T."""
    return 6 * T + 1, 2 * T + 2, 10 * T + 2


def build_dense_eq(T: int) -> np.ndarray:
    """Dense equality matrix A (2T+2 x 6T+1)."""
    n, m_eq, _ = problem_dims(T)
    A = np.zeros((m_eq, n))
    im, ex, ch, dis, mo, so = 0, T, 2 * T, 3 * T, 4 * T, 5 * T
    for t in range(T):
        A[t, im + t] = 1.0
        A[t, ex + t] = -1.0
        A[t, ch + t] = -1.0
        A[t, dis + t] = 1.0
    for t in range(1, T + 1):
        A[T + t - 1, so + t] = 1.0
        A[T + t - 1, so + t - 1] = -1.0
        A[T + t - 1, ch + t - 1] = -1.0
        A[T + t - 1, dis + t - 1] = 1.0
    A[2 * T, so] = 1.0
    A[2 * T + 1, so + T] = 1.0
    return A


def build_vectors(pr_im, pr_ex, net, pmax, soc_lo, soc_hi, soc_init, eps, T):
    """Objective vector c, diagonal of Q, equality rhs b, inequality rhs h."""
    n, m_eq, m_in = problem_dims(T)
    c = np.zeros(n)
    c[0:T] = pr_im
    c[T : 2 * T] = -pr_ex
    qdiag = np.zeros(n)
    qdiag[0 : 4 * T] = 2.0 * eps
    b = np.zeros(m_eq)
    b[0:T] = net
    b[2 * T] = soc_init
    b[2 * T + 1] = soc_init
    h = np.zeros(m_in)
    h[5 * T : 6 * T] = pmax
    h[7 * T : 8 * T] = 1.0
    h[8 * T : 9 * T + 1] = -soc_lo
    h[9 * T + 1 :] = soc_hi
    return c, qdiag, b, h


def _mul_A(x, T):
    soc = x[5 * T :]
    out = np.empty(2 * T + 2)
    out[0:T] = x[0:T] - x[T : 2 * T] - x[2 * T : 3 * T] + x[3 * T : 4 * T]
    out[T : 2 * T] = soc[1:] - soc[:-1] - x[2 * T : 3 * T] + x[3 * T : 4 * T]
    out[2 * T] = soc[0]
    out[2 * T + 1] = soc[T]
    return out


def _mul_AT(y, T):
    n = 6 * T + 1
    out = np.zeros(n)
    ybal = y[0:T]
    ydyn = y[T : 2 * T]
    out[0:T] = ybal
    out[T : 2 * T] = -ybal
    out[2 * T : 3 * T] = -ybal - ydyn
    out[3 * T : 4 * T] = ybal + ydyn
    soc = out[5 * T :]
    soc[1:] += ydyn
    soc[:-1] -= ydyn
    soc[0] += y[2 * T]
    soc[T] += y[2 * T + 1]
    return out


def _mul_G(x, T, pmax):
    m_in = 10 * T + 2
    out = np.empty(m_in)
    mode = x[4 * T : 5 * T]
    soc = x[5 * T :]
    out[0 : 4 * T] = -x[0 : 4 * T]
    out[4 * T : 5 * T] = x[2 * T : 3 * T] - pmax * mode
    out[5 * T : 6 * T] = x[3 * T : 4 * T] + pmax * mode
    out[6 * T : 7 * T] = -mode
    out[7 * T : 8 * T] = mode
    out[8 * T : 9 * T + 1] = -soc
    out[9 * T + 1 :] = soc
    return out


def _mul_GT(z, T, pmax):
    n = 6 * T + 1
    out = np.empty(n)
    z5 = z[4 * T : 5 * T]
    z6 = z[5 * T : 6 * T]
    out[0 : 2 * T] = -z[0 : 2 * T]
    out[2 * T : 3 * T] = -z[2 * T : 3 * T] + z5
    out[3 * T : 4 * T] = -z[3 * T : 4 * T] + z6
    out[4 * T : 5 * T] = pmax * (z6 - z5) - z[6 * T : 7 * T] + z[7 * T : 8 * T]
    out[5 * T :] = -z[8 * T : 9 * T + 1] + z[9 * T + 1 :]
    return out


class _KktWorkspace:
    """Preallocated KKT matrix with the constant equality blocks filled in."""

    def __init__(self, T: int, pmax: float, qdiag: np.ndarray):
        n, m_eq, _ = problem_dims(T)
        self.T = T
        self.pmax = pmax
        self.qdiag = qdiag
        self.N = n + m_eq
        self.K = np.zeros((self.N, self.N))
        A = build_dense_eq(T)
        self.K[n:, :n] = A
        self.K[:n, n:] = A.T
        self.K[n:, n:] = -_DELTA_KKT * np.eye(m_eq)
        self.n = n
        idx = np.arange(n)
        self._diag = (idx, idx)
        t = np.arange(T)
        self._ch_mode = (2 * T + t, 4 * T + t)
        self._mode_ch = (4 * T + t, 2 * T + t)
        self._dis_mode = (3 * T + t, 4 * T + t)
        self._mode_dis = (4 * T + t, 3 * T + t)

    def assemble(self, d: np.ndarray) -> None:
        """Write M = Q + G' diag(d) G into the top-left block."""
        T, pmax = self.T, self.pmax
        diag = self.qdiag.copy()
        diag[0:T] += d[0:T]
        diag[T : 2 * T] += d[T : 2 * T]
        d5 = d[4 * T : 5 * T]
        d6 = d[5 * T : 6 * T]
        diag[2 * T : 3 * T] += d[2 * T : 3 * T] + d5
        diag[3 * T : 4 * T] += d[3 * T : 4 * T] + d6
        diag[4 * T : 5 * T] += (
            d[6 * T : 7 * T] + d[7 * T : 8 * T] + pmax * pmax * (d5 + d6)
        )
        diag[5 * T :] += d[8 * T : 9 * T + 1] + d[9 * T + 1 :]
        diag += _DELTA_KKT
        K = self.K
        K[self._diag] = diag
        K[self._ch_mode] = -pmax * d5
        K[self._mode_ch] = -pmax * d5
        K[self._dis_mode] = pmax * d6
        K[self._mode_dis] = pmax * d6

    def factor(self):
        return sla.lu_factor(self.K, check_finite=False)

    def solve(self, lu, rhs):
        return sla.lu_solve(lu, rhs, check_finite=False)

    def solve_refined(self, lu, rhs):
        """One LU backsolve plus a single iterative-refinement pass."""
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        resid = rhs - self.K @ sol
        return sol + sla.lu_solve(lu, resid, check_finite=False)


def _start_point(net, pmax, soc_lo, soc_hi, soc_init, c, T):
    """Strictly feasible primal start: grid covers the net demand, the
    battery cycles gently around a flat SoC."""
    n, _, m_in = problem_dims(T)
    pad = 1.0 + 0.1 * float(np.abs(net).max(initial=0.0))
    x = np.zeros(n)
    x[0:T] = np.maximum(net, 0.0) + pad
    x[T : 2 * T] = np.maximum(-net, 0.0) + pad
    x[2 * T : 3 * T] = 0.25 * pmax
    x[3 * T : 4 * T] = 0.25 * pmax
    x[4 * T : 5 * T] = 0.5
    x[5 * T :] = soc_init
    h = np.zeros(m_in)
    h[5 * T : 6 * T] = pmax
    h[7 * T : 8 * T] = 1.0
    h[8 * T : 9 * T + 1] = -soc_lo
    h[9 * T + 1 :] = soc_hi
    s = h - _mul_G(x, T, pmax)
    z = np.full(m_in, 0.1 + float(np.abs(c).max()))
    return x, s, z


def solve(pr_im, pr_ex, net, pmax, soc_lo, soc_hi, soc_init, eps, tol, max_iter):
    """Solve the scheduling QP/LP; returns (x, y, z, s, iters, status)."""
    pr_im = np.asarray(pr_im, dtype=float)
    T = pr_im.size
    c, qdiag, b, h = build_vectors(
        pr_im, np.asarray(pr_ex, float), np.asarray(net, float),
        pmax, soc_lo, soc_hi, soc_init, eps, T,
    )
    n, m_eq, m_in = problem_dims(T)
    ws = _KktWorkspace(T, pmax, qdiag)

    x, s, z = _start_point(np.asarray(net, float), pmax, soc_lo, soc_hi, soc_init, c, T)
    y = np.zeros(m_eq)

    c_scale = 1.0 + float(np.abs(c).max())
    b_scale = 1.0 + float(np.abs(b).max())
    h_scale = 1.0 + float(np.abs(h).max())

    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        r_d = qdiag * x + c + _mul_AT(y, T) + _mul_GT(z, T, pmax)
        r_p = _mul_A(x, T) - b
        r_g = _mul_G(x, T, pmax) + s - h
        gap = float(s @ z)
        mu = gap / m_in
        obj = float(c @ x) + 0.5 * float(qdiag @ (x * x))
        gap_scale = 1.0 + abs(obj)
        if (
            np.abs(r_p).max() / b_scale <= tol
            and np.abs(r_g).max() / h_scale <= tol
            and np.abs(r_d).max() / c_scale <= tol
            and gap / gap_scale <= tol
        ):
            status = CONVERGED
            break

        d = z / s
        ws.assemble(d)
        try:
            lu = ws.factor()
        except sla.LinAlgError:
            status = NUMERICAL_FAILURE
            break

        # predictor (affine scaling) direction
        r_c = s * z
        rhs = np.empty(n + m_eq)
        rhs[:n] = -r_d - _mul_GT(d * r_g - r_c / s, T, pmax)
        rhs[n:] = -r_p
        sol = ws.solve(lu, rhs)
        dx, dy = sol[:n], sol[n:]
        ds = -r_g - _mul_G(dx, T, pmax)
        dz = -r_c / s - d * ds

        alpha_aff = 1.0
        neg = ds < 0
        if neg.any():
            alpha_aff = min(alpha_aff, float((-s[neg] / ds[neg]).min()))
        neg = dz < 0
        if neg.any():
            alpha_aff = min(alpha_aff, float((-z[neg] / dz[neg]).min()))
        mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m_in
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        r_c = s * z + ds * dz - sigma * mu
        rhs[:n] = -r_d - _mul_GT(d * r_g - r_c / s, T, pmax)
        sol = ws.solve(lu, rhs)
        dx, dy = sol[:n], sol[n:]
        ds = -r_g - _mul_G(dx, T, pmax)
        dz = -r_c / s - d * ds

        alpha = 1.0 / _STEP_SHRINK
        neg = ds < 0
        if neg.any():
            alpha = min(alpha, float((-s[neg] / ds[neg]).min()))
        neg = dz < 0
        if neg.any():
            alpha = min(alpha, float((-z[neg] / dz[neg]).min()))
        alpha = min(1.0, _STEP_SHRINK * alpha)
        if not np.isfinite(alpha) or alpha <= 1e-13:
            status = NUMERICAL_FAILURE
            break

        x += alpha * dx
        y += alpha * dy
        s += alpha * ds
        z += alpha * dz
        if not (np.isfinite(x).all() and np.isfinite(z).all()):
            status = NUMERICAL_FAILURE
            break

    return x, y, z, s, it, status


def kkt_factor(T, pmax, eps, s, z, damping=0.0):
    """Factorize the solution-point KKT system for sensitivity solves.

    ``damping`` adds a quasi-definite shift (+d on the primal block, -d on
    the dual block) used as the one retry for degenerate active sets.
    """
    n, _, _ = problem_dims(T)
    qdiag = np.zeros(n)
    qdiag[0 : 4 * T] = 2.0 * eps
    ws = _KktWorkspace(T, pmax, qdiag)
    ws.assemble(np.asarray(z, float) / np.asarray(s, float))
    if damping:
        idx = np.arange(ws.N)
        ws.K[idx[:n], idx[:n]] += damping
        ws.K[idx[n:], idx[n:]] -= damping
    lu = ws.factor()
    return (ws, lu)


def kkt_solve(handle, rhs):
    """Solve the factorized KKT system for one or more right-hand sides."""
    ws, lu = handle
    return ws.solve_refined(lu, np.asarray(rhs, dtype=float))
