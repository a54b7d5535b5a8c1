# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled interior-point kernel for the daily scheduling problem.

Same Mehrotra predictor-corrector as the numpy fallback (`_ipm_py`), same
variable layout, start point and stopping rules. The Newton systems are
solved differently: the weighted Hessian block M is block-diagonal (1x1
scalars plus a 3x3 battery block per hour), so each iteration reduces to
a Cholesky factorization of the (2T+2)-dimensional Schur complement
A M^-1 A' instead of an LU of the full KKT matrix.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

CONVERGED = 0
MAX_ITER = 1
NUMERICAL_FAILURE = 2

cdef double DELTA = 1e-11
cdef double STEP_SHRINK = 0.995


cdef void _mul_A(double[::1] x, double[::1] out, int T) noexcept:
    cdef int t
    cdef int im = 0, ex = T, ch = 2 * T, dis = 3 * T, so = 5 * T
    for t in range(T):
        out[t] = x[im + t] - x[ex + t] - x[ch + t] + x[dis + t]
        out[T + t] = x[so + t + 1] - x[so + t] - x[ch + t] + x[dis + t]
    out[2 * T] = x[so]
    out[2 * T + 1] = x[so + T]


cdef void _mul_AT(double[::1] y, double[::1] out, int T) noexcept:
    cdef int t
    cdef int im = 0, ex = T, ch = 2 * T, dis = 3 * T, mo = 4 * T, so = 5 * T
    for t in range(T):
        out[im + t] = y[t]
        out[ex + t] = -y[t]
        out[ch + t] = -y[t] - y[T + t]
        out[dis + t] = y[t] + y[T + t]
        out[mo + t] = 0.0
    for t in range(T + 1):
        out[so + t] = 0.0
    for t in range(T):
        out[so + t + 1] += y[T + t]
        out[so + t] -= y[T + t]
    out[so] += y[2 * T]
    out[so + T] += y[2 * T + 1]


cdef void _mul_G(double[::1] x, double[::1] out, int T, double pmax) noexcept:
    cdef int t
    cdef int ch = 2 * T, dis = 3 * T, mo = 4 * T, so = 5 * T
    for t in range(4 * T):
        out[t] = -x[t]
    for t in range(T):
        out[4 * T + t] = x[ch + t] - pmax * x[mo + t]
        out[5 * T + t] = x[dis + t] + pmax * x[mo + t]
        out[6 * T + t] = -x[mo + t]
        out[7 * T + t] = x[mo + t]
    for t in range(T + 1):
        out[8 * T + t] = -x[so + t]
        out[9 * T + 1 + t] = x[so + t]


cdef void _mul_GT(double[::1] z, double[::1] out, int T, double pmax) noexcept:
    cdef int t
    cdef int ch = 2 * T, dis = 3 * T, mo = 4 * T, so = 5 * T
    for t in range(2 * T):
        out[t] = -z[t]
    for t in range(T):
        out[ch + t] = -z[2 * T + t] + z[4 * T + t]
        out[dis + t] = -z[3 * T + t] + z[5 * T + t]
        out[mo + t] = pmax * (z[5 * T + t] - z[4 * T + t]) - z[6 * T + t] + z[7 * T + t]
    for t in range(T + 1):
        out[so + t] = -z[8 * T + t] + z[9 * T + 1 + t]


cdef class _Factor:
    """Block inverses of M plus the Cholesky factor of the Schur complement."""

    cdef int T, m_eq
    cdef double pmax, qreg, delta_primal, delta_dual
    cdef double[::1] inv_im, inv_ex, inv_soc
    cdef double[:, :, ::1] invB
    cdef double[:, ::1] S
    cdef double[::1] dvec
    cdef int info

    def __cinit__(self, int T, double pmax, double eps,
                  double delta_primal, double delta_dual):
        self.T = T
        self.m_eq = 2 * T + 2
        self.pmax = pmax
        self.qreg = 2.0 * eps
        self.delta_primal = delta_primal
        self.delta_dual = delta_dual
        self.inv_im = np.empty(T)
        self.inv_ex = np.empty(T)
        self.inv_soc = np.empty(T + 1)
        self.invB = np.empty((T, 3, 3))
        self.S = np.zeros((self.m_eq, self.m_eq))
        self.dvec = np.empty(10 * T + 2)
        self.info = -1

    cdef void set_deltas(self, double dp, double dd) noexcept:
        self.delta_primal = dp
        self.delta_dual = dd

    cdef int factor(self, double[::1] d) noexcept:
        cdef int T = self.T, t, i, j, m = self.m_eq, info = 0
        cdef double P = self.pmax, dp = self.delta_primal, q = self.qreg
        cdef double a00, a11, a22, a02, a12, det
        cdef double c00, c01, c02, c11, c12, c22, beta
        cdef double[:, ::1] S = self.S
        for t in range(10 * T + 2):
            self.dvec[t] = d[t]
        for i in range(m):
            for j in range(m):
                S[i, j] = 0.0
        for t in range(T):
            self.inv_im[t] = 1.0 / (q + d[t] + dp)
            self.inv_ex[t] = 1.0 / (q + d[T + t] + dp)
        for t in range(T + 1):
            self.inv_soc[t] = 1.0 / (d[8 * T + t] + d[9 * T + 1 + t] + dp)
        for t in range(T):
            a00 = q + d[2 * T + t] + d[4 * T + t] + dp
            a11 = q + d[3 * T + t] + d[5 * T + t] + dp
            a22 = d[6 * T + t] + d[7 * T + t] + P * P * (d[4 * T + t] + d[5 * T + t]) + dp
            a02 = -P * d[4 * T + t]
            a12 = P * d[5 * T + t]
            # inverse of the symmetric 3x3 [[a00,0,a02],[0,a11,a12],[a02,a12,a22]]
            c00 = a11 * a22 - a12 * a12
            c01 = a02 * a12
            c02 = -a02 * a11
            c11 = a00 * a22 - a02 * a02
            c12 = -a00 * a12
            c22 = a00 * a11
            det = a00 * c00 + a02 * c02
            if det == 0.0:
                return 1
            det = 1.0 / det
            self.invB[t, 0, 0] = c00 * det
            self.invB[t, 0, 1] = c01 * det
            self.invB[t, 0, 2] = c02 * det
            self.invB[t, 1, 0] = c01 * det
            self.invB[t, 1, 1] = c11 * det
            self.invB[t, 1, 2] = c12 * det
            self.invB[t, 2, 0] = c02 * det
            self.invB[t, 2, 1] = c12 * det
            self.invB[t, 2, 2] = c22 * det
        # Schur complement A M^-1 A' (rows: balance 0..T-1, dynamics T..2T-1,
        # soc[0] anchor 2T, soc[T] anchor 2T+1)
        for t in range(T):
            beta = self.invB[t, 0, 0] + self.invB[t, 1, 1] - 2.0 * self.invB[t, 0, 1]
            S[t, t] = self.inv_im[t] + self.inv_ex[t] + beta
            S[t, T + t] = beta
            S[T + t, t] = beta
            S[T + t, T + t] = self.inv_soc[t + 1] + self.inv_soc[t] + beta
        for t in range(T - 1):
            S[T + t, T + t + 1] = -self.inv_soc[t + 1]
            S[T + t + 1, T + t] = -self.inv_soc[t + 1]
        S[2 * T, 2 * T] = self.inv_soc[0]
        S[2 * T, T] = -self.inv_soc[0]
        S[T, 2 * T] = -self.inv_soc[0]
        S[2 * T + 1, 2 * T + 1] = self.inv_soc[T]
        S[2 * T + 1, 2 * T - 1] = self.inv_soc[T]
        S[2 * T - 1, 2 * T + 1] = self.inv_soc[T]
        for i in range(m):
            S[i, i] += self.delta_dual
        dpotrf("L", &m, &S[0, 0], &m, &info)
        self.info = info
        return info

    cdef void minv_apply(self, double[::1] r, double[::1] out) noexcept:
        cdef int T = self.T, t
        cdef double r0, r1, r2
        for t in range(T):
            out[t] = self.inv_im[t] * r[t]
            out[T + t] = self.inv_ex[t] * r[T + t]
        for t in range(T):
            r0 = r[2 * T + t]
            r1 = r[3 * T + t]
            r2 = r[4 * T + t]
            out[2 * T + t] = self.invB[t, 0, 0] * r0 + self.invB[t, 0, 1] * r1 + self.invB[t, 0, 2] * r2
            out[3 * T + t] = self.invB[t, 1, 0] * r0 + self.invB[t, 1, 1] * r1 + self.invB[t, 1, 2] * r2
            out[4 * T + t] = self.invB[t, 2, 0] * r0 + self.invB[t, 2, 1] * r1 + self.invB[t, 2, 2] * r2
        for t in range(T + 1):
            out[5 * T + t] = self.inv_soc[t] * r[5 * T + t]

    cdef int block_solve(self, double[::1] r1, double[::1] r2,
                         double[::1] dx, double[::1] dy,
                         double[::1] w_n, double[::1] w_m) noexcept:
        """Solve [[M, A'], [A, -delta_dual*I]] [dx; dy] = [r1; r2]."""
        cdef int T = self.T, m = self.m_eq, one = 1, info = 0, i
        self.minv_apply(r1, w_n)
        _mul_A(w_n, dy, T)
        for i in range(m):
            dy[i] -= r2[i]
        dpotrs("L", &m, &one, &self.S[0, 0], &m, &dy[0], &m, &info)
        if info != 0:
            return info
        _mul_AT(dy, w_m, T)
        for i in range(6 * T + 1):
            w_m[i] = r1[i] - w_m[i]
        self.minv_apply(w_m, dx)
        return 0

    cdef void kkt_residual(self, double[::1] dx, double[::1] dy,
                           double[::1] r1, double[::1] r2,
                           double[::1] out1, double[::1] out2,
                           double[::1] w_in, double[::1] w_n) noexcept:
        """out = [r1; r2] - K [dx; dy] with the same K as block_solve."""
        cdef int T = self.T, n = 6 * T + 1, i
        cdef double q = self.qreg, dp = self.delta_primal
        _mul_G(dx, w_in, T, self.pmax)
        for i in range(10 * T + 2):
            w_in[i] *= self.dvec[i]
        _mul_GT(w_in, out1, T, self.pmax)
        _mul_AT(dy, w_n, T)
        for i in range(n):
            out1[i] = r1[i] - out1[i] - w_n[i] - dp * dx[i]
        for i in range(4 * T):
            out1[i] -= q * dx[i]
        _mul_A(dx, out2, T)
        for i in range(self.m_eq):
            out2[i] = r2[i] - out2[i] + self.delta_dual * dy[i]

    cdef int solve_refined(self, double[::1] r1, double[::1] r2,
                           double[::1] dx, double[::1] dy,
                           double[::1] e1, double[::1] e2,
                           double[::1] cx, double[::1] cy,
                           double[::1] w_in, double[::1] w_n,
                           double[::1] w_m) noexcept:
        """block_solve plus one iterative-refinement pass at the KKT level."""
        cdef int i, T = self.T, n = 6 * T + 1
        if self.block_solve(r1, r2, dx, dy, w_n, w_m) != 0:
            return 1
        self.kkt_residual(dx, dy, r1, r2, e1, e2, w_in, w_n)
        if self.block_solve(e1, e2, cx, cy, w_n, w_m) != 0:
            return 1
        for i in range(n):
            dx[i] += cx[i]
        for i in range(self.m_eq):
            dy[i] += cy[i]
        return 0


def solve(pr_im_in, pr_ex_in, net_in, double pmax, double soc_lo, double soc_hi,
          double soc_init, double eps, double tol, int max_iter):
    """Solve the scheduling QP/LP; returns (x, y, z, s, iters, status)."""
    cdef double[::1] pr_im = np.array(pr_im_in, dtype=np.float64)
    cdef double[::1] pr_ex = np.array(pr_ex_in, dtype=np.float64)
    cdef double[::1] net = np.array(net_in, dtype=np.float64)
    cdef int T = pr_im.shape[0]
    cdef int n = 6 * T + 1, m_eq = 2 * T + 2, m_in = 10 * T + 2
    cdef int it = 0, status = MAX_ITER, i, t

    x_arr = np.zeros(n)
    y_arr = np.zeros(m_eq)
    z_arr = np.empty(m_in)
    s_arr = np.empty(m_in)
    cdef double[::1] x = x_arr, y = y_arr, z = z_arr, s = s_arr
    cdef double[::1] c = np.zeros(n)
    cdef double[::1] b = np.zeros(m_eq)
    cdef double[::1] h = np.zeros(m_in)
    cdef double[::1] r_d = np.empty(n), r_p = np.empty(m_eq), r_g = np.empty(m_in)
    cdef double[::1] r_c = np.empty(m_in)
    cdef double[::1] rhs1 = np.empty(n)
    cdef double[::1] dx = np.empty(n), dy = np.empty(m_eq)
    cdef double[::1] ds = np.empty(m_in), dz = np.empty(m_in)
    cdef double[::1] w_n = np.empty(n), w_m = np.empty(n)
    cdef double[::1] w_in = np.empty(m_in), w_in2 = np.empty(m_in)
    cdef double[::1] w_in3 = np.empty(m_in)
    cdef double[::1] e1 = np.empty(n), e2 = np.empty(m_eq)
    cdef double[::1] cx = np.empty(n), cy = np.empty(m_eq)
    cdef double[::1] d = np.empty(m_in)
    cdef double qreg = 2.0 * eps

    for t in range(T):
        c[t] = pr_im[t]
        c[T + t] = -pr_ex[t]
        b[t] = net[t]
        h[5 * T + t] = pmax
        h[7 * T + t] = 1.0
    b[2 * T] = soc_init
    b[2 * T + 1] = soc_init
    for t in range(T + 1):
        h[8 * T + t] = -soc_lo
        h[9 * T + 1 + t] = soc_hi

    # strictly feasible primal start matching the fallback kernel
    cdef double netmax = 0.0
    for t in range(T):
        if fabs(net[t]) > netmax:
            netmax = fabs(net[t])
    cdef double pad = 1.0 + 0.1 * netmax
    for t in range(T):
        x[t] = (net[t] if net[t] > 0.0 else 0.0) + pad
        x[T + t] = (-net[t] if net[t] < 0.0 else 0.0) + pad
        x[2 * T + t] = 0.25 * pmax
        x[3 * T + t] = 0.25 * pmax
        x[4 * T + t] = 0.5
    for t in range(T + 1):
        x[5 * T + t] = soc_init
    _mul_G(x, w_in, T, pmax)
    cdef double cmax = 0.0
    for i in range(n):
        if fabs(c[i]) > cmax:
            cmax = fabs(c[i])
    for i in range(m_in):
        s[i] = h[i] - w_in[i]
        z[i] = 0.1 + cmax

    cdef double b_scale = 1.0, h_scale = 1.0, c_scale = 1.0 + cmax
    for i in range(m_eq):
        if fabs(b[i]) > b_scale - 1.0:
            b_scale = 1.0 + fabs(b[i])
    for i in range(m_in):
        if fabs(h[i]) > h_scale - 1.0:
            h_scale = 1.0 + fabs(h[i])

    cdef _Factor fac = _Factor(T, pmax, eps, DELTA, DELTA)
    cdef double gap, mu, obj, rpmax, rgmax, rdmax
    cdef double alpha, alpha_aff, mu_aff, sigma, v

    for it in range(1, max_iter + 1):
        _mul_AT(y, w_n, T)
        _mul_GT(z, w_m, T, pmax)
        for i in range(n):
            r_d[i] = c[i] + w_n[i] + w_m[i]
        for i in range(4 * T):
            r_d[i] += qreg * x[i]
        _mul_A(x, r_p, T)
        for i in range(m_eq):
            r_p[i] -= b[i]
        _mul_G(x, r_g, T, pmax)
        for i in range(m_in):
            r_g[i] += s[i] - h[i]
        gap = 0.0
        for i in range(m_in):
            gap += s[i] * z[i]
        mu = gap / m_in
        obj = 0.0
        for i in range(n):
            obj += c[i] * x[i]
        for i in range(4 * T):
            obj += 0.5 * qreg * x[i] * x[i]
        rpmax = 0.0
        for i in range(m_eq):
            if fabs(r_p[i]) > rpmax:
                rpmax = fabs(r_p[i])
        rgmax = 0.0
        for i in range(m_in):
            if fabs(r_g[i]) > rgmax:
                rgmax = fabs(r_g[i])
        rdmax = 0.0
        for i in range(n):
            if fabs(r_d[i]) > rdmax:
                rdmax = fabs(r_d[i])
        if (rpmax / b_scale <= tol and rgmax / h_scale <= tol
                and rdmax / c_scale <= tol and gap / (1.0 + fabs(obj)) <= tol):
            status = CONVERGED
            break

        for i in range(m_in):
            d[i] = z[i] / s[i]
        fac.set_deltas(DELTA, DELTA)
        if fac.factor(d) != 0:
            fac.set_deltas(1e-7, 1e-7)
            if fac.factor(d) != 0:
                fac.set_deltas(1e-3, 1e-3)
                if fac.factor(d) != 0:
                    status = NUMERICAL_FAILURE
                    break

        # predictor
        for i in range(m_in):
            r_c[i] = s[i] * z[i]
            w_in[i] = d[i] * r_g[i] - r_c[i] / s[i]
        _mul_GT(w_in, rhs1, T, pmax)
        for i in range(n):
            rhs1[i] = -r_d[i] - rhs1[i]
        for i in range(m_eq):
            w_in2[i] = -r_p[i]
        if fac.solve_refined(rhs1, w_in2[:m_eq], dx, dy, e1, e2, cx, cy, w_in3, w_n, w_m) != 0:
            status = NUMERICAL_FAILURE
            break
        _mul_G(dx, w_in, T, pmax)
        for i in range(m_in):
            ds[i] = -r_g[i] - w_in[i]
            dz[i] = -r_c[i] / s[i] - d[i] * ds[i]

        alpha_aff = 1.0
        for i in range(m_in):
            if ds[i] < 0.0:
                v = -s[i] / ds[i]
                if v < alpha_aff:
                    alpha_aff = v
            if dz[i] < 0.0:
                v = -z[i] / dz[i]
                if v < alpha_aff:
                    alpha_aff = v
        mu_aff = 0.0
        for i in range(m_in):
            mu_aff += (s[i] + alpha_aff * ds[i]) * (z[i] + alpha_aff * dz[i])
        mu_aff /= m_in
        sigma = mu_aff / mu
        if sigma < 0.0:
            sigma = 0.0
        elif sigma > 1.0:
            sigma = 1.0
        sigma = sigma * sigma * sigma

        # corrector
        for i in range(m_in):
            r_c[i] = s[i] * z[i] + ds[i] * dz[i] - sigma * mu
            w_in[i] = d[i] * r_g[i] - r_c[i] / s[i]
        _mul_GT(w_in, rhs1, T, pmax)
        for i in range(n):
            rhs1[i] = -r_d[i] - rhs1[i]
        for i in range(m_eq):
            w_in2[i] = -r_p[i]
        if fac.solve_refined(rhs1, w_in2[:m_eq], dx, dy, e1, e2, cx, cy, w_in3, w_n, w_m) != 0:
            status = NUMERICAL_FAILURE
            break
        _mul_G(dx, w_in, T, pmax)
        for i in range(m_in):
            ds[i] = -r_g[i] - w_in[i]
            dz[i] = -r_c[i] / s[i] - d[i] * ds[i]

        alpha = 1.0 / STEP_SHRINK
        for i in range(m_in):
            if ds[i] < 0.0:
                v = -s[i] / ds[i]
                if v < alpha:
                    alpha = v
            if dz[i] < 0.0:
                v = -z[i] / dz[i]
                if v < alpha:
                    alpha = v
        alpha *= STEP_SHRINK
        if alpha > 1.0:
            alpha = 1.0
        if not alpha == alpha or alpha <= 1e-13:  # NaN-safe stall guard
            status = NUMERICAL_FAILURE
            break

        for i in range(n):
            x[i] += alpha * dx[i]
        for i in range(m_eq):
            y[i] += alpha * dy[i]
        ok = True
        for i in range(m_in):
            s[i] += alpha * ds[i]
            z[i] += alpha * dz[i]
            if not (s[i] == s[i] and z[i] == z[i]):
                ok = False
        if not ok:
            status = NUMERICAL_FAILURE
            break

    return x_arr, y_arr, z_arr, s_arr, it, status


def kkt_factor(int T, double pmax, double eps, s_in, z_in, double damping=0.0):
    """Factorize the solution-point KKT system for sensitivity solves."""
    cdef double[::1] s = np.array(s_in, dtype=np.float64)
    cdef double[::1] z = np.array(z_in, dtype=np.float64)
    cdef int m_in = 10 * T + 2, i
    cdef double[::1] d = np.empty(m_in)
    for i in range(m_in):
        d[i] = z[i] / s[i]
    cdef _Factor fac = _Factor(T, pmax, eps, DELTA + damping, DELTA + damping)
    fac.factor(d)
    return fac


def kkt_solve(_Factor fac, rhs):
    """Solve the factorized KKT system (one refinement pass) for rhs columns."""
    cdef int T = fac.T, n = 6 * T + 1, m_eq = fac.m_eq
    rhs_arr = np.array(rhs, dtype=np.float64)
    single = rhs_arr.ndim == 1
    if single:
        rhs_arr = rhs_arr[:, None]
    out = np.empty_like(rhs_arr)
    cdef double[::1] r1 = np.empty(n), r2 = np.empty(m_eq)
    cdef double[::1] dx = np.empty(n), dy = np.empty(m_eq)
    cdef double[::1] e1 = np.empty(n), e2 = np.empty(m_eq)
    cdef double[::1] cx = np.empty(n), cy = np.empty(m_eq)
    cdef double[::1] w_n = np.empty(n), w_m = np.empty(n)
    cdef double[::1] w_in = np.empty(10 * T + 2)
    cdef double[:, :] rhs_mv = rhs_arr
    cdef double[:, :] out_mv = out
    cdef int k, i, ncols = rhs_arr.shape[1]
    if fac.info != 0:
        out.fill(np.nan)
        return out[:, 0] if single else out
    for k in range(ncols):
        for i in range(n):
            r1[i] = rhs_mv[i, k]
        for i in range(m_eq):
            r2[i] = rhs_mv[n + i, k]
        if fac.block_solve(r1, r2, dx, dy, w_n, w_m) != 0:
            out.fill(np.nan)
            return out[:, 0] if single else out
        fac.kkt_residual(dx, dy, r1, r2, e1, e2, w_in, w_n)
        if fac.block_solve(e1, e2, cx, cy, w_n, w_m) != 0:
            out.fill(np.nan)
            return out[:, 0] if single else out
        for i in range(n):
            out_mv[i, k] = dx[i] + cx[i]
        for i in range(m_eq):
            out_mv[n + i, k] = dy[i] + cy[i]
    return out[:, 0] if single else out
