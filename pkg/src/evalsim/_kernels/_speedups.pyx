# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``evalsim._kernels._fallback``."""

import numpy as np

from libc.math cimport erfc, exp, fabs, fmin, isfinite, lgamma, log, log1p, sqrt

cdef double FPMIN = 1e-300
cdef double CF_EPS = 2.220446049250313e-16
cdef int CF_MAXIT = 20000
cdef double SQRT1_2 = 0.7071067811865476


def norm_cdf(x):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xs.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(xs.shape[0]):
        o[i] = 0.5 * erfc(-xs[i] * SQRT1_2)
    return out.reshape(np.shape(x))


cdef double _betacf(double a, double b, double x) nogil:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d = 1.0 - qab * x / qap, h, aa, delta
    cdef int m, m2
    if fabs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            break
    return h


cdef double _betainc(double a, double b, double x, double lbeta) nogil:
    cdef double bt
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    bt = exp(a * log(x) + b * log1p(-x) - lbeta)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def betainc(double a, double b, x):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xs.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double lbeta = lgamma(a) + lgamma(b) - lgamma(a + b)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xs.shape[0]):
            o[i] = _betainc(a, b, xs[i], lbeta)
    return out.reshape(np.shape(x))


cdef double _beta_ppf_start(double a, double b, double u, double lbeta) nogil:
    # Tail approximations I(x) ~ x^a / (a B) and 1 - I(x) ~ (1-x)^b / (b B).
    cdef double m = a / (a + b), t
    if u <= 0.5:
        t = exp((log(u) + log(a) + lbeta) / a)
        if 0.0 < t < m:
            return t
    else:
        t = 1.0 - exp((log1p(-u) + log(b) + lbeta) / b)
        if m < t < 1.0:
            return t
    return m


cdef double _split(double lo, double hi) nogil:
    # Bisect on a log scale near either end so deep tails take few steps.
    if hi < 0.5 and lo == 0.0:
        return hi * hi
    if hi < 0.5 and hi > 4.0 * lo:
        return sqrt(lo * hi)
    if lo > 0.5 and hi == 1.0:
        return 1.0 - (1.0 - lo) * (1.0 - lo)
    if lo > 0.5 and 1.0 - lo > 4.0 * (1.0 - hi):
        return 1.0 - sqrt((1.0 - lo) * (1.0 - hi))
    return 0.5 * (lo + hi)


cdef double _beta_ppf(double a, double b, double u, double lbeta,
                      double tol, int maxit) nogil:
    cdef double lo = 0.0, hi = 1.0, x, f, pdf, xn
    cdef int it
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    # Residual tolerance relative to the nearer tail, so x stays accurate
    # where the CDF is tiny; a negligible Newton step also stops.
    cdef double rtol = tol * fmin(u, 1.0 - u)
    x = _beta_ppf_start(a, b, u, lbeta)
    for it in range(maxit):
        f = _betainc(a, b, x, lbeta) - u
        if fabs(f) <= rtol:
            break
        if f < 0.0:
            lo = x
        else:
            hi = x
        pdf = exp((a - 1.0) * log(x) + (b - 1.0) * log1p(-x) - lbeta)
        xn = x - f / pdf
        if isfinite(xn) and fabs(xn - x) <= 2.0 * CF_EPS * x:
            # Below the resolution of x; checked first since xn may equal a bracket end.
            break
        if not isfinite(xn) or xn <= lo or xn >= hi:
            xn = _split(lo, hi)
        if hi - lo <= 4.0 * CF_EPS * hi:
            x = xn
            break
        x = xn
    return x


def beta_ppf(double a, double b, u, double tol=1e-14, int maxit=200):
    cdef double[::1] us = np.ascontiguousarray(u, dtype=np.float64).ravel()
    out = np.empty(us.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef double lbeta = lgamma(a) + lgamma(b) - lgamma(a + b)
    cdef Py_ssize_t i
    with nogil:
        for i in range(us.shape[0]):
            o[i] = _beta_ppf(a, b, us[i], lbeta, tol, maxit)
    return out.reshape(np.shape(u))


def guttman_terms(Xv, Xc, delta, w):
    """Return ``(B(X) X`` voter rows, candidate rows, raw stress)``."""
    cdef double[:, ::1] xv = np.ascontiguousarray(Xv, dtype=np.float64)
    cdef double[:, ::1] xc = np.ascontiguousarray(Xc, dtype=np.float64)
    cdef double[:, ::1] dl = np.ascontiguousarray(delta, dtype=np.float64)
    cdef double[:, ::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = xc.shape[0], d = xv.shape[1]
    Yv = np.zeros((n, d), dtype=np.float64)
    Yc = np.zeros((m, d), dtype=np.float64)
    cdef double[:, ::1] yv = Yv
    cdef double[:, ::1] yc = Yc
    cdef Py_ssize_t v, c, k
    cdef double dist, diff, s, stress = 0.0, r
    with nogil:
        for v in range(n):
            for c in range(m):
                dist = 0.0
                for k in range(d):
                    diff = xv[v, k] - xc[c, k]
                    dist += diff * diff
                dist = sqrt(dist)
                r = dist - dl[v, c]
                stress += ww[v, c] * r * r
                if dist > 0.0 and ww[v, c] != 0.0:
                    s = ww[v, c] * dl[v, c] / dist
                    for k in range(d):
                        diff = s * (xv[v, k] - xc[c, k])
                        yv[v, k] += diff
                        yc[c, k] -= diff
    return Yv, Yc, stress
