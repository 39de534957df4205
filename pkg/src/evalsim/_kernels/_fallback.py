"""Pure numpy versions of the compiled kernels.

Same algorithms and signatures as ``_speedups.pyx``; results agree to a few
ulps but are not bit-identical (different reduction order).
"""
import math

import numpy as np

FPMIN = 1e-300
CF_EPS = 2.220446049250313e-16
CF_MAXIT = 20000

_erfc = np.frompyfunc(math.erfc, 1, 1)


def norm_cdf(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.asarray(_erfc(-x * math.sqrt(0.5)), dtype=float)


def _guard(v):
    return np.where(np.abs(v) < FPMIN, FPMIN, v)


def _betacf(a, b, x):
    """Modified Lentz evaluation of the incomplete-beta continued fraction.

    ``a``, ``b`` and ``x`` are broadcastable arrays; converged lanes are frozen.
    """
    a, b, x = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (a, b, x)))
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 / _guard(1.0 - qab * x / qap)
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, CF_MAXIT + 1):
        if not active.any():
            break
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d1 = 1.0 / _guard(1.0 + aa * d)
        c1 = _guard(1.0 + aa / c)
        h1 = h * d1 * c1
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d2 = 1.0 / _guard(1.0 + aa * d1)
        c2 = _guard(1.0 + aa / c1)
        delta = d2 * c2
        h = np.where(active, h1 * delta, h)
        d = np.where(active, d2, d)
        c = np.where(active, c2, c)
        active &= np.abs(delta - 1.0) >= CF_EPS
    return h


def _betainc_arr(a, b, x, lbeta):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    lo = x <= 0.0
    hi = x >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    xm = x[mid]
    if xm.size:
        bt = np.exp(a * np.log(xm) + b * np.log1p(-xm) - lbeta)
        left = xm < (a + 1.0) / (a + b + 2.0)
        res = np.empty(xm.shape)
        if left.any():
            res[left] = bt[left] * _betacf(a, b, xm[left]) / a
        if (~left).any():
            res[~left] = 1.0 - bt[~left] * _betacf(b, a, 1.0 - xm[~left]) / b
        out[mid] = res
    return out


def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def betainc(a, b, x):
    return _betainc_arr(float(a), float(b), x, _lbeta(a, b))


def _beta_ppf_start(a, b, u, lbeta):
    # Tail approximations I(x) ~ x^a / (a B) and 1 - I(x) ~ (1-x)^b / (b B).
    m = a / (a + b)
    with np.errstate(divide="ignore", over="ignore"):
        low = np.exp((np.log(u) + math.log(a) + lbeta) / a)
        high = 1.0 - np.exp((np.log1p(-u) + math.log(b) + lbeta) / b)
    x = np.full(u.shape, m)
    x = np.where((u <= 0.5) & (low > 0.0) & (low < m), low, x)
    return np.where((u > 0.5) & (high > m) & (high < 1.0), high, x)


def _split(lo, hi):
    # Bisect on a log scale near either end so deep tails take few steps.
    with np.errstate(invalid="ignore"):
        out = 0.5 * (lo + hi)
        out = np.where((lo > 0.5) & (1.0 - lo > 4.0 * (1.0 - hi)),
                       1.0 - np.sqrt((1.0 - lo) * (1.0 - hi)), out)
        out = np.where((lo > 0.5) & (hi == 1.0), 1.0 - (1.0 - lo) ** 2, out)
        out = np.where((hi < 0.5) & (hi > 4.0 * lo), np.sqrt(lo * hi), out)
        return np.where((hi < 0.5) & (lo == 0.0), hi * hi, out)


def beta_ppf(a, b, u, tol=1e-14, maxit=200):
    a = float(a)
    b = float(b)
    lbeta = _lbeta(a, b)
    u = np.asarray(u, dtype=float)
    shape = u.shape
    u = u.ravel()
    out = np.where(u <= 0.0, 0.0, 1.0)
    idx = np.nonzero((u > 0.0) & (u < 1.0))[0]
    if idx.size == 0:
        return out.reshape(shape)
    uu = u[idx]
    # Residual tolerance relative to the nearer tail; see the compiled kernel.
    rtol = tol * np.minimum(uu, 1.0 - uu)
    lo = np.zeros(idx.size)
    hi = np.ones(idx.size)
    x = _beta_ppf_start(a, b, uu, lbeta)
    active = np.ones(idx.size, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(maxit):
            if not active.any():
                break
            f = np.zeros(idx.size)
            f[active] = _betainc_arr(a, b, x[active], lbeta) - uu[active]
            done = active & (np.abs(f) <= rtol)
            active &= ~done
            lo = np.where(active & (f < 0), x, lo)
            hi = np.where(active & (f >= 0), x, hi)
            pdf = np.exp((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - lbeta)
            xn = x - f / pdf
            # A step below the resolution of x stops first; xn may equal a bracket end.
            tiny_step = np.isfinite(xn) & (np.abs(xn - x) <= 2.0 * CF_EPS * x)
            active &= ~tiny_step
            bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
            xn = np.where(bad, _split(lo, hi), xn)
            x = np.where(active, xn, x)
            active &= ~(hi - lo <= 4.0 * CF_EPS * hi)
    out[idx] = x
    return out.reshape(shape)


def guttman_terms(Xv, Xc, delta, w):
    diff = Xv[:, None, :] - Xc[None, :, :]
    dist = np.sqrt(np.einsum("vck,vck->vc", diff, diff))
    stress = float(np.sum(w * (dist - delta) ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where((dist > 0) & (w != 0), w * delta / dist, 0.0)
    contrib = s[:, :, None] * diff
    return contrib.sum(axis=1), -contrib.sum(axis=0), stress
