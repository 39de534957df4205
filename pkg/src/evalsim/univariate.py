"""Marginal distributions of the evaluations given to one candidate.

Continuous families live on ``[0, 1]``: uniform, normal truncated to
``[0, 1]``, beta, and a piecewise-constant histogram (``Empirical``).
Discrete families live on ``{0, ..., K}``: discrete uniform, binomial and
beta-binomial.

Every marginal exposes ``pdf``, ``cdf``, ``ppf``, ``draw`` and ``moments``;
the module-level functions :func:`density`, :func:`cumulative`,
:func:`quantile`, :func:`draw` and :func:`moments` dispatch to them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RandomSource, Scale
from .errors import DomainError, ModelError
from .special import beta_ppf, betainc, norm_cdf, norm_pdf, norm_ppf

__all__ = [
    "Marginal",
    "Uniform01",
    "TruncNormal",
    "Beta",
    "Empirical",
    "DiscreteUniform",
    "Binomial",
    "BetaBinomial",
    "density",
    "cumulative",
    "quantile",
    "draw",
    "moments",
    "standard_gamma",
    "marginal_from_json",
    "empirical_marginal",
]


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def standard_gamma(shape: float, source: RandomSource, size: int) -> np.ndarray:
    """Gamma(shape, 1) variates by Marsaglia and Tsang's squeeze method.

    Shapes below one use the boost ``G(a) = G(a + 1) * U ** (1 / a)``.
    """
    if not shape > 0:
        raise DomainError(f"gamma shape must be positive, got {shape}")
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        k = pending.size
        x = source.normal(k)
        u = source.uniform_open(k)
        v = (1.0 + c * x) ** 3
        pos = v > 0
        accept = pos & (u < 1.0 - 0.0331 * x**4)
        with np.errstate(invalid="ignore", divide="ignore"):
            slow = pos & ~accept
            accept[slow] = np.log(u[slow]) < 0.5 * x[slow] ** 2 + d - d * v[slow] + d * np.log(v[slow])
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    if boost:
        out *= source.uniform_open(size) ** (1.0 / shape)
    return out


class Marginal:
    """Base class for marginal distributions."""

    family = ""
    discrete = False

    @property
    def scale(self) -> Scale:
        return Scale.discrete(self.K) if self.discrete else Scale.continuous()

    def draw(self, source: RandomSource, size: int | None = None):
        n = 1 if size is None else size
        out = self.ppf(source.uniform_open(n))
        return out[0] if size is None else out

    def to_json(self) -> dict:
        raise NotImplementedError

    # Continuous helpers; discrete families override.
    def _check_x(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(~(arr >= 0.0) | ~(arr <= 1.0)):
            raise DomainError(f"{self.family} density evaluated outside [0, 1]")
        return arr


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr >= 0.0) | ~(arr <= 1.0)):
        raise DomainError("quantile level outside [0, 1]")
    return arr


@dataclass(frozen=True)
class Uniform01(Marginal):
    family = "uniform"

    def pdf(self, x):
        arr = self._check_x(x)
        return _scalar_or_array(x, np.ones_like(arr))

    def cdf(self, x):
        return _scalar_or_array(x, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))

    def ppf(self, u):
        return _scalar_or_array(u, _check_u(u) * 1.0)

    def moments(self):
        return 0.5, 1.0 / 12.0

    def to_json(self):
        return {"family": "uniform"}


@dataclass(frozen=True)
class TruncNormal(Marginal):
    """Normal(mu, sigma) conditioned on ``[0, 1]``."""

    mu: float
    sigma: float
    family = "trunc_normal"

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise DomainError(f"trunc_normal needs finite mu and sigma > 0, got ({self.mu}, {self.sigma})")

    @property
    def _bounds(self):
        return -self.mu / self.sigma, (1.0 - self.mu) / self.sigma

    @property
    def _flip(self):
        # Work on the side of the mode so tail masses keep relative precision.
        a, b = self._bounds
        return a > 0

    def log_norm_const(self) -> float:
        """``log(Phi(b) - Phi(a))`` computed without cancellation."""
        a, b = self._bounds
        if a > 0:
            lo, hi = norm_cdf(-b), norm_cdf(-a)
        else:
            lo, hi = norm_cdf(a), norm_cdf(b)
        z = hi - lo
        if z > 0:
            return math.log(z)
        # Deep tail: Mills-ratio asymptotics around the nearer bound.
        t = a if a > 0 else -b
        return -0.5 * t * t - math.log(t * math.sqrt(2 * math.pi))

    def pdf(self, x):
        arr = self._check_x(x)
        z = (arr - self.mu) / self.sigma
        out = np.exp(-0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi)) - self.log_norm_const())
        return _scalar_or_array(x, out)

    def cdf(self, x):
        arr = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        a, b = self._bounds
        z = (arr - self.mu) / self.sigma
        if self._flip:
            top = norm_cdf(-a)
            out = (top - norm_cdf(-z)) / (top - norm_cdf(-b))
        else:
            lo = norm_cdf(a)
            out = (norm_cdf(z) - lo) / (norm_cdf(b) - lo)
        return _scalar_or_array(x, np.clip(out, 0.0, 1.0))

    def ppf(self, u):
        arr = _check_u(u)
        a, b = self._bounds
        if self._flip:
            top, bot = norm_cdf(-a), norm_cdf(-b)
            z = -norm_ppf(np.clip(top - arr * (top - bot), 0.0, 1.0))
        else:
            lo, hi = norm_cdf(a), norm_cdf(b)
            z = norm_ppf(np.clip(lo + arr * (hi - lo), 0.0, 1.0))
        out = np.clip(self.mu + self.sigma * np.asarray(z), 0.0, 1.0)
        return _scalar_or_array(u, out)

    def moments(self):
        a, b = self._bounds
        z = math.exp(self.log_norm_const())
        pa, pb = float(norm_pdf(a)), float(norm_pdf(b))
        r = (pa - pb) / z
        mean = self.mu + self.sigma * r
        var = self.sigma**2 * (1.0 + (a * pa - b * pb) / z - r * r)
        return mean, var

    def to_json(self):
        return {"family": "trunc_normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Beta(Marginal):
    alpha: float
    beta: float
    family = "beta"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError(f"beta needs alpha, beta > 0, got ({self.alpha}, {self.beta})")

    @property
    def _lbeta(self):
        return math.lgamma(self.alpha) + math.lgamma(self.beta) - math.lgamma(self.alpha + self.beta)

    def pdf(self, x):
        arr = self._check_x(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (self.alpha - 1) * np.log(arr) + (self.beta - 1) * np.log1p(-arr) - self._lbeta
            out = np.exp(logp)
        # 0 * log(0) at the endpoints when the exponent vanishes.
        out = np.where((arr == 0) & (self.alpha == 1), math.exp(-self._lbeta), out)
        out = np.where((arr == 1) & (self.beta == 1), math.exp(-self._lbeta), out)
        return _scalar_or_array(x, out)

    def cdf(self, x):
        arr = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return _scalar_or_array(x, np.asarray(betainc(self.alpha, self.beta, arr)))

    def ppf(self, u):
        arr = _check_u(u)
        return _scalar_or_array(u, np.asarray(beta_ppf(self.alpha, self.beta, arr)))

    def draw(self, source, size=None):
        n = 1 if size is None else size
        x = standard_gamma(self.alpha, source, n)
        y = standard_gamma(self.beta, source, n)
        out = x / (x + y)
        return out[0] if size is None else out

    def moments(self):
        s = self.alpha + self.beta
        return self.alpha / s, self.alpha * self.beta / (s * s * (s + 1.0))

    def to_json(self):
        return {"family": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True, eq=False)
class Empirical(Marginal):
    """Histogram density with ``G = len(masses)`` equal-width bins on [0, 1]."""

    masses: tuple
    family = "empirical"
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mass = np.asarray(self.masses, dtype=float)
        if mass.ndim != 1 or mass.size == 0 or np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-9:
            raise DomainError("empirical masses must be non-negative and sum to 1")
        object.__setattr__(self, "masses", tuple(float(x) for x in mass))
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)

    def __eq__(self, other):
        return isinstance(other, Empirical) and self.masses == other.masses

    def __hash__(self):
        return hash(self.masses)

    @property
    def G(self) -> int:
        return len(self.masses)

    def _bin(self, arr):
        return np.minimum(np.floor(arr * self.G), self.G - 1).astype(int)

    def pdf(self, x):
        arr = self._check_x(x)
        out = np.asarray(self.masses)[self._bin(arr)] * self.G
        return _scalar_or_array(x, out)

    def cdf(self, x):
        arr = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        g = self._bin(arr)
        frac = arr * self.G - g
        out = self._cum[g] + frac * np.asarray(self.masses)[g]
        return _scalar_or_array(x, np.clip(out, 0.0, 1.0))

    def ppf(self, u):
        arr = _check_u(u)
        mass = np.asarray(self.masses)
        g = np.searchsorted(self._cum[1:], arr, side="left")
        g = np.minimum(g, self.G - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(mass[g] > 0, (arr - self._cum[g]) / mass[g], 0.0)
        out = (g + np.clip(frac, 0.0, 1.0)) / self.G
        return _scalar_or_array(u, out)

    def moments(self):
        mass = np.asarray(self.masses)
        w = 1.0 / self.G
        centers = (np.arange(self.G) + 0.5) * w
        mean = float(mass @ centers)
        var = float(mass @ (centers**2 + w * w / 12.0)) - mean * mean
        return mean, var

    def to_json(self):
        return {"family": "empirical", "masses": list(self.masses)}


def empirical_marginal(samples, G: int) -> Empirical:
    """Histogram of ``samples`` over ``G`` equal-width bins (top edge closed)."""
    if G < 1:
        raise DomainError("G must be >= 1")
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DomainError("empty sample")
    if np.any((x < 0) | (x > 1)):
        raise DomainError("samples outside [0, 1]")
    bins = np.minimum(np.floor(x * G), G - 1).astype(int)
    counts = np.bincount(bins, minlength=G)
    return Empirical(tuple(counts / x.size))


class _DiscreteMarginal(Marginal):
    discrete = True

    def pmf_table(self) -> np.ndarray:
        raise NotImplementedError

    def _tables(self):
        pmf = self.pmf_table()
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        return pmf, cdf

    def pdf(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(~(arr >= 0) | ~(arr <= self.K) | (arr != np.round(arr))):
            raise DomainError(f"{self.family} mass evaluated outside {{0..{self.K}}}")
        pmf = self.pmf_table()
        return _scalar_or_array(x, pmf[arr.astype(int)])

    def cdf(self, x):
        arr = np.asarray(x, dtype=float)
        _, cdf = self._tables()
        k = np.floor(arr)
        idx = np.clip(k, 0, self.K).astype(int)
        out = np.where(k < 0, 0.0, cdf[idx])
        return _scalar_or_array(x, out)

    def ppf(self, u):
        arr = _check_u(u)
        _, cdf = self._tables()
        k = np.minimum(np.searchsorted(cdf, arr, side="left"), self.K)
        if np.ndim(u) == 0:
            return int(k)
        return k.astype(np.int64)

    def draw(self, source, size=None):
        n = 1 if size is None else size
        out = self.ppf(source.uniform_open(n))
        return int(out[0]) if size is None else out

    def moments(self):
        pmf = self.pmf_table()
        k = np.arange(self.K + 1)
        mean = float(pmf @ k)
        return mean, float(pmf @ (k - mean) ** 2)


def _check_K(K):
    if int(K) != K or K < 1:
        raise DomainError(f"K must be an integer >= 1, got {K!r}")


@dataclass(frozen=True)
class DiscreteUniform(_DiscreteMarginal):
    K: int
    family = "discrete_uniform"

    def __post_init__(self):
        _check_K(self.K)
        object.__setattr__(self, "K", int(self.K))

    def pmf_table(self):
        return np.full(self.K + 1, 1.0 / (self.K + 1))

    def moments(self):
        return self.K / 2.0, ((self.K + 1) ** 2 - 1) / 12.0

    def to_json(self):
        return {"family": "discrete_uniform", "K": self.K}


@dataclass(frozen=True)
class Binomial(_DiscreteMarginal):
    K: int
    p: float
    family = "binomial"

    def __post_init__(self):
        _check_K(self.K)
        object.__setattr__(self, "K", int(self.K))
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"binomial p must lie in [0, 1], got {self.p}")

    def pmf_table(self):
        k = np.arange(self.K + 1)
        comb = np.array([math.comb(self.K, int(i)) for i in k], dtype=float)
        return comb * self.p**k * (1.0 - self.p) ** (self.K - k)

    def moments(self):
        return self.K * self.p, self.K * self.p * (1.0 - self.p)

    def to_json(self):
        return {"family": "binomial", "K": self.K, "p": self.p}


@dataclass(frozen=True)
class BetaBinomial(_DiscreteMarginal):
    K: int
    alpha: float
    beta: float
    family = "beta_binomial"

    def __post_init__(self):
        _check_K(self.K)
        object.__setattr__(self, "K", int(self.K))
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(f"beta_binomial needs alpha, beta > 0, got ({self.alpha}, {self.beta})")

    def pmf_table(self):
        a, b, K = self.alpha, self.beta, self.K
        lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        out = np.empty(K + 1)
        for k in range(K + 1):
            lk = math.lgamma(k + a) + math.lgamma(K - k + b) - math.lgamma(K + a + b)
            out[k] = math.comb(K, k) * math.exp(lk - lb)
        return out

    def moments(self):
        a, b, K = self.alpha, self.beta, self.K
        s = a + b
        return K * a / s, K * a * b * (s + K) / (s * s * (s + 1.0))

    def to_json(self):
        return {"family": "beta_binomial", "K": self.K, "alpha": self.alpha, "beta": self.beta}


def density(marginal: Marginal, x):
    return marginal.pdf(x)


def cumulative(marginal: Marginal, x):
    return marginal.cdf(x)


def quantile(marginal: Marginal, u):
    return marginal.ppf(u)


def draw(marginal: Marginal, source: RandomSource, size: int | None = None):
    return marginal.draw(source, size)


def moments(marginal: Marginal):
    return marginal.moments()


def _num(obj, key, path, positive=False):
    try:
        val = obj[key]
    except KeyError:
        raise ModelError("missing field", f"{path}.{key}") from None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ModelError(f"expected a number, got {val!r}", f"{path}.{key}")
    if positive and not val > 0:
        raise ModelError(f"must be positive, got {val!r}", f"{path}.{key}")
    return val


def marginal_from_json(obj: dict, path: str = "$") -> Marginal:
    """Decode the JSON encoding produced by ``Marginal.to_json``."""
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    fam = obj.get("family")
    try:
        if fam == "uniform":
            return Uniform01()
        if fam == "trunc_normal":
            return TruncNormal(float(_num(obj, "mu", path)), float(_num(obj, "sigma", path, True)))
        if fam == "beta":
            return Beta(float(_num(obj, "alpha", path, True)), float(_num(obj, "beta", path, True)))
        if fam == "empirical":
            return Empirical(tuple(obj["masses"]))
        if fam == "discrete_uniform":
            return DiscreteUniform(_num(obj, "K", path, True))
        if fam == "binomial":
            return Binomial(_num(obj, "K", path, True), float(_num(obj, "p", path)))
        if fam == "beta_binomial":
            return BetaBinomial(_num(obj, "K", path, True), float(_num(obj, "alpha", path, True)),
                                float(_num(obj, "beta", path, True)))
    except DomainError as exc:
        raise ModelError(str(exc), path) from None
    except KeyError as exc:
        raise ModelError("missing field", f"{path}.{exc.args[0]}") from None
    raise ModelError(f"unknown family {fam!r}", f"{path}.family")
