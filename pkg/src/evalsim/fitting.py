"""Fitting generator models to an observed profile.

The pipeline (:func:`fit_pipeline`) runs four steps: fit candidate
marginals and score them with a distance statistic, test whether the
marginals are identical (Kruskal-Wallis), test independence (Bartlett's
sphericity test on the correlation matrix), then assemble a ready-to-run
generator model for the selected IID / IDD / DID / DDD class.

Distances are reported next to every test verdict: with thousands of
voters the tests reject on negligible effects, so the raw numbers matter
more than the p-values.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .copula import (
    CorrelationMatrix,
    fit_checkerboard,
    latent_from_spearman,
    midranks,
    nearest_pd,
    pseudo_observations,
    DegenerateColumnWarning,
)
from .core import Profile, RandomSource
from .errors import (
    AllValuesEqual,
    DegenerateSample,
    DomainError,
    NonConvergence,
    SingularMatrix,
    ZeroExpected,
)
from .generators import CopulaModel, IDDModel, IIDModel
from .special import chi2_sf
from .univariate import (
    Beta,
    BetaBinomial,
    Binomial,
    DiscreteUniform,
    Empirical,
    Marginal,
    TruncNormal,
    Uniform01,
    empirical_marginal,
)

__all__ = [
    "MarginalFit",
    "FitReport",
    "ConstantColumnWarning",
    "beta_from_moments",
    "fit_beta_moments",
    "fit_truncnormal_mle",
    "fit_binomial",
    "betabinomial_from_moments",
    "fit_betabinomial_moments",
    "ks_statistic",
    "chi2_statistic",
    "grade_counts",
    "correlation_matrix",
    "kruskal_wallis",
    "bartlett_sphericity",
    "empirical_marginal",
    "fit_family",
    "fit_pipeline",
    "jitter_scores",
    "histogram_table",
    "CONTINUOUS_FAMILIES",
    "DISCRETE_FAMILIES",
]

CONTINUOUS_FAMILIES = ("uniform", "trunc_normal", "beta")
DISCRETE_FAMILIES = ("discrete_uniform", "binomial", "beta_binomial")
LARGE_N = 10_000


class ConstantColumnWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


def _sample_moments(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateSample("need at least two observations")
    return float(x.mean()), float(x.var(ddof=1)), x


def beta_from_moments(mean: float, var: float) -> tuple[float, float]:
    """Method-of-moments Beta parameters from a mean and a variance."""
    if not 0.0 < mean < 1.0:
        raise DegenerateSample(f"sample mean {mean!r} must lie strictly inside (0, 1)")
    if not var > 0:
        raise DegenerateSample("sample variance is zero")
    k = mean * (1.0 - mean) / var - 1.0
    if not k > 0:
        raise DegenerateSample(
            f"variance {var!r} is at or above the Bernoulli bound {mean * (1 - mean)!r}")
    return mean * k, (1.0 - mean) * k


def fit_beta_moments(samples) -> tuple[float, float]:
    mean, var, _ = _sample_moments(samples)
    return beta_from_moments(mean, var)


def _truncnormal_nll(mu, sigma, n, s1, s2):
    ss = s2 - 2.0 * mu * s1 + n * mu * mu
    return n * math.log(sigma) + ss / (2.0 * sigma * sigma) + n * TruncNormal(mu, sigma).log_norm_const()


def fit_truncnormal_mle(samples, max_restarts: int = 128, max_evals: int = 2000,
                        tol: float = 1e-8) -> tuple[float, float]:
    """Maximum-likelihood ``(mu, sigma)`` of a normal truncated to ``[0, 1]``.

    Nelder-Mead on ``(mu, log sigma)`` from the sample moments, restarted
    from the best point until the log-likelihood stops improving by more than
    ``tol``. Raises :class:`NonConvergence` (with ``best``) if the restart cap
    is reached first.

    The search box is ``|mu| < 1000`` and ``sigma`` in ``(e^-30, e^30)``. For
    samples whose likelihood keeps growing towards infinity (U-shaped or flat
    histograms) the best point on that box is returned; it is numerically
    indistinguishable from the limiting distribution.
    """
    mean, var, x = _sample_moments(samples)
    if var <= 0:
        raise DegenerateSample("constant sample")
    if np.any((x < 0) | (x > 1)):
        raise DomainError("samples outside [0, 1]")
    n = float(x.size)
    s1 = float(x.sum())
    s2 = float(x @ x)

    def objective(theta):
        mu, log_sigma = theta
        if not (abs(mu) < 1e3 and -30.0 < log_sigma < 30.0):
            return math.inf
        return _truncnormal_nll(mu, math.exp(log_sigma), n, s1, s2)

    start = np.array([mean, math.log(math.sqrt(var))])
    best_x = start
    best_f = objective(start)
    for _ in range(max_restarts):
        res = minimize(objective, best_x, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": tol * 1e-2, "maxfev": max_evals})
        improved = best_f - res.fun
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
        if improved <= tol * max(1.0, abs(best_f)):
            return float(best_x[0]), float(math.exp(best_x[1]))
    raise NonConvergence("truncated-normal likelihood did not settle",
                         best=(float(best_x[0]), float(math.exp(best_x[1]))))


def fit_binomial(samples, K: int, paper_estimator: bool = False) -> float:
    """Binomial ``p``: ``mean / K`` by default, ``mean / (K + 1)`` on request."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise DegenerateSample("empty sample")
    mean = float(x.mean())
    p = mean / (K + 1) if paper_estimator else mean / K
    return min(1.0, max(0.0, p))


def betabinomial_from_moments(K: int, mean: float, var: float) -> tuple[float, float]:
    """Moment estimates of the beta-binomial ``(alpha, beta)`` on ``{0..K}``."""
    if not mean > 0:
        raise DegenerateSample("sample mean must be positive")
    denom = K * (var / mean - 1.0) + mean
    if abs(denom) < 1e-12:
        raise DegenerateSample("moment equations are singular (vanishing denominator)")
    a = (K * mean - mean * mean - var) / denom
    b = (K - mean) * (K - mean - var / mean) / denom
    if not (a > 0 and b > 0):
        raise DegenerateSample(f"non-positive estimates ({a!r}, {b!r}); sample is not over-dispersed")
    return a, b


def fit_betabinomial_moments(samples, K: int) -> tuple[float, float]:
    mean, var, _ = _sample_moments(samples)
    return betabinomial_from_moments(K, mean, var)


# --------------------------------------------------------------------------
# Distances and tests
# --------------------------------------------------------------------------


def ks_statistic(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 1:
        raise DomainError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def grade_counts(samples, K: int) -> np.ndarray:
    x = np.asarray(samples).astype(np.int64).ravel()
    return np.bincount(x, minlength=K + 1)[: K + 1]


def chi2_statistic(observed_counts, model) -> float:
    """Pearson chi-square distance between grade counts and a discrete model.

    ``model`` is a discrete marginal or a vector of grade probabilities.
    """
    obs = np.asarray(observed_counts, dtype=float)
    probs = model.pmf_table() if hasattr(model, "pmf_table") else np.asarray(model, dtype=float)
    if obs.shape != probs.shape:
        raise DomainError(f"{obs.size} counts for {probs.size} grades")
    n = obs.sum()
    if n < 1:
        raise DomainError("no observations")
    if np.any(probs < 1e-12):
        k = int(np.argmax(probs < 1e-12))
        raise ZeroExpected(f"model gives grade {k} probability {probs[k]:.3g}")
    expected = n * probs
    return float(np.sum((obs - expected) ** 2 / expected))


def correlation_matrix(data, method: str = "pearson") -> np.ndarray:
    """Pearson or Spearman (Pearson on mid-ranks) correlation of the columns.

    Entries involving a constant column are NaN and trigger a
    :class:`ConstantColumnWarning`; the diagonal is exactly 1.
    """
    X = data.values if isinstance(data, Profile) else np.asarray(data, dtype=float)
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if n < 3:
        raise DomainError("correlations need at least three voters")
    if method == "spearman":
        X = np.column_stack([midranks(X[:, c]) for c in range(m)])
    elif method != "pearson":
        raise DomainError(f"unknown correlation method {method!r}")
    Z = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Z, Z))
    const = norms == 0
    if const.any():
        warnings.warn(f"constant column(s) {list(np.flatnonzero(const) + 1)}", ConstantColumnWarning,
                      stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = (Z.T @ Z) / np.outer(norms, norms)
    R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
    R[const, :] = np.nan
    R[:, const] = np.nan
    np.fill_diagonal(R, 1.0)
    return R


def kruskal_wallis(groups) -> tuple[float, float]:
    """Kruskal-Wallis ``H`` (tie-corrected) and its chi-square p-value."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise DomainError("need at least two non-empty groups")
    pooled = np.concatenate(groups)
    N = pooled.size
    if np.all(pooled == pooled[0]):
        raise AllValuesEqual("all observations are equal")
    ranks = midranks(pooled)
    H = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + g.size]
        H += r.sum() ** 2 / g.size
        start += g.size
    H = 12.0 / (N * (N + 1)) * H - 3.0 * (N + 1)
    _, ties = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(ties.astype(float) ** 3 - ties)) / (N**3 - N)
    H /= correction
    H = max(H, 0.0)
    return H, chi2_sf(H, len(groups) - 1)


def bartlett_sphericity(R, n: int) -> tuple[float, float]:
    """Bartlett's test that a correlation matrix is the identity."""
    R = np.asarray(R, dtype=float)
    m = R.shape[0]
    if n <= m:
        raise DomainError(f"Bartlett's test needs n > m (n={n}, m={m})")
    if not np.all(np.isfinite(R)):
        raise SingularMatrix("correlation matrix has undefined entries")
    sign, logdet = np.linalg.slogdet(R)
    if sign <= 0:
        raise SingularMatrix("correlation matrix determinant is not positive")
    stat = -(n - 1 - (2 * m + 5) / 6.0) * logdet
    stat = max(stat, 0.0)
    return stat, chi2_sf(stat, m * (m - 1) / 2.0)


def jitter_scores(scores, source: RandomSource, top: int = 100) -> np.ndarray:
    """Spread integer scores on ``{0..top}`` into ``[0, 1]``: ``(x + U) / (top + 1)``."""
    x = np.asarray(scores, dtype=float)
    return (x + source.random(x.shape)) / (top + 1)


def histogram_table(values, G: int, discrete_K: int | None = None):
    """Per-bin ``(lower, upper, count, density)`` rows for plotting."""
    x = np.asarray(values, dtype=float)
    rows = []
    if discrete_K is not None:
        counts = grade_counts(x, discrete_K)
        for k, c in enumerate(counts):
            rows.append((k, k, int(c), c / x.size))
        return rows
    bins = np.minimum(np.floor(x * G), G - 1).astype(int)
    counts = np.bincount(bins, minlength=G)
    for g, c in enumerate(counts):
        rows.append((g / G, (g + 1) / G, int(c), c * G / x.size))
    return rows


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


@dataclass
class MarginalFit:
    family: str
    params: dict
    gof: float
    statistic: str
    n_used: int
    marginal: Marginal | None = None
    G: int | None = None
    error: str | None = None

    def to_json(self):
        out = {"family": self.family, "params": self.params, "gof": _clean(self.gof),
               "statistic": self.statistic, "n": self.n_used}
        if self.G is not None:
            out["G"] = self.G
        if self.error:
            out["error"] = self.error
        return out


def _params(mg: Marginal) -> dict:
    out = mg.to_json()
    out.pop("family")
    if "masses" in out:
        out = {"G": len(out["masses"]), "masses": out["masses"]}
    return out


def fit_family(family: str, samples, K: int | None = None, G: int = 40,
               paper_estimator: bool = False) -> MarginalFit:
    """Fit one family to one sample and score it (KS or chi-square)."""
    x = np.asarray(samples, dtype=float).ravel()
    discrete = family in DISCRETE_FAMILIES
    stat = "chi2" if discrete else "ks"
    try:
        if family == "uniform":
            mg = Uniform01()
        elif family == "trunc_normal":
            try:
                mg = TruncNormal(*fit_truncnormal_mle(x))
            except NonConvergence as exc:
                mg = TruncNormal(*exc.best)
        elif family == "beta":
            mg = Beta(*fit_beta_moments(x))
        elif family == "empirical":
            mg = empirical_marginal(x, G)
        elif family == "discrete_uniform":
            mg = DiscreteUniform(K)
        elif family == "binomial":
            mg = Binomial(K, fit_binomial(x, K, paper_estimator))
        elif family == "beta_binomial":
            mg = BetaBinomial(K, *fit_betabinomial_moments(x, K))
        else:
            raise DomainError(f"unknown family {family!r}")
    except (DegenerateSample, DomainError) as exc:
        if isinstance(exc, DomainError) and "unknown family" in str(exc):
            raise
        return MarginalFit(family, {}, math.inf, stat, x.size, None, error=str(exc))

    if discrete:
        try:
            gof = chi2_statistic(grade_counts(x, K), mg)
        except ZeroExpected as exc:
            return MarginalFit(family, _params(mg), math.inf, stat, x.size, mg, error=str(exc))
    else:
        gof = ks_statistic(x, mg.cdf)
    return MarginalFit(family, _params(mg), gof, stat, x.size, mg,
                       G=G if family == "empirical" else None)


def _clean(x):
    """JSON-safe numbers: NaN and infinities become null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, list):
        return [_clean(v) for v in x]
    if isinstance(x, np.floating):
        return _clean(float(x))
    return x


@dataclass
class FitReport:
    candidates: list
    fits: list  # per candidate: list of MarginalFit
    best: list  # per candidate: best family name
    scale: dict
    n: int
    alpha: float
    kruskal_wallis: tuple | None = None
    pearson: np.ndarray | None = None
    spearman: np.ndarray | None = None
    bartlett: tuple | None = None
    identical: bool | None = None
    independent: bool | None = None
    selected_class: str = "IID"
    model: object = None
    dependence: object = None
    pooled: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "m": len(self.candidates),
            "scale": self.scale,
            "alpha": self.alpha,
            "candidates": [
                {"candidate": name, "best": best, "fits": [f.to_json() for f in fits]}
                for name, best, fits in zip(self.candidates, self.best, self.fits)
            ],
            "pooled": [f.to_json() for f in self.pooled],
        }
        if self.kruskal_wallis is not None:
            out["kruskal_wallis"] = {"H": _clean(self.kruskal_wallis[0]), "p": _clean(self.kruskal_wallis[1])}
        if self.pearson is not None:
            out["pearson"] = _clean(self.pearson)
            out["spearman"] = _clean(self.spearman)
        if self.bartlett is not None:
            out["bartlett"] = {"stat": _clean(self.bartlett[0]), "p": _clean(self.bartlett[1])}
        out["identical"] = None if self.identical is None else bool(self.identical)
        out["independent"] = None if self.independent is None else bool(self.independent)
        out["selected_class"] = self.selected_class
        out["model"] = self.model.to_json() if self.model is not None else None
        out["warnings"] = list(self.warnings)
        return out


def _best(fits):
    ok = [f for f in fits if f.marginal is not None and math.isfinite(f.gof)]
    if not ok:
        return None
    return min(ok, key=lambda f: f.gof)


def fit_pipeline(profile: Profile, families=None, dependence: str = "gaussian",
                 B: int = 40, G: int = 40, alpha: float = 0.05,
                 paper_estimator: bool = False) -> FitReport:
    """Run the four fitting steps and return a :class:`FitReport`.

    ``families`` lists the marginal families to try (default: the three
    parametric families of the profile's scale). ``dependence`` is
    ``"gaussian"`` or ``"checkerboard"`` and only matters when the
    independence test rejects.
    """
    if profile.n < 10:
        raise DomainError(f"fitting needs at least 10 voters, got {profile.n}")
    if dependence not in ("gaussian", "checkerboard"):
        raise DomainError(f"unknown dependence option {dependence!r}")
    discrete = profile.scale.is_discrete
    K = profile.scale.K
    if families is None:
        families = DISCRETE_FAMILIES if discrete else CONTINUOUS_FAMILIES
    families = list(families)
    allowed = DISCRETE_FAMILIES if discrete else CONTINUOUS_FAMILIES + ("empirical",)
    for fam in families:
        if fam not in allowed:
            raise DomainError(f"family {fam!r} does not apply to a {profile.scale} scale")

    X = profile.values.astype(float)
    n, m = X.shape
    notes = []
    if n > LARGE_N:
        notes.append(f"n={n}: tests reject on negligible effects at this size; compare the raw distances")

    # Step 1: marginals.
    fits = [[fit_family(f, X[:, c], K, G, paper_estimator) for f in families] for c in range(m)]
    best_fits = [_best(fs) for fs in fits]
    for c, b in enumerate(best_fits):
        if b is None:
            raise DegenerateSample(f"no family could be fitted to candidate {profile.candidate_names[c]}")

    report = FitReport(
        candidates=list(profile.candidate_names),
        fits=fits,
        best=[b.family for b in best_fits],
        scale=profile.scale.to_json(),
        n=n,
        alpha=alpha,
        warnings=notes,
    )

    if m == 1:
        notes.append("single candidate: identical-marginal and independence steps skipped")
        report.selected_class = "IID"
        report.model = IIDModel(best_fits[0].marginal, 1)
        return report

    # Step 2: identical marginals.
    try:
        report.kruskal_wallis = kruskal_wallis([X[:, c] for c in range(m)])
        report.identical = report.kruskal_wallis[1] > alpha
    except AllValuesEqual:
        report.kruskal_wallis = (0.0, 1.0)
        report.identical = True
        notes.append("all evaluations are equal")

    # Step 3: independence.
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report.pearson = correlation_matrix(X, "pearson")
        report.spearman = correlation_matrix(X, "spearman")
    for w in caught:
        if issubclass(w.category, (ConstantColumnWarning, DegenerateColumnWarning)):
            notes.append(str(w.message))
    try:
        report.bartlett = bartlett_sphericity(report.pearson, n)
        report.independent = report.bartlett[1] > alpha
    except SingularMatrix as exc:
        notes.append(f"Bartlett test unavailable: {exc}")
        report.bartlett = (math.nan, math.nan)
        report.independent = False

    # Step 4: model.
    cls = ("I" if report.independent else "D") + ("ID" if report.identical else "DD")
    report.selected_class = cls
    if report.identical:
        pooled = X.ravel()
        report.pooled = [fit_family(f, pooled, K, G, paper_estimator) for f in families]
        best_pooled = _best(report.pooled)
        marginals = [best_pooled.marginal] * m
    else:
        marginals = [b.marginal for b in best_fits]

    if report.independent:
        report.model = IIDModel(marginals[0], m) if report.identical else IDDModel(marginals)
        return report

    if dependence == "checkerboard":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateColumnWarning)
            dep = fit_checkerboard(pseudo_observations(X), B)
    else:
        S = np.nan_to_num(report.spearman, nan=0.0)
        R = latent_from_spearman(S)
        np.fill_diagonal(R, 1.0)
        if np.linalg.eigvalsh(R)[0] <= 1e-10:
            notes.append("estimated correlation repaired to the nearest positive-definite matrix")
            R = nearest_pd(R)
        dep = CorrelationMatrix(R)
    report.dependence = dep
    report.model = CopulaModel(dep, marginals)
    return report
