"""Joint models over ``m`` candidates and profile generation.

Voters are always mutually independent; a model only describes the joint
law of one voter's row of evaluations. Rows are produced in fixed-size
voter blocks, block ``b`` drawing from ``source.child(b)``, so the output
does not depend on how many threads generate it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .copula import (
    CheckerboardCopula,
    CorrelationMatrix,
    check_marginals,
    checkerboard_draw,
    dependence_from_json,
    gaussian_copula_draw,
)
from .core import Profile, RandomSource, Scale, default_names, discretize, validate_profile
from .errors import DimensionMismatch, DomainError, ModelError
from .univariate import Marginal, marginal_from_json, standard_gamma

__all__ = [
    "LinearTruncated",
    "Sigmoid",
    "UniformBox",
    "GaussianMixture",
    "IIDModel",
    "IDDModel",
    "CopulaModel",
    "MultinomialModel",
    "DirichletModel",
    "SpatialModel",
    "SpatialPositions",
    "generate",
    "spatial_generate",
    "multinomial_row",
    "multinomial_rows",
    "dirichlet_row",
    "dirichlet_rows",
    "link_apply",
    "link_from_json",
    "voters_from_json",
    "model_from_json",
    "write_positions_csv",
    "positions_to_csv",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 8192
_CANDIDATE_STREAM = 2**63


# --------------------------------------------------------------------------
# Link functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearTruncated:
    """``e = max(0, 1 - ell * delta)``."""

    ell: float

    def __post_init__(self):
        if not self.ell > 0:
            raise DomainError(f"linear link needs ell > 0, got {self.ell}")

    def __call__(self, delta):
        return np.maximum(0.0, 1.0 - self.ell * np.asarray(delta, dtype=float))

    def to_json(self):
        return {"type": "linear", "ell": self.ell}


@dataclass(frozen=True)
class Sigmoid:
    """``e = 1 / (1 + exp(lam * (beta * delta - 1)))``."""

    lam: float
    beta: float

    def __post_init__(self):
        if not (self.lam > 0 and self.beta > 0):
            raise DomainError(f"sigmoid link needs lambda, beta > 0, got ({self.lam}, {self.beta})")

    def __call__(self, delta):
        t = self.lam * (self.beta * np.asarray(delta, dtype=float) - 1.0)
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(t))

    def to_json(self):
        return {"type": "sigmoid", "lambda": self.lam, "beta": self.beta}


def link_apply(link, delta):
    """Evaluation in ``[0, 1]`` for a non-negative distance."""
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0):
        raise DomainError("distance must be non-negative")
    out = link(d)
    return float(out) if out.ndim == 0 else out


def link_from_json(obj, path="$.link"):
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    kind = obj.get("type")
    try:
        if kind == "linear":
            return LinearTruncated(float(obj["ell"]))
        if kind == "sigmoid":
            return Sigmoid(float(obj["lambda"]), float(obj["beta"]))
    except KeyError as exc:
        raise ModelError("missing field", f"{path}.{exc.args[0]}") from None
    except (DomainError, TypeError, ValueError) as exc:
        raise ModelError(str(exc), path) from None
    raise ModelError(f"unknown link type {kind!r}", f"{path}.type")


# --------------------------------------------------------------------------
# Latent-space distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    """Uniform distribution on ``[0, 1]^d``."""

    d: int

    def sample(self, source: RandomSource, n: int) -> np.ndarray:
        return source.random((n, self.d))

    def to_json(self):
        return {"dist": "uniform"}


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of ``k`` Gaussians in ``R^d``; a single component is a plain Gaussian.

    ``covariances`` is ``k x d x d``, one shared ``d x d`` matrix, a scalar
    standard deviation, or one isotropic standard deviation per component.
    """

    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        k, d = means.shape
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 0:
            cov = np.broadcast_to(np.eye(d) * float(cov) ** 2, (k, d, d)).copy()
        elif cov.ndim == 1 and cov.size == k:
            cov = cov[:, None, None] ** 2 * np.eye(d)
        elif cov.ndim == 2:
            cov = np.broadcast_to(cov, (k, d, d)).copy()
        if cov.shape != (k, d, d):
            raise DimensionMismatch(f"covariances must be {k}x{d}x{d}")
        w = np.full(k, 1.0 / k) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (k,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ModelError("mixture weights must be non-negative and sum to 1")
        chols = []
        for j in range(k):
            c = 0.5 * (cov[j] + cov[j].T)
            lam = np.linalg.eigvalsh(c)
            if lam[0] < -1e-12:
                raise ModelError(f"covariance {j} is not positive semidefinite")
            # Semidefinite covariances (point masses) allowed.
            vals, vecs = np.linalg.eigh(c)
            chols.append(vecs * np.sqrt(np.maximum(vals, 0.0)))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_factors", np.array(chols))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def k(self) -> int:
        return self.means.shape[0]

    def sample(self, source: RandomSource, n: int) -> np.ndarray:
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        comp = np.minimum(np.searchsorted(cum, source.random(n), side="right"), self.k - 1)
        z = source.normal((n, self.d))
        return self.means[comp] + np.einsum("nij,nj->ni", self._factors[comp], z)

    def to_json(self):
        return {
            "dist": "gaussian_mixture",
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "weights": self.weights.tolist(),
        }


def voters_from_json(obj, d, path="$.voters"):
    if obj is None:
        return UniformBox(d)
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    kind = obj.get("dist")
    if kind == "uniform":
        return UniformBox(d)
    if kind in ("gaussian", "gaussian_mixture"):
        try:
            means = obj["means"] if "means" in obj else [obj["mean"]]
            if "covariances" in obj:
                cov = obj["covariances"]
            elif "covariance" in obj:
                cov = obj["covariance"]
            else:
                cov = obj.get("sd", 1.0)
            dist = GaussianMixture(means, cov, obj.get("weights"))
        except KeyError as exc:
            raise ModelError("missing field", f"{path}.{exc.args[0]}") from None
        except (ValueError, TypeError) as exc:
            raise ModelError(str(exc), path) from None
        if dist.d != d:
            raise DimensionMismatch(f"voter distribution has dimension {dist.d}, model has d={d}", path)
        return dist
    raise ModelError(f"unknown voter distribution {kind!r}", f"{path}.dist")


# --------------------------------------------------------------------------
# Cumulative-voting rows
# --------------------------------------------------------------------------


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ModelError("p must be a non-empty list", "p")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ModelError("probabilities must be non-negative", "p")
    if abs(math.fsum(p) - 1.0) > 1e-12:
        raise ModelError(f"probabilities sum to {math.fsum(p)!r}, not 1", "p")
    return p


def multinomial_rows(K: int, p, source: RandomSource, n: int) -> np.ndarray:
    """``n`` multinomial rows, each the tally of ``K`` categorical draws."""
    p = _check_p(p)
    if K < 0 or int(K) != K:
        raise DomainError(f"K must be a non-negative integer, got {K}")
    m = p.size
    out = np.zeros((n, m), dtype=np.int64)
    if K == 0 or n == 0:
        return out
    cum = np.cumsum(p)
    cum[-1] = 1.0
    cat = np.minimum(np.searchsorted(cum, source.random((n, K)), side="right"), m - 1)
    flat = (np.arange(n)[:, None] * m + cat).ravel()
    out += np.bincount(flat, minlength=n * m).reshape(n, m)
    return out


def multinomial_row(K: int, p, source: RandomSource) -> np.ndarray:
    return multinomial_rows(K, p, source, 1)[0]


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size == 0 or np.any(~(a > 0)) or not np.all(np.isfinite(a)):
        raise ModelError("every alpha must be a positive number", "alpha")
    return a


def dirichlet_rows(alpha, source: RandomSource, n: int) -> np.ndarray:
    """Normalized independent Gamma(alpha_c, 1) draws."""
    a = _check_alpha(alpha)
    g = np.column_stack([standard_gamma(ac, source, n) for ac in a])
    return g / g.sum(axis=1, keepdims=True)


def dirichlet_row(alpha, source: RandomSource) -> np.ndarray:
    return dirichlet_rows(alpha, source, 1)[0]


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


class _Model:
    kind = ""

    @property
    def scale(self) -> Scale:
        raise NotImplementedError

    def sample_rows(self, source: RandomSource, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class IIDModel(_Model):
    """Every candidate's evaluations follow the same marginal, independently."""

    marginal: Marginal
    m: int
    kind = "iid"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ModelError(f"m must be a positive integer, got {self.m!r}", "m")

    @property
    def scale(self):
        return self.marginal.scale

    def sample_rows(self, source, n):
        return self.marginal.draw(source, n * self.m).reshape(n, self.m)

    def to_json(self):
        return {"model": "iid", "m": self.m, "marginal": self.marginal.to_json()}


@dataclass(frozen=True)
class IDDModel(_Model):
    marginals: tuple
    kind = "idd"

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        check_marginals(self.marginals)

    @property
    def m(self):
        return len(self.marginals)

    @property
    def scale(self):
        return self.marginals[0].scale

    def sample_rows(self, source, n):
        return np.column_stack([mg.draw(source, n) for mg in self.marginals])

    def to_json(self):
        return {"model": "idd", "marginals": [mg.to_json() for mg in self.marginals]}


@dataclass(frozen=True, eq=False)
class CopulaModel(_Model):
    """Marginals coupled by a Gaussian or checkerboard copula."""

    dependence: object
    marginals: tuple
    kind = "copula"

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        check_marginals(self.marginals)
        dep = self.dependence
        if not isinstance(dep, (CorrelationMatrix, CheckerboardCopula)):
            dep = CorrelationMatrix(dep)
            object.__setattr__(self, "dependence", dep)
        if dep.m != len(self.marginals):
            raise DimensionMismatch(
                f"dependence has dimension {dep.m} but there are {len(self.marginals)} marginals",
                "marginals")

    @property
    def m(self):
        return len(self.marginals)

    @property
    def scale(self):
        return self.marginals[0].scale

    def sample_rows(self, source, n):
        if isinstance(self.dependence, CheckerboardCopula):
            return checkerboard_draw(self.dependence, self.marginals, source, n)
        return gaussian_copula_draw(self.dependence, self.marginals, source, n)

    def to_json(self):
        return {
            "model": "copula",
            "dependence": self.dependence.to_json(),
            "marginals": [mg.to_json() for mg in self.marginals],
        }


@dataclass(frozen=True, eq=False)
class MultinomialModel(_Model):
    """Cumulative voting with ``K`` indivisible points: rows sum to ``K``."""

    K: int
    p: tuple
    kind = "multinomial"

    def __post_init__(self):
        if isinstance(self.K, bool) or int(self.K) != self.K or self.K < 1:
            raise ModelError(f"K must be a positive integer, got {self.K!r}", "K")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "p", tuple(float(x) for x in _check_p(self.p)))

    @property
    def m(self):
        return len(self.p)

    @property
    def scale(self):
        return Scale.discrete(self.K)

    def sample_rows(self, source, n):
        return multinomial_rows(self.K, self.p, source, n)

    def to_json(self):
        return {"model": "multinomial", "K": self.K, "p": list(self.p)}


@dataclass(frozen=True, eq=False)
class DirichletModel(_Model):
    """Cumulative voting with a divisible unit budget: rows sum to 1."""

    alpha: tuple
    kind = "dirichlet"

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(x) for x in _check_alpha(self.alpha)))

    @property
    def m(self):
        return len(self.alpha)

    @property
    def scale(self):
        return Scale.continuous()

    def sample_rows(self, source, n):
        return dirichlet_rows(self.alpha, source, n)

    def to_json(self):
        return {"model": "dirichlet", "alpha": list(self.alpha)}


@dataclass(frozen=True, eq=False)
class SpatialModel(_Model):
    """Voters and candidates in ``R^d``; evaluations are ``link(distance)``.

    ``candidates`` is an ``m x d`` array, or the string ``"random"`` together
    with ``m`` to draw them from ``candidate_distribution`` (default: the
    voter distribution) once per profile.
    """

    d: int
    voters: object
    candidates: object
    link: object
    K: int | None = None
    m_random: int | None = None
    candidate_distribution: object = None
    kind = "spatial"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ModelError(f"d must be a positive integer, got {self.d!r}", "d")
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ModelError(f"K must be a positive integer or null, got {self.K!r}", "K")
        if getattr(self.voters, "d", self.d) != self.d:
            raise DimensionMismatch("voter distribution dimension differs from d", "voters")
        if isinstance(self.candidates, str):
            if self.candidates != "random":
                raise ModelError("candidates must be a list of points or \"random\"", "candidates")
            if not self.m_random or self.m_random < 1:
                raise ModelError("random candidates need m >= 1", "m")
        else:
            pos = np.atleast_2d(np.asarray(self.candidates, dtype=float))
            if pos.ndim != 2 or pos.shape[1] != self.d:
                raise DimensionMismatch(f"candidate positions must be m x {self.d}", "candidates")
            if not np.all(np.isfinite(pos)):
                raise ModelError("candidate positions must be finite", "candidates")
            pos.setflags(write=False)
            object.__setattr__(self, "candidates", pos)
        cdist = self.candidate_distribution
        if cdist is not None and getattr(cdist, "d", self.d) != self.d:
            raise DimensionMismatch("candidate distribution dimension differs from d", "candidate_distribution")

    @property
    def m(self):
        return self.m_random if isinstance(self.candidates, str) else self.candidates.shape[0]

    @property
    def scale(self):
        return Scale.discrete(self.K) if self.K else Scale.continuous()

    def candidate_positions(self, source: RandomSource) -> np.ndarray:
        if not isinstance(self.candidates, str):
            return np.array(self.candidates)
        dist = self.candidate_distribution or self.voters
        return dist.sample(source.child(_CANDIDATE_STREAM), self.m)

    def evaluate(self, voter_pos, cand_pos):
        diff = voter_pos[:, None, :] - cand_pos[None, :, :]
        e = self.link(np.sqrt(np.einsum("vck,vck->vc", diff, diff)))
        e = np.clip(e, 0.0, 1.0)
        if self.K:
            return discretize(e, self.K)
        return e

    def sample_rows(self, source, n):
        return self.evaluate(self.voters.sample(source, n), self.candidate_positions(source))

    def to_json(self):
        out = {"model": "spatial", "d": self.d, "voters": self.voters.to_json()}
        if isinstance(self.candidates, str):
            out["candidates"] = "random"
            out["m"] = self.m_random
        else:
            out["candidates"] = self.candidates.tolist()
        out["link"] = self.link.to_json()
        out["K"] = self.K
        if self.candidate_distribution is not None:
            out["candidate_distribution"] = self.candidate_distribution.to_json()
        return out


@dataclass(frozen=True, eq=False)
class SpatialPositions:
    voters: np.ndarray
    candidates: np.ndarray
    candidate_names: tuple


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


def _blocks(n):
    return [(b, s, min(s + BLOCK_SIZE, n)) for b, s in enumerate(range(0, n, BLOCK_SIZE))]


def _run_blocks(fn, n, threads):
    blocks = _blocks(n)
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    return np.concatenate(parts, axis=0)


def generate(model, n: int, source: RandomSource, names=None, threads: int = 1) -> Profile:
    """Draw ``n`` independent voters from ``model`` and return the profile."""
    if isinstance(model, SpatialModel):
        return spatial_generate(model, n, source, names=names, threads=threads)[0]
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")

    def block(spec):
        b, lo, hi = spec
        return model.sample_rows(source.child(b), hi - lo)

    values = _run_blocks(block, n, threads)
    return validate_profile(values, model.scale, names or default_names(model.m))


def spatial_generate(model: SpatialModel, n: int, source: RandomSource, names=None, threads: int = 1):
    """Generate a spatial profile; also return voter and candidate positions."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    cand = model.candidate_positions(source)

    def block(spec):
        b, lo, hi = spec
        return model.voters.sample(source.child(b), hi - lo)

    voters = _run_blocks(block, n, threads)
    names = tuple(names or default_names(cand.shape[0]))
    profile = validate_profile(model.evaluate(voters, cand), model.scale, names)
    return profile, SpatialPositions(voters, cand, names)


def positions_to_csv(pos: SpatialPositions) -> str:
    d = pos.voters.shape[1]
    lines = [",".join(["point", "kind", *(f"x_{k + 1}" for k in range(d))])]
    for v, row in enumerate(pos.voters.tolist()):
        lines.append(",".join([str(v + 1), "voter", *("%.17g" % x for x in row)]))
    for name, row in zip(pos.candidate_names, pos.candidates.tolist()):
        lines.append(",".join([name, "candidate", *("%.17g" % x for x in row)]))
    return "\n".join(lines) + "\n"


def write_positions_csv(pos: SpatialPositions, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(positions_to_csv(pos))


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def _list(obj, key, path):
    if key not in obj:
        raise ModelError("missing field", f"{path}.{key}")
    val = obj[key]
    if not isinstance(val, list) or not val:
        raise ModelError("expected a non-empty list", f"{path}.{key}")
    return val


def _marginals(obj, path):
    items = _list(obj, "marginals", path)
    return [marginal_from_json(x, f"{path}.marginals[{i}]") for i, x in enumerate(items)]


def _numbers(values, path):
    for i, x in enumerate(values):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ModelError(f"expected a number, got {x!r}", f"{path}[{i}]")
    return values


def model_from_json(obj: dict, path: str = "$"):
    """Decode a generator model; errors name the offending JSON path."""
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    kind = obj.get("model")
    try:
        if kind == "iid":
            if "marginal" not in obj:
                raise ModelError("missing field", f"{path}.marginal")
            if "m" not in obj:
                raise ModelError("missing field", f"{path}.m")
            return IIDModel(marginal_from_json(obj["marginal"], f"{path}.marginal"), obj["m"])
        if kind == "idd":
            return IDDModel(_marginals(obj, path))
        if kind == "copula":
            if "dependence" not in obj:
                raise ModelError("missing field", f"{path}.dependence")
            dep = dependence_from_json(obj["dependence"], f"{path}.dependence")
            return CopulaModel(dep, _marginals(obj, path))
        if kind == "multinomial":
            if "K" not in obj:
                raise ModelError("missing field", f"{path}.K")
            return MultinomialModel(obj["K"], _numbers(_list(obj, "p", path), f"{path}.p"))
        if kind == "dirichlet":
            return DirichletModel(_numbers(_list(obj, "alpha", path), f"{path}.alpha"))
        if kind == "spatial":
            d = obj.get("d")
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise ModelError(f"d must be a positive integer, got {d!r}", f"{path}.d")
            voters = voters_from_json(obj.get("voters"), d, f"{path}.voters")
            cdist = obj.get("candidate_distribution")
            cdist = voters_from_json(cdist, d, f"{path}.candidate_distribution") if cdist else None
            if "link" not in obj:
                raise ModelError("missing field", f"{path}.link")
            link = link_from_json(obj["link"], f"{path}.link")
            cands = obj.get("candidates", "random")
            return SpatialModel(d, voters, cands, link, obj.get("K"), obj.get("m"), cdist)
    except ModelError as exc:
        if exc.path and not exc.path.startswith("$"):
            raise ModelError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None
        raise
    except (DomainError, ValueError, TypeError) as exc:
        raise ModelError(str(exc), path) from None
    raise ModelError(f"unknown model {kind!r}", f"{path}.model")
