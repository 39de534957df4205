"""Latent-space representation of an observed profile.

Only voter-to-candidate dissimilarities are known, so the embedding is a
multidimensional unfolding: SMACOF with zero weight on every voter-voter
and candidate-candidate pair. The Guttman transform needs the
Moore-Penrose inverse of the ``(n + m) x (n + m)`` weight Laplacian ``V``;
with the bipartite pattern it reduces to an ``m x m`` Schur complement,
so an iteration costs ``O(n m d)`` and memory stays linear in ``n``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Profile, RandomSource
from .errors import DegenerateInit, DomainError, SingularCovariance
from .generators import GaussianMixture, LinearTruncated, Sigmoid, SpatialModel, spatial_generate

__all__ = [
    "EmbeddingProblem",
    "EmbeddingSolution",
    "RegularizedCovarianceWarning",
    "evals_to_dissimilarities",
    "stress",
    "normalized_stress",
    "smacof",
    "refit_voter_distribution",
    "generate_from_embedding",
]

_E_CLAMP = 1e-6


class RegularizedCovarianceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingProblem:
    delta: np.ndarray
    weights: np.ndarray
    d: int

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        w = np.ones_like(delta) if self.weights is None else np.asarray(self.weights, dtype=float)
        if delta.ndim != 2 or w.shape != delta.shape:
            raise DomainError("delta and weights must be n x m matrices of equal shape")
        if not np.all(np.isfinite(delta)) or np.any(delta < 0):
            raise DomainError("dissimilarities must be finite and non-negative")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and non-negative")
        if np.any(w.sum(axis=1) <= 0) or np.any(w.sum(axis=0) <= 0):
            raise DomainError("every voter and every candidate needs a positive weight")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.delta.shape[0]

    @property
    def m(self):
        return self.delta.shape[1]


@dataclass
class EmbeddingSolution:
    voter_positions: np.ndarray
    candidate_positions: np.ndarray
    stress: float
    normalized_stress: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    restarts: int = 0

    def to_json(self) -> dict:
        return {
            "d": int(self.voter_positions.shape[1]),
            "stress": self.stress,
            "normalized_stress": self.normalized_stress,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts": self.restarts,
            "stress_trace": list(self.trace),
        }


def evals_to_dissimilarities(profile: Profile, inverse_link=None):
    """Turn evaluations into voter-candidate dissimilarities and weights.

    Without a link, ``delta = 1 - e``. A :class:`LinearTruncated` link gives
    ``(1 - e) / ell`` (a zero grade only says "at least 1 / ell" away and is
    placed there); a :class:`Sigmoid` link is inverted exactly after clamping
    ``e`` into ``[1e-6, 1 - 1e-6]``. Discrete grades are first mapped to
    interval midpoints ``(g + 0.5) / (K + 1)``.
    """
    e = profile.values.astype(float)
    if profile.scale.is_discrete:
        e = (e + 0.5) / (profile.scale.K + 1)
    w = np.ones_like(e)
    if inverse_link is None:
        delta = 1.0 - e
    elif isinstance(inverse_link, LinearTruncated):
        delta = (1.0 - e) / inverse_link.ell
    elif isinstance(inverse_link, Sigmoid):
        ec = np.clip(e, _E_CLAMP, 1.0 - _E_CLAMP)
        delta = (1.0 + np.log((1.0 - ec) / ec) / inverse_link.lam) / inverse_link.beta
        delta = np.maximum(delta, 0.0)
        delta[e >= 1.0] = 0.0
    else:
        raise DomainError(f"unsupported inverse link {inverse_link!r}")
    return delta, w


def stress(voter_positions, candidate_positions, problem: EmbeddingProblem) -> float:
    """Raw stress ``sum w (d(X) - delta)^2`` over voter-candidate pairs."""
    Xv = np.asarray(voter_positions, dtype=float)
    Xc = np.asarray(candidate_positions, dtype=float)
    if Xv.shape != (problem.n, problem.d) or Xc.shape != (problem.m, problem.d):
        raise DomainError("position arrays do not match the problem dimensions")
    diff = Xv[:, None, :] - Xc[None, :, :]
    dist = np.sqrt(np.einsum("vck,vck->vc", diff, diff))
    return float(np.sum(problem.weights * (dist - problem.delta) ** 2))


def normalized_stress(raw: float, problem: EmbeddingProblem) -> float:
    denom = float(np.sum(problem.weights * problem.delta**2))
    return raw / denom if denom > 0 else 0.0


class _BipartiteSolver:
    """Applies ``V^+`` to a right-hand side with zero column sums."""

    def __init__(self, w):
        self.w = w
        self.inv_rv = 1.0 / w.sum(axis=1)
        S = np.diag(w.sum(axis=0)) - w.T @ (w * self.inv_rv[:, None])
        self.S_pinv = np.linalg.pinv(0.5 * (S + S.T))

    def solve(self, Yv, Yc):
        Xc = self.S_pinv @ (Yc + self.w.T @ (Yv * self.inv_rv[:, None]))
        Xv = (Yv + self.w @ Xc) * self.inv_rv[:, None]
        center = (Xv.sum(axis=0) + Xc.sum(axis=0)) / (Xv.shape[0] + Xc.shape[0])
        return Xv - center, Xc - center


def _random_init(problem, source):
    return source.random((problem.n, problem.d)), source.random((problem.m, problem.d))


def _classical_init(problem):
    """Candidates by classical scaling, then voters by trilateration.

    Candidate-candidate distances are estimated by the triangle-inequality
    lower bound ``max_v |delta_vc - delta_vc'|``. Each voter then solves the
    linearized system ``2 (y_c - y_0) . x = |y_c|^2 - |y_0|^2 - delta_c^2 +
    delta_0^2`` in the least-squares sense.
    """
    delta, d = problem.delta, problem.d
    m = problem.m
    D = np.zeros((m, m))
    for c in range(m):
        D[c] = np.max(np.abs(delta[:, [c]] - delta), axis=0)
    J = np.eye(m) - 1.0 / m
    Bm = -0.5 * J @ (D**2) @ J
    lam, vec = np.linalg.eigh(0.5 * (Bm + Bm.T))
    order = np.argsort(lam)[::-1][:d]
    Xc = vec[:, order] * np.sqrt(np.maximum(lam[order], 0.0))
    if Xc.shape[1] < d:
        Xc = np.hstack([Xc, np.zeros((m, d - Xc.shape[1]))])
    if m < 2:
        return np.zeros((problem.n, d)) + delta / np.sqrt(d), Xc
    A = 2.0 * (Xc[1:] - Xc[0])
    sq = np.sum(Xc**2, axis=1)
    rhs = (sq[1:] - sq[0])[None, :] - delta[:, 1:] ** 2 + delta[:, [0]] ** 2
    Xv = np.linalg.lstsq(A, rhs.T, rcond=None)[0].T
    return Xv, Xc


def smacof(problem: EmbeddingProblem, init="random", max_iter: int = 500, eps: float = 1e-6,
           source: RandomSource | None = None, max_restarts: int = 5, n_init: int = 1,
           nested: bool = False) -> EmbeddingSolution:
    """Stress majorization for the voter-candidate unfolding problem.

    ``init`` is ``"random"`` (uniform on ``[0, 1]^d`` from ``source``),
    ``"classical"`` (see :func:`_classical_init`) or a
    ``(voter_positions, candidate_positions)`` pair. Stops when the relative
    stress decrease falls to ``eps`` or after ``max_iter`` iterations. If the
    starting points all coincide the start is jittered, at most
    ``max_restarts`` times.

    Unfolding has local minima; ``n_init > 1`` runs that many random starts
    (after the requested one) and keeps the lowest final stress.

    With ``nested=True`` and ``d > 1`` the ``d - 1`` solution, padded with a
    zero coordinate, is one more start. The padded coordinate stays zero under
    the transform, so the result never has more stress than the lower
    dimension; from generic starts the spare direction converges very slowly.
    """
    if max_iter < 1 or not eps > 0:
        raise DomainError("max_iter must be >= 1 and eps > 0")
    source = source or RandomSource(0)
    best = _smacof_once(problem, init, max_iter, eps, source, max_restarts)
    for _ in range(n_init - 1):
        if best.normalized_stress <= 1e-15:
            break
        cand = _smacof_once(problem, "random", max_iter, eps, source, max_restarts)
        if cand.stress < best.stress:
            best = cand
    if nested and problem.d > 1 and best.normalized_stress > 1e-15:
        lower = smacof(EmbeddingProblem(problem.delta, problem.weights, problem.d - 1), init,
                       max_iter, eps, source.child(problem.d), max_restarts, n_init, nested=True)
        pad = lambda X: np.hstack([X, np.zeros((X.shape[0], 1))])
        start = (pad(lower.voter_positions), pad(lower.candidate_positions))
        cand = _smacof_once(problem, start, max_iter, eps, source, max_restarts)
        cand.restarts += best.restarts
        if cand.stress < best.stress:
            best = cand
    return best


def _smacof_once(problem, init, max_iter, eps, source, max_restarts):
    if isinstance(init, str):
        if init == "random":
            Xv, Xc = _random_init(problem, source)
        elif init == "classical":
            Xv, Xc = _classical_init(problem)
        else:
            raise DomainError(f"unknown init {init!r}")
    else:
        Xv = np.array(init[0], dtype=float)
        Xc = np.array(init[1], dtype=float)
        if Xv.shape != (problem.n, problem.d) or Xc.shape != (problem.m, problem.d):
            raise DomainError("initial positions do not match the problem dimensions")

    solver = _BipartiteSolver(problem.weights)
    delta, w = problem.delta, problem.weights
    restarts = 0
    while True:
        Yv, Yc, current = _kernels.guttman_terms(Xv, Xc, delta, w)
        if np.any(Yv) or np.any(Yc) or current == 0.0:
            break
        # All pairs at distance zero: the transform has nothing to push on.
        if restarts >= max_restarts:
            raise DegenerateInit(f"coincident starting points after {restarts} jittered restarts")
        restarts += 1
        Xv = Xv + 1e-3 * source.normal(Xv.shape)
        Xc = Xc + 1e-3 * source.normal(Xc.shape)

    trace = [current]
    converged = False
    it = 0
    while it < max_iter:
        if current == 0.0:
            converged = True
            break
        it += 1
        new_v, new_c = solver.solve(Yv, Yc)
        Yv_new, Yc_new, new = _kernels.guttman_terms(new_v, new_c, delta, w)
        if new > current:
            # Rounding floor: majorization cannot raise stress, so keep the last iterate.
            converged = True
            break
        Yv, Yc = Yv_new, Yc_new
        trace.append(new)
        Xv, Xc = new_v, new_c
        if current - new <= eps * current:
            current = new
            converged = True
            break
        current = new

    return EmbeddingSolution(
        voter_positions=Xv,
        candidate_positions=Xc,
        stress=current,
        normalized_stress=normalized_stress(current, problem),
        iterations=it,
        converged=converged,
        trace=trace,
        restarts=restarts,
    )


def refit_voter_distribution(voter_positions, family: str = "gaussian", k: int = 2,
                             source: RandomSource | None = None) -> GaussianMixture:
    """Fit a latent voter distribution to embedded voter positions.

    ``family="gaussian"`` uses the sample mean and covariance;
    ``family="mixture"`` fits ``k`` components by EM (100 iterations,
    k-means initialisation) seeded from ``source``. A singular covariance is
    regularized by ``1e-8 I`` and reported with
    :class:`RegularizedCovarianceWarning`.
    """
    X = np.asarray(voter_positions, dtype=float)
    if X.ndim != 2:
        raise DomainError("voter positions must be an n x d matrix")
    n, d = X.shape
    if n < d + 2:
        raise DomainError(f"need at least d + 2 = {d + 2} voters, got {n}")
    if family == "gaussian":
        mean = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X, rowvar=False))
        if np.linalg.eigvalsh(cov)[0] <= 1e-12:
            warnings.warn(str(SingularCovariance("voter covariance is singular; added 1e-8 I")),
                          RegularizedCovarianceWarning, stacklevel=2)
            cov = cov + 1e-8 * np.eye(d)
        return GaussianMixture(mean[None, :], cov[None, :, :], np.ones(1))
    if family == "mixture":
        from sklearn.mixture import GaussianMixture as _SkGMM

        if k < 1 or k > n:
            raise DomainError(f"mixture needs 1 <= k <= n, got k={k}")
        source = source or RandomSource(0)
        seed = int(source.integers(0, 2**31 - 1))
        gm = _SkGMM(n_components=k, covariance_type="full", max_iter=100, init_params="kmeans",
                    reg_covar=1e-8, random_state=seed)
        gm.fit(X)
        weights = gm.weights_ / gm.weights_.sum()
        return GaussianMixture(gm.means_, gm.covariances_, weights)
    raise DomainError(f"unknown voter distribution family {family!r}")


def generate_from_embedding(candidate_positions, voter_dist, link, n: int, source: RandomSource,
                            K: int | None = None, names=None) -> Profile:
    """New profile from fixed candidate positions and a latent voter distribution."""
    cand = np.atleast_2d(np.asarray(candidate_positions, dtype=float))
    model = SpatialModel(cand.shape[1], voter_dist, cand, link, K)
    return spatial_generate(model, n, source, names=names)[0]
