"""Dependence between candidates: Gaussian and checkerboard copulas."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Profile, RandomSource
from .errors import DomainError, ModelError, NotPositiveDefinite
from .special import norm_cdf

__all__ = [
    "CorrelationMatrix",
    "CheckerboardCopula",
    "DegenerateColumnWarning",
    "midranks",
    "pseudo_observations",
    "cholesky",
    "nearest_pd",
    "gaussian_copula_draw",
    "fit_checkerboard",
    "checkerboard_draw",
    "latent_from_spearman",
    "spearman_from_latent",
    "check_marginals",
    "dependence_from_json",
]


class DegenerateColumnWarning(UserWarning):
    """A constant column was rank-transformed; its pseudo-observations are all 1/2."""


class CorrelationMatrix:
    """Symmetric matrix with unit diagonal, positive (semi)definite.

    ``repair=True`` replaces an indefinite input by its nearest-PD
    approximation (see :func:`nearest_pd`) instead of raising.
    """

    def __init__(self, R, repair: bool = False):
        R = np.array(R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] == 0:
            raise ModelError("correlation matrix must be square and non-empty")
        if not np.all(np.isfinite(R)):
            raise ModelError("correlation matrix has non-finite entries")
        if np.max(np.abs(R - R.T)) > 1e-12:
            raise ModelError("correlation matrix is not symmetric")
        if np.max(np.abs(np.diag(R) - 1.0)) > 1e-12:
            raise ModelError("correlation matrix needs a unit diagonal")
        R = 0.5 * (R + R.T)
        np.fill_diagonal(R, 1.0)
        lam = float(np.linalg.eigvalsh(R)[0])
        if lam <= -1e-10:
            if not repair:
                raise NotPositiveDefinite(lam)
            R = nearest_pd(R)
        R.setflags(write=False)
        self.values = R

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __repr__(self):
        return f"CorrelationMatrix({self.values.tolist()})"

    def to_json(self) -> dict:
        return {"type": "gaussian_copula", "correlation": self.values.tolist()}


def nearest_pd(R, floor: float = 1e-8) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale back to a unit diagonal."""
    R = np.asarray(R, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (R + R.T))
    A = (vec * np.maximum(lam, floor)) @ vec.T
    s = 1.0 / np.sqrt(np.diag(A))
    A = A * s[:, None] * s[None, :]
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 1.0)
    return A


def cholesky(R, semidefinite: bool = False, repair: bool = False) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == R``.

    A pivot at or below 1e-12 raises :class:`NotPositiveDefinite`. With
    ``semidefinite=True`` pivots in ``(-1e-10, 1e-12]`` are treated as exact
    zeros (e.g. perfectly correlated candidates); ``repair=True`` first
    projects ``R`` with :func:`nearest_pd`.
    """
    A = np.array(R, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("cholesky needs a square matrix")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
        raise DomainError("cholesky needs a symmetric matrix")
    if repair:
        A = nearest_pd(A)
    m = A.shape[0]
    L = np.zeros_like(A)
    for j in range(m):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= 1e-12:
            if semidefinite and pivot > -1e-10:
                continue
            lam = float(np.linalg.eigvalsh(A)[0])
            raise NotPositiveDefinite(min(lam, pivot))
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, m):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def midranks(x) -> np.ndarray:
    """1-based ranks with ties replaced by the mean of their positions."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(n)
    boundaries = np.flatnonzero(np.diff(xs) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    avg = 0.5 * (starts + ends + 1)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def pseudo_observations(data) -> np.ndarray:
    """Column-wise mid-rank transform ``rank / (n + 1)`` into ``(0, 1)``.

    Constant columns are flagged with :class:`DegenerateColumnWarning`.
    """
    X = data.values if isinstance(data, Profile) else np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, m = X.shape
    if n < 2:
        raise DomainError("pseudo-observations need at least two voters")
    U = np.empty((n, m))
    for c in range(m):
        col = X[:, c]
        if np.all(col == col[0]):
            warnings.warn(f"column {c + 1} is constant", DegenerateColumnWarning, stacklevel=2)
        U[:, c] = midranks(col) / (n + 1)
    return U


def check_marginals(marginals) -> None:
    """All continuous, or all discrete on the same ``K``."""
    if not marginals:
        raise ModelError("at least one marginal is required")
    kinds = {(mg.discrete, getattr(mg, "K", None)) for mg in marginals}
    if len(kinds) != 1:
        raise ModelError("marginals must share one scale (all continuous or all discrete with equal K)")


def _apply_marginals(U, marginals):
    out = np.empty(U.shape, dtype=np.int64 if marginals[0].discrete else float)
    for c, mg in enumerate(marginals):
        out[:, c] = mg.ppf(U[:, c])
    return out


def gaussian_copula_draw(R, marginals, source: RandomSource, size: int | None = None):
    """Rows from the Gaussian copula with correlation ``R`` and the given marginals.

    ``z = L g`` with ``g`` standard normal and ``L`` the Cholesky factor of
    ``R``; each ``Phi(z_c)`` is pushed through the quantile of marginal ``c``.
    """
    R = R.values if isinstance(R, CorrelationMatrix) else np.asarray(R, dtype=float)
    marginals = list(marginals)
    check_marginals(marginals)
    m = len(marginals)
    if R.shape != (m, m):
        raise ModelError(f"correlation is {R.shape[0]}x{R.shape[1]} but there are {m} marginals")
    L = cholesky(R, semidefinite=True)
    n = 1 if size is None else size
    g = source.normal((n, m))
    U = norm_cdf(g @ L.T)
    rows = _apply_marginals(np.asarray(U).reshape(n, m), marginals)
    return rows[0] if size is None else rows


@dataclass(frozen=True, eq=False)
class CheckerboardCopula:
    """Piecewise-constant copula: probability ``mass`` per occupied cell of a
    ``B``-per-axis grid on ``[0, 1]^m``. Cell keys are tuples of bin indices."""

    m: int
    B: int
    mass: dict

    def __post_init__(self):
        if self.B < 1 or self.m < 1:
            raise ModelError("checkerboard needs B >= 1 and m >= 1")
        total = 0.0
        for key, w in self.mass.items():
            if len(key) != self.m or any(not 0 <= b < self.B for b in key):
                raise ModelError(f"cell index {key} outside the {self.B}^{self.m} grid")
            if not w > 0:
                raise ModelError(f"cell {key} has non-positive mass {w}")
            total += w
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"checkerboard masses sum to {total!r}, not 1")

    def cells(self):
        """Occupied cells in lexicographic order with their masses."""
        keys = sorted(self.mass)
        return np.array(keys, dtype=np.int64).reshape(len(keys), self.m), np.array([self.mass[k] for k in keys])

    def to_json(self) -> dict:
        keys, w = self.cells()
        return {
            "type": "checkerboard",
            "B": self.B,
            "cells": [{"index": list(map(int, k)), "mass": float(x)} for k, x in zip(keys, w)],
        }


def fit_checkerboard(pseudo_obs, B: int) -> CheckerboardCopula:
    """Cell frequencies of the pseudo-observations on a ``B``-per-axis grid.

    Cells are ``[b/B, (b+1)/B)`` per axis, the last one closed at 1.
    """
    U = np.asarray(pseudo_obs, dtype=float)
    if U.ndim != 2 or U.shape[0] < 1:
        raise DomainError("pseudo-observations must be an n x m matrix with n >= 1")
    if B < 1:
        raise DomainError("B must be >= 1")
    if np.any((U < 0) | (U > 1)):
        raise DomainError("pseudo-observations outside [0, 1]")
    n, m = U.shape
    bins = np.minimum(np.floor(U * B), B - 1).astype(np.int64)
    keys, counts = np.unique(bins, axis=0, return_counts=True)
    mass = {tuple(int(b) for b in k): c / n for k, c in zip(keys, counts)}
    # Re-normalize so the stored masses sum to 1 to the last ulp.
    total = math.fsum(mass.values())
    if total != 1.0:
        mass = {k: v / total for k, v in mass.items()}
    return CheckerboardCopula(m, B, mass)


def checkerboard_draw(copula: CheckerboardCopula, marginals, source: RandomSource,
                      size: int | None = None, return_levels: bool = False):
    """Rows from a checkerboard copula composed with the given marginals.

    A cell is picked with probability equal to its mass, then a uniform point
    inside it gives the pseudo-levels fed to the marginal quantiles.
    """
    marginals = list(marginals)
    check_marginals(marginals)
    if len(marginals) != copula.m:
        raise ModelError(f"checkerboard has dimension {copula.m} but there are {len(marginals)} marginals")
    n = 1 if size is None else size
    keys, w = copula.cells()
    cum = np.cumsum(w)
    cum[-1] = 1.0
    pick = np.minimum(np.searchsorted(cum, source.random(n), side="right"), len(w) - 1)
    U = (keys[pick] + source.random((n, copula.m))) / copula.B
    U = np.minimum(U, np.nextafter(1.0, 0.0))
    rows = _apply_marginals(U, marginals)
    if return_levels:
        return (rows[0], U[0]) if size is None else (rows, U)
    return rows[0] if size is None else rows


def spearman_from_latent(rho):
    """Spearman correlation implied by a Gaussian copula with correlation ``rho``."""
    return 6.0 / np.pi * np.arcsin(np.asarray(rho) / 2.0)


def latent_from_spearman(rho_s):
    """Gaussian-copula correlation matching a Spearman correlation ``rho_s``."""
    return 2.0 * np.sin(np.pi * np.asarray(rho_s) / 6.0)


def dependence_from_json(obj: dict, path: str = "$"):
    """Decode ``{"type": "gaussian_copula", ...}`` or ``{"type": "checkerboard", ...}``."""
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    kind = obj.get("type")
    if kind == "gaussian_copula":
        if "correlation" not in obj:
            raise ModelError("missing field", f"{path}.correlation")
        try:
            return CorrelationMatrix(obj["correlation"], repair=bool(obj.get("repair", False)))
        except (ModelError, NotPositiveDefinite, ValueError) as exc:
            raise ModelError(str(exc), f"{path}.correlation") from None
    if kind == "checkerboard":
        try:
            B = int(obj["B"])
            cells = obj["cells"]
            m = len(cells[0]["index"]) if cells else 0
            mass = {tuple(int(b) for b in cell["index"]): float(cell["mass"]) for cell in cells}
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ModelError(f"malformed checkerboard ({exc})", path) from None
        return CheckerboardCopula(m, B, mass)
    raise ModelError(f"unknown dependence type {kind!r}", f"{path}.type")

