"""Evaluation-based voting rules and ranking extraction.

Ties are always broken deterministically (lowest candidate index last) and
every tie-break is recorded in the result's ``tie_trace``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import Profile
from .errors import DomainError, TiesPresent, TooManyCandidates

__all__ = [
    "ElectionResult",
    "range_winner",
    "majority_judgment_winner",
    "approval_winner",
    "rankings",
    "ranking_distribution",
    "impartial_culture_chi2",
    "run_rule",
]


@dataclass
class ElectionResult:
    rule: str
    scores: list
    winner: int
    candidate_names: tuple
    tie_trace: list = field(default_factory=list)

    @property
    def winner_name(self) -> str:
        return self.candidate_names[self.winner]

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "scores": [float(s) if isinstance(s, (float, np.floating)) else s for s in self.scores],
            "winner": self.winner_name,
            "tie_trace": self.tie_trace,
        }


def _index_break(scores, names, trace):
    scores = np.asarray(scores)
    best = scores.max()
    tied = np.flatnonzero(scores == best)
    if tied.size > 1:
        trace.append({"step": "index_break", "tied": [names[i] for i in tied], "chosen": names[tied[0]]})
    return int(tied[0])


def range_winner(profile: Profile) -> ElectionResult:
    """Highest mean evaluation wins."""
    scores = profile.values.astype(float).mean(axis=0)
    trace = []
    w = _index_break(scores, profile.candidate_names, trace)
    return ElectionResult("range", scores.tolist(), w, profile.candidate_names, trace)


def _lower_median(sorted_vals):
    return sorted_vals[(len(sorted_vals) - 1) // 2]


def majority_judgment_winner(profile: Profile) -> ElectionResult:
    """Best lower-median grade wins.

    Tied leaders repeatedly drop one copy of their median grade and are
    compared again; if the grades run out the lowest index wins.
    """
    names = profile.candidate_names
    cols = [np.sort(profile.values[:, c]).tolist() for c in range(profile.m)]
    scores = [_lower_median(c) for c in cols]
    best = max(scores)
    tied = [c for c in range(profile.m) if scores[c] == best]
    trace = []
    rnd = 0
    while len(tied) > 1 and cols[tied[0]]:
        rnd += 1
        removed = {}
        for c in tied:
            g = cols[c].pop((len(cols[c]) - 1) // 2)
            removed[names[c]] = _num(g)
        step = {"step": "median_removal", "round": rnd, "removed": removed}
        if not cols[tied[0]]:
            trace.append(step)
            break
        medians = {c: _lower_median(cols[c]) for c in tied}
        top = max(medians.values())
        step["medians"] = {names[c]: _num(v) for c, v in medians.items()}
        trace.append(step)
        tied = [c for c in tied if medians[c] == top]
    if len(tied) > 1:
        trace.append({"step": "index_break", "tied": [names[c] for c in tied], "chosen": names[tied[0]]})
    return ElectionResult("mj", [_num(s) for s in scores], tied[0], names, trace)


def _num(x):
    x = x.item() if hasattr(x, "item") else x
    return int(x) if float(x).is_integer() and not isinstance(x, float) else x


def approval_winner(profile: Profile, threshold: float) -> ElectionResult:
    """Candidates graded at or above ``threshold`` are approved; most approvals wins."""
    if not 0.0 <= threshold <= profile.scale.upper:
        raise DomainError(f"threshold {threshold} outside the scale {profile.scale}")
    approvals = (profile.values >= threshold).sum(axis=0)
    trace = []
    w = _index_break(approvals, profile.candidate_names, trace)
    return ElectionResult(f"approval:{threshold:g}", [int(a) for a in approvals], w,
                          profile.candidate_names, trace)


def rankings(profile: Profile, tie_policy: str = "index_break") -> np.ndarray:
    """Per-voter orderings: row ``v`` lists candidate indices best first.

    ``strict_or_fail`` raises :class:`TiesPresent` naming every voter with
    tied evaluations; ``index_break`` orders tied candidates by index.
    """
    if tie_policy not in ("strict_or_fail", "index_break"):
        raise DomainError(f"unknown tie policy {tie_policy!r}")
    vals = profile.values
    order = np.argsort(-vals, axis=1, kind="stable")
    if tie_policy == "strict_or_fail":
        sorted_vals = np.take_along_axis(vals, order, axis=1)
        tied = np.flatnonzero(np.any(sorted_vals[:, 1:] == sorted_vals[:, :-1], axis=1))
        if tied.size:
            raise TiesPresent(tied.tolist())
    return order


def ranking_distribution(profile: Profile, tie_policy: str = "index_break"):
    """Counts of each strict order, in lexicographic order of the permutations.

    Returns ``(orders, counts)`` where ``orders[i]`` is a tuple of candidate
    indices (best first).
    """
    m = profile.m
    if m > 7:
        raise TooManyCandidates(f"{m}! orders is too many to tabulate (m <= 7)")
    order = rankings(profile, tie_policy)
    perms = list(itertools.permutations(range(m)))
    weights = m ** np.arange(m - 1, -1, -1)
    perm_keys = np.array(perms, dtype=np.int64).reshape(len(perms), m) @ weights
    keys = order.astype(np.int64) @ weights
    idx = np.searchsorted(perm_keys, keys)
    counts = np.bincount(idx, minlength=len(perms))
    return perms, counts


def impartial_culture_chi2(profile: Profile) -> float:
    """Chi-square distance of the ranking distribution from the uniform one."""
    _, counts = ranking_distribution(profile)
    expected = counts.sum() / counts.size
    return float(np.sum((counts - expected) ** 2) / expected)


def run_rule(profile: Profile, rule: str) -> ElectionResult:
    """Dispatch ``range``, ``mj`` or ``approval:<t>``."""
    if rule == "range":
        return range_winner(profile)
    if rule == "mj":
        return majority_judgment_winner(profile)
    if rule.startswith("approval:"):
        try:
            t = float(rule.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"bad approval threshold in {rule!r}") from None
        return approval_winner(profile, t)
    raise DomainError(f"unknown rule {rule!r}")
