"""Profiles, evaluation scales, random streams and the profile CSV format.

A profile is an ``n x m`` matrix: one row per voter, one column per
candidate. Grades live either on the closed unit interval or on the
integer scale ``{0, ..., K}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EvalsimError, ProfileValidationError

__all__ = [
    "Scale",
    "Profile",
    "RandomSource",
    "OutOfRange",
    "NonInteger",
    "DuplicateName",
    "EmptyProfile",
    "NonFinite",
    "ProfileFormatError",
    "validate_profile",
    "discretize",
    "derive_stream",
    "splitmix64",
    "default_names",
    "write_profile_csv",
    "read_profile_csv",
    "profile_to_csv",
]


# --------------------------------------------------------------------------
# Scales and profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scale:
    """Evaluation scale: continuous ``[0, 1]`` or discrete ``{0, ..., K}``."""

    kind: str = "continuous"
    K: int | None = None

    def __post_init__(self):
        if self.kind == "continuous":
            if self.K is not None:
                raise DomainError("a continuous scale has no K")
        elif self.kind == "discrete":
            if self.K is None or int(self.K) != self.K or self.K < 1:
                raise DomainError(f"discrete scale needs an integer K >= 1, got {self.K!r}")
            object.__setattr__(self, "K", int(self.K))
        else:
            raise DomainError(f"unknown scale kind {self.kind!r}")

    @classmethod
    def continuous(cls) -> "Scale":
        return cls("continuous")

    @classmethod
    def discrete(cls, K: int) -> "Scale":
        return cls("discrete", K)

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def upper(self) -> float:
        return float(self.K) if self.is_discrete else 1.0

    def to_json(self) -> dict:
        if self.is_discrete:
            return {"kind": "discrete", "K": self.K}
        return {"kind": "continuous"}

    def __str__(self):
        return f"{{0..{self.K}}}" if self.is_discrete else "[0,1]"


@dataclass(frozen=True)
class OutOfRange:
    voter: int
    candidate: int
    value: float

    def __str__(self):
        return f"OutOfRange({self.voter},{self.candidate},{self.value!r})"


@dataclass(frozen=True)
class NonInteger:
    voter: int
    candidate: int

    def __str__(self):
        return f"NonInteger({self.voter},{self.candidate})"


@dataclass(frozen=True)
class NonFinite:
    voter: int
    candidate: int

    def __str__(self):
        return f"NonFinite({self.voter},{self.candidate})"


@dataclass(frozen=True)
class DuplicateName:
    name: str

    def __str__(self):
        return f"DuplicateName({self.name!r})"


@dataclass(frozen=True)
class BadName:
    reason: str

    def __str__(self):
        return f"BadName({self.reason})"


@dataclass(frozen=True)
class EmptyProfile:
    def __str__(self):
        return "EmptyProfile"


def default_names(m: int) -> list[str]:
    return [f"cand_{c + 1}" for c in range(m)]


@dataclass(frozen=True, eq=False)
class Profile:
    """Validated, immutable evaluation profile.

    Build instances with :func:`validate_profile`; the constructor trusts
    its arguments.
    """

    scale: Scale
    candidate_names: tuple
    values: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column(self, c: int) -> np.ndarray:
        return self.values[:, c]

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.candidate_names == other.candidate_names
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )

    def __repr__(self):
        return f"Profile(n={self.n}, m={self.m}, scale={self.scale})"


def validate_profile(values, scale: Scale | None = None, names: Sequence[str] | None = None) -> Profile:
    """Check a raw matrix against a scale and wrap it into a :class:`Profile`.

    Raises :class:`ProfileValidationError` listing every violation. Voter and
    candidate coordinates in violations are 1-based.
    """
    scale = scale or Scale.continuous()
    try:
        arr = np.array(values, dtype=float)
    except ValueError as exc:
        raise ProfileValidationError([BadName(f"matrix is not rectangular: {exc}")]) from None
    if arr.ndim == 1 and arr.size:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ProfileValidationError([EmptyProfile()])
    n, m = arr.shape

    violations: list = []
    if names is None:
        names = default_names(m)
    names = tuple(str(s) for s in names)
    if len(names) != m:
        violations.append(BadName(f"{len(names)} names for {m} candidates"))
    seen = set()
    for s in names:
        if not s:
            violations.append(BadName("empty candidate name"))
        elif s in seen:
            violations.append(DuplicateName(s))
        seen.add(s)

    finite = np.isfinite(arr)
    for v, c in zip(*np.nonzero(~finite)):
        violations.append(NonFinite(int(v) + 1, int(c) + 1))
    bad = finite & ((arr < 0) | (arr > scale.upper))
    for v, c in zip(*np.nonzero(bad)):
        violations.append(OutOfRange(int(v) + 1, int(c) + 1, float(arr[v, c])))
    if scale.is_discrete:
        frac = finite & ~bad & (arr != np.round(arr))
        for v, c in zip(*np.nonzero(frac)):
            violations.append(NonInteger(int(v) + 1, int(c) + 1))

    if violations:
        raise ProfileValidationError(violations)
    if scale.is_discrete:
        arr = arr.astype(np.int64)
    arr.setflags(write=False)
    return Profile(scale, names, arr)


def discretize(e, K: int):
    """Map continuous grades to ``{0..K}`` via ``min(floor((K+1) e), K)``.

    Accepts a scalar or an array; the upper end ``e = 1`` is clamped to ``K``.
    """
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    arr = np.asarray(e, dtype=float)
    if np.any(~(arr >= 0.0) | ~(arr <= 1.0)):
        raise DomainError("evaluation outside [0, 1]")
    out = np.minimum(np.floor((K + 1) * arr), K).astype(np.int64)
    if out.ndim == 0:
        return int(out)
    return out


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 output function (Steele, Lea, Flood)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RandomSource:
    """Deterministic random stream identified by ``(master_seed, stream_index)``.

    The underlying bit generator is Philox4x64-10 (counter-based, Random123)
    keyed with ``(k0, k1)`` where ``k0 = splitmix64(master_seed)`` and
    ``k1 = splitmix64(k0 ^ stream_index)``, counter starting at zero. The
    raw 64-bit output is therefore reproducible by any implementation of
    Philox4x64-10.

    A source is single-owner: derive children with :meth:`child` for
    parallel work instead of sharing one stream between tasks.
    """

    __slots__ = ("master_seed", "stream_index", "_gen")

    def __init__(self, master_seed: int = 0, stream_index: int = 0):
        if not (0 <= master_seed <= _MASK64 and 0 <= stream_index <= _MASK64):
            raise DomainError("seed and stream index must be unsigned 64-bit integers")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        k0 = splitmix64(self.master_seed)
        k1 = splitmix64(k0 ^ self.stream_index)
        bitgen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
        self._gen = np.random.Generator(bitgen)

    def __repr__(self):
        return f"RandomSource(master_seed={self.master_seed}, stream_index={self.stream_index})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, index: int) -> "RandomSource":
        """Independent sub-stream; children of different parents never collide."""
        parent = splitmix64(self.master_seed ^ splitmix64(self.stream_index))
        return RandomSource(parent, index)

    def raw(self, size=None):
        """Raw 64-bit words from the bit generator."""
        return self._gen.bit_generator.random_raw(size)

    def random(self, size=None):
        """Uniform doubles on ``[0, 1)``."""
        return self._gen.random(size)

    def uniform_open(self, size=None):
        """Uniform doubles on the open interval ``(0, 1)``."""
        u = self._gen.random(size)
        return np.where(u == 0.0, 2.0**-54, u) if size is not None else (u or 2.0**-54)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)


def derive_stream(master_seed: int, index: int) -> RandomSource:
    return RandomSource(master_seed, index)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


class ProfileFormatError(EvalsimError, ValueError):
    """Malformed profile file; ``row`` and ``column`` are 1-based when known."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f"row {row}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


def _fmt(x, discrete: bool) -> str:
    if discrete:
        return str(int(x))
    return "%.17g" % x


def profile_to_csv(profile: Profile, transpose: bool = False) -> str:
    """Serialize a profile to the canonical CSV text (LF endings)."""
    disc = profile.scale.is_discrete
    lines = []
    if not transpose:
        lines.append(",".join(["voter", *profile.candidate_names]))
        for v, row in enumerate(profile.values.tolist()):
            lines.append(",".join([str(v + 1), *(_fmt(x, disc) for x in row)]))
    else:
        lines.append(",".join(["candidate", *(str(v + 1) for v in range(profile.n))]))
        for c, name in enumerate(profile.candidate_names):
            col = profile.values[:, c].tolist()
            lines.append(",".join([name, *(_fmt(x, disc) for x in col)]))
    return "\n".join(lines) + "\n"


def write_profile_csv(profile: Profile, path, transpose: bool = False) -> None:
    text = profile_to_csv(profile, transpose=transpose)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_rows(rows: Iterable[list]):
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ProfileFormatError("empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise ProfileFormatError("header needs an identifier column and at least one data column", row=1)
    body = rows[1:]
    if not body:
        raise ProfileFormatError("no data rows", row=2)
    values = []
    integral = True
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ProfileFormatError(f"expected {len(header)} fields, found {len(r)}", row=i)
        out = []
        for j, cell in enumerate(r[1:], start=2):
            tok = cell.strip()
            try:
                x = float(tok)
            except ValueError:
                raise ProfileFormatError(f"not a number: {tok!r}", row=i, column=j) from None
            if any(ch in tok for ch in ".eEnN"):
                integral = False
            out.append(x)
        values.append(out)
    return header, values, integral


def read_profile_csv(source, K: int | None = None, continuous: bool | None = None,
                     transpose: bool = False) -> Profile:
    """Read a profile CSV written by :func:`write_profile_csv`.

    The scale is inferred unless given: a file with only bare integers is
    read as discrete with ``K`` equal to the largest grade (pass ``K`` to
    override), anything else as continuous.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(io.StringIO(source.read())))
    header, values, integral = _parse_rows(rows)
    arr = np.array(values, dtype=float)
    if transpose:
        names = [r[0].strip() for r in rows[1:] if r and any(x.strip() for x in r)]
        arr = arr.T
    else:
        names = header[1:]

    if continuous is None:
        continuous = K is None and not integral
    if continuous:
        scale = Scale.continuous()
    else:
        if K is None:
            top = float(np.max(arr)) if arr.size else 0.0
            K = max(1, int(math.ceil(top)))
        scale = Scale.discrete(K)
    return validate_profile(arr, scale, names)
