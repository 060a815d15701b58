"""Finite alphabets, channels, and exact distributions over sequence spaces.

Sequences of blocklength n over an alphabet of size b are packed big-endian
into integers in [0, b^n).  Everything is immutable and every operation is a
pure function; reductions go through numpy's pairwise summation so results do
not depend on thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import (CapacityError, ConditioningError, DimensionMismatchError,
                     DomainError, ValidationError)

#: Largest sequence space that may be densely enumerated.
DENSE_CAP = 1 << 26

#: Comparison grid for threshold tests (>= eta, bin edges).
GRID = 1e-12

#: Products with at least this many factors are evaluated in log space.
_LOG_PRODUCT_MIN = 8


def snap(x: float) -> float:
    """Round to the 1e-12 grid so threshold comparisons are deterministic."""
    return round(x / GRID) * GRID


def entropy_bits(probs) -> float:
    """Shannon entropy in bits of a probability vector (zeros skipped)."""
    p = np.asarray(probs, dtype=np.float64)
    p = p[p > 0.0]
    if p.size == 0:
        return 0.0
    return float(-np.sum(p * np.log2(p)))


def aexp(count: int, n: int) -> float:
    """Per-letter exponent of a set size: log2(count)/n."""
    if count <= 0:
        raise DomainError("aexp of an empty set is undefined")
    return math.log2(count) / n


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("alphabet size must be >= 1")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValidationError("label count must equal alphabet size")
            if len(set(self.labels)) != self.size:
                raise ValidationError("alphabet labels must be unique")


@dataclass(frozen=True, order=True)
class Sequence:
    """A blocklength-n word packed big-endian as an integer base `base`."""

    n: int
    base: int
    value: int

    def __post_init__(self):
        if not 0 <= self.value < self.base ** self.n:
            raise ValidationError("packed value out of range for base**n")

    def digits(self) -> tuple[int, ...]:
        out = []
        v = self.value
        for _ in range(self.n):
            out.append(v % self.base)
            v //= self.base
        return tuple(reversed(out))

    @classmethod
    def from_digits(cls, digits, base: int) -> "Sequence":
        value = 0
        for d in digits:
            if not 0 <= d < base:
                raise ValidationError("digit out of range")
            value = value * base + d
        return cls(n=len(digits), base=base, value=value)


def _digits_of(value: int, n: int, base: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        out.append(value % base)
        value //= base
    return tuple(reversed(out))


@dataclass(frozen=True)
class Channel:
    """A DMC given by a row-stochastic |X| x |Y| matrix."""

    input: Alphabet
    output: Alphabet
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        if m.shape != (self.input.size, self.output.size):
            raise ValidationError(
                f"matrix shape {m.shape} does not match alphabets "
                f"({self.input.size}, {self.output.size})")
        if np.any(m < -GRID) or np.any(m > 1.0 + GRID):
            raise ValidationError("channel entries must lie in [0, 1]")
        rows = m.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValidationError("every channel row must sum to 1 within 1e-12")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def key(self) -> bytes:
        return self.matrix.tobytes()

    def row(self, symbol: int) -> np.ndarray:
        return self.matrix[symbol]

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "input_size": self.input.size,
            "output_size": self.output.size,
            "rows": [[float(v) for v in row] for row in self.matrix],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Channel":
        try:
            return cls(input=Alphabet(int(obj["input_size"])),
                       output=Alphabet(int(obj["output_size"])),
                       matrix=np.asarray(obj["rows"], dtype=np.float64),
                       name=str(obj.get("name", "")))
        except KeyError as exc:
            raise ValidationError(f"channel file missing field {exc}") from exc


def identity_channel(size: int, name: str = "identity") -> Channel:
    return Channel(Alphabet(size), Alphabet(size), np.eye(size), name=name)


def bsc(p: float, name: str = "") -> Channel:
    if not 0.0 <= p <= 1.0:
        raise DomainError("crossover probability must be in [0, 1]")
    m = np.array([[1.0 - p, p], [p, 1.0 - p]])
    return Channel(Alphabet(2), Alphabet(2), m, name=name or f"bsc({p})")


@dataclass(frozen=True)
class SequenceSet:
    """A subset of the length-n sequence space over an alphabet of size base.

    Stored as a sorted unique id array; a bitset view is available whenever
    the ambient space is within the dense cap, and both views agree.
    """

    n: int
    base: int
    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        ids = np.unique(ids)
        if ids.size and (ids[0] < 0 or ids[-1] >= self.base ** self.n):
            raise ValidationError("sequence id out of range for base**n")
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @property
    def size(self) -> int:
        return int(self.ids.size)

    @property
    def space_size(self) -> int:
        return self.base ** self.n

    def mask(self) -> int:
        if self.space_size > DENSE_CAP:
            raise CapacityError("sequence space exceeds the bitset cap 2**26")
        out = 0
        for i in self.ids.tolist():
            out |= 1 << i
        return out

    def contains(self, seq_id: int) -> bool:
        idx = int(np.searchsorted(self.ids, seq_id))
        return idx < self.ids.size and int(self.ids[idx]) == seq_id

    def _check_compatible(self, other: "SequenceSet"):
        if (self.n, self.base) != (other.n, other.base):
            raise DimensionMismatchError("sequence sets live in different spaces")

    def intersect(self, other: "SequenceSet") -> "SequenceSet":
        self._check_compatible(other)
        return SequenceSet(self.n, self.base, np.intersect1d(self.ids, other.ids))

    def union(self, other: "SequenceSet") -> "SequenceSet":
        self._check_compatible(other)
        return SequenceSet(self.n, self.base, np.union1d(self.ids, other.ids))

    def difference(self, other: "SequenceSet") -> "SequenceSet":
        self._check_compatible(other)
        return SequenceSet(self.n, self.base, np.setdiff1d(self.ids, other.ids))

    def is_subset_of(self, other: "SequenceSet") -> bool:
        self._check_compatible(other)
        return bool(np.isin(self.ids, other.ids).all())

    def ids_list(self) -> list[int]:
        return [int(i) for i in self.ids]

    def sequences(self):
        return [Sequence(self.n, self.base, int(i)) for i in self.ids]

    @classmethod
    def from_ids(cls, n: int, base: int, ids) -> "SequenceSet":
        return cls(n, base, np.asarray(sorted(set(int(i) for i in ids)), dtype=np.int64))

    @classmethod
    def full_space(cls, n: int, base: int) -> "SequenceSet":
        if base ** n > DENSE_CAP:
            raise CapacityError("full space exceeds the dense cap 2**26")
        return cls(n, base, np.arange(base ** n, dtype=np.int64))


@dataclass(frozen=True)
class SequenceDist:
    """A probability distribution on a support set of packed sequences.

    Support convention: every stored sequence has probability > 0, so the
    support set and the positive-probability set coincide.
    """

    n: int
    base: int
    ids: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if ids.shape != probs.shape or ids.ndim != 1:
            raise ValidationError("ids and probs must be aligned 1-d arrays")
        order = np.argsort(ids, kind="stable")
        ids, probs = ids[order], probs[order]
        keep = probs > 0.0
        ids, probs = ids[keep], probs[keep]
        if ids.size == 0:
            raise ValidationError("distribution has empty support")
        if np.unique(ids).size != ids.size:
            raise ValidationError("duplicate sequence ids in distribution")
        if ids[0] < 0 or ids[-1] >= self.base ** self.n:
            raise ValidationError("sequence id out of range for base**n")
        total = float(np.sum(probs))
        if abs(total - 1.0) > 1e-10:
            raise ValidationError(f"probabilities sum to {total}, not 1 +/- 1e-10")
        ids.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "probs", probs)

    def support(self) -> SequenceSet:
        return SequenceSet(self.n, self.base, self.ids)

    def prob_of(self, seq_id: int) -> float:
        idx = int(np.searchsorted(self.ids, seq_id))
        if idx < self.ids.size and int(self.ids[idx]) == seq_id:
            return float(self.probs[idx])
        return 0.0

    def mass_of(self, A: SequenceSet) -> float:
        if (self.n, self.base) != (A.n, A.base):
            raise DimensionMismatchError("set lives in a different space")
        inside = np.isin(self.ids, A.ids)
        return float(np.sum(self.probs[inside]))

    def conditioned_on(self, A: SequenceSet) -> "SequenceDist":
        if (self.n, self.base) != (A.n, A.base):
            raise DimensionMismatchError("set lives in a different space")
        inside = np.isin(self.ids, A.ids)
        mass = float(np.sum(self.probs[inside]))
        if mass <= 0.0:
            raise ConditioningError("conditioning on a zero-probability set")
        return SequenceDist(self.n, self.base, self.ids[inside], self.probs[inside] / mass)

    def entropy(self) -> float:
        return entropy_bits(self.probs)

    def items(self):
        return zip(self.ids.tolist(), self.probs.tolist())

    @classmethod
    def uniform_on(cls, A: SequenceSet) -> "SequenceDist":
        if A.size == 0:
            raise ValidationError("cannot build a distribution on an empty set")
        return cls(A.n, A.base, A.ids, np.full(A.size, 1.0 / A.size))

    @classmethod
    def point_mass(cls, n: int, base: int, seq_id: int) -> "SequenceDist":
        return cls(n, base, np.array([seq_id]), np.array([1.0]))

    @classmethod
    def from_dense(cls, n: int, base: int, vector) -> "SequenceDist":
        v = np.asarray(vector, dtype=np.float64)
        if v.size != base ** n:
            raise ValidationError("dense vector length must be base**n")
        ids = np.nonzero(v > 0.0)[0].astype(np.int64)
        return cls(n, base, ids, v[ids])

    def to_json_obj(self) -> dict:
        return {"n": self.n, "alphabet_size": self.base,
                "entries": [[int(i), float(p)] for i, p in self.items()]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SequenceDist":
        try:
            entries = obj["entries"]
            ids = np.array([int(e[0]) for e in entries], dtype=np.int64)
            probs = np.array([float(e[1]) for e in entries])
            return cls(int(obj["n"]), int(obj["alphabet_size"]), ids, probs)
        except (KeyError, IndexError, TypeError) as exc:
            raise ValidationError(f"malformed distribution file: {exc}") from exc


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def product_prob(ch: Channel, x: Sequence, y: Sequence) -> float:
    """Memoryless product probability of output word y given input word x."""
    if x.n != y.n:
        raise DimensionMismatchError("x and y must share the blocklength")
    if x.base != ch.input.size or y.base != ch.output.size:
        raise DimensionMismatchError("sequence alphabets do not match the channel")
    factors = [float(ch.matrix[dx, dy]) for dx, dy in zip(x.digits(), y.digits())]
    if x.n < _LOG_PRODUCT_MIN:
        return float(reduce(lambda a, b: a * b, factors, 1.0))
    if any(f == 0.0 for f in factors):
        return 0.0
    return float(2.0 ** math.fsum(math.log2(f) for f in factors))


def _row_output_vector(ch: Channel, digits) -> np.ndarray:
    """Dense conditional distribution on the whole output space given one word."""
    v = np.ones(1)
    for d in digits:
        v = np.multiply.outer(v, ch.matrix[d]).ravel()
    return v


def output_rows(ch: Channel, A: SequenceSet) -> np.ndarray:
    """Matrix of conditional output distributions, one row per x in A."""
    if A.base != ch.input.size:
        raise DimensionMismatchError("set alphabet does not match the channel input")
    out_space = ch.output.size ** A.n
    if out_space > DENSE_CAP:
        raise CapacityError("output space exceeds the dense cap 2**26")
    rows = np.empty((A.size, out_space))
    for i, seq_id in enumerate(A.ids.tolist()):
        rows[i] = _row_output_vector(ch, _digits_of(seq_id, A.n, ch.input.size))
    return rows


def output_dist(ch: Channel, input_dist: SequenceDist) -> SequenceDist:
    """Exact output marginal of the product channel applied to `input_dist`."""
    if input_dist.base != ch.input.size:
        raise DimensionMismatchError("input alphabet does not match the channel")
    out_space = ch.output.size ** input_dist.n
    if out_space > DENSE_CAP:
        raise CapacityError("output space exceeds the dense cap 2**26")
    acc = np.zeros(out_space)
    for seq_id, p in input_dist.items():
        acc += p * _row_output_vector(ch, _digits_of(seq_id, input_dist.n, ch.input.size))
    return SequenceDist.from_dense(input_dist.n, ch.output.size, acc)


def cond_output_given_set(ch: Channel, input_dist: SequenceDist,
                          A: SequenceSet) -> SequenceDist:
    """Output distribution conditioned on the input falling in A."""
    return output_dist(ch, input_dist.conditioned_on(A))


def info_density(dist: SequenceDist, x: Sequence | int) -> float:
    """Per-symbol information density -(1/n) log2 P(x), in bits."""
    seq_id = x.value if isinstance(x, Sequence) else int(x)
    p = dist.prob_of(seq_id)
    if p <= 0.0:
        raise DomainError("sequence outside the distribution support")
    return -math.log2(p) / dist.n


def entropy(dist) -> float:
    """Entropy in bits of a SequenceDist or a raw probability vector."""
    if isinstance(dist, SequenceDist):
        return dist.entropy()
    v = np.asarray(dist, dtype=np.float64)
    if np.any(v < 0.0) or abs(float(v.sum()) - 1.0) > 1e-10:
        raise ValidationError("entropy argument must be a normalized distribution")
    return entropy_bits(v)


def mutual_information(joint) -> float:
    """Mutual information in bits of a joint probability matrix.

    Computed from the defining sum so the identity
    I = H(marg1) + H(marg2) - H(joint) stays an independent cross-check.
    """
    J = np.asarray(joint, dtype=np.float64)
    if J.ndim != 2:
        raise ValidationError("joint must be a 2-d matrix")
    if np.any(J < 0.0) or abs(float(J.sum()) - 1.0) > 1e-10:
        raise ValidationError("joint must be a normalized distribution")
    pm = J.sum(axis=1)
    qm = J.sum(axis=0)
    pos = J > 0.0
    denom = np.outer(pm, qm)
    vals = J[pos] * (np.log2(J[pos]) - np.log2(denom[pos]))
    return max(0.0, float(np.sum(vals)))
