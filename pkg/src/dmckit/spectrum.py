"""Entropy-spectrum partitions, partitioning indices, and uniformity ratios."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import SequenceDist, SequenceSet, aexp, snap
from .errors import (DimensionMismatchError, DomainError, ValidationError)
from .reports import BoundReport


def floor_on_grid(t: float) -> int:
    """floor after snapping to the comparison grid, edge-exact."""
    ts = snap(t)
    k = math.floor(ts)
    # snapped values sitting exactly on an integer belong to that integer
    if k + 1 <= ts:
        k += 1
    return k


def bin_index(density: float, delta_n: float, K: int) -> int:
    """Bin of an information density under width-delta_n half-open slicing.

    Bin k collects [k*delta_n, (k+1)*delta_n) for k < K; bin K collects the
    tail.  Values landing exactly on an edge (after 1e-12 rounding) go to the
    bin whose lower edge they sit on.
    """
    iv = max(0.0, snap(density))
    k = math.floor(iv / delta_n)
    while (k + 1) * delta_n <= iv:
        k += 1
    while k > 0 and k * delta_n > iv:
        k -= 1
    return min(k, K)


@dataclass(frozen=True)
class UniformityReport:
    """Max/min conditional atom ratio of a distribution restricted to a set."""

    gamma: float
    max_atom: float
    min_atom: float


def uniformity(dist: SequenceDist, A: SequenceSet) -> UniformityReport:
    cond = dist.conditioned_on(A)
    mx = float(np.max(cond.probs))
    mn = float(np.min(cond.probs))
    return UniformityReport(gamma=mx / mn, max_atom=mx, min_atom=mn)


def verify_uniform_entropy_bounds(dist: SequenceDist, A: SequenceSet,
                                  tol: float = 1e-9) -> BoundReport:
    """Check log2|A| - log2(gamma) <= H(X^n | X^n in A) <= log2|A|."""
    cond = dist.conditioned_on(A)
    rep = uniformity(dist, A)
    h = cond.entropy()
    size_bits = math.log2(cond.ids.size)
    report = BoundReport("uniform-entropy-bounds",
                         details={"gamma": rep.gamma, "entropy": h,
                                  "log2_size": size_bits})
    report.add("lower", size_bits - math.log2(rep.gamma), h,
               size_bits - math.log2(rep.gamma) <= h + tol)
    report.add("upper", h, size_bits, h <= size_bits + tol)
    return report


@dataclass(frozen=True)
class SpectrumPartition:
    """Half-open information-density slicing of a support set.

    bins[k] holds the sequences with density in [k*delta_n, (k+1)*delta_n)
    for k < K, and bins[K] the tail; empty bins are kept so indices align.
    """

    n: int
    base: int
    delta_n: float
    delta: float
    K: int
    bins: tuple[SequenceSet, ...]
    bin_mass: tuple[float, ...]

    def nonempty(self):
        return [(k, b) for k, b in enumerate(self.bins) if b.size > 0]

    def bin_of(self, seq_id: int) -> int:
        for k, b in enumerate(self.bins):
            if b.contains(seq_id):
                return k
        raise DomainError("sequence not contained in any bin")

    def to_json_obj(self) -> dict:
        return {
            "delta_n": self.delta_n,
            "delta": self.delta,
            "K": self.K,
            "bins": [b.ids_list() for b in self.bins],
            "bin_mass": list(self.bin_mass),
        }


def build_spectrum_partition(dist: SequenceDist, delta_n: float, delta: float,
                             space_aexp: float | None = None) -> SpectrumPartition:
    """Slice the support of `dist` into density bins of width delta_n.

    The bin count is K+1 with K = ceil((delta + a)/delta_n), where `a`
    defaults to the per-letter exponent of the support size; pass
    `space_aexp` to slice relative to a larger ambient space.
    """
    if not 0.0 < delta_n < 1.0:
        raise DomainError("delta_n must lie in (0, 1)")
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    if delta >= 1.0:
        warnings.warn("delta >= 1 is outside the defining range; proceeding",
                      stacklevel=2)
    n = dist.n
    a = aexp(dist.ids.size, n) if space_aexp is None else float(space_aexp)
    K = math.ceil(snap((delta + a) / delta_n))
    members: list[list[int]] = [[] for _ in range(K + 1)]
    masses = np.zeros(K + 1)
    for seq_id, p in dist.items():
        k = bin_index(-math.log2(p) / n, delta_n, K)
        members[k].append(seq_id)
        masses[k] += p
    bins = tuple(SequenceSet.from_ids(n, dist.base, ids) for ids in members)
    return SpectrumPartition(n=n, base=dist.base, delta_n=delta_n, delta=delta,
                             K=K, bins=bins, bin_mass=tuple(float(m) for m in masses))


def verify_bin_size_bounds(sp: SpectrumPartition, dist: SequenceDist,
                           tol: float = 1e-9) -> BoundReport:
    """Per-bin size bounds: aexp(A_k) < (k+1)*delta_n always, and
    |aexp(A_k) - k*delta_n| < delta_n whenever P(A_k) > 2^(-n*delta_n)."""
    n = sp.n
    report = BoundReport("bin-size-bounds")
    for k, bin_k in sp.nonempty():
        a_k = aexp(bin_k.size, n)
        upper = (k + 1) * sp.delta_n
        report.add(f"bin{k}:upper", a_k, upper, a_k < upper + tol, slack=upper - a_k)
        if sp.bin_mass[k] > 2.0 ** (-n * sp.delta_n):
            dev = abs(a_k - k * sp.delta_n)
            report.add(f"bin{k}:two-sided", dev, sp.delta_n,
                       dev < sp.delta_n + tol, slack=sp.delta_n - dev)
    return report


def verify_bin_conditional_uniformity(sp: SpectrumPartition, dist: SequenceDist,
                                      tol: float = 1e-9) -> BoundReport:
    """Conditional atoms of every non-tail bin lie strictly inside
    (2^(-n d)/|A_k|, 2^(n d)/|A_k|); checked with multiplicative slack."""
    n = sp.n
    report = BoundReport("bin-conditional-uniformity")
    for k, bin_k in sp.nonempty():
        if k >= sp.K:
            continue
        mass = sp.bin_mass[k]
        lo = 2.0 ** (-n * sp.delta_n) / bin_k.size
        hi = 2.0 ** (n * sp.delta_n) / bin_k.size
        for seq_id in bin_k.ids_list():
            p_cond = dist.prob_of(seq_id) / mass
            ok = lo * (1.0 - tol) < p_cond < hi * (1.0 + tol)
            report.add(f"bin{k}:x{seq_id}", lo, hi, ok, slack=min(p_cond - lo, hi - p_cond),
                       atom=p_cond)
    return report


class PartitioningIndex:
    """A labeled partition of a ground set into nonempty disjoint cells."""

    def __init__(self, ground: SequenceSet, cells: dict):
        total = 0
        seen: list[np.ndarray] = []
        clean: dict = {}
        for label, cell in cells.items():
            if cell.size == 0:
                continue
            if (cell.n, cell.base) != (ground.n, ground.base):
                raise DimensionMismatchError("cell lives in a different space")
            clean[label] = cell
            total += cell.size
            seen.append(cell.ids)
        if not clean:
            raise ValidationError("partition has no nonempty cells")
        merged = np.concatenate(seen)
        if np.unique(merged).size != merged.size:
            raise ValidationError("partition cells are not disjoint")
        if total != ground.size or not np.array_equal(np.sort(merged), ground.ids):
            raise ValidationError("partition cells do not cover the ground set")
        self.ground = ground
        self.cells = clean

    def __len__(self) -> int:
        return len(self.cells)

    def labels(self) -> list:
        return list(self.cells.keys())

    def label_of(self, seq_id: int):
        for label, cell in self.cells.items():
            if cell.contains(seq_id):
                return label
        raise DomainError("sequence not in the ground set")

    def cell(self, label) -> SequenceSet:
        return self.cells[label]

    @classmethod
    def from_labeling(cls, ground: SequenceSet, label_of) -> "PartitioningIndex":
        """Build from a total labeling function on the ground set."""
        buckets: dict = {}
        for seq_id in ground.ids_list():
            buckets.setdefault(label_of(seq_id), []).append(seq_id)
        cells = {label: SequenceSet.from_ids(ground.n, ground.base, ids)
                 for label, ids in buckets.items()}
        return cls(ground, cells)

    @classmethod
    def trivial(cls, ground: SequenceSet, label=0) -> "PartitioningIndex":
        return cls(ground, {label: ground})


def restrict_index(pi: PartitioningIndex, A_sub: SequenceSet) -> PartitioningIndex:
    """Restriction to a nonempty subset: cells A' intersect A_{M=m}, empties dropped."""
    if A_sub.size == 0:
        raise DomainError("cannot restrict to an empty set")
    if not A_sub.is_subset_of(pi.ground):
        raise DimensionMismatchError("restriction set is not inside the ground set")
    cells = {}
    for label, cell in pi.cells.items():
        inter = cell.intersect(A_sub)
        if inter.size:
            cells[label] = inter
    return PartitioningIndex(A_sub, cells)


def product_index(pi1: PartitioningIndex, pi2: PartitioningIndex) -> PartitioningIndex:
    """Joint index with cells A_{M1=m1} intersect A_{M2=m2}, empties dropped."""
    if not np.array_equal(pi1.ground.ids, pi2.ground.ids) or \
            (pi1.ground.n, pi1.ground.base) != (pi2.ground.n, pi2.ground.base):
        raise DimensionMismatchError("indices partition different ground sets")
    cells = {}
    for l1, c1 in pi1.cells.items():
        for l2, c2 in pi2.cells.items():
            inter = c1.intersect(c2)
            if inter.size:
                cells[(l1, l2)] = inter
    return PartitioningIndex(pi1.ground, cells)
