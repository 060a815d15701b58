"""Constructive partition chain: message-ratio slicing, quasi-image
refinement, dominant-bin extraction, multi-channel extraction, the
image-entropy-matched partition, and the equal-image-size partition with
lattice binning.

Asymptotic thresholds ("for sufficiently large n") are never enforced as
pass/fail here; they are recorded as measured slacks in the traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (Channel, SequenceDist, SequenceSet, aexp, entropy_bits,
                   output_dist, output_rows)
from .errors import (CapacityError, DomainError, InvariantError,
                     ValidationError)
from .images import ETA_TOL, image_exponents
from .reports import BoundReport
from .spectrum import (PartitioningIndex, SpectrumPartition, UniformityReport,
                       build_spectrum_partition, floor_on_grid, restrict_index,
                       uniformity)


# ---------------------------------------------------------------------------
# message-ratio slicing (the near-uniformizing partition)
# ---------------------------------------------------------------------------

@dataclass
class SliceCell:
    """One (density bin, ratio bin) cell with its uniformity diagnostics."""

    density_bin: int
    ratio_bin: int
    members: SequenceSet
    messages: tuple
    x_uniformity: UniformityReport
    m_uniformity: UniformityReport
    x_bound: float
    m_bound: float

    @property
    def x_ok(self) -> bool:
        return self.x_uniformity.gamma <= self.x_bound * (1.0 + 1e-9)

    @property
    def m_ok(self) -> bool:
        return self.m_uniformity.gamma <= self.m_bound * (1.0 + 1e-9)


@dataclass
class UniformizingPartition:
    """Partition of a source set by density bin and per-bin message share.

    Within every regular cell both the sequence distribution and the message
    distribution are near-uniform; the remainder cell collects the density
    tail and the vanishing-share messages.
    """

    n: int
    delta: float
    rho: int
    slice_width: float
    ratio_width: float
    K: int
    cells: dict
    remainder: SequenceSet
    remainder_mass: float
    spectrum: SpectrumPartition
    message_bins_by_slice: dict
    ground: SequenceSet

    def as_partitioning_index(self) -> PartitioningIndex:
        cells = {key: cell.members for key, cell in self.cells.items()}
        if self.remainder.size:
            cells["remainder"] = self.remainder
        return PartitioningIndex(self.ground, cells)

    def partitions_ground(self) -> bool:
        total = sum(c.members.size for c in self.cells.values()) + self.remainder.size
        if total != self.ground.size:
            return False
        try:
            self.as_partitioning_index()
        except ValidationError:
            return False
        return True

    def message_partition_ok(self, all_messages) -> bool:
        """Each density slice bins every message into exactly one ratio bin."""
        want = set(all_messages)
        for bins in self.message_bins_by_slice.values():
            seen: list = []
            for labels in bins.values():
                seen.extend(labels)
            if len(seen) != len(set(seen)) or set(seen) != want:
                return False
        return True


def build_uniformizing_partition(dist: SequenceDist, message_index: PartitioningIndex,
                                 delta: float, rho: int = 0) -> UniformizingPartition:
    """Slice the ground set by information density (width 1/n^(rho+2)) and,
    within each slice, bin messages by their cardinality share.

    Regular cells are near-uniform in both coordinates: the sequence ratio is
    at most 2^(2/n^(rho+1)) and the message ratio at most 2^(6/n^(rho+1)).
    The remainder collects the density tail plus share-tail messages and its
    probability is reported (small once 2^(-n*delta) bites).
    """
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    if rho < 0:
        raise DomainError("rho must be >= 0")
    n = dist.n
    slice_width = 1.0 / n ** (rho + 2)
    if not slice_width < 1.0:
        raise DomainError("n**(rho+2) must exceed 1; increase n or rho")
    ratio_width = 1.0 / n ** (rho + 1)
    ground = dist.support()
    if not np.array_equal(ground.ids, message_index.ground.ids):
        message_index = restrict_index(message_index, ground)
    sp = build_spectrum_partition(dist, slice_width, 2.0 * delta)
    K = sp.K

    cells: dict = {}
    message_bins_by_slice: dict = {}
    remainder_parts: list[SequenceSet] = [sp.bins[K]] if sp.bins[K].size else []

    labels = message_index.labels()
    for k in range(K):
        bin_k = sp.bins[k]
        if bin_k.size == 0:
            continue
        ratio_bins: dict = {}
        for m in labels:
            inter = bin_k.intersect(message_index.cell(m))
            if inter.size == 0:
                ratio_bins.setdefault(K, []).append((m, inter))
                continue
            share = inter.size / bin_k.size
            t = -math.log2(share) / ratio_width
            l = min(max(floor_on_grid(t), 0), K)
            ratio_bins.setdefault(l, []).append((m, inter))
        message_bins_by_slice[k] = {l: tuple(m for m, _ in pairs)
                                    for l, pairs in sorted(ratio_bins.items())}
        for l, pairs in sorted(ratio_bins.items()):
            parts = [inter for _, inter in pairs if inter.size]
            if not parts:
                continue
            merged = parts[0]
            for p in parts[1:]:
                merged = merged.union(p)
            if l >= K:
                remainder_parts.append(merged)
                continue
            msg_mass = {m: dist.mass_of(inter) for m, inter in pairs}
            total = sum(msg_mass.values())
            shares = [msg_mass[m] / total for m, _ in pairs]
            m_rep = UniformityReport(gamma=max(shares) / min(shares),
                                     max_atom=max(shares), min_atom=min(shares))
            cells[(k, l)] = SliceCell(
                density_bin=k, ratio_bin=l, members=merged,
                messages=tuple(m for m, _ in pairs),
                x_uniformity=uniformity(dist, merged),
                m_uniformity=m_rep,
                x_bound=2.0 ** (2.0 * ratio_width),
                m_bound=2.0 ** (6.0 * ratio_width))

    remainder = SequenceSet.from_ids(n, dist.base, [])
    for part in remainder_parts:
        remainder = remainder.union(part)
    return UniformizingPartition(
        n=n, delta=delta, rho=rho, slice_width=slice_width,
        ratio_width=ratio_width, K=K, cells=cells, remainder=remainder,
        remainder_mass=dist.mass_of(remainder) if remainder.size else 0.0,
        spectrum=sp, message_bins_by_slice=message_bins_by_slice, ground=ground)


# ---------------------------------------------------------------------------
# quasi-image refinement
# ---------------------------------------------------------------------------

@dataclass
class RefinementResult:
    """Subset whose rows all put threshold mass on one quasi-image witness."""

    refined: SequenceSet
    witness: SequenceSet
    alpha: float
    threshold: float
    min_row_mass: float
    ratio: float
    ratio_floor: float
    gamma: float

    @property
    def certificate_ok(self) -> bool:
        return self.min_row_mass >= self.threshold - ETA_TOL

    @property
    def ratio_ok(self) -> bool:
        return self.ratio > self.ratio_floor - 1e-9


def _refine_against_witness(ch: Channel, dist: SequenceDist, A: SequenceSet,
                            alpha: float, witness: SequenceSet) -> RefinementResult:
    rows = output_rows(ch, A)
    mask = np.isin(np.arange(ch.output.size ** A.n), witness.ids)
    row_mass = rows[:, mask].sum(axis=1)
    threshold = alpha / A.n
    keep = row_mass >= threshold - ETA_TOL
    refined = SequenceSet(A.n, A.base, A.ids[keep])
    gamma = uniformity(dist, A).gamma
    return RefinementResult(
        refined=refined, witness=witness, alpha=alpha, threshold=threshold,
        min_row_mass=float(row_mass[keep].min()) if refined.size else float("nan"),
        ratio=refined.size / A.size,
        ratio_floor=(1.0 / gamma - 1.0 / A.n) * alpha,
        gamma=gamma)


def refine_quasi_to_image(ch: Channel, dist: SequenceDist, A: SequenceSet,
                          alpha: float) -> RefinementResult:
    """Keep the inputs that put mass >= alpha/n on the minimum alpha-quasi-image.

    The witness then is an (alpha/n)-image of the refined subset (checked
    exactly), and the kept fraction exceeds (1/gamma - 1/n) * alpha for the
    measured uniformity ratio gamma.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")
    from .images import min_quasi_image
    cond = dist.conditioned_on(A)
    witness = min_quasi_image(ch, cond, A, alpha).witness
    return _refine_against_witness(ch, cond, A, alpha, witness)


# ---------------------------------------------------------------------------
# dominant-bin extraction
# ---------------------------------------------------------------------------

@dataclass
class ExtractionStep:
    """Diagnostics of one dominant-bin extraction on one channel."""

    channel_name: str
    delta_n: float
    delta: float
    eta: float
    K_out: int
    heavy_bin: int
    heavy_prefix_mass: float
    continuity_gap: float
    branch_threshold: float
    branch: str
    drop_bin: int | None
    refined: SequenceSet
    dropped: SequenceSet | None
    result: SequenceSet
    ratio: float
    ratio_floor: float
    entropy_rate: float
    image_exponent_lower: float
    image_exponent_upper: float
    image_exact: bool
    slack_upper: float
    refinement: RefinementResult

    @property
    def slack(self) -> float:
        """Measured cexp g(A*, eta) - (1/n) H(Y^n | X^n in A*)."""
        return self.slack_upper


def extract_equal_cell(ch: Channel, dist: SequenceDist, A: SequenceSet,
                       delta_n: float, delta: float, eta: float,
                       beta: float | None = None) -> tuple[SequenceSet, ExtractionStep]:
    """Extract a large subset whose output entropy rate nearly matches its
    minimum image exponent.

    Slices the output distribution into density bins, picks the first bin
    carrying at least 1/(K+1) of the mass, refines against the cumulative
    quasi-image, and if that bin sits deep enough past the measured
    continuity threshold, removes the inputs already served by the earlier
    bins.  All comparison quantities are recorded; nothing asymptotic is
    asserted.
    """
    if not 0.0 < eta < 1.0:
        raise DomainError("eta must lie in (0, 1)")
    cond = dist.conditioned_on(A)
    n = A.n
    out = output_dist(ch, cond)
    sp = build_spectrum_partition(out, delta_n, delta,
                                  space_aexp=math.log2(ch.output.size))
    K = sp.K
    masses = np.array(sp.bin_mass)
    threshold = 1.0 / (K + 1)
    heavy_candidates = np.nonzero(masses >= threshold * (1.0 - 1e-12))[0]
    heavy = int(heavy_candidates[0]) if heavy_candidates.size else int(np.argmax(masses))
    prefix_mass = float(masses[: heavy + 1].sum())

    witness = sp.bins[0]
    for k in range(1, heavy + 1):
        witness = witness.union(sp.bins[k])
    ref = _refine_against_witness(ch, cond, A, prefix_mass, witness)
    a_prime = ref.refined

    if beta is None:
        beta = max(eta, 1.0 - 1.0 / n ** 2)
    lo_level = max(min(prefix_mass / n, 1.0), ETA_TOL)
    exp_beta = image_exponents(ch, a_prime, min(beta, 1.0))
    exp_low = image_exponents(ch, a_prime, lo_level)
    tau = max(0.0, exp_beta[1] - exp_low[0])
    c_threshold = 4.19 + tau / delta_n

    drop_bin = None
    dropped = None
    branch = "shallow"
    result = a_prime
    if heavy > c_threshold:
        drop_bin = int(math.floor(heavy - c_threshold))
        tilde = SequenceSet.from_ids(out.n, out.base, [])
        for k in range(drop_bin + 1):
            tilde = tilde.union(sp.bins[k])
        tilde_mass = float(masses[: drop_bin + 1].sum())
        if tilde_mass > 1.0 / n:
            ref2 = _refine_against_witness(ch, cond, A, tilde_mass, tilde)
            dropped = ref2.refined
            diff = a_prime.difference(dropped)
            if diff.size:
                branch = "deep-drop"
                result = diff
            else:
                branch = "deep-drop-empty-fallback"
        else:
            branch = "deep-light-tail"

    cond_res = cond.conditioned_on(result)
    h_rate = output_dist(ch, cond_res).entropy() / n
    img_lo, img_hi, exact = image_exponents(ch, result, eta)
    step = ExtractionStep(
        channel_name=ch.name, delta_n=delta_n, delta=delta, eta=eta, K_out=K,
        heavy_bin=heavy, heavy_prefix_mass=prefix_mass, continuity_gap=tau,
        branch_threshold=c_threshold, branch=branch, drop_bin=drop_bin,
        refined=a_prime, dropped=dropped, result=result,
        ratio=result.size / A.size, ratio_floor=1.0 / (2.0 * (K + 1)),
        entropy_rate=h_rate, image_exponent_lower=img_lo,
        image_exponent_upper=img_hi, image_exact=exact,
        slack_upper=img_hi - h_rate, refinement=ref)
    return result, step


# ---------------------------------------------------------------------------
# multi-channel extraction and the image-entropy-matched partition
# ---------------------------------------------------------------------------

@dataclass
class Schedule:
    """Density widths used by the sequential extraction.

    The first width defaults to n^(-1/(K+1)); each later width is the square
    root of the larger of the previous width and the previous step's measured
    slack.  Explicit overrides win.
    """

    delta: float = 0.5
    delta1: float | None = None
    overrides: tuple[float, ...] | None = None

    def width(self, step: int, n: int, n_channels: int,
              prev_width: float | None, prev_slack: float | None) -> float:
        if self.overrides is not None and step < len(self.overrides):
            w = self.overrides[step]
        elif step == 0:
            w = self.delta1 if self.delta1 is not None else n ** (-1.0 / (n_channels + 1))
        else:
            w = math.sqrt(max(prev_width, prev_slack))
        return min(max(w, 1e-6), 1.0 - 1e-9)


@dataclass
class ExtractionTrace:
    steps: list[ExtractionStep]
    initial: SequenceSet
    result: SequenceSet
    ratio: float
    ratio_floor: float
    per_channel: list[dict]

    def to_report(self) -> BoundReport:
        rep = BoundReport("multi-channel-extraction",
                          details={"ratio": self.ratio, "ratio_floor": self.ratio_floor})
        for i, step in enumerate(self.steps):
            rep.add(f"step{i}:ratio", step.ratio_floor, step.ratio,
                    step.ratio >= 0.0, slack=step.ratio - step.ratio_floor,
                    branch=step.branch)
        for rec in self.per_channel:
            rep.add(f"final:channel{rec['channel']}", rec["entropy_rate"],
                    rec["image_exponent_upper"], True,
                    slack=rec["two_sided_gap"])
        return rep


def extract_main(channels: list[Channel], dist: SequenceDist, A: SequenceSet,
                 eta: float, schedule: Schedule | None = None
                 ) -> tuple[SequenceSet, ExtractionTrace]:
    """Sequentially extract one subset that matches entropy to image exponent
    for every channel, widths driven by the (configurable) schedule."""
    if not channels:
        raise DomainError("need at least one channel")
    schedule = schedule or Schedule()
    n = A.n
    current = A
    steps: list[ExtractionStep] = []
    width = None
    slack = None
    for ch in channels:
        width = schedule.width(len(steps), n, len(channels), width, slack)
        current, step = extract_equal_cell(ch, dist, current, width,
                                           schedule.delta, eta)
        slack = max(step.continuity_gap, abs(step.slack_upper))
        steps.append(step)
    per_channel = []
    cond = dist.conditioned_on(current)
    for i, ch in enumerate(channels):
        h_rate = output_dist(ch, cond).entropy() / n
        lo, hi, exact = image_exponents(ch, current, eta)
        per_channel.append({
            "channel": i, "entropy_rate": h_rate,
            "image_exponent_lower": lo, "image_exponent_upper": hi,
            "image_exact": exact,
            "two_sided_gap": max(abs(h_rate - lo), abs(h_rate - hi)),
        })
    mu = 1.0
    for ch in channels:
        mu *= 1.0 / (3.0 * (schedule.delta + math.log2(ch.output.size)))
    trace = ExtractionTrace(steps=steps, initial=A, result=current,
                            ratio=current.size / A.size, ratio_floor=mu / n,
                            per_channel=per_channel)
    return current, trace


@dataclass
class CellRecord:
    """Measured per-cell quantities of the image-entropy-matched partition."""

    members: SequenceSet
    set_exponent: float
    x_entropy_rate: float
    channel_records: list[dict]
    trace: ExtractionTrace

    @property
    def slack(self) -> float:
        gaps = [self.set_exponent - self.x_entropy_rate]
        gaps += [rec["two_sided_gap"] for rec in self.channel_records]
        return max(gaps)


@dataclass
class ImageEntropyPartition:
    """Partition of a set into cells with entropy matched to image exponent."""

    index: PartitioningIndex
    records: dict
    cell_cap: int
    gamma: float
    eta: float
    epsilon_measured: float

    @property
    def cell_count(self) -> int:
        return len(self.index)

    @property
    def within_cap(self) -> bool:
        return self.cell_count <= self.cell_cap


def build_image_entropy_partition(channels: list[Channel], dist: SequenceDist,
                                  A: SequenceSet, eta: float,
                                  schedule: Schedule | None = None
                                  ) -> ImageEntropyPartition:
    """Exhaust A by repeated multi-channel extraction.

    Every cell records its per-letter size exponent against the conditional
    sequence entropy rate and, per channel, the output entropy rate against
    the minimum image exponent at eta.  The cell count is checked against the
    explicit cap 2*ln2*(1+log2|X|)*n^2/mu.
    """
    schedule = schedule or Schedule()
    n = A.n
    gamma = uniformity(dist, A).gamma
    residual = A
    cells: dict = {}
    records: dict = {}
    stall = 0
    while residual.size:
        cell, trace = extract_main(channels, dist, residual, eta, schedule)
        if cell.size == 0:
            stall += 1
            if stall >= 3:
                raise InvariantError("extraction failed to shrink the residual "
                                     "three times in a row")
            continue
        stall = 0
        label = len(cells) + 1
        cond = dist.conditioned_on(cell)
        records[label] = CellRecord(
            members=cell,
            set_exponent=aexp(cell.size, n),
            x_entropy_rate=cond.entropy() / n,
            channel_records=trace.per_channel,
            trace=trace)
        cells[label] = cell
        residual = residual.difference(cell)
    mu = 1.0
    for ch in channels:
        mu *= 1.0 / (3.0 * (schedule.delta + math.log2(ch.output.size)))
    cap = math.floor(2.0 * math.log(2.0) * (1.0 + math.log2(dist.base)) * n * n / mu) + 1
    eps = max(rec.slack for rec in records.values())
    return ImageEntropyPartition(index=PartitioningIndex(A, cells),
                                 records=records, cell_cap=cap, gamma=gamma,
                                 eta=eta, epsilon_measured=max(eps, 0.0))


# ---------------------------------------------------------------------------
# equal-image-size source partitioning
# ---------------------------------------------------------------------------

def _lattice_coord(rate: float, delta_n: float, dim: int) -> int:
    """Nearest lattice index with the half-open [-d/2, d/2) window."""
    i = floor_on_grid(rate / delta_n + 0.5)
    return min(max(i, 0), dim)


@dataclass
class MessageRecord:
    """Per-(subset, cell) measured instantiation of the four properties."""

    messages: tuple
    messages_tilde: tuple
    messages_hat: tuple
    message_image_exponents: dict
    h_y_given_m: list[float]
    h_m_rate: float
    aexp_messages: float
    aexp_tilde: float | None
    gap_image_vs_entropy: float
    gap_tilde_vs_all: float | None
    gap_entropy_vs_tilde: float | None
    gap_two_sided: float | None
    omega: tuple


@dataclass
class EqualImagePartition:
    """Equal-image-size source partition with full per-cell diagnostics.

    Over each cell, for every message-subset S, the minimum image exponents
    of (most of) the messages match the conditional output entropy rate; the
    per-property maxima of the measured gaps are reported, never asserted.
    """

    index: PartitioningIndex
    subsets: tuple
    delta_n: float
    eta: float
    epsilon_n: float
    lattice_dims: tuple
    cell_records: dict
    lambda_measured: dict
    iterations: int
    iteration_cap: int
    lattice_size: int

    @property
    def within_cap(self) -> bool:
        return self.iterations <= self.iteration_cap

    def lattice_point(self, label, subset):
        pos = self.subsets.index(subset)
        return label[1][pos]


def build_equal_image_partition(channels: list[Channel], dist: SequenceDist,
                                A: SequenceSet,
                                messages: list[PartitioningIndex],
                                eta: float, delta_n: float | None = None,
                                schedule: Schedule | None = None
                                ) -> EqualImagePartition:
    """Partition A so that, per cell and message subset, image exponents and
    entropies coincide up to measured gaps.

    Per message value the set is exhausted by image-entropy-matched
    partitions; cells are the intersections of the entropy-lattice bins over
    all message subsets, iterated until every sequence is placed.  The
    sqrt(epsilon_n) share threshold uses the maximum measured slack of the
    inner partitions, floored at 1/n^2.
    """
    J = len(messages)
    if J > 3:
        raise CapacityError("at most 3 simultaneous message indices supported")
    n = A.n
    if delta_n is None:
        delta_n = 1.0 / math.ceil(math.sqrt(n))
    schedule = schedule or Schedule()
    subsets = tuple(
        tuple(j for j in range(J) if mask >> j & 1) for mask in range(1 << J))
    subsets = tuple(sorted(subsets, key=lambda s: (len(s), s)))
    dims = (math.ceil(math.log2(dist.base) / delta_n),) + tuple(
        math.ceil(math.log2(ch.output.size) / delta_n) for ch in channels)
    lattice_size = 1
    for d in dims:
        lattice_size *= d + 1
    v_space = lattice_size ** len(subsets)

    gamma = uniformity(dist, A).gamma
    cap = max(1, math.ceil(2.0 * n * math.log2(dist.base))) if dist.base > 1 else 1
    gamma_cap = max(1, math.ceil((n * math.log2(max(dist.base, 2))
                                  + math.log2(max(gamma, 1.0)))
                                 / math.log2(max(v_space, 2))))
    iteration_cap = max(cap, gamma_cap)

    residual = A
    iteration = 0
    cells: dict = {}
    cell_records: dict = {}
    while residual.size:
        iteration += 1
        if iteration > max(iteration_cap, A.size) + 1:
            raise InvariantError("lattice exhaustion exceeded every iteration cap")
        cond = dist.conditioned_on(residual)
        sub_index: dict = {}
        inner: dict = {}
        eps = 1.0 / n ** 2
        for S in subsets:
            if S:
                idx = restrict_index(messages[S[0]], residual)
                for j in S[1:]:
                    from .spectrum import product_index
                    idx = product_index(idx, restrict_index(messages[j], residual))
            else:
                idx = PartitioningIndex.trivial(residual, label=())
            sub_index[S] = idx
            for m, cell_m in idx.cells.items():
                part = build_image_entropy_partition(channels, cond, cell_m,
                                                     eta, schedule)
                inner[(S, m)] = part
                eps = max(eps, part.epsilon_measured)

        # lattice placement of every inner cell
        placement: dict = {}
        for (S, m), part in inner.items():
            for u, rec in part.records.items():
                cond_u = cond.conditioned_on(rec.members)
                coords = [_lattice_coord(cond_u.entropy() / n, delta_n, dims[0])]
                for kk, ch in enumerate(channels):
                    h = output_dist(ch, cond_u).entropy() / n
                    coords.append(_lattice_coord(h, delta_n, dims[kk + 1]))
                placement[(S, m, u)] = tuple(coords)

        point_of: dict = {}
        for S in subsets:
            idx = sub_index[S]
            for m, cell_m in idx.cells.items():
                part = inner[(S, m)]
                for u, rec in part.records.items():
                    for sid in rec.members.ids_list():
                        point_of.setdefault(sid, {})[S] = (m, u, placement[(S, m, u)])

        buckets: dict = {}
        for sid in residual.ids_list():
            v = tuple(point_of[sid][S][2] for S in subsets)
            buckets.setdefault(v, []).append(sid)

        threshold = 1.0 / v_space ** 2
        kept: dict = {}
        dropped: list[int] = []
        for v, ids in sorted(buckets.items()):
            cell = SequenceSet.from_ids(n, dist.base, ids)
            if cond.mass_of(cell) >= threshold or len(buckets) == 1:
                kept[v] = cell
            else:
                dropped.extend(ids)
        if not kept:
            # cannot happen: fewer than v_space**2 cells means one passes
            raise InvariantError("no lattice cell met the mass threshold")

        sqrt_eps = math.sqrt(eps)
        for v, cell in kept.items():
            label = (iteration, v)
            cells[label] = cell
            cell_mass = cond.mass_of(cell)
            per_subset: dict = {}
            for si, S in enumerate(subsets):
                idx = sub_index[S]
                msgs = []
                for m, cell_m in idx.cells.items():
                    if cell_m.intersect(cell).size:
                        msgs.append(m)
                part_records: dict = {
                    m: inner[(S, m)] for m in msgs}
                # conditional message masses and per-message entropies
                msg_mass = {}
                h_y_given = [0.0 for _ in channels]
                img_exp: dict = {}
                gap1 = -math.inf
                for m in msgs:
                    inter = idx.cell(m).intersect(cell)
                    msg_mass[m] = cond.mass_of(inter)
                for m in msgs:
                    inter = idx.cell(m).intersect(cell)
                    p_m = msg_mass[m] / cell_mass
                    cond_m = cond.conditioned_on(inter)
                    exps = []
                    for kk, ch in enumerate(channels):
                        h = output_dist(ch, cond_m).entropy() / n
                        h_y_given[kk] += p_m * h
                        exps.append(image_exponents(ch, inter, eta))
                    img_exp[m] = exps
                for m in msgs:
                    for kk in range(len(channels)):
                        gap1 = max(gap1, img_exp[m][kk][1] - h_y_given[kk])

                omega = []
                tilde = []
                hat = []
                for m in msgs:
                    part = part_records[m]
                    share_sum = 0.0
                    m_cell_in_v = idx.cell(m).intersect(cell)
                    found = False
                    for u, rec in part.records.items():
                        if placement[(S, m, u)] != v[si]:
                            continue
                        inter_u = rec.members.intersect(cell)
                        if inter_u.size == 0:
                            continue
                        share = inter_u.size / rec.members.size
                        if share >= sqrt_eps:
                            omega.append((m, u))
                            found = True
                            share_sum += inter_u.size / m_cell_in_v.size
                    if found:
                        hat.append(m)
                        if share_sum >= 1.0 - delta_n:
                            tilde.append(m)

                aexp_m = aexp(len(msgs), n)
                aexp_t = aexp(len(tilde), n) if tilde else None
                h_m = entropy_bits([msg_mass[m] / cell_mass for m in msgs]) / n
                gap2 = abs(aexp_m - aexp_t) if aexp_t is not None else None
                gap3 = abs(h_m - aexp_t) if aexp_t is not None else None
                gap4 = None
                if tilde:
                    gap4 = 0.0
                    for m in tilde:
                        for kk in range(len(channels)):
                            lo, hi, _ = img_exp[m][kk]
                            gap4 = max(gap4,
                                       abs(h_y_given[kk] - lo),
                                       abs(h_y_given[kk] - hi))
                per_subset[S] = MessageRecord(
                    messages=tuple(msgs), messages_tilde=tuple(tilde),
                    messages_hat=tuple(hat),
                    message_image_exponents={m: img_exp[m] for m in msgs},
                    h_y_given_m=h_y_given, h_m_rate=h_m,
                    aexp_messages=aexp_m, aexp_tilde=aexp_t,
                    gap_image_vs_entropy=gap1, gap_tilde_vs_all=gap2,
                    gap_entropy_vs_tilde=gap3, gap_two_sided=gap4,
                    omega=tuple(omega))
            cell_records[label] = {"mass": cell_mass, "subsets": per_subset,
                                   "epsilon_n": eps}

        residual = SequenceSet.from_ids(n, dist.base, dropped)

    lam = {"image_vs_entropy": 0.0, "tilde_vs_all": 0.0,
           "entropy_vs_tilde": 0.0, "two_sided": 0.0}
    for rec in cell_records.values():
        for mrec in rec["subsets"].values():
            lam["image_vs_entropy"] = max(lam["image_vs_entropy"],
                                          mrec.gap_image_vs_entropy)
            for key, val in (("tilde_vs_all", mrec.gap_tilde_vs_all),
                             ("entropy_vs_tilde", mrec.gap_entropy_vs_tilde),
                             ("two_sided", mrec.gap_two_sided)):
                if val is not None:
                    lam[key] = max(lam[key], val)

    eps_all = max(rec["epsilon_n"] for rec in cell_records.values())
    return EqualImagePartition(
        index=PartitioningIndex(A, cells), subsets=subsets, delta_n=delta_n,
        eta=eta, epsilon_n=eps_all, lattice_dims=dims,
        cell_records=cell_records, lambda_measured=lam, iterations=iteration,
        iteration_cap=iteration_cap, lattice_size=v_space)


# ---------------------------------------------------------------------------
# entropy perturbation bound
# ---------------------------------------------------------------------------

def entropy_perturbation_bound(h_e: float, h_e_given: float, p: float,
                               log_card: float, tol: float = 1e-9) -> BoundReport:
    """Check |H(E) - H(E|S=1)| <= 1 + (1-p) * log2|E| for P(S=1) >= p.

    Stated in bits; divide both sides by n for the per-symbol form.
    """
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0, 1]")
    if h_e < 0.0 or h_e_given < 0.0 or log_card < 0.0:
        raise DomainError("entropies and log-cardinality must be nonnegative")
    lhs = abs(h_e - h_e_given)
    rhs = 1.0 + (1.0 - p) * log_card
    report = BoundReport("entropy-perturbation",
                         details={"p": p, "log_card": log_card})
    report.add("perturbation", lhs, rhs, lhs <= rhs + tol, slack=rhs - lhs)
    return report
