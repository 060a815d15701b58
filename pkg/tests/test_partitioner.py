import math

import numpy as np
import pytest

from dmckit.core import SequenceDist, SequenceSet, bsc, identity_channel
from dmckit.errors import CapacityError, DomainError
from dmckit.images import min_image_exact
from dmckit.partitioner import (build_equal_image_partition,
                                build_image_entropy_partition,
                                build_uniformizing_partition,
                                entropy_perturbation_bound, extract_equal_cell,
                                extract_main, refine_quasi_to_image)
from dmckit.spectrum import PartitioningIndex
from dmckit.verify import (random_channel, random_dist_on, random_subset,
                           rng_from_seed)


def first_bit_index(A):
    return PartitioningIndex.from_labeling(A, lambda sid: sid >> (A.n - 1))


# ---------------------------------------------------------------------------
# uniformizing partition
# ---------------------------------------------------------------------------

def test_slices_single_message_uniform():
    A = SequenceSet.from_ids(2, 2, [0, 1, 3])
    d = SequenceDist.uniform_on(A)
    M = PartitioningIndex.trivial(A)
    up = build_uniformizing_partition(d, M, delta=0.4)
    assert len(up.cells) == 1
    ((k, l), cell), = up.cells.items()
    assert l == 0  # the only message has full share of its slice
    assert cell.x_uniformity.gamma == pytest.approx(1.0)
    assert cell.m_uniformity.gamma == pytest.approx(1.0)
    assert up.remainder_mass == 0.0


def test_slices_first_bit_message_gammas():
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    up = build_uniformizing_partition(d, first_bit_index(A), delta=0.5)
    assert len(up.cells) == 1
    cell = next(iter(up.cells.values()))
    assert set(cell.messages) == {0, 1}
    assert cell.m_uniformity.gamma == 1.0
    assert up.partitions_ground()
    assert up.message_partition_ok([0, 1])


def test_slices_heavy_tail_sequence_goes_to_remainder():
    # one sequence carries probability below the density-tail edge
    n, delta = 2, 0.6
    tail_p = 2.0 ** (-n * (2 * delta + 2.0))
    rest = (1.0 - tail_p) / 3
    d = SequenceDist(n, 2, np.array([0, 1, 2, 3]),
                     np.array([rest, rest, rest, tail_p]))
    A = d.support()
    up = build_uniformizing_partition(d, PartitioningIndex.trivial(A), delta=delta)
    assert up.remainder.contains(3)
    assert up.remainder_mass == pytest.approx(tail_p, rel=1e-9)


def test_slices_random_structural():
    rng = rng_from_seed(101)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        A = random_subset(rng, n, 2)
        dist = random_dist_on(rng, A)
        count = int(rng.integers(1, min(A.size, 4) + 1))
        labels = {int(s): int(rng.integers(0, count)) for s in A.ids}
        M = PartitioningIndex.from_labeling(A, lambda s: labels[s])
        rho = int(rng.integers(0, 2))
        up = build_uniformizing_partition(dist, M, delta=float(rng.uniform(0.1, 0.9)),
                                          rho=rho)
        assert up.partitions_ground()
        assert up.message_partition_ok(M.labels())
        for cell in up.cells.values():
            assert cell.x_ok and cell.m_ok


# ---------------------------------------------------------------------------
# refinement and extraction
# ---------------------------------------------------------------------------

def test_refine_identity_channel():
    ch = identity_channel(2)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    r = refine_quasi_to_image(ch, d, A, 1.0)
    assert r.refined.ids_list() == A.ids_list()
    assert r.certificate_ok and r.ratio_ok


def test_refine_bsc_example():
    # B = {00, 11}; both rows put 0.82 >= 0.25 on it
    ch = bsc(0.1)
    A = SequenceSet.from_ids(2, 2, [0, 3])
    d = SequenceDist.uniform_on(A)
    r = refine_quasi_to_image(ch, d, A, 0.5)
    assert r.witness.ids_list() == [0, 3]
    assert r.refined.ids_list() == [0, 3]
    assert r.min_row_mass == pytest.approx(0.82)
    assert r.certificate_ok and r.ratio_ok


def test_refine_certificate_random():
    rng = rng_from_seed(103)
    for _ in range(40):
        n = int(rng.integers(1, 5))
        ch = random_channel(rng, 2, 2)
        A = random_subset(rng, n, 2)
        d = random_dist_on(rng, A)
        r = refine_quasi_to_image(ch, d, A, float(rng.uniform(0.05, 1.0)))
        assert r.refined.size > 0
        assert r.certificate_ok and r.ratio_ok


def test_extract_identity_slack_zero():
    ch = identity_channel(2)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    result, step = extract_equal_cell(ch, d, A, 0.25, 0.5, 0.5)
    assert result.ids_list() == [0, 1, 2, 3]
    assert step.entropy_rate == pytest.approx(step.image_exponent_lower)
    assert step.slack == pytest.approx(0.0, abs=1e-12)


def test_extract_singleton():
    ch = bsc(0.1)
    A = SequenceSet.from_ids(2, 2, [2])
    d = SequenceDist.uniform_on(A)
    result, step = extract_equal_cell(ch, d, A, 0.3, 0.5, 0.5)
    assert result.ids_list() == [2]


def test_extract_bsc_ratio():
    ch = bsc(0.1)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    result, step = extract_equal_cell(ch, d, A, 0.3, 0.5, 0.5)
    assert result.size > 0
    assert step.ratio >= step.ratio_floor - 1e-9
    assert step.image_exact


def test_extract_main_identity_pair():
    chs = [identity_channel(2), identity_channel(2)]
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    result, trace = extract_main(chs, d, A, 0.5)
    assert result.ids_list() == A.ids_list()
    assert all(rec["two_sided_gap"] == pytest.approx(0.0, abs=1e-12)
               for rec in trace.per_channel)
    assert trace.ratio >= trace.ratio_floor


def test_extract_main_single_channel_reduces():
    # with one channel, the composition is exactly one extraction step
    from dmckit.partitioner import Schedule
    ch = bsc(0.15)
    A = SequenceSet.full_space(3, 2)
    d = SequenceDist.uniform_on(A)
    width = Schedule().width(0, 3, 1, None, None)
    direct, _ = extract_equal_cell(ch, d, A, width, 0.5, 0.5)
    composed, trace = extract_main([ch], d, A, 0.5)
    assert composed.ids_list() == direct.ids_list()
    assert len(trace.steps) == 1


def test_extract_main_two_channels():
    chs = [bsc(0.1), bsc(0.2)]
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    result, trace = extract_main(chs, d, A, 0.5)
    assert result.size > 0
    assert len(trace.steps) == 2
    for rec in trace.per_channel:
        assert rec["image_exact"]
        assert rec["two_sided_gap"] >= 0.0


# ---------------------------------------------------------------------------
# image-entropy partition and the equal-image-size partition
# ---------------------------------------------------------------------------

def test_image_entropy_partition_identity():
    part = build_image_entropy_partition(
        [identity_channel(2)],
        SequenceDist.uniform_on(SequenceSet.full_space(2, 2)),
        SequenceSet.full_space(2, 2), 0.5)
    assert part.cell_count == 1
    assert part.within_cap
    assert part.epsilon_measured == pytest.approx(0.0, abs=1e-12)


def test_image_entropy_partition_singleton():
    A = SequenceSet.from_ids(3, 2, [5])
    part = build_image_entropy_partition(
        [bsc(0.1)], SequenceDist.uniform_on(A), A, 0.5)
    assert part.cell_count == 1


def test_image_entropy_partition_bsc_structural():
    for n in (2, 3, 4):
        A = SequenceSet.full_space(n, 2)
        d = SequenceDist.uniform_on(A)
        part = build_image_entropy_partition([bsc(0.1)], d, A, 0.5)
        assert part.within_cap
        total = sum(c.size for c in part.index.cells.values())
        assert total == A.size
        for rec in part.records.values():
            assert rec.x_entropy_rate <= rec.set_exponent + 1e-9


def test_equal_image_partition_identity_all_zero_gaps():
    idc = identity_channel(2)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    M = PartitioningIndex.from_labeling(A, lambda s: s)
    eq = build_equal_image_partition([idc], d, A, [M], eta=0.5)
    assert eq.within_cap
    for val in eq.lambda_measured.values():
        assert val == pytest.approx(0.0, abs=1e-12)
    for rec in eq.cell_records.values():
        for mrec in rec["subsets"].values():
            assert mrec.messages_tilde == mrec.messages


def test_equal_image_partition_bsc_oracle():
    ch = bsc(0.1)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    M = first_bit_index(A)
    eq = build_equal_image_partition([ch], d, A, [M], eta=0.5)
    assert eq.within_cap
    # per cell and message, the recorded image exponents match the exact solver
    for label, cell in eq.index.cells.items():
        rec = eq.cell_records[label]["subsets"][(0,)]
        for m in rec.messages:
            inter = M.cell(m).intersect(cell)
            want = min_image_exact(ch, inter, 0.5).lower
            lo, hi, exact = rec.message_image_exponents[m][0]
            assert exact and lo == pytest.approx(math.log2(want) / 2)
        # image size of a message cell never exceeds the whole cell's
        g_cell = min_image_exact(ch, cell, 0.5).lower
        for m in rec.messages:
            inter = M.cell(m).intersect(cell)
            assert min_image_exact(ch, inter, 0.5).lower <= g_cell


def test_equal_image_partition_empty_subset_reduces():
    # S = (): a single pseudo-message carrying the whole cell
    ch = bsc(0.2)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    M = first_bit_index(A)
    eq = build_equal_image_partition([ch], d, A, [M], eta=0.5)
    for rec in eq.cell_records.values():
        srec = rec["subsets"][()]
        assert srec.messages == ((),)
        assert srec.aexp_messages == 0.0


def test_equal_image_partition_multi_iteration():
    # an atom far below 1/|V|^2 of the rest is dropped on the first pass and
    # swept into its own cell on the second
    tiny = 1e-5
    rest = (1.0 - tiny) / 3
    d = SequenceDist(2, 2, np.array([0, 1, 2, 3]),
                     np.array([rest, rest, rest, tiny]))
    A = d.support()
    M = first_bit_index(A)
    eq = build_equal_image_partition([bsc(0.1)], d, A, [M], eta=0.5)
    assert eq.iterations == 2
    assert eq.within_cap
    covered = sum(c.size for c in eq.index.cells.values())
    assert covered == A.size
    second_pass = [lab for lab in eq.index.cells if lab[0] == 2]
    assert second_pass and eq.index.cells[second_pass[0]].ids_list() == [3]


def test_equal_image_partition_caps_j():
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    M = PartitioningIndex.trivial(A)
    with pytest.raises(CapacityError):
        build_equal_image_partition([bsc(0.1)], d, A, [M, M, M, M], eta=0.5)


def test_partition_chain_rectangular_channel():
    # 2-symbol input, 3-symbol output: nothing in the chain assumes |X| = |Y|
    rng = rng_from_seed(211)
    ch = random_channel(rng, 2, 3, allow_zeros=False)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    result, step = extract_equal_cell(ch, d, A, 0.3, 0.5, 0.5)
    assert result.size > 0
    part = build_image_entropy_partition([ch], d, A, 0.5)
    assert part.within_cap
    M = first_bit_index(A)
    eq = build_equal_image_partition([ch], d, A, [M], eta=0.5)
    covered = sum(c.size for c in eq.index.cells.values())
    assert covered == A.size


def test_equal_image_partition_j2():
    ch = bsc(0.1)
    A = SequenceSet.full_space(2, 2)
    d = SequenceDist.uniform_on(A)
    M1 = PartitioningIndex.from_labeling(A, lambda s: s >> 1)
    M2 = PartitioningIndex.from_labeling(A, lambda s: s & 1)
    eq = build_equal_image_partition([ch], d, A, [M1, M2], eta=0.5)
    assert eq.within_cap
    assert len(eq.subsets) == 4
    total = sum(c.size for c in eq.index.cells.values())
    assert total == A.size


# ---------------------------------------------------------------------------
# entropy perturbation
# ---------------------------------------------------------------------------

def test_entropy_perturbation_examples():
    # E independent of S: H(E) = H(E|S=1)
    assert entropy_perturbation_bound(1.0, 1.0, 0.5, 1.0).passed
    # p = 1: bound collapses to the +1 bit term and lhs is 0
    rep = entropy_perturbation_bound(0.7, 0.7, 1.0, 3.0)
    item = rep.items[0]
    assert item.rhs == pytest.approx(1.0)
    assert rep.passed
    with pytest.raises(DomainError):
        entropy_perturbation_bound(1.0, 1.0, 0.0, 1.0)


def test_entropy_perturbation_random_joints():
    from dmckit.core import entropy_bits
    rng = rng_from_seed(107)
    for _ in range(100):
        card = int(rng.integers(2, 10))
        joint = rng.uniform(0.01, 1.0, size=(card, 2))
        joint /= joint.sum()
        p1 = float(joint[:, 1].sum())
        rep = entropy_perturbation_bound(
            entropy_bits(joint.sum(axis=1)),
            entropy_bits(joint[:, 1] / p1), p1, math.log2(card))
        assert rep.passed
