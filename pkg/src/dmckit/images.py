"""Minimum quasi-images (exact greedy), minimum images (exact branch-and-bound
at desk scale, bracketed beyond), Hamming blow-ups, and the measured
continuity / entropy lower-bound reports.

There is no known closed form for the minimum image size of a non-singleton
set, so the exact solver below is a depth-first branch-and-bound over output
columns: it minimizes |B| subject to P^n(B|x) >= eta for every row x, pruning
by best-case achievable residual mass and by a per-row count lower bound.
All ties break on ascending packed-sequence integers, so results are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (Channel, Sequence, SequenceDist, SequenceSet, aexp,
                   output_dist, output_rows)
from .errors import CapacityError, DomainError
from .reports import BoundReport

#: Largest number of output columns the exact solver will search.
EXACT_SOLVER_CAP = 24

#: Non-strict threshold slack for ">= eta" comparisons.
ETA_TOL = 1e-12


@dataclass(frozen=True)
class QuasiImageResult:
    size: int
    witness: SequenceSet
    eta_achieved: float


@dataclass(frozen=True)
class ImageBracket:
    lower: int
    upper: int
    upper_witness: SequenceSet
    exact: bool
    method: str


@dataclass(frozen=True)
class GapReport:
    alpha: float
    beta: float
    exponent_alpha: float
    exponent_beta: float
    gap: float


def _check_eta(eta: float):
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")


def min_quasi_image(ch: Channel, input_dist: SequenceDist | None,
                    A: SequenceSet, eta: float) -> QuasiImageResult:
    """Smallest output set with conditional mass >= eta given the input in A.

    The minimum is achieved by the highest-probability outputs, so sorting by
    P(y | X in A) descending (ties by ascending id) and cutting at eta is
    exact.  When no input distribution is supplied, the input is uniform on A.
    """
    _check_eta(eta)
    if input_dist is None:
        input_dist = SequenceDist.uniform_on(A)
    out = output_dist(ch, input_dist.conditioned_on(A))
    order = np.lexsort((out.ids, -out.probs))
    cum = 0.0
    chosen: list[int] = []
    for idx in order:
        chosen.append(int(out.ids[idx]))
        cum += float(out.probs[idx])
        if cum >= eta - ETA_TOL:
            break
    witness = SequenceSet.from_ids(out.n, out.base, chosen)
    return QuasiImageResult(size=witness.size, witness=witness, eta_achieved=cum)


def singleton_image_size(ch: Channel, x: Sequence, eta: float) -> int:
    """Minimum image size of a single input word: greedy over its row."""
    _check_eta(eta)
    A = SequenceSet.from_ids(x.n, x.base, [x.value])
    row = output_rows(ch, A)[0]
    order = np.lexsort((np.arange(row.size), -row))
    cum = 0.0
    count = 0
    for idx in order:
        cum += float(row[idx])
        count += 1
        if cum >= eta - ETA_TOL:
            return count
    return count


def _greedy_cover(rows: np.ndarray, eta: float) -> list[int]:
    """Greedy eta-image: repeatedly serve the row with the largest remaining
    deficit, adding the output that reduces that row's deficit the most."""
    n_rows, n_cols = rows.shape
    mass = np.zeros(n_rows)
    available = np.ones(n_cols, dtype=bool)
    chosen: list[int] = []
    while True:
        deficits = eta - ETA_TOL - mass
        worst = int(np.argmax(deficits))
        if deficits[worst] <= 0.0:
            return chosen
        gains = np.where(available, rows[worst], -1.0)
        best = int(np.lexsort((np.arange(n_cols), -gains))[0])
        if gains[best] <= 0.0:
            # row sums to 1, so a positive-deficit row always has mass left
            raise DomainError("eta unreachable for some row")
        chosen.append(best)
        available[best] = False
        mass += rows[:, best]


def _count_lower_bound(rows, order_desc, mass, available, eta) -> int:
    """Minimum number of further columns any completion needs."""
    need = 0
    n_cols = rows.shape[1]
    for i in range(rows.shape[0]):
        deficit = eta - ETA_TOL - mass[i]
        if deficit <= 0.0:
            continue
        cum = 0.0
        cnt = 0
        covered = False
        for j in order_desc[i]:
            if not available[j]:
                continue
            cum += float(rows[i, j])
            cnt += 1
            if cum >= deficit:
                covered = True
                break
        if not covered:
            return n_cols + 1  # infeasible under current exclusions
        need = max(need, cnt)
    return need


def min_image_exact(ch: Channel, A: SequenceSet, eta: float) -> ImageBracket:
    """Exact minimum eta-image size via branch-and-bound over output columns.

    Branching always covers the row with the largest remaining deficit,
    trying its available outputs in decreasing coverage (ties ascending id)
    and excluding each tried output from later branches so no subset is
    visited twice.  After the optimum size is known, a second lexicographic
    pass recovers the least witness of that size.
    """
    _check_eta(eta)
    if A.size == 0:
        raise DomainError("A must be nonempty")
    n_cols = ch.output.size ** A.n
    if n_cols > EXACT_SOLVER_CAP:
        raise CapacityError(
            f"output space {n_cols} exceeds the exact-solver cap {EXACT_SOLVER_CAP}; "
            "use min_image_bracket")
    rows = output_rows(ch, A)
    incumbent = _greedy_cover(rows, eta)
    best_size = len(incumbent)

    col_order = np.arange(n_cols)
    order_desc = np.argsort(-rows, axis=1, kind="stable")

    def search(mass, available, chosen_count):
        nonlocal best_size
        deficits = eta - ETA_TOL - mass
        worst = int(np.argmax(deficits))
        if deficits[worst] <= 0.0:
            best_size = min(best_size, chosen_count)
            return
        lb = _count_lower_bound(rows, order_desc, mass, available, eta)
        if chosen_count + lb >= best_size:
            return
        gains = np.where(available, rows[worst], -1.0)
        candidates = [int(j) for j in np.lexsort((col_order, -gains))
                      if available[j] and gains[j] > 0.0]
        # branch i commits to candidate i and forbids candidates 0..i-1, so
        # every feasible cover is reached exactly once
        remaining = available.copy()
        for j in candidates:
            if chosen_count + 1 >= best_size:
                return
            remaining[j] = False
            search(mass + rows[:, j], remaining.copy(), chosen_count + 1)

    search(np.zeros(A.size), np.ones(n_cols, dtype=bool), 0)
    witness = _lex_min_witness(rows, eta, best_size)
    out_set = SequenceSet.from_ids(A.n, ch.output.size, witness)
    return ImageBracket(lower=best_size, upper=best_size, upper_witness=out_set,
                        exact=True, method="branch-and-bound")


def _lex_min_witness(rows: np.ndarray, eta: float, size_cap: int) -> list[int]:
    """Lexicographically least feasible column set of size <= size_cap."""
    n_cols = rows.shape[1]
    order_desc = np.argsort(-rows, axis=1, kind="stable")

    def rec(start, mass, chosen):
        deficits = eta - ETA_TOL - mass
        if float(np.max(deficits)) <= 0.0:
            return chosen
        if len(chosen) >= size_cap:
            return None
        available = np.zeros(n_cols, dtype=bool)
        available[start:] = True
        if len(chosen) + _count_lower_bound(rows, order_desc, mass,
                                            available, eta) > size_cap:
            return None
        for j in range(start, n_cols):
            got = rec(j + 1, mass + rows[:, j], chosen + [j])
            if got is not None:
                return got
        return None

    found = rec(0, np.zeros(rows.shape[0]), [])
    if found is None:
        raise DomainError("no feasible image at the computed optimum size")
    return found


def min_image_bracket(ch: Channel, A: SequenceSet, eta: float) -> ImageBracket:
    """Greedy upper bound and a sound lower bound on the minimum image size.

    lower = max(largest singleton image over rows of A,
                minimum quasi-image size under the uniform input on A);
    both dominate because any eta-image is an eta-quasi-image and contains an
    eta-image of each singleton.
    """
    _check_eta(eta)
    if A.size == 0:
        raise DomainError("A must be nonempty")
    n_cols = ch.output.size ** A.n
    rows = output_rows(ch, A)
    upper_cols = _greedy_cover(rows, eta)
    witness = SequenceSet.from_ids(A.n, ch.output.size, upper_cols)
    singleton_lb = max(
        singleton_image_size(ch, Sequence(A.n, ch.input.size, sid), eta)
        for sid in A.ids_list())
    quasi_lb = min_quasi_image(ch, None, A, eta).size
    lower = max(singleton_lb, quasi_lb)
    return ImageBracket(lower=lower, upper=len(upper_cols), upper_witness=witness,
                        exact=lower == len(upper_cols),
                        method="greedy-cover/singleton-quasi-lower")


def min_image(ch: Channel, A: SequenceSet, eta: float) -> ImageBracket:
    """Exact solve when within the cap, bracket otherwise."""
    if ch.output.size ** A.n <= EXACT_SOLVER_CAP:
        return min_image_exact(ch, A, eta)
    return min_image_bracket(ch, A, eta)


def image_exponents(ch: Channel, A: SequenceSet, eta: float) -> tuple[float, float, bool]:
    """(lower, upper) per-letter exponents of the minimum image size."""
    br = min_image(ch, A, eta)
    return aexp(br.lower, A.n), aexp(br.upper, A.n), br.exact


def hamming_blowup(B: SequenceSet, radius: int) -> SequenceSet:
    """All words within Hamming distance `radius` of B, by BFS on substitutions."""
    if not 0 <= radius <= B.n:
        raise DomainError("blow-up radius must lie in [0, n]")
    base, n = B.base, B.n
    place = [base ** (n - 1 - i) for i in range(n)]
    seen = set(B.ids_list())
    frontier = set(seen)
    for _ in range(radius):
        new = set()
        for sid in frontier:
            v = sid
            for i in range(n):
                digit = (sid // place[i]) % base
                stem = sid - digit * place[i]
                for s in range(base):
                    if s == digit:
                        continue
                    cand = stem + s * place[i]
                    if cand not in seen:
                        new.add(cand)
        if not new:
            break
        seen |= new
        frontier = new
    return SequenceSet.from_ids(n, base, seen)


def image_exponent_gap(ch: Channel, A: SequenceSet, alpha: float,
                       beta: float) -> GapReport:
    """Measured continuity gap (1/n)[log2 g(A,beta) - log2 g(A,alpha)]."""
    if not 0.0 < alpha < beta < 1.0 + ETA_TOL:
        raise DomainError("need 0 < alpha < beta <= 1")
    ga = min_image_exact(ch, A, alpha)
    gb = min_image_exact(ch, A, beta)
    ea = aexp(ga.lower, A.n)
    eb = aexp(gb.lower, A.n)
    return GapReport(alpha=alpha, beta=beta, exponent_alpha=ea, exponent_beta=eb,
                     gap=max(0.0, eb - ea))


def verify_entropy_lower_bound(ch: Channel, input_dist: SequenceDist | None,
                               A_prime: SequenceSet, eta: float) -> BoundReport:
    """Measure cexp g(A', eta) against (1/n) H(Y^n | X^n in A').

    Only the measured ordering with its finite-n slack is reported; no
    asymptotic constant is asserted.
    """
    _check_eta(eta)
    if input_dist is None:
        input_dist = SequenceDist.uniform_on(A_prime)
    lo, hi, exact = image_exponents(ch, A_prime, eta)
    h_rate = output_dist(ch, input_dist.conditioned_on(A_prime)).entropy() / A_prime.n
    slack = h_rate - lo
    report = BoundReport("image-exponent-vs-entropy",
                         details={"image_exponent_lower": lo,
                                  "image_exponent_upper": hi,
                                  "exact": exact,
                                  "entropy_rate": h_rate,
                                  "slack": slack})
    report.add("entropy-minus-exponent", h_rate, lo + max(slack, 0.0), True,
               slack=slack)
    return report
