import numpy as np
import pytest

from dmckit.core import SequenceDist, SequenceSet


@pytest.fixture(autouse=True)
def _quiet_delta_warning():
    # the internal 2*delta slicing routinely crosses 1; that warning is by design
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


def uniform_on_ids(n, base, ids):
    return SequenceDist.uniform_on(SequenceSet.from_ids(n, base, ids))


def exhaustive_min_quasi_size(out_dist, eta, tol=1e-12):
    """Brute-force minimum eta-quasi-image size over all nonempty subsets."""
    m = out_dist.base ** out_dist.n
    dense = np.zeros(m)
    for i, p in out_dist.items():
        dense[i] = p
    best = m + 1
    for mask in range(1, 1 << m):
        bits = [(mask >> j) & 1 for j in range(m)]
        mass = float(np.dot(bits, dense))
        if mass >= eta - tol:
            best = min(best, sum(bits))
    return best


def exhaustive_min_image_size(rows, eta, tol=1e-12):
    """Brute-force minimum eta-image size, vectorized over all subsets."""
    n_rows, m = rows.shape
    subsets = np.arange(1, 1 << m, dtype=np.int64)
    bits = ((subsets[:, None] >> np.arange(m)) & 1).astype(np.float64)
    masses = bits @ rows.T
    feasible = (masses >= eta - tol).all(axis=1)
    if not feasible.any():
        return m + 1
    sizes = bits.sum(axis=1)
    return int(sizes[feasible].min())
