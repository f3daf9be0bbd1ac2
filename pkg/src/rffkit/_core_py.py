"""Pure-numpy implementations of the hot kernels.

Fallback for the compiled extension in ``_core.pyx``.  Each function here
must follow the same arithmetic (accumulation order, index clamping) as
its compiled twin so the two backends agree to rounding error; see
``tests/test_backends.py`` for the cross-checks.
"""

from __future__ import annotations

import itertools

import numpy as np

# Subsets per chunk when enumerating coordinate subsets.
_ENUM_CHUNK = 1 << 16


def cos_features_dense(X, omega, b, scale):
    """scale * cos(X @ omega.T + b) for a dense projection matrix.

    X is (N, d), omega is (D, d), b is (D,); returns (N, D).
    """
    return scale * np.cos(X @ omega.T + b)


def cos_features_sparse(X, support, values, b, scale):
    """Cosine features for row-sparse projections.

    support and values are (D, k): row i of the projection matrix has
    value values[i, j] at column support[i, j] and zeros elsewhere.
    """
    n = X.shape[0]
    k = support.shape[1]
    proj = np.zeros((n, support.shape[0]))
    for j in range(k):
        proj += X[:, support[:, j]] * values[:, j]
    return scale * np.cos(proj + b)


def floyd_subsets(u, d):
    """Size-k subsets of {0..d-1} from uniforms via Floyd's algorithm.

    u is (n, k) with entries in [0, 1); consumes exactly one uniform per
    selected element.  Returns (n, k) int64 with each row sorted ascending.
    """
    n, k = u.shape
    if k > d:
        raise ValueError(f"cannot draw {k} distinct coordinates from {d}")
    sel = np.empty((n, k), dtype=np.int64)
    for step, j in enumerate(range(d - k, d)):
        t = (u[:, step] * (j + 1)).astype(np.int64)
        np.minimum(t, j, out=t)  # guard the u -> floor(u*(j+1)) edge at u ~ 1
        if step > 0:
            dup = (sel[:, :step] == t[:, None]).any(axis=1)
            sel[:, step] = np.where(dup, j, t)
        else:
            sel[:, step] = t
    sel.sort(axis=1)
    return sel


def subset_exp_mean(w, k):
    """Mean of exp(-sum(w[F])) over all size-k subsets F of {0..d-1}.

    w is a (d,) array of non-negative weights.  Enumerates subsets in
    lexicographic order; the caller is responsible for capping the count.
    """
    d = w.shape[0]
    total = 0.0
    count = 0
    combos = itertools.combinations(range(d), k)
    while True:
        chunk = list(itertools.islice(combos, _ENUM_CHUNK))
        if not chunk:
            break
        idx = np.array(chunk, dtype=np.int64)
        total += np.exp(-w[idx].sum(axis=1)).sum()
        count += len(chunk)
    return total / count
