"""Shift-invariant kernels and their random cosine feature maps.

Three kernel families are supported, each properly scaled so that
k(x, x) = 1:

* Gaussian        exp(-||x - y||_2^2 / (2 sigma^2))
* Laplacian       exp(-lam * ||x - y||_1)
* Sparse Gaussian the average of Gaussian kernels restricted to every
                  size-k coordinate subset

Each family pairs an exact evaluation with a random feature map whose
inner products approximate it: z_i(x) = sqrt(2/D) * cos(omega_i.x + b_i),
with omega_i drawn from the kernel's spectral density and b_i uniform on
[0, 2pi).  Sampling is fully deterministic given (spec, d, D, seed), and
each row draws from its own stream (see ``_sampling``), so growing D or
resampling a subset of rows never perturbs the other rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import _backend, _sampling

GAUSSIAN = "gaussian"
LAPLACIAN = "laplacian"
SPARSE_GAUSSIAN = "sparse_gaussian"

FAMILIES = (GAUSSIAN, LAPLACIAN, SPARSE_GAUSSIAN)

# Exact sparse-Gaussian evaluation enumerates all C(d, k) coordinate
# subsets; above this count it refuses rather than silently approximating.
ENUMERATION_CAP = 1_000_000

# Hard ceiling on Gram matrix size; beyond desk scale use features instead.
MAX_GRAM_POINTS = 5000


class EnumerationCapError(Exception):
    """Exact subset enumeration would exceed ENUMERATION_CAP.

    Callers should fall back to a Monte Carlo estimate (e.g.
    ``mc_subset_estimate``).
    """

    def __init__(self, d, k, count):
        self.subset_count = count
        super().__init__(
            f"C({d}, {k}) = {count} coordinate subsets exceeds the "
            f"enumeration cap of {ENUMERATION_CAP}"
        )


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel family, with its hyperparameters.

    ``sigma`` applies to the Gaussian families, ``lam`` to the Laplacian,
    and ``k`` (the coordinate subset size) to the sparse Gaussian only.
    """

    family: str
    sigma: float | None = None
    lam: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family in (GAUSSIAN, SPARSE_GAUSSIAN):
            if self.sigma is None or not self.sigma > 0:
                raise ValueError(f"{self.family} kernel requires sigma > 0")
        if self.family == LAPLACIAN:
            if self.lam is None or not self.lam > 0:
                raise ValueError("laplacian kernel requires lam > 0")
        if self.family == SPARSE_GAUSSIAN:
            if self.k is None or self.k < 1:
                raise ValueError("sparse_gaussian kernel requires k >= 1")

    @classmethod
    def gaussian(cls, sigma):
        return cls(GAUSSIAN, sigma=float(sigma))

    @classmethod
    def laplacian(cls, lam):
        return cls(LAPLACIAN, lam=float(lam))

    @classmethod
    def sparse_gaussian(cls, sigma, k):
        return cls(SPARSE_GAUSSIAN, sigma=float(sigma), k=int(k))

    def check_dim(self, d):
        """Validate this spec against an input dimension."""
        if self.family == SPARSE_GAUSSIAN and self.k > d:
            raise ValueError(
                f"sparse_gaussian subset size k={self.k} exceeds input dimension d={d}"
            )


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A sampled random Fourier feature map.

    Dense families store the projection matrix ``omega`` of shape (D, d);
    the sparse Gaussian stores each row's k-element ``support`` (sorted
    column indices, shape (D, k)) and the matching nonzero ``values``.
    Phases ``b`` lie in [0, 2pi).  Arrays are frozen read-only; rebuild
    via ``sample_feature_map`` or ``resample_rows`` instead of mutating.
    """

    spec: KernelSpec
    d: int
    D: int
    seed: int
    b: np.ndarray = field(repr=False)
    omega: np.ndarray | None = field(default=None, repr=False)
    support: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.is_sparse:
            if self.support is None or self.values is None:
                raise ValueError("sparse feature map requires support and values")
        elif self.omega is None:
            raise ValueError("dense feature map requires omega")
        for arr in (self.b, self.omega, self.support, self.values):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def is_sparse(self):
        return self.spec.family == SPARSE_GAUSSIAN

    @property
    def scale(self):
        return math.sqrt(2.0 / self.D)

    def dense_omega(self):
        """Materialize the (D, d) projection matrix, densifying sparse rows."""
        if not self.is_sparse:
            return self.omega
        dense = np.zeros((self.D, self.d))
        np.put_along_axis(dense, self.support, self.values, axis=1)
        return dense


def _draw_rows(spec, d, D, seed, round_index):
    """Raw (omega | support/values, b) arrays for one sampling round."""
    u_omega = _sampling.uniform_block(seed, _sampling.TAG_OMEGA, round_index, (D, d))
    b = 2.0 * np.pi * _sampling.uniform_block(seed, _sampling.TAG_PHASE, round_index, D)
    if spec.family == GAUSSIAN:
        return _sampling.gaussian_from_uniform(u_omega, spec.sigma), None, None, b
    if spec.family == LAPLACIAN:
        return _sampling.cauchy_from_uniform(u_omega, spec.lam), None, None, b
    u_sub = _sampling.uniform_block(seed, _sampling.TAG_SUBSET, round_index, (D, spec.k))
    support = _backend.floyd_subsets(u_sub, d)
    picked = np.take_along_axis(u_omega, support, axis=1)
    values = _sampling.gaussian_from_uniform(picked, spec.sigma)
    return None, support, values, b


def sample_feature_map(spec, d, D, seed):
    """Draw a D-feature map for d-dimensional inputs, deterministically.

    Equal (spec, d, D, seed) always reproduce the same map bit-for-bit,
    and the first D rows of a larger map coincide with the smaller one.
    """
    d, D = int(d), int(D)
    if d < 1 or D < 1:
        raise ValueError(f"need d >= 1 and D >= 1, got d={d}, D={D}")
    spec.check_dim(d)
    seed = _sampling.check_seed(seed)
    omega, support, values, b = _draw_rows(spec, d, D, seed, round_index=0)
    return FeatureMap(spec=spec, d=d, D=D, seed=seed, b=b,
                      omega=omega, support=support, values=values)


def resample_rows(fmap, rows, round_index):
    """Redraw the given rows of a feature map from a later sampling round.

    Row i's new draw depends only on (spec, d, D, seed, round_index, i):
    which other rows are being kept has no effect on it.  Rows not listed
    are carried over bit-identically.
    """
    rows = np.asarray(rows, dtype=np.int64)
    omega, support, values, b_new = _draw_rows(
        fmap.spec, fmap.d, fmap.D, fmap.seed, round_index
    )
    b = fmap.b.copy()
    b[rows] = b_new[rows]
    kwargs = {}
    if fmap.is_sparse:
        new_support = fmap.support.copy()
        new_values = fmap.values.copy()
        new_support[rows] = support[rows]
        new_values[rows] = values[rows]
        kwargs = {"support": new_support, "values": new_values}
    else:
        new_omega = fmap.omega.copy()
        new_omega[rows] = omega[rows]
        kwargs = {"omega": new_omega}
    return FeatureMap(spec=fmap.spec, d=fmap.d, D=fmap.D, seed=fmap.seed,
                      b=b, **kwargs)


def apply_feature_map(fmap, X):
    """Map data X (N, d) to cosine features Z (N, D).

    Entry (n, i) is sqrt(2/D) * cos(omega_i . x_n + b_i); every entry is
    bounded by sqrt(2/D) in magnitude.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[1] != fmap.d:
        raise ValueError(
            f"X has {X.shape[1]} columns but the feature map expects {fmap.d}"
        )
    if fmap.is_sparse:
        return _backend.cos_features_sparse(
            X, fmap.support, fmap.values, fmap.b, fmap.scale
        )
    return _backend.cos_features_dense(X, fmap.omega, fmap.b, fmap.scale)


def approx_kernel(fmap, x, y):
    """Monte Carlo kernel estimate z(x).z(y); lies in [-2, 2]."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    zx = apply_feature_map(fmap, x)
    zy = apply_feature_map(fmap, y)
    return float(zx[0] @ zy[0])


def _as_pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size < 1:
        raise ValueError("inputs must have at least one coordinate")
    return x, y


def subset_count(d, k):
    return math.comb(d, k)


def eval_exact(spec, x, y):
    """Exact kernel value k(x, y).

    The sparse Gaussian is evaluated by explicit enumeration of all
    C(d, k) coordinate subsets and raises EnumerationCapError beyond
    ENUMERATION_CAP subsets.
    """
    x, y = _as_pair(x, y)
    d = x.shape[0]
    spec.check_dim(d)
    if spec.family == GAUSSIAN:
        sq = float(np.sum((x - y) ** 2))
        return math.exp(-sq / (2.0 * spec.sigma ** 2))
    if spec.family == LAPLACIAN:
        return math.exp(-spec.lam * float(np.sum(np.abs(x - y))))
    count = subset_count(d, spec.k)
    if count > ENUMERATION_CAP:
        raise EnumerationCapError(d, spec.k, count)
    w = np.ascontiguousarray((x - y) ** 2 / (2.0 * spec.sigma ** 2))
    return float(_backend.subset_exp_mean(w, spec.k))


def mc_subset_estimate(spec, x, y, num_subsets, seed):
    """Monte Carlo estimate of the sparse Gaussian kernel.

    Averages exp(-||x_F - y_F||^2 / 2 sigma^2) over ``num_subsets``
    uniformly drawn size-k coordinate subsets F.  Returns (estimate,
    standard error); the independent check against ``eval_exact``.
    """
    if spec.family != SPARSE_GAUSSIAN:
        raise ValueError("subset Monte Carlo applies to the sparse Gaussian only")
    x, y = _as_pair(x, y)
    spec.check_dim(x.shape[0])
    u = _sampling.uniform_block(seed, _sampling.TAG_SUBSET, 0, (num_subsets, spec.k))
    subsets = _backend.floyd_subsets(u, x.shape[0])
    w = (x - y) ** 2 / (2.0 * spec.sigma ** 2)
    vals = np.exp(-w[subsets].sum(axis=1))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(num_subsets))


def mc_identity_check(spec, x, y, num_samples, seed):
    """Monte Carlo check of E[2 cos(w.x + b) cos(w.y + b)] = k(x, y).

    Draws ``num_samples`` fresh (omega, b) pairs and returns (estimate,
    standard error).  The estimate should land within a few standard
    errors of ``eval_exact`` for every kernel family.
    """
    if num_samples < 100:
        raise ValueError(f"need num_samples >= 100, got {num_samples}")
    x, y = _as_pair(x, y)
    d = x.shape[0]
    spec.check_dim(d)
    omega, support, values, b = _draw_rows(spec, d, num_samples, seed, round_index=0)
    if support is not None:
        px = np.zeros(num_samples)
        py = np.zeros(num_samples)
        for j in range(support.shape[1]):
            px += x[support[:, j]] * values[:, j]
            py += y[support[:, j]] * values[:, j]
    else:
        px = omega @ x
        py = omega @ y
    terms = 2.0 * np.cos(px + b) * np.cos(py + b)
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(num_samples))


def gram_matrix(spec_or_map, X):
    """N x N kernel matrix, exact (KernelSpec) or approximate (FeatureMap).

    Exact mode has unit diagonal and is positive semidefinite up to
    eigensolver noise; approximate mode returns Z @ Z.T.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    if n > MAX_GRAM_POINTS:
        raise ValueError(f"Gram matrix guard: N={n} exceeds {MAX_GRAM_POINTS}")
    if isinstance(spec_or_map, FeatureMap):
        Z = apply_feature_map(spec_or_map, X)
        return Z @ Z.T
    spec = spec_or_map
    spec.check_dim(X.shape[1])
    if spec.family == GAUSSIAN:
        sq = cdist(X, X, "sqeuclidean")
        return np.exp(-sq / (2.0 * spec.sigma ** 2))
    if spec.family == LAPLACIAN:
        l1 = cdist(X, X, "cityblock")
        return np.exp(-spec.lam * l1)
    count = subset_count(X.shape[1], spec.k)
    if count > ENUMERATION_CAP:
        raise EnumerationCapError(X.shape[1], spec.k, count)
    K = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            w = np.ascontiguousarray((X[i] - X[j]) ** 2 / (2.0 * spec.sigma ** 2))
            K[i, j] = K[j, i] = _backend.subset_exp_mean(w, spec.k)
    return K
