"""Multinomial logistic regression over random features.

The parameter matrix maps augmented feature vectors [z(x), 1] to class
logits.  It is stored either in full form, theta of shape (D+1, C), or
factored through a linear bottleneck of rank r as theta = u @ v with u of
shape (D+1, r) and v of shape (r, C).  The bias is the last row of theta
(or of u), so under the bottleneck it is rank-constrained along with
everything else.

Labels are 0-based integers in {0, ..., C-1} throughout the library; the
file formats in ``data`` use 1-based labels and convert at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _sampling


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Softmax classifier parameters, full or bottleneck-factored.

    Exactly one of ``theta`` / the (``u``, ``v``) pair is set.  Models are
    immutable value objects; training builds new instances.
    """

    num_features: int
    num_classes: int
    theta: np.ndarray | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        D, C = self.num_features, self.num_classes
        if self.theta is not None:
            if self.u is not None or self.v is not None:
                raise ValueError("set either theta or (u, v), not both")
            if self.theta.shape != (D + 1, C):
                raise ValueError(
                    f"theta must be shape {(D + 1, C)}, got {self.theta.shape}"
                )
        else:
            if self.u is None or self.v is None:
                raise ValueError("bottleneck form requires both u and v")
            r = self.u.shape[1]
            if not 1 <= r < min(D + 1, C):
                raise ValueError(
                    f"bottleneck rank must satisfy 1 <= r < min(D+1, C)={min(D + 1, C)}, "
                    f"got r={r}"
                )
            if self.u.shape != (D + 1, r) or self.v.shape != (r, C):
                raise ValueError(
                    f"expected u {(D + 1, r)} and v {(r, C)}, "
                    f"got {self.u.shape} and {self.v.shape}"
                )
        for arr in self.params():
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def is_bottleneck(self):
        return self.theta is None

    @property
    def rank(self):
        return self.u.shape[1] if self.is_bottleneck else None

    def params(self):
        """Parameter arrays as a tuple: (theta,) or (u, v)."""
        if self.is_bottleneck:
            return (self.u, self.v)
        return (self.theta,)

    def with_params(self, params):
        """New model with the same shape metadata and the given arrays."""
        if self.is_bottleneck:
            u, v = params
            return LogisticModel(self.num_features, self.num_classes, u=u, v=v)
        (theta,) = params
        return LogisticModel(self.num_features, self.num_classes, theta=theta)


def init_model(num_features, num_classes, rank=None, seed=0):
    """Fresh model: zeros for the full form, uniform fan-based for factors.

    Zero initialization is invalid for the bottleneck (the factored
    gradient vanishes at zero), so u and v draw i.i.d. Uniform(-a, a)
    with a = sqrt(6 / (fan_in + fan_out)).
    """
    D, C = int(num_features), int(num_classes)
    if rank is None:
        return LogisticModel(D, C, theta=np.zeros((D + 1, C)))
    rng = _sampling.stream(seed, _sampling.TAG_INIT)
    a_u = math.sqrt(6.0 / (D + 1 + rank))
    a_v = math.sqrt(6.0 / (rank + C))
    u = (2.0 * rng.random((D + 1, rank)) - 1.0) * a_u
    v = (2.0 * rng.random((rank, C)) - 1.0) * a_v
    return LogisticModel(D, C, u=u, v=v)


def _augment(Z):
    """Append the constant-1 bias column."""
    return np.hstack([Z, np.ones((Z.shape[0], 1))])


def _logits(params, A):
    if len(params) == 1:
        return A @ params[0], None
    u, v = params
    hidden = A @ u
    return hidden @ v, hidden


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def _check_labels(y, num_classes):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-D array")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes - 1}], "
            f"got range [{y.min()}, {y.max()}]"
        )
    return y.astype(np.int64)


def predict_proba(model, Z):
    """Class probabilities, one row per example; rows sum to 1.

    Softmax is computed with max subtraction, so any common shift of a
    row's logits leaves its probabilities unchanged.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.num_features:
        raise ValueError(
            f"Z must be (N, {model.num_features}), got shape {Z.shape}"
        )
    logits, _ = _logits(model.params(), _augment(Z))
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    p = np.exp(_log_softmax(logits))
    return p / p.sum(axis=1, keepdims=True)


def _loss_and_grad_arrays(params, A, y):
    """Mean cross-entropy and gradients on pre-augmented features A."""
    n = A.shape[0]
    logits, hidden = _logits(params, A)
    logp = _log_softmax(logits)
    rows = np.arange(n)
    ce = -float(logp[rows, y].mean())
    resid = np.exp(logp)
    resid[rows, y] -= 1.0
    if len(params) == 1:
        return ce, (A.T @ resid / n,)
    _, v = params
    grad_u = A.T @ (resid @ v.T) / n
    grad_v = hidden.T @ resid / n
    return ce, (grad_u, grad_v)


def loss_and_grad(model, Z, y):
    """Mean cross-entropy (nats) and its gradient w.r.t. the parameters.

    Returns (ce, grads) with grads a tuple matching ``model.params()``:
    full form (1/N) A.T (P - Y); bottleneck by the chain rule through
    theta = u v.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = _check_labels(y, model.num_classes)
    if Z.shape[0] != y.shape[0]:
        raise ValueError(f"{Z.shape[0]} feature rows but {y.shape[0]} labels")
    return _loss_and_grad_arrays(model.params(), _augment(Z), y)


def effective_theta(model):
    """The full (D+1, C) parameter matrix; u @ v for the bottleneck form."""
    if model.is_bottleneck:
        return model.u @ model.v
    return model.theta


def feature_row_norms(theta):
    """Per-feature l2 norms of theta's rows, excluding the bias row.

    Row i of theta holds the weights attached to feature i across all
    classes; the returned vector has length D (the bias row D+1 is not a
    random feature and is never scored).
    """
    theta = np.asarray(theta, dtype=np.float64)
    return np.sqrt((theta[:-1] ** 2).sum(axis=1))


def param_count(model):
    """Number of trainable scalars, bias row included.

    Full: (D+1) C.  Bottleneck: (D+1) r + r C, i.e. the textbook
    D r + r C plus the r bias parameters in u's last row.
    """
    return int(sum(p.size for p in model.params()))
