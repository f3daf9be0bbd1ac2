"""Iterative random feature selection.

The selector runs T rounds.  Each round redraws every feature slot not
currently retained, trains a throwaway softmax model with a single SGD
pass over R uniformly chosen training examples, and keeps the s_t feature
slots whose parameter rows have the largest l2 norms.  The final round
only redraws the unretained slots and returns the map: retained features
keep their (omega, b) bit-for-bit, the rest are fresh, and the caller
trains the real model from scratch on the result.

Cost: T passes over R examples, roughly T*R/N full epochs.  Under the
default schedule s_t = floor(D*t/T) the run exposes D*(T+1)/2 distinct
features in total while the model never grows past D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _sampling
from .kernels import apply_feature_map, resample_rows, sample_feature_map
from .model import effective_theta, feature_row_norms, init_model
from .training import TrainConfig, sgd_epoch


@dataclass(frozen=True)
class SelectionSchedule:
    """Iteration plan: T rounds toward D features, retaining s_t per round.

    thresholds = (s_1, ..., s_{T-1}) must be strictly increasing with
    0 < s_1 and s_{T-1} < D.  R is the number of training examples used
    for each round's throwaway model.
    """

    D: int
    T: int
    R: int
    thresholds: tuple

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(int(s) for s in self.thresholds))
        if self.T < 1:
            raise ValueError(f"need T >= 1, got {self.T}")
        if self.R < 1:
            raise ValueError(f"need R >= 1, got {self.R}")
        if len(self.thresholds) != self.T - 1:
            raise ValueError(
                f"expected {self.T - 1} thresholds for T={self.T}, "
                f"got {len(self.thresholds)}"
            )
        prev = 0
        for s in self.thresholds:
            if not prev < s < self.D:
                raise ValueError(
                    f"thresholds must satisfy 0 < s_1 < ... < s_(T-1) < D, "
                    f"got {self.thresholds} with D={self.D}"
                )
            prev = s


def default_schedule(D, T, R=None):
    """The evenly spaced schedule s_t = floor(D*t/T).

    Requires T >= 2 and D >= T so the thresholds are strictly increasing.
    R defaults to D (one throwaway-SGD example per target feature).
    """
    D, T = int(D), int(T)
    if T < 2:
        raise ValueError(f"need T >= 2 for a non-degenerate schedule, got {T}")
    if D < T:
        raise ValueError(f"need D >= T, got D={D}, T={T}")
    thresholds = tuple(D * t // T for t in range(1, T))
    return SelectionSchedule(D=D, T=T, R=D if R is None else int(R),
                             thresholds=thresholds)


def top_rows(theta, s):
    """Indices of the s features with the largest parameter-row norms.

    The bias row never participates.  Ties break toward the lower index;
    the result is sorted ascending.
    """
    norms = feature_row_norms(theta)
    if not 1 <= s <= norms.shape[0]:
        raise ValueError(f"s must lie in [1, {norms.shape[0]}], got {s}")
    order = np.argsort(-norms, kind="stable")
    return np.sort(order[:s])


@dataclass(frozen=True)
class IterationDiagnostics:
    """Per-round selection summary for the diagnostics CSV."""

    iteration: int
    retained: int
    min_norm: float
    median_norm: float
    max_norm: float


@dataclass(frozen=True)
class SelectionResult:
    feature_map: object
    diagnostics: list
    draws_generated: int  # distinct (omega, b) pairs sampled over the run
    retained: np.ndarray  # slots still holding selected features at the end


def select_features(spec, dataset, schedule, train_config=None, rank=None, seed=0):
    """Run the iterative selection and return the final feature map.

    Each round's throwaway model starts from a fresh initialization and
    sees one SGD pass over R examples drawn without replacement.  Under a
    bottleneck config (``rank``), selection scores the rows of u @ v.
    Per-slot draws are keyed by (seed, round, slot), so a slot's redraw
    is the same no matter which other slots were retained.
    """
    if train_config is None:
        train_config = TrainConfig()
    n = dataset.X.shape[0]
    if schedule.R > n:
        raise ValueError(
            f"schedule asks for R={schedule.R} examples but the dataset has {n}"
        )
    seed = _sampling.check_seed(seed)
    fmap = sample_feature_map(spec, dataset.X.shape[1], schedule.D, seed)
    draws = schedule.D
    retained = np.empty(0, dtype=np.int64)
    diagnostics = []
    for t in range(1, schedule.T + 1):
        if t > 1:
            unselected = np.setdiff1d(np.arange(schedule.D), retained)
            fmap = resample_rows(fmap, unselected, round_index=t - 1)
            draws += unselected.shape[0]
        if t == schedule.T:
            break
        picks = _sampling.stream(seed, _sampling.TAG_EXAMPLES, t).permutation(n)[
            : schedule.R
        ]
        Z = apply_feature_map(fmap, dataset.X[picks])
        probe = init_model(
            schedule.D, dataset.num_classes, rank=rank,
            seed=_derive_round_seed(seed, t),
        )
        probe = sgd_epoch(
            probe, Z, dataset.y[picks],
            train_config.learning_rate, train_config.batch_size,
            _sampling.stream(seed, _sampling.TAG_SHUFFLE, t),
            weight_decay=train_config.weight_decay,
        )
        theta = effective_theta(probe)
        retained = top_rows(theta, schedule.thresholds[t - 1])
        kept = feature_row_norms(theta)[retained]
        diagnostics.append(IterationDiagnostics(
            iteration=t,
            retained=retained.shape[0],
            min_norm=float(kept.min()),
            median_norm=float(np.median(kept)),
            max_norm=float(kept.max()),
        ))
    return SelectionResult(feature_map=fmap, diagnostics=diagnostics,
                           draws_generated=draws, retained=retained)


def _derive_round_seed(seed, round_index):
    ss = np.random.SeedSequence(entropy=seed,
                                spawn_key=(_sampling.TAG_INIT, round_index))
    return int(ss.generate_state(1, np.uint64)[0])


def diagnostics_csv_lines(diagnostics):
    """Selection diagnostics as CSV: iteration, retained, norm summary."""
    lines = ["iteration,retained,min_norm,median_norm,max_norm"]
    for rec in diagnostics:
        lines.append(
            f"{rec.iteration},{rec.retained},{rec.min_norm!r},"
            f"{rec.median_norm!r},{rec.max_norm!r}"
        )
    return lines
