"""Deterministic random streams keyed by (seed, tag, round).

All randomness in the library flows through counter-based Philox streams.
A stream is addressed by a root seed, a purpose tag, and a round number,
and its output is consumed in row-major counter order.  Consequences we
rely on elsewhere:

* the draw for row i of a (D, m) block depends only on (seed, tag, round, i),
  never on D, so growing a feature map keeps earlier rows bit-identical;
* separate tags give independent streams for projections, phases, and
  coordinate subsets, so drawing more of one never shifts the others;
* distribution sampling is inverse-CDF only (no rejection or ziggurat
  methods), which keeps the mapping from uniforms to samples portable.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# Stream purpose tags.  Values are part of the on-disk provenance story
# (a seed plus these constants reproduces every array) so never renumber.
TAG_OMEGA = 1
TAG_PHASE = 2
TAG_SUBSET = 3
TAG_EXAMPLES = 4
TAG_INIT = 5
TAG_SHUFFLE = 6
TAG_DATA = 7
TAG_SPLIT = 8

# Half the spacing of the uniform grid returned by Generator.random().
# Added to uniforms before inverse-CDF transforms to keep them in (0, 1).
_HALF_STEP = 2.0 ** -54


def check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed, tag, round_index=0):
    """Independent Generator for the given (seed, tag, round) address."""
    ss = np.random.SeedSequence(
        entropy=check_seed(seed), spawn_key=(int(tag), int(round_index))
    )
    return np.random.Generator(np.random.Philox(ss))


def uniform_block(seed, tag, round_index, shape):
    """Uniforms on [0, 1) consumed in row-major counter order."""
    return stream(seed, tag, round_index).random(shape)


def open_uniform(u):
    """Shift grid uniforms from [0, 1) to (0, 1) for inverse-CDF use."""
    return u + _HALF_STEP


def gaussian_from_uniform(u, sigma):
    """Normal(0, 1/sigma^2) deviates via the inverse normal CDF."""
    return ndtri(open_uniform(u)) / sigma


def cauchy_from_uniform(u, scale):
    """Cauchy(0, scale) deviates via the inverse CDF scale*tan(pi*(u-1/2))."""
    return scale * np.tan(np.pi * (open_uniform(u) - 0.5))
