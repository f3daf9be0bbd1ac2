"""Datasets, synthetic generators, splitting, and persistence.

Two file formats:

* CSV with header ``label,f1,...,fd``; labels are 1-based in files and
  converted to the library's 0-based convention on load.
* A binary container: magic ``RFFKIT01``, little-endian u32 version,
  little-endian u32 section count, a sequence of sections (4-byte ASCII
  tag, u64 payload length, payload), and a trailing u32 CRC32 of all
  preceding bytes.  Array payloads are dtype code (u8), ndim (u8), dims
  (u64 each), then raw column-major bytes.  The same container carries
  datasets, feature maps, and trained models under different section
  tags.  Everything is bit-exact on round trip.
"""

from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import _sampling
from .kernels import FeatureMap, KernelSpec
from .model import LogisticModel

MAGIC = b"RFFKIT01"
CONTAINER_VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float64): 1,
    np.dtype(np.float32): 2,
    np.dtype(np.int64): 3,
    np.dtype(np.int32): 4,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class ContainerError(ValueError):
    """Malformed binary container (magic, version, truncation, or CRC)."""


class CsvFormatError(ValueError):
    """Malformed CSV dataset; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix X (N, d) with 0-based integer labels y (N,)."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError(f"X must be a non-empty 2-D matrix, got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError(
                f"need one label per row: X has {self.X.shape[0]} rows, "
                f"y has shape {self.y.shape}"
            )
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite values")
        if self.y.min() < 0 or self.y.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes - 1}], "
                f"got range [{self.y.min()}, {self.y.max()}]"
            )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


# ---------------------------------------------------------------------------
# CSV


def save_csv(dataset, path):
    """Write ``label,f1,...,fd`` rows; labels 1-based, floats via repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{j + 1}" for j in range(dataset.dim)])
        for label, row in zip(dataset.y, dataset.X):
            writer.writerow([int(label) + 1] + [repr(float(v)) for v in row])


def load_csv(path, num_classes=None, name=None):
    """Parse a CSV dataset; labels in files are 1-based.

    If ``num_classes`` is omitted it is inferred as the largest label.
    Malformed rows and out-of-range labels are reported with their
    1-based line number.
    """
    labels = []
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if not header or header[0] != "label":
            raise CsvFormatError(
                f"{path}: line 1: header must start with 'label', got {header[:1]}"
            )
        width = len(header)
        if width < 2:
            raise CsvFormatError(f"{path}: line 1: no feature columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
                )
            try:
                label = int(row[0])
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {lineno}: label {row[0]!r} is not an integer"
                ) from None
            if label < 1 or (num_classes is not None and label > num_classes):
                bound = num_classes if num_classes is not None else "C"
                raise CsvFormatError(
                    f"{path}: line {lineno}: label {label} outside [1, {bound}]"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise CsvFormatError(f"{path}: line {lineno}: non-finite value")
            labels.append(label)
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int64) - 1
    X = np.array(rows, dtype=np.float64)
    C = num_classes if num_classes is not None else int(y.max()) + 1
    return Dataset(X=X, y=y, num_classes=C, name=name or str(path))


# ---------------------------------------------------------------------------
# Binary container plumbing


def _encode_array(arr):
    arr = np.asarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported array dtype {arr.dtype}")
    head = struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + np.asfortranarray(arr).tobytes(order="F")


def _decode_array(payload):
    if len(payload) < 2:
        raise ContainerError("array section too short for its header")
    code, ndim = struct.unpack_from("<BB", payload, 0)
    if code not in _CODE_DTYPES:
        raise ContainerError(f"unknown array dtype code {code}")
    dims_end = 2 + 8 * ndim
    if len(payload) < dims_end:
        raise ContainerError("array section truncated in dims")
    shape = struct.unpack_from(f"<{ndim}Q", payload, 2)
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    raw = payload[dims_end:]
    if len(raw) != expected:
        raise ContainerError(
            f"array payload truncated: expected {expected} bytes, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(shape, order="F").copy()


def _write_container(path, sections):
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<II", CONTAINER_VERSION, len(sections)))
    for tag, payload in sections:
        tag_bytes = tag.encode("ascii")
        if len(tag_bytes) != 4:
            raise ValueError(f"section tag must be 4 ASCII bytes, got {tag!r}")
        body.write(tag_bytes)
        body.write(struct.pack("<Q", len(payload)))
        body.write(payload)
    blob = body.getvalue()
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


def _read_container(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 4:
        raise ContainerError(
            f"{path}: truncated container: expected at least "
            f"{len(MAGIC) + 12} bytes, got {len(blob)}"
        )
    if blob[: len(MAGIC)] != MAGIC:
        raise ContainerError(
            f"{path}: magic mismatch: expected {MAGIC!r}, got {blob[:len(MAGIC)]!r}"
        )
    version, nsections = struct.unpack_from("<II", blob, len(MAGIC))
    if version != CONTAINER_VERSION:
        raise ContainerError(f"{path}: unknown container version {version}")
    crc_stored = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    crc_actual = zlib.crc32(blob[:-4])
    if crc_stored != crc_actual:
        raise ContainerError(
            f"{path}: CRC mismatch: stored {crc_stored:#010x}, "
            f"computed {crc_actual:#010x}"
        )
    offset = len(MAGIC) + 8
    end = len(blob) - 4
    sections = {}
    for _ in range(nsections):
        if offset + 12 > end:
            raise ContainerError(
                f"{path}: truncated section header: expected 12 bytes at "
                f"offset {offset}, only {end - offset} remain"
            )
        tag = blob[offset:offset + 4].decode("ascii")
        (length,) = struct.unpack_from("<Q", blob, offset + 4)
        offset += 12
        if offset + length > end:
            raise ContainerError(
                f"{path}: truncated section {tag!r}: expected {length} payload "
                f"bytes, only {end - offset} remain"
            )
        sections[tag] = blob[offset:offset + length]
        offset += length
    if offset != end:
        raise ContainerError(f"{path}: {end - offset} trailing bytes after sections")
    return sections


def _json_payload(obj):
    return json.dumps(obj, sort_keys=True).encode("utf-8")


def _require(sections, tag, path):
    if tag not in sections:
        raise ContainerError(f"{path}: missing required section {tag!r}")
    return sections[tag]


# ---------------------------------------------------------------------------
# Dataset persistence


def save_binary(dataset, path):
    meta = {
        "name": dataset.name,
        "num_classes": int(dataset.num_classes),
        "meta": dataset.meta,
    }
    _write_container(path, [
        ("DMET", _json_payload(meta)),
        ("XMAT", _encode_array(dataset.X)),
        ("YVEC", _encode_array(dataset.y.astype(np.int64) + 1)),  # 1-based on disk
    ])


def load_binary(path):
    sections = _read_container(path)
    meta = json.loads(_require(sections, "DMET", path))
    X = _decode_array(_require(sections, "XMAT", path))
    y = _decode_array(_require(sections, "YVEC", path)) - 1
    return Dataset(X=X, y=y, num_classes=meta["num_classes"],
                   name=meta["name"], meta=meta.get("meta", {}))


# ---------------------------------------------------------------------------
# Synthetic datasets


def synth_gaussian_mixture(d, C, N, separation, seed):
    """C unit-variance spherical Gaussian clusters with mean norm ``separation``.

    Means sit on the first C coordinate axes when C <= d, otherwise on
    seeded random directions.  separation=0 collapses all clusters, so
    the Bayes error is (C-1)/C.
    """
    d, C, N = int(d), int(C), int(N)
    if d < 1 or C < 2 or N < 1:
        raise ValueError(f"need d >= 1, C >= 2, N >= 1; got d={d}, C={C}, N={N}")
    rng = _sampling.stream(seed, _sampling.TAG_DATA)
    if C <= d:
        means = np.zeros((C, d))
        means[np.arange(C), np.arange(C)] = separation
    else:
        dirs = rng.standard_normal((C, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = separation * dirs
    y = rng.integers(0, C, size=N)
    X = means[y] + rng.standard_normal((N, d))
    return Dataset(X=X, y=y, num_classes=C, name=f"mixture_d{d}_c{C}_n{N}",
                   meta={"separation": float(separation), "seed": int(seed)})


def synth_sparse_interactions(d, relevant_k, C, N, seed):
    """Labels from a nonlinear interaction of ``relevant_k`` secret coordinates.

    X is i.i.d. standard normal.  The label is the product of the secret
    coordinates binned at its empirical C-quantiles, so classes are
    balanced and depend on the remaining d - relevant_k coordinates not at
    all.  The secret coordinate set and the bin edges are recorded in
    ``meta`` for diagnostics.
    """
    d, relevant_k, C, N = int(d), int(relevant_k), int(C), int(N)
    if not 1 <= relevant_k <= d:
        raise ValueError(f"need 1 <= relevant_k <= d, got k={relevant_k}, d={d}")
    if C < 2 or N < C:
        raise ValueError(f"need C >= 2 and N >= C, got C={C}, N={N}")
    rng = _sampling.stream(seed, _sampling.TAG_DATA)
    secret = np.sort(rng.permutation(d)[:relevant_k])
    X = rng.standard_normal((N, d))
    score = X[:, secret].prod(axis=1)
    edges = np.quantile(score, np.arange(1, C) / C)
    y = np.searchsorted(edges, score, side="right")
    return Dataset(
        X=X, y=y, num_classes=C, name=f"interactions_d{d}_k{relevant_k}_c{C}",
        meta={
            "secret_coords": [int(j) for j in secret],
            "bin_edges": [float(e) for e in edges],
            "seed": int(seed),
        },
    )


def split(dataset, heldout_fraction, seed):
    """Disjoint, exhaustive (train, heldout) split, shuffled by seed.

    The held-out size is round(N * fraction); counts are apportioned per
    class by largest remainder, and every class with at least two
    examples keeps a representative on both sides.
    """
    if not 0.0 < heldout_fraction < 1.0:
        raise ValueError(f"heldout_fraction must lie in (0, 1), got {heldout_fraction}")
    n = dataset.n
    if n < 2:
        raise ValueError("cannot split a single-example dataset")
    rng = _sampling.stream(seed, _sampling.TAG_SPLIT)
    target = min(max(int(n * heldout_fraction + 0.5), 1), n - 1)
    classes = np.arange(dataset.num_classes)
    counts = np.bincount(dataset.y, minlength=dataset.num_classes)
    lo = np.where(counts >= 2, 1, 0)
    hi = np.where(counts >= 2, counts - 1, counts)
    held = np.clip((counts * heldout_fraction).astype(np.int64), lo, hi)
    remainders = counts * heldout_fraction - held
    while held.sum() < target:
        eligible = held < hi
        if not eligible.any():
            break
        c = classes[eligible][np.argmax(remainders[eligible])]
        held[c] += 1
        remainders[c] -= 1.0
    while held.sum() > target:
        eligible = held > lo
        if not eligible.any():
            break
        c = classes[eligible][np.argmin(remainders[eligible])]
        held[c] -= 1
        remainders[c] += 1.0
    held_idx = []
    train_idx = []
    for c in classes:
        members = np.flatnonzero(dataset.y == c)
        members = members[rng.permutation(members.shape[0])]
        held_idx.append(members[: held[c]])
        train_idx.append(members[held[c]:])
    held_idx = np.concatenate(held_idx)
    train_idx = np.concatenate(train_idx)
    held_idx = held_idx[rng.permutation(held_idx.shape[0])]
    train_idx = train_idx[rng.permutation(train_idx.shape[0])]

    def _subset(idx, suffix):
        return replace(dataset, X=dataset.X[idx], y=dataset.y[idx],
                       name=f"{dataset.name}{suffix}")

    return _subset(train_idx, "/train"), _subset(held_idx, "/heldout")


# ---------------------------------------------------------------------------
# Feature map and model persistence


def _spec_payload(spec):
    return _json_payload({
        "family": spec.family, "sigma": spec.sigma, "lam": spec.lam, "k": spec.k,
    })


def _spec_from_payload(payload):
    obj = json.loads(payload)
    return KernelSpec(family=obj["family"], sigma=obj["sigma"],
                      lam=obj["lam"], k=obj["k"])


def _fmap_sections(fmap):
    sections = [
        ("KSPC", _spec_payload(fmap.spec)),
        ("FMET", _json_payload({
            "d": fmap.d, "D": fmap.D, "seed": fmap.seed,
            "sparse": fmap.is_sparse,
        })),
        ("PHSB", _encode_array(fmap.b)),
    ]
    if fmap.is_sparse:
        sections += [("SIDX", _encode_array(fmap.support)),
                     ("SVAL", _encode_array(fmap.values))]
    else:
        sections.append(("OMGA", _encode_array(fmap.omega)))
    return sections


def _fmap_from_sections(sections, path):
    spec = _spec_from_payload(_require(sections, "KSPC", path))
    meta = json.loads(_require(sections, "FMET", path))
    b = _decode_array(_require(sections, "PHSB", path))
    kwargs = {}
    if meta["sparse"]:
        kwargs["support"] = _decode_array(_require(sections, "SIDX", path))
        kwargs["values"] = _decode_array(_require(sections, "SVAL", path))
    else:
        kwargs["omega"] = _decode_array(_require(sections, "OMGA", path))
    return FeatureMap(spec=spec, d=meta["d"], D=meta["D"], seed=meta["seed"],
                      b=b, **kwargs)


def save_feature_map(fmap, path):
    _write_container(path, _fmap_sections(fmap))


def load_feature_map(path):
    return _fmap_from_sections(_read_container(path), path)


def save_model(model, fmap, path):
    """Persist a trained model with its feature map and full provenance."""
    sections = _fmap_sections(fmap)
    sections.append(("MMET", _json_payload({
        "num_features": model.num_features,
        "num_classes": model.num_classes,
        "form": "bottleneck" if model.is_bottleneck else "full",
    })))
    if model.is_bottleneck:
        sections += [("UMAT", _encode_array(model.u)),
                     ("VMAT", _encode_array(model.v))]
    else:
        sections.append(("THET", _encode_array(model.theta)))
    _write_container(path, sections)


def load_model(path):
    sections = _read_container(path)
    fmap = _fmap_from_sections(sections, path)
    meta = json.loads(_require(sections, "MMET", path))
    if meta["form"] == "bottleneck":
        model = LogisticModel(
            meta["num_features"], meta["num_classes"],
            u=_decode_array(_require(sections, "UMAT", path)),
            v=_decode_array(_require(sections, "VMAT", path)),
        )
    else:
        model = LogisticModel(
            meta["num_features"], meta["num_classes"],
            theta=_decode_array(_require(sections, "THET", path)),
        )
    return model, fmap
