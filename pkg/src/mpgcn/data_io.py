"""Dataset ingestion (LINQS text files, binary cache), synthetic SBM graphs and splits."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph_core import CsrMatrix, EdgeList, build_csr
from .rng import stream

log = logging.getLogger(__name__)

CACHE_MAGIC = b"MPGCNDATASET"
CACHE_VERSION = 1
_HEADER = struct.Struct("<12sI")
_COUNTS = struct.Struct("<4Q")


class DataError(ValueError):
    pass


@dataclass(eq=False)
class Dataset:
    """Node-classification dataset. ``adjacency`` is the symmetric 0/1 graph."""

    adjacency: CsrMatrix
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""
    train: np.ndarray | None = None
    val: np.ndarray | None = None
    test: np.ndarray | None = None
    skipped_edges: int = field(default=0, compare=False)

    @property
    def num_nodes(self) -> int:
        return int(self.labels.size)

    @property
    def has_masks(self) -> bool:
        return self.train is not None

    def validate(self) -> Dataset:
        n = self.num_nodes
        if self.features.shape[0] != n or self.adjacency.num_rows != n:
            raise DataError("features, labels and adjacency disagree on the node count")
        if self.has_masks:
            parts = [self.train, self.val, self.test]
            joined = np.concatenate(parts)
            if np.unique(joined).size != joined.size:
                raise DataError("train/val/test masks overlap")
            missing = set(range(self.num_classes)) - set(self.labels[self.train].tolist())
            if missing:
                raise DataError(f"classes {sorted(missing)} have no training node")
        return self


def load_linqs(content_path, cites_path, name: str | None = None) -> Dataset:
    """Parse a LINQS ``.content``/``.cites`` pair (Cora, CiteSeer).

    Node ids are numbered in order of first appearance in the content file,
    class labels in sorted string order. Citations that mention a paper
    missing from the content file are dropped and counted in
    ``skipped_edges``.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids: dict[str, int] = {}
    rows, raw_labels = [], []
    width = None
    with content_path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DataError(f"{content_path}:{lineno}: expected id, features and label, got {len(parts)} fields")
            if width is None:
                width = len(parts) - 2
            elif len(parts) - 2 != width:
                raise DataError(f"{content_path}:{lineno}: {len(parts) - 2} features, earlier lines had {width}")
            if parts[0] in ids:
                raise DataError(f"{content_path}:{lineno}: duplicate node id {parts[0]!r}")
            ids[parts[0]] = len(ids)
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError as exc:
                raise DataError(f"{content_path}:{lineno}: {exc}") from None
            raw_labels.append(parts[-1])
    if not ids:
        raise DataError(f"{content_path} contains no nodes")

    classes = sorted(set(raw_labels))
    class_id = {c: i for i, c in enumerate(classes)}
    edges, skipped = [], 0
    with cites_path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{cites_path}:{lineno}: expected 2 fields, got {len(parts)}")
            cited, citing = parts
            if cited not in ids or citing not in ids:
                skipped += 1
                continue
            edges.append((ids[cited], ids[citing]))
    if skipped:
        log.warning("%s: skipped %d citation(s) referencing unknown papers", cites_path, skipped)

    return Dataset(
        adjacency=build_csr(EdgeList(len(ids), edges)),
        features=np.asarray(rows, dtype=np.float64),
        labels=np.array([class_id[c] for c in raw_labels], dtype=np.int64),
        num_classes=len(classes),
        name=name or content_path.stem,
        skipped_edges=skipped,
    )


def generate_sbm(blocks, per_block, p_intra, p_inter, d, seed, name="sbm") -> Dataset:
    """Stochastic block model with block-indicator features plus small noise.

    Features: one-hot block id in the first ``blocks`` columns, uniform
    [0, 0.1) noise in the remaining ``d - blocks`` columns.
    """
    if not (0.0 <= p_inter < p_intra <= 1.0) and not (p_inter == p_intra == 0.0):
        raise DataError(f"need 0 <= p_inter < p_intra <= 1, got p_intra={p_intra}, p_inter={p_inter}")
    if d < blocks:
        raise DataError(f"feature width {d} smaller than number of blocks {blocks}")
    rng = stream(seed, "data")
    n = blocks * per_block
    labels = np.repeat(np.arange(blocks), per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_intra, p_inter)
    hit = rng.random(iu.size) < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)

    features = np.zeros((n, d))
    features[np.arange(n), labels] = 1.0
    features[:, blocks:] = rng.uniform(0.0, 0.1, size=(n, d - blocks))
    return Dataset(
        adjacency=build_csr(EdgeList(n, edges)),
        features=features,
        labels=labels.astype(np.int64),
        num_classes=blocks,
        name=name,
    )


def make_splits(ds: Dataset, train_per_class: int = 20, val_per_class: int = 30, seed: int = 0) -> Dataset:
    """Random per-class split; whatever is not train or val becomes test."""
    rng = stream(seed, "split")
    train, val = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size <= train_per_class + val_per_class:
            raise DataError(
                f"class {c} has {members.size} nodes, needs more than {train_per_class + val_per_class}"
            )
        picked = rng.permutation(members)
        train.append(picked[:train_per_class])
        val.append(picked[train_per_class:train_per_class + val_per_class])
    train = np.sort(np.concatenate(train))
    val = np.sort(np.concatenate(val))
    rest = np.ones(ds.num_nodes, dtype=bool)
    rest[train] = rest[val] = False
    return replace(ds, train=train, val=val, test=np.flatnonzero(rest)).validate()


def row_normalize(ds: Dataset) -> Dataset:
    sums = ds.features.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return replace(ds, features=ds.features / sums)


def save_cache(ds: Dataset, path) -> None:
    """Write the binary cache.

    Layout (little-endian): 12-byte magic, u32 version, u64 n, d, c, nnz,
    u64 row_offsets[n+1], u64 col_indices[nnz], f64 features[n*d] row-major,
    u32 labels[n].
    """
    a = ds.adjacency
    n, d = ds.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION))
        fh.write(_COUNTS.pack(n, d, ds.num_classes, a.nnz))
        fh.write(a.row_offsets.astype("<u8").tobytes())
        fh.write(a.col_indices.astype("<u8").tobytes())
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        fh.write(ds.labels.astype("<u4").tobytes())


def load_cache(path, name: str | None = None) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + _COUNTS.size:
        raise DataError(f"{path}: truncated header")
    magic, version = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise DataError(f"{path}: not a dataset cache (magic {magic!r}, version {version})")
    n, d, c, nnz = _COUNTS.unpack_from(raw, _HEADER.size)
    pos = _HEADER.size + _COUNTS.size

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    try:
        offsets = take("<u8", n + 1).astype(np.int64)
        cols = take("<u8", nnz).astype(np.int64)
        features = take("<f8", n * d).astype(np.float64).reshape(n, d)
        labels = take("<u4", n).astype(np.int64)
    except ValueError:
        raise DataError(f"{path}: truncated body") from None
    if pos != len(raw):
        raise DataError(f"{path}: {len(raw) - pos} trailing bytes")
    adjacency = CsrMatrix(n, n, offsets, cols, np.ones(nnz))
    return Dataset(adjacency, features, labels, c, name=name or Path(path).stem)

