"""Per-node labeled datasets: file ingestion, synthetic population generation,
train/val/test splits, label flipping, and cache serialization."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError

logger = logging.getLogger(__name__)

# Heterogeneity knob internals: how strongly the knob perturbs per-node class
# balance and shifts per-node feature clusters. At full heterogeneity the
# training exposure of a node can be nearly single-class.
_BALANCE_JITTER = 0.5
_BALANCE_CLIP = (0.02, 0.98)
_CLUSTER_SHIFT_SCALE = 0.2


@dataclass
class LabeledRows:
    """A block of labeled feature rows: features (n, d), labels (n,) in {0, 1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels must be 1-D and match the feature row count")
        if self.features.size and not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @staticmethod
    def empty(feature_dim: int) -> "LabeledRows":
        return LabeledRows(np.empty((0, feature_dim)), np.empty(0, dtype=np.int64))


@dataclass
class NodeDataset:
    """One node's data: disjoint train / validation / test splits."""

    node_id: int
    train: LabeledRows
    val: LabeledRows
    test: LabeledRows

    def __post_init__(self):
        if self.node_id < 0:
            raise ValueError("node_id must be non-negative")
        dims = {self.train.feature_dim, self.val.feature_dim, self.test.feature_dim}
        if len(dims) != 1:
            raise ValueError(f"splits disagree on feature width: {sorted(dims)}")


@dataclass
class Population:
    """All nodes of one experiment; nodes without any rows are dataless."""

    node_count: int
    nodes: list[NodeDataset]
    dataless_node_ids: frozenset[int] = frozenset()
    source_ids: tuple[int, ...] | None = None  # original file ids, index-aligned

    def __post_init__(self):
        self.dataless_node_ids = frozenset(self.dataless_node_ids)
        ids = [ds.node_id for ds in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        covered = set(ids) | self.dataless_node_ids
        if set(ids) & self.dataless_node_ids:
            raise ValueError("a node cannot be both data-bearing and dataless")
        if covered != set(range(self.node_count)):
            raise ValueError("node ids plus dataless ids must cover 0..node_count-1")
        self.nodes = sorted(self.nodes, key=lambda ds: ds.node_id)

    def dataset(self, node_id: int) -> NodeDataset | None:
        for ds in self.nodes:
            if ds.node_id == node_id:
                return ds
        return None

    @property
    def trainable_node_ids(self) -> list[int]:
        return [ds.node_id for ds in self.nodes if ds.train.n > 0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic population of two-class Gaussian feature data.

    Per-node training sizes are drawn inside ``train_size_range`` and then
    nudged so the population mean lands on ``train_size_mean_target``. The
    ``heterogeneity`` knob (0 = IID) jitters the class balance each node was
    exposed to during training and shifts each node's feature clusters by a
    node-specific offset. Test rows always follow the population-wide
    ``class_balance``: nodes see skewed training mixes but are scored on the
    common message mix.

    ``noise_scale`` inflates feature noise orthogonal to the class-mean
    direction. Values above 1 leave the best achievable accuracy unchanged
    but make the signal direction much harder to estimate from few rows.
    """

    node_count: int
    dataless_count: int = 0
    train_size_range: tuple[int, int] = (86, 2514)
    train_size_mean_target: int = 689
    test_size_range: tuple[int, int] = (3, 114)
    val_fraction: float = 0.15
    class_balance: float = 0.5
    separation: float = 2.0
    noise_scale: float = 1.0
    heterogeneity: float = 0.0
    feature_dim: int = 22
    feature_model: str = "gaussian-two-class"
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.train_size_range
        tlo, thi = self.test_size_range
        if self.node_count < 1 or not (0 <= self.dataless_count < self.node_count):
            raise ConfigError("need node_count >= 1 and 0 <= dataless_count < node_count")
        if not (1 <= lo <= hi) or not (1 <= tlo <= thi):
            raise ConfigError("size ranges must be non-empty and positive")
        if not (lo <= self.train_size_mean_target <= hi):
            raise ConfigError(
                f"train size mean target {self.train_size_mean_target} lies outside "
                f"the range [{lo}, {hi}]"
            )
        if not (0.0 < self.class_balance < 1.0):
            raise ConfigError("class_balance must be in (0, 1)")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.separation < 0 or self.heterogeneity < 0:
            raise ConfigError("separation and heterogeneity must be non-negative")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be positive")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        if self.feature_model != "gaussian-two-class":
            raise ConfigError(f"unknown feature model: {self.feature_model!r}")


def _draw_sizes(rng: np.random.Generator, n: int, lo: int, hi: int, mean_target: int) -> np.ndarray:
    """Right-skewed integer sizes in [lo, hi] whose mean hits the target.

    Beta-shaped draws give a few large nodes and many small ones; a
    deterministic +/-1 adjustment pass then pins the total.
    """
    if lo == hi:
        return np.full(n, lo, dtype=np.int64)
    mu = (mean_target - lo) / (hi - lo)
    mu = min(max(mu, 1e-6), 1 - 1e-6)
    kappa = 2.0
    raw = lo + (hi - lo) * rng.beta(kappa * mu, kappa * (1 - mu), size=n)
    sizes = np.clip(np.rint(raw).astype(np.int64), lo, hi)
    delta = int(round(mean_target * n)) - int(sizes.sum())
    step = 1 if delta > 0 else -1
    order = rng.permutation(n)
    guard = 0
    pos = 0
    while delta != 0:
        i = order[pos % n]
        pos += 1
        if lo <= sizes[i] + step <= hi:
            sizes[i] += step
            delta -= step
        guard += 1
        if guard > n * (hi - lo) + n:
            raise AssertionError("size adjustment failed to converge")
    return sizes


def generate_synthetic(spec: SyntheticSpec) -> Population:
    """Build a Population from the spec; deterministic for a given seed."""
    rng = np.random.default_rng(spec.seed)
    d = spec.feature_dim
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    class_means = np.stack([-0.5 * spec.separation * direction, 0.5 * spec.separation * direction])

    data_count = spec.node_count - spec.dataless_count
    train_sizes = _draw_sizes(rng, data_count, *spec.train_size_range, spec.train_size_mean_target)
    test_sizes = rng.integers(spec.test_size_range[0], spec.test_size_range[1] + 1, size=data_count)

    nodes = []
    for idx in range(data_count):
        balance = spec.class_balance + spec.heterogeneity * _BALANCE_JITTER * rng.uniform(-1.0, 1.0)
        balance = float(np.clip(balance, *_BALANCE_CLIP))
        shift = (
            spec.heterogeneity
            * _CLUSTER_SHIFT_SCALE
            * rng.standard_normal(d)
            / np.sqrt(d)
        )
        n_train = int(train_sizes[idx])
        n_val = int(round(spec.val_fraction * n_train))
        n_test = int(test_sizes[idx])
        total = n_train + n_val + n_test
        labels = np.empty(total, dtype=np.int64)
        labels[: n_train + n_val] = rng.random(n_train + n_val) < balance
        labels[n_train + n_val :] = rng.random(n_test) < spec.class_balance
        noise = rng.standard_normal((total, d))
        if spec.noise_scale != 1.0:
            along = noise @ direction
            noise = spec.noise_scale * noise + (1.0 - spec.noise_scale) * along[:, None] * direction
        features = class_means[labels] + shift + noise
        nodes.append(
            NodeDataset(
                node_id=idx,
                train=LabeledRows(features[:n_train], labels[:n_train]),
                val=LabeledRows(features[n_train : n_train + n_val], labels[n_train : n_train + n_val]),
                test=LabeledRows(features[n_train + n_val :], labels[n_train + n_val :]),
            )
        )
    dataless = frozenset(range(data_count, spec.node_count))
    return Population(spec.node_count, nodes, dataless)


def flip_labels(rows: LabeledRows, flip_prob: float, seed: int) -> LabeledRows:
    """Flip each label independently with the given probability.

    Features are shared with the input (they are never mutated downstream);
    labels are a fresh array. Deterministic per seed.
    """
    if not (0.0 <= flip_prob <= 1.0):
        raise ValueError("flip probability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random(rows.n) < flip_prob
    return LabeledRows(rows.features, rows.labels ^ mask.astype(np.int64))


@dataclass(frozen=True)
class IngestFormat:
    """Shape of a delimiter-separated input file.

    Expected columns: node_id, features..., label; a header row is required.
    Rows are grouped by node and split per node with a seeded shuffle.
    """

    delimiter: str = ","
    split_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    node_count: int | None = None  # total nodes incl. absent (dataless) ids

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise ConfigError("delimiter must be a single character")
        if len(self.split_ratios) != 3 or any(r < 0 for r in self.split_ratios):
            raise ConfigError("split_ratios must be three non-negative numbers")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("split_ratios must sum to 1")


def ingest(path, fmt: IngestFormat = IngestFormat()) -> Population:
    """Read a labeled feature file and return a split Population.

    Distinct source node ids are remapped to contiguous indices 0..k-1 in
    sorted order (the original ids are kept in ``source_ids``). Ids beyond
    the observed ones, up to ``fmt.node_count``, become dataless nodes.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise IngestionError(f"{path}: empty file (a header row is required)")
    header = lines[0].split(fmt.delimiter)
    n_cols = len(header)
    if n_cols < 3:
        raise IngestionError(f"{path}: header must have node_id, features..., label")
    n_features = n_cols - 2

    by_node: dict[int, list[tuple[list[float], int]]] = {}
    total_rows = 0
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(fmt.delimiter)
        if len(cells) != n_cols:
            raise IngestionError(f"{path} line {ln}: expected {n_cols} columns, got {len(cells)}")
        try:
            node_id = int(cells[0])
        except ValueError:
            raise IngestionError(f"{path} line {ln}: invalid node id {cells[0]!r}") from None
        if node_id < 0:
            raise IngestionError(f"{path} line {ln}: node id must be non-negative")
        try:
            feats = [float(c) for c in cells[1:-1]]
        except ValueError:
            raise IngestionError(f"{path} line {ln}: invalid feature value") from None
        if not all(np.isfinite(feats)):
            raise IngestionError(f"{path} line {ln}: non-finite feature value")
        if cells[-1].strip() not in ("0", "1"):
            raise IngestionError(f"{path} line {ln}: label must be 0 or 1, got {cells[-1]!r}")
        by_node.setdefault(node_id, []).append((feats, int(cells[-1])))
        total_rows += 1
    if total_rows == 0:
        raise IngestionError(f"{path}: no data rows")

    source_ids = tuple(sorted(by_node))
    node_count = fmt.node_count if fmt.node_count is not None else len(source_ids)
    if node_count < len(source_ids):
        raise IngestionError(
            f"{path}: file has {len(source_ids)} distinct nodes but node_count={node_count}"
        )

    nodes = []
    for index, src in enumerate(source_ids):
        rows = by_node[src]
        features = np.asarray([r[0] for r in rows], dtype=np.float64)
        labels = np.asarray([r[1] for r in rows], dtype=np.int64)
        rng = np.random.default_rng(np.random.SeedSequence((fmt.seed, index)))
        order = rng.permutation(len(rows))
        n = len(rows)
        n_train = int(n * fmt.split_ratios[0])
        n_val = int(n * fmt.split_ratios[1])
        tr, va, te = order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]
        nodes.append(
            NodeDataset(
                node_id=index,
                train=LabeledRows(features[tr], labels[tr]),
                val=LabeledRows(features[va], labels[va]),
                test=LabeledRows(features[te], labels[te]),
            )
        )
    dataless = frozenset(range(len(source_ids), node_count))
    logger.info("ingested %d rows across %d nodes from %s", total_rows, len(source_ids), path)
    return Population(node_count, nodes, dataless, source_ids=source_ids)


def save_population(population: Population, path) -> None:
    """Cache a Population as an npz archive (arrays are preserved bit-exactly)."""
    meta = {
        "schema_version": 1,
        "node_count": population.node_count,
        "data_node_ids": [ds.node_id for ds in population.nodes],
        "dataless_node_ids": sorted(population.dataless_node_ids),
        "source_ids": list(population.source_ids) if population.source_ids else None,
    }
    arrays = {}
    for ds in population.nodes:
        for split in ("train", "val", "test"):
            rows: LabeledRows = getattr(ds, split)
            arrays[f"n{ds.node_id}_{split}_x"] = rows.features
            arrays[f"n{ds.node_id}_{split}_y"] = rows.labels
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_population(path) -> Population:
    with np.load(path) as archive:
        meta = json.loads(archive["meta"].tobytes().decode())
        if meta.get("schema_version") != 1:
            raise IngestionError(f"{path}: unsupported population schema")
        nodes = []
        for node_id in meta["data_node_ids"]:
            splits = {
                split: LabeledRows(
                    archive[f"n{node_id}_{split}_x"], archive[f"n{node_id}_{split}_y"]
                )
                for split in ("train", "val", "test")
            }
            nodes.append(NodeDataset(node_id, splits["train"], splits["val"], splits["test"]))
    source = meta.get("source_ids")
    return Population(
        meta["node_count"],
        nodes,
        frozenset(meta["dataless_node_ids"]),
        source_ids=tuple(source) if source else None,
    )
