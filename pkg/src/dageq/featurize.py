"""Pearson correlation features and supervised dataset assembly.

A training example pairs the correlation matrix of one sampled dataset with
the binary adjacency of the DAG that generated it. Datasets are built
deterministically: example index g uses the RNG stream seeded by
(base_seed, g), so train/test graphs are disjoint by construction and any
example can be regenerated independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Dag, gen_er_dag, gen_sf_dag
from .sem import NoiseSpec, DataMatrix, sample_coefficients, sample_data
from .util import parallel_map

VARIANCE_FLOOR = 1e-12

GRAPH_TYPES = ("ER", "SF")


class DegenerateDataError(ValueError):
    """A data column has (numerically) zero variance; correlation is undefined."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero sample variance; correlation undefined")


@dataclass(frozen=True)
class CorrelationFeature:
    """d x d Pearson correlation matrix: symmetric, unit diagonal, entries in [-1, 1]."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"correlation matrix must be square, got shape {rho.shape}")
        if not np.array_equal(rho, rho.T):
            raise ValueError("correlation matrix must be symmetric")
        if not np.all(rho.diagonal() == 1.0):
            raise ValueError("correlation matrix diagonal must be exactly 1")
        if rho.size and (rho.min() < -1.0 or rho.max() > 1.0):
            raise ValueError("correlation entries must lie in [-1, 1]")
        object.__setattr__(self, "rho", rho)

    @property
    def d(self) -> int:
        return self.rho.shape[0]


@dataclass(frozen=True)
class Example:
    feature: CorrelationFeature
    label: Dag

    def __post_init__(self):
        if self.feature.d != self.label.d:
            raise ValueError(f"feature d={self.feature.d} does not match label d={self.label.d}")


@dataclass(frozen=True)
class DatasetConfig:
    """Generation knobs for one dataset of fixed graph size."""

    graph_type: str
    d: int
    k: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec.gaussian)
    num_graphs: int = 1000
    samples: int = 1000
    split: float = 0.8
    num_edges: int | None = None  # ER only; defaults to d

    def __post_init__(self):
        if self.graph_type not in GRAPH_TYPES:
            raise ValueError(f"graph_type must be one of {GRAPH_TYPES}, got {self.graph_type!r}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.k <= 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if self.num_graphs < 1:
            raise ValueError(f"num_graphs must be >= 1, got {self.num_graphs}")
        if self.samples < 2:
            raise ValueError(f"samples must be >= 2, got {self.samples}")
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")

    @property
    def edges_per_graph(self) -> int:
        return self.d if self.num_edges is None else self.num_edges


@dataclass
class Dataset:
    """Train/test example lists plus the generation fingerprint."""

    train: list[Example]
    test: list[Example]
    config: DatasetConfig
    base_seed: int

    @property
    def d(self) -> int:
        return self.config.d


def correlation(data: DataMatrix) -> CorrelationFeature:
    """Sample Pearson correlation of the data columns.

    Raises DegenerateDataError naming the first column whose sample variance
    falls below the floor.
    """
    if data.n < 2:
        raise ValueError(f"need at least 2 rows to correlate, got {data.n}")
    x = data.values
    centered = x - x.mean(axis=0)
    var = (centered * centered).sum(axis=0) / (data.n - 1)
    bad = np.nonzero(var < VARIANCE_FLOOR)[0]
    if len(bad):
        raise DegenerateDataError(int(bad[0]))
    cov = centered.T @ centered / (data.n - 1)
    std = np.sqrt(var)
    rho = cov / np.outer(std, std)
    rho = (rho + rho.T) / 2.0
    np.clip(rho, -1.0, 1.0, out=rho)
    np.fill_diagonal(rho, 1.0)
    return CorrelationFeature(rho)


def make_example(
    dag: Dag, k: float, noise: NoiseSpec, n: int, rng: np.random.Generator
) -> Example:
    """Sample coefficients and data for the DAG, featurize, label with its adjacency."""
    sem = sample_coefficients(dag, k, rng, noise)
    data = sample_data(sem, n, rng)
    return Example(correlation(data), dag)


def _gen_graph(config: DatasetConfig, rng: np.random.Generator) -> Dag:
    if config.graph_type == "ER":
        return gen_er_dag(config.d, config.edges_per_graph, rng)
    return gen_sf_dag(config.d, rng)


def example_rng(base_seed: int, index: int) -> np.random.Generator:
    """Independent stream for example ``index``; mixing is order-insensitive."""
    return np.random.default_rng([int(base_seed), int(index)])


def split_counts(num_graphs: int, split: float) -> tuple[int, int]:
    """(n_train, n_test); test count is the floor of the test fraction."""
    n_test = int(num_graphs * (1.0 - split) + 1e-9)
    return num_graphs - n_test, n_test


def build_dataset(
    config: DatasetConfig,
    base_seed: int,
    threads: int = 1,
    test_only: bool = False,
) -> Dataset:
    """Generate ``config.num_graphs`` examples deterministically from base_seed.

    ``test_only`` skips materializing the train split (the same test examples
    are produced either way), for evaluation-only runs.
    """
    n_train, n_test = split_counts(config.num_graphs, config.split)

    def build_one(index: int) -> Example:
        rng = example_rng(base_seed, index)
        dag = _gen_graph(config, rng)
        return make_example(dag, config.k, config.noise, config.samples, rng)

    first = n_train if test_only else 0
    examples = parallel_map(build_one, range(first, config.num_graphs), threads)
    if test_only:
        return Dataset([], examples, config, base_seed)
    return Dataset(examples[:n_train], examples[n_train:], config, base_seed)
