"""Linear structural equation models: coefficient sampling, forward data
sampling, noise families, and the analytic covariance oracle.

Conventions: ``coef[j, i]`` is the weight of X_i's direct influence on X_j,
so the nonzero pattern of ``coef`` is the transpose of the DAG adjacency.
Every node shares one noise specification (equal-variance system).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Dag, topo_order

NOISE_KINDS = ("gaussian", "exponential", "gumbel", "poisson")


@dataclass(frozen=True)
class NoiseSpec:
    """One of: gaussian(mean, stddev), exponential(rate), gumbel(location, scale),
    poisson(rate)."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        n_expected = {"gaussian": 2, "exponential": 1, "gumbel": 2, "poisson": 1}[self.kind]
        if len(self.params) != n_expected:
            raise ValueError(f"{self.kind} noise takes {n_expected} parameter(s), got {len(self.params)}")
        if self.kind == "gaussian" and self.params[1] <= 0:
            raise ValueError("gaussian stddev must be > 0")
        if self.kind in ("exponential", "poisson") and self.params[0] <= 0:
            raise ValueError(f"{self.kind} rate must be > 0")
        if self.kind == "gumbel" and self.params[1] <= 0:
            raise ValueError("gumbel scale must be > 0")

    @classmethod
    def gaussian(cls, mean: float = 0.0, stddev: float = 1.0) -> "NoiseSpec":
        return cls("gaussian", (mean, stddev))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "NoiseSpec":
        return cls("exponential", (rate,))

    @classmethod
    def gumbel(cls, location: float = 0.0, scale: float = 1.0) -> "NoiseSpec":
        return cls("gumbel", (location, scale))

    @classmethod
    def poisson(cls, rate: float = 1.0) -> "NoiseSpec":
        return cls("poisson", (rate,))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            mean, stddev = self.params
            return rng.normal(mean, stddev, size)
        if self.kind == "exponential":
            (rate,) = self.params
            return rng.exponential(1.0 / rate, size)
        if self.kind == "gumbel":
            location, scale = self.params
            return rng.gumbel(location, scale, size)
        (rate,) = self.params
        return rng.poisson(rate, size).astype(np.float64)

    def variance(self) -> float:
        """Noise variance implied by the parameters."""
        if self.kind == "gaussian":
            return self.params[1] ** 2
        if self.kind == "exponential":
            return 1.0 / self.params[0] ** 2
        if self.kind == "gumbel":
            return np.pi**2 * self.params[1] ** 2 / 6.0
        return self.params[0]

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(format(p, 'g') for p in self.params)})"


@dataclass(frozen=True)
class Sem:
    """Linear SEM: a DAG, its path-coefficient matrix, and a shared noise spec."""

    dag: Dag
    coef: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=np.float64)
        if coef.shape != self.dag.adj.shape:
            raise ValueError(f"coef shape {coef.shape} does not match dag with d={self.dag.d}")
        if not np.array_equal(coef != 0, self.dag.adj.T):
            raise ValueError("coef sparsity pattern must equal the transposed adjacency")
        object.__setattr__(self, "coef", coef)

    @property
    def d(self) -> int:
        return self.dag.d


@dataclass(frozen=True)
class DataMatrix:
    """n joint samples of d variables; each row is one sample."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"data must be 2-dimensional, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("data contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def sample_coefficients(
    dag: Dag, k: float, rng: np.random.Generator, noise: NoiseSpec | None = None
) -> Sem:
    """Draw a path coefficient for every edge, uniform over
    [-0.5-k, -0.5] U [0.5, 0.5+k] with equal mass per sign."""
    if k <= 0:
        raise ValueError(f"strength k must be > 0, got {k}")
    d = dag.d
    coef = np.zeros((d, d), dtype=np.float64)
    src, dst = np.nonzero(dag.adj)
    n_edges = len(src)
    magnitude = rng.uniform(0.5, 0.5 + k, n_edges)
    sign = np.where(rng.random(n_edges) < 0.5, -1.0, 1.0)
    coef[dst, src] = sign * magnitude
    return Sem(dag, coef, noise if noise is not None else NoiseSpec.gaussian(0.0, 1.0))


def with_noise(sem: Sem, noise: NoiseSpec) -> Sem:
    """Same graph and coefficients, different noise family."""
    return Sem(sem.dag, sem.coef, noise)


def sample_data(sem: Sem, n: int, rng: np.random.Generator) -> DataMatrix:
    """Forward-sample n rows: visit nodes in topological order and set
    X_j = sum_i coef[j, i] * X_i + eps_j with eps_j drawn fresh per row."""
    if n < 2:
        raise ValueError(f"sample count must be >= 2, got {n}")
    d = sem.d
    order = topo_order(sem.dag)
    values = np.zeros((n, d), dtype=np.float64)
    for j in order:
        parents = np.nonzero(sem.coef[j])[0]
        eps = sem.noise.sample(rng, n)
        if len(parents):
            values[:, j] = values[:, parents] @ sem.coef[j, parents] + eps
        else:
            values[:, j] = eps
    return DataMatrix(values)


def analytic_covariance(sem: Sem) -> np.ndarray:
    """Exact covariance of the SEM's stationary joint distribution.

    With C the coefficient matrix and Phi the diagonal noise-variance matrix,
    the covariance is (I - C)^-1 Phi (I - C)^-T. Serves as the simulation
    oracle for the forward sampler.
    """
    d = sem.d
    eye_minus_c = np.eye(d) - sem.coef
    try:
        t = np.linalg.inv(eye_minus_c)
    except np.linalg.LinAlgError as exc:  # unreachable for acyclic coef; internal invariant
        raise RuntimeError("I - C is singular; SEM coefficient matrix is not acyclic") from exc
    phi = sem.noise.variance() * np.eye(d)
    return t @ phi @ t.T
