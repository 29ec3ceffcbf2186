"""Experiment configs (flat key=value text), binary dataset and checkpoint
files with CRC32 checksums, CSV ingestion for real data, and history/report
emission.

Binary layouts (all integers little-endian):

dataset file:
    magic "DAGEQDAT", version u32, graph_type u8, d u32, k f64,
    noise kind u8, noise param count u8, params f64..., num_graphs u32,
    samples u32, split f64, base_seed u64, edges flag u8, edges u32,
    n_train u32, n_test u32,
    then per example: d u32, rho row-major f64, label bits packed row-major
    (MSB first), and a trailing crc32 u32 over all preceding bytes.

checkpoint file (equivariant model):
    magic "DAGEQ", version u32, pooling u8, alpha f64, layer count u32,
    per layer: c_in u32, c_out u32, w1 w2 w3 w4 row-major f64, bias f64,
    trailing crc32 u32. The FC baseline uses magic "DAGFC" with
    d u32, layer count u32, per layer: n_out u32, n_in u32, weight row-major
    f64, bias f64, trailing crc32 u32.

Optional sections may follow a checkpoint's checksum, each self-checksummed:
"ADAM" (optimizer state, enables resuming) and "META" (key=value text).
"""

from __future__ import annotations

import csv
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .discover import DiscoveryReport
from .eqnet import ArchConfig, EqLayerParams, EqModel, FcModel, POOLING_MODES, parameters
from .featurize import CorrelationFeature, Dataset, DatasetConfig, Example, GRAPH_TYPES
from .graph import Dag
from .sem import DataMatrix, NOISE_KINDS, NoiseSpec
from .train import AdamState, EpochStats, MODEL_KINDS, TrainConfig

DATASET_MAGIC = b"DAGEQDAT"
EQ_MAGIC = b"DAGEQ"
FC_MAGIC = b"DAGFC"
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Bad experiment configuration; message carries file and line."""


class FileFormatError(ValueError):
    """A binary or CSV input does not match its expected format."""


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a generate/train/evaluate run, as parsed from one file.

    d holds one entry normally, several for mixed-size ensemble runs.
    """

    graph_type: str = "SF"
    d: tuple[int, ...] = (10,)
    k: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec.gaussian)
    num_graphs: int = 1000
    samples: int = 1000
    split: float = 0.8
    edges: int | None = None
    layers: int = 6
    channels: int = 300
    alpha: float = 0.01
    pooling: str = "mean"
    model: str = "eq"
    hidden: int = 1024
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if not self.d:
            raise ValueError("d must list at least one graph size")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        # constructing the per-module configs runs their validation
        self.dataset_configs()
        self.train_config()

    def dataset_config(self, d: int) -> DatasetConfig:
        return DatasetConfig(
            graph_type=self.graph_type,
            d=d,
            k=self.k,
            noise=self.noise,
            num_graphs=self.num_graphs,
            samples=self.samples,
            split=self.split,
            num_edges=self.edges,
        )

    def dataset_configs(self) -> list[DatasetConfig]:
        return [self.dataset_config(d) for d in self.d]

    def arch_config(self) -> ArchConfig:
        return ArchConfig(
            layers=self.layers, channels=self.channels, alpha=self.alpha, pooling=self.pooling
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            arch=self.arch_config(),
            model=self.model,
            hidden=self.hidden,
            threshold=self.threshold,
        )


def _parse_noise(text: str) -> NoiseSpec:
    m = re.fullmatch(r"\s*([a-z]+)\s*\(([^()]*)\)\s*", text)
    if not m:
        raise ValueError(f"noise must look like 'gaussian(0, 1)', got {text!r}")
    kind, body = m.group(1), m.group(2).strip()
    params = tuple(float(p) for p in body.split(",")) if body else ()
    return NoiseSpec(kind, params)


def _parse_d(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def _choice(options):
    def convert(text: str):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return convert


_CONFIG_PARSERS = {
    "graph_type": _choice(GRAPH_TYPES),
    "d": _parse_d,
    "k": float,
    "noise": _parse_noise,
    "num_graphs": int,
    "samples": int,
    "split": float,
    "edges": int,
    "layers": int,
    "channels": int,
    "alpha": float,
    "pooling": _choice(POOLING_MODES),
    "model": _choice(MODEL_KINDS),
    "hidden": int,
    "lr": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "seed": int,
    "threshold": float,
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse 'key = value' lines; '#' starts a comment; errors carry line numbers."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


# ---------------------------------------------------------------------------
# binary primitives
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def raw(self, b: bytes):
        self.buf += b

    def u8(self, v: int):
        self.buf += struct.pack("<B", v)

    def u32(self, v: int):
        self.buf += struct.pack("<I", v)

    def u64(self, v: int):
        self.buf += struct.pack("<Q", v)

    def f64(self, v: float):
        self.buf += struct.pack("<d", v)

    def array(self, a: np.ndarray):
        self.buf += np.ascontiguousarray(a, dtype="<f8").tobytes()

    def crc(self, start: int = 0):
        self.u32(zlib.crc32(memoryview(self.buf)[start:]) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes, kind: str):
        self.data = data
        self.kind = kind
        self.off = 0
        self.section = "header"

    def enter(self, section: str):
        self.section = section

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FileFormatError(
                f"truncated {self.kind}: unexpected end of file in {self.section} section"
            )
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def check_crc(self, start: int = 0):
        expect = zlib.crc32(memoryview(self.data)[start : self.off]) & 0xFFFFFFFF
        if self.u32() != expect:
            raise FileFormatError(f"{self.kind} checksum mismatch in {self.section} section")

    @property
    def exhausted(self) -> bool:
        return self.off >= len(self.data)


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


_GRAPH_TYPE_CODE = {name: i for i, name in enumerate(GRAPH_TYPES)}
_NOISE_CODE = {name: i for i, name in enumerate(NOISE_KINDS)}


def save_dataset(dataset: Dataset, path):
    cfg = dataset.config
    w = _Writer()
    w.raw(DATASET_MAGIC)
    w.u32(FORMAT_VERSION)
    w.u8(_GRAPH_TYPE_CODE[cfg.graph_type])
    w.u32(cfg.d)
    w.f64(cfg.k)
    w.u8(_NOISE_CODE[cfg.noise.kind])
    w.u8(len(cfg.noise.params))
    for p in cfg.noise.params:
        w.f64(p)
    w.u32(cfg.num_graphs)
    w.u32(cfg.samples)
    w.f64(cfg.split)
    w.u64(dataset.base_seed)
    w.u8(0 if cfg.num_edges is None else 1)
    w.u32(cfg.num_edges if cfg.num_edges is not None else 0)
    w.u32(len(dataset.train))
    w.u32(len(dataset.test))
    for ex in list(dataset.train) + list(dataset.test):
        w.u32(ex.feature.d)
        w.array(ex.feature.rho)
        w.raw(np.packbits(ex.label.adj.reshape(-1)).tobytes())
    w.crc()
    Path(path).write_bytes(bytes(w.buf))


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    r = _Reader(data, "dataset file")
    if r.take(len(DATASET_MAGIC)) != DATASET_MAGIC:
        raise FileFormatError(f"{path} is not a dataset file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FileFormatError(f"unsupported dataset format version {version}")
    graph_code = r.u8()
    if graph_code >= len(GRAPH_TYPES):
        raise FileFormatError(f"dataset file header has unknown graph type code {graph_code}")
    d = r.u32()
    k = r.f64()
    noise_code = r.u8()
    if noise_code >= len(NOISE_KINDS):
        raise FileFormatError(f"dataset file header has unknown noise code {noise_code}")
    params = tuple(r.f64() for _ in range(r.u8()))
    num_graphs = r.u32()
    samples = r.u32()
    split = r.f64()
    base_seed = r.u64()
    has_edges = r.u8()
    edges = r.u32()
    n_train = r.u32()
    n_test = r.u32()
    try:
        config = DatasetConfig(
            graph_type=GRAPH_TYPES[graph_code],
            d=d,
            k=k,
            noise=NoiseSpec(NOISE_KINDS[noise_code], params),
            num_graphs=num_graphs,
            samples=samples,
            split=split,
            num_edges=edges if has_edges else None,
        )
    except ValueError as exc:
        raise FileFormatError(f"dataset file header is inconsistent: {exc}") from exc

    label_bytes = (d * d + 7) // 8
    examples = []
    for i in range(n_train + n_test):
        r.enter(f"example {i}")
        ex_d = r.u32()
        if ex_d != d:
            raise FileFormatError(f"dataset file example {i} has d={ex_d}, header says {d}")
        rho = r.array(d * d).reshape(d, d)
        bits = np.unpackbits(np.frombuffer(r.take(label_bytes), dtype=np.uint8))
        adj = bits[: d * d].reshape(d, d).astype(bool)
        try:
            examples.append(Example(CorrelationFeature(rho), Dag(adj)))
        except ValueError as exc:
            raise FileFormatError(f"dataset file example {i} is invalid: {exc}") from exc
    r.enter("checksum")
    r.check_crc()
    return Dataset(examples[:n_train], examples[n_train:], config, base_seed)


# ---------------------------------------------------------------------------
# checkpoint files
# ---------------------------------------------------------------------------


def save_checkpoint(model, path, adam: AdamState | None = None, meta: dict | None = None):
    """Serialize an EqModel or FcModel; optionally append optimizer state and
    free-form text metadata as self-checksummed trailing sections."""
    w = _Writer()
    if isinstance(model, EqModel):
        w.raw(EQ_MAGIC)
        w.u32(FORMAT_VERSION)
        w.u8(POOLING_MODES.index(model.pooling))
        w.f64(model.alpha)
        w.u32(len(model.layers))
        for layer in model.layers:
            w.u32(layer.c_in)
            w.u32(layer.c_out)
            for arr in (layer.w1, layer.w2, layer.w3, layer.w4, layer.b):
                w.array(arr)
    elif isinstance(model, FcModel):
        w.raw(FC_MAGIC)
        w.u32(FORMAT_VERSION)
        w.u32(model.d)
        w.u32(len(model.weights))
        for weight, bias in zip(model.weights, model.biases):
            w.u32(weight.shape[0])
            w.u32(weight.shape[1])
            w.array(weight)
            w.array(bias)
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")
    w.crc()
    if adam is not None:
        start = len(w.buf)
        w.raw(b"ADAM")
        w.u64(adam.step)
        w.f64(adam.beta1)
        w.f64(adam.beta2)
        w.f64(adam.eps)
        for m, v in zip(adam.m, adam.v):
            w.array(m)
            w.array(v)
        w.crc(start)
    if meta:
        start = len(w.buf)
        text = "".join(f"{k}={v}\n" for k, v in meta.items()).encode()
        w.raw(b"META")
        w.u32(len(text))
        w.raw(text)
        w.crc(start)
    Path(path).write_bytes(bytes(w.buf))


def load_checkpoint(path):
    """Returns (model, adam_state_or_None, meta_dict)."""
    data = Path(path).read_bytes()
    r = _Reader(data, "checkpoint")
    magic = r.take(5)
    if magic == EQ_MAGIC:
        model = _read_eq_body(r)
    elif magic == FC_MAGIC:
        model = _read_fc_body(r)
    else:
        raise FileFormatError(f"{path} is not a checkpoint (bad magic)")
    adam = None
    meta: dict = {}
    while not r.exhausted:
        start = r.off
        tag = r.take(4)
        if tag == b"ADAM":
            r.enter("optimizer state")
            adam = _read_adam_body(r, model, start)
        elif tag == b"META":
            r.enter("metadata")
            text = r.take(r.u32()).decode()
            r.check_crc(start)
            meta = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        else:
            raise FileFormatError(f"checkpoint has unknown trailing section {tag!r}")
    return model, adam, meta


def _read_eq_body(r: _Reader) -> EqModel:
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FileFormatError(f"unsupported checkpoint format version {version}")
    pooling_code = r.u8()
    if pooling_code >= len(POOLING_MODES):
        raise FileFormatError(f"checkpoint header has unknown pooling code {pooling_code}")
    alpha = r.f64()
    n_layers = r.u32()
    layers = []
    for i in range(n_layers):
        r.enter(f"layer {i}")
        c_in = r.u32()
        c_out = r.u32()
        if not 1 <= c_in <= 1_000_000 or not 1 <= c_out <= 1_000_000:
            raise FileFormatError(f"checkpoint layer {i} has implausible shape {c_out}x{c_in}")
        ws = [r.array(c_out * c_in).reshape(c_out, c_in) for _ in range(4)]
        b = r.array(c_out)
        try:
            layers.append(EqLayerParams(*ws, b))
        except ValueError as exc:
            raise FileFormatError(f"checkpoint layer {i} is invalid: {exc}") from exc
    r.enter("checksum")
    r.check_crc()
    try:
        return EqModel(layers, alpha=alpha, pooling=POOLING_MODES[pooling_code])
    except ValueError as exc:
        raise FileFormatError(f"checkpoint layers are inconsistent: {exc}") from exc


def _read_fc_body(r: _Reader) -> FcModel:
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FileFormatError(f"unsupported checkpoint format version {version}")
    d = r.u32()
    n_layers = r.u32()
    weights, biases = [], []
    for i in range(n_layers):
        r.enter(f"layer {i}")
        n_out = r.u32()
        n_in = r.u32()
        if not 1 <= n_in <= 10_000_000 or not 1 <= n_out <= 10_000_000:
            raise FileFormatError(f"checkpoint layer {i} has implausible shape {n_out}x{n_in}")
        weights.append(r.array(n_out * n_in).reshape(n_out, n_in))
        biases.append(r.array(n_out))
    r.enter("checksum")
    r.check_crc()
    try:
        return FcModel(weights, biases, d)
    except ValueError as exc:
        raise FileFormatError(f"checkpoint layers are inconsistent: {exc}") from exc


def _read_adam_body(r: _Reader, model, start: int) -> AdamState:
    step = r.u64()
    beta1 = r.f64()
    beta2 = r.f64()
    eps = r.f64()
    m, v = [], []
    for p in parameters(model):
        m.append(r.array(p.size).reshape(p.shape))
        v.append(r.array(p.size).reshape(p.shape))
    r.check_crc(start)
    return AdamState(m=m, v=v, step=step, beta1=beta1, beta2=beta2, eps=eps)


# ---------------------------------------------------------------------------
# CSV ingestion and emission
# ---------------------------------------------------------------------------


def read_csv_data(path) -> tuple[list[str], DataMatrix]:
    """Load a real-data CSV: header row of variable names, numeric body."""
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if any(cell.strip() for cell in row)]
    if not rows:
        raise FileFormatError(f"{path}: file is empty")
    names = [cell.strip() for cell in rows[0]]
    if len(names) < 2:
        raise FileFormatError(f"{path}: need at least 2 variables, found {len(names)}")
    body = rows[1:]
    if len(body) < 2:
        raise FileFormatError(
            f"{path}: need at least 2 data rows to estimate correlations, found {len(body)}"
        )
    values = np.empty((len(body), len(names)), dtype=np.float64)
    for i, row in enumerate(body):
        if len(row) != len(names):
            raise FileFormatError(
                f"{path}: row {i + 2} has {len(row)} cells, header has {len(names)}"
            )
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise FileFormatError(
                    f"{path}: row {i + 2}, column {names[j]!r}: non-numeric value {cell.strip()!r}"
                ) from None
    try:
        return names, DataMatrix(values)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def read_edge_list(path, names: list[str]) -> Dag:
    """Ground-truth edges as 'source,target' rows; names or 0-based indices."""
    index = {name: i for i, name in enumerate(names)}

    def resolve(cell: str, lineno: int) -> int:
        cell = cell.strip()
        if cell in index:
            return index[cell]
        if cell.isdigit() and int(cell) < len(names):
            return int(cell)
        raise FileFormatError(f"{path}: line {lineno}: unknown variable {cell!r}")

    adj = np.zeros((len(names), len(names)), dtype=bool)
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not any(cell.strip() for cell in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row[:2]] == ["source", "target"]:
                continue
            if len(row) < 2:
                raise FileFormatError(f"{path}: line {lineno}: expected 'source,target'")
            adj[resolve(row[0], lineno), resolve(row[1], lineno)] = True
    try:
        return Dag(adj)
    except ValueError as exc:
        raise FileFormatError(f"{path}: edge list is not a DAG: {exc}") from exc


def write_history(path, history: list[EpochStats]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "val_prec", "val_recall", "val_shd"])
        for s in history:
            w.writerow([s.epoch, s.train_loss, s.val_loss, s.val_prec, s.val_recall, s.val_shd])


def write_report(path, report: DiscoveryReport):
    """Per-graph metric rows; aggregates go in the text table instead."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["graph", "precision", "recall", "shd", "pred_edges", "true_edges",
             "true_positives", "precision_flagged", "recall_flagged"]
        )
        for i, g in enumerate(report.graphs):
            w.writerow(
                [i, g.precision, g.recall, g.shd, g.pred_edges, g.true_edges,
                 g.true_positives, int(g.precision_flagged), int(g.recall_flagged)]
            )


def format_report(report: DiscoveryReport) -> str:
    """Human-readable aligned table of the aggregate metrics."""
    rows = [
        ("graphs", f"{len(report.graphs)}"),
        ("mean precision", f"{report.precision:.4f}"),
        ("mean recall", f"{report.recall:.4f}"),
        ("mean shd", f"{report.shd:.4f}"),
        ("pooled precision", f"{report.pooled_precision:.4f}"),
        ("pooled recall", f"{report.pooled_recall:.4f}"),
        ("predicted edges", f"{report.pred_total}"),
        ("true edges", f"{report.true_total}"),
        ("true positives", f"{report.tp_total}"),
        ("flagged graphs", f"{report.flagged}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
