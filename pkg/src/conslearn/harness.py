"""Experiment driver: node population, round loop, metrics and CSV output."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .consensus import DEFAULT_GAMMA, Node, NodeConfig
from .data import BatchStream, LabeledDataset, MixSpec, load_idx, make_synthetic, split_biased, split_equal
from .errors import ConfigError, UsageError
from .model import AdamState, Architecture, MlpModel, init_params, train_on_batch
from .netsim import Delivery, Network, NetworkConfig
from .params import check_gamma

log = logging.getLogger(__name__)

AGGREGATE = "AGGREGATE"
VALIDATION = "VALIDATION"
TEST = "TEST"
CSV_HEADER = ["epoch", "node_id", "split", "loss", "accuracy", "divergence", "bytes_sent"]

# fixed stream ids for seed derivation; never renumber, it would change every run
_STREAMS = {"split": 1, "init": 2, "data": 3, "gossip": 4, "network": 5, "sweep": 6}


def derive_seed(master: int, stream: str, index: int = 0) -> int:
    """Independent 63-bit seed for (master, stream, index) via numpy's SeedSequence hash."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, _STREAMS[stream], int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class ExperimentConfig:
    mode: str = "consensus"              # consensus | monolithic
    dataset: str = "synthetic"           # "synthetic" or a directory of IDX files
    num_classes: int = 10
    input_dim: int = 100
    train_per_class: int = 200
    val_per_class: int = 50
    test_per_class: int = 50
    separation: float = 1.0
    noise: float = 0.25
    data_seed: int = 0
    num_nodes: int = 8
    epochs: int = 400
    n_local: int = 5
    m_sends: int = 1
    gamma: float = DEFAULT_GAMMA
    batch_size: int = 32
    learning_rate: float = 1e-3
    hidden_dim: int = 72
    split: str = "equal"                 # equal | biased
    mix_rate: int = 50
    drop_weights: float = 0.0
    drop_deltas: float = 0.0
    delivery: str = "NEXT_ROUND"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("consensus", "monolithic"):
            raise ConfigError(f"mode must be 'consensus' or 'monolithic', got {self.mode!r}")
        if self.split not in ("equal", "biased"):
            raise ConfigError(f"split must be 'equal' or 'biased', got {self.split!r}")
        for name in ("num_classes", "input_dim", "train_per_class", "val_per_class",
                     "test_per_class", "num_nodes", "n_local", "batch_size", "hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.m_sends < 0:
            raise ConfigError("epochs and m_sends must be non-negative")
        if not 0 <= self.mix_rate <= 100:
            raise ConfigError(f"mix_rate must be in [0, 100], got {self.mix_rate}")
        for name in ("drop_weights", "drop_deltas"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        check_gamma(self.gamma)
        try:
            Delivery(self.delivery)
        except ValueError:
            raise ConfigError(f"delivery must be IMMEDIATE or NEXT_ROUND, got {self.delivery!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{key: _coerce(key, type(known[key].default), val)
                      for key, val in values.items()})

    def with_updates(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _coerce(key: str, kind: type, value):
    if kind is str:
        return str(value)
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {kind.__name__}") from None
    if kind is int and out != float(value):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return out


@dataclass
class DataBundle:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset


def load_data(config: ExperimentConfig) -> DataBundle:
    """Build train/validation/test sets; validation and test are shared by all nodes."""
    if config.dataset == "synthetic":
        def gen(per_class, stream):
            return make_synthetic(config.num_classes, per_class, config.input_dim,
                                  config.data_seed, stream=stream,
                                  separation=config.separation, noise=config.noise)
        return DataBundle(gen(config.train_per_class, 0), gen(config.val_per_class, 1),
                          gen(config.test_per_class, 2))
    root = Path(config.dataset)
    train = load_idx(_find_idx(root, "train-images"), _find_idx(root, "train-labels"),
                     config.num_classes)
    held_out = load_idx(_find_idx(root, "t10k-images"), _find_idx(root, "t10k-labels"),
                        config.num_classes)
    half = len(held_out) // 2
    return DataBundle(train, held_out.subset(np.arange(half)),
                      held_out.subset(np.arange(half, len(held_out))))


def _find_idx(root: Path, stem: str) -> Path:
    for suffix in ("-idx3-ubyte", "-idx1-ubyte", "-idx3-ubyte.gz", "-idx1-ubyte.gz"):
        path = root / f"{stem}{suffix}"
        if path.exists():
            return path
    raise UsageError(f"no IDX file named {stem}-idx?-ubyte[.gz] under {root}")


@dataclass
class MetricsRecord:
    epoch: int
    node_id: int | str
    split: str
    loss: float
    accuracy: float
    divergence: float
    bytes_sent: float


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[MetricsRecord]
    params: list[np.ndarray] = field(default_factory=list)
    net_stats: dict | None = None
    train_steps: list[list[int]] = field(default_factory=list)  # [epoch][node]

    def final(self, split: str = TEST) -> MetricsRecord:
        rows = [r for r in self.records if r.split == split and r.node_id == AGGREGATE]
        if not rows:
            raise UsageError(f"no {split} aggregate in this run")
        return rows[-1]


def divergences(params: Sequence[np.ndarray]) -> list[float]:
    """Per node: mean over the other nodes of ||p_i - p_j|| / ||p_i||."""
    n = len(params)
    if n < 2:
        return [0.0] * n
    out = []
    for i, p in enumerate(params):
        norm = np.linalg.norm(p)
        dists = [np.linalg.norm(p - q) for j, q in enumerate(params) if j != i]
        out.append(float(np.mean(dists) / norm) if norm > 0 else float("inf"))
    return out


def _node_records(epoch: int, split: str, arch: Architecture, params: Sequence[np.ndarray],
                  ds: LabeledDataset, bytes_sent: Sequence[float],
                  with_aggregate: bool) -> list[MetricsRecord]:
    divs = divergences(params)
    rows = []
    for i, p in enumerate(params):
        loss, acc = MlpModel(arch, p).evaluate(ds.inputs, ds.labels)
        rows.append(MetricsRecord(epoch, i, split, loss, acc, divs[i], float(bytes_sent[i])))
    if with_aggregate:
        rows.append(MetricsRecord(
            epoch, AGGREGATE, split,
            float(np.mean([r.loss for r in rows])), float(np.mean([r.accuracy for r in rows])),
            float(np.mean([r.divergence for r in rows])),
            float(np.mean([r.bytes_sent for r in rows]))))
    return rows


def _architecture(config: ExperimentConfig, data: DataBundle) -> Architecture:
    return Architecture(data.train.input_dim, config.hidden_dim, config.num_classes)


def _adam(arch: Architecture, config: ExperimentConfig) -> AdamState:
    return AdamState.zeros(arch.n_params, alpha=config.learning_rate)


def run_monolithic(config: ExperimentConfig, data: DataBundle | None = None) -> RunResult:
    """One model trained on the whole training set for the same epoch budget."""
    data = data or load_data(config)
    arch = _architecture(config, data)
    params = init_params(arch, derive_seed(config.seed, "init", 0))
    adam = _adam(arch, config)
    stream = BatchStream(data.train, config.batch_size,
                         np.random.default_rng(derive_seed(config.seed, "data", 0)))
    records: list[MetricsRecord] = []
    steps = []
    for epoch in range(1, config.epochs + 1):
        for _ in range(stream.batches_per_pass):
            params, adam = train_on_batch(arch, params, adam, stream.next_batch())
        steps.append([stream.batches_per_pass])
        records += _node_records(epoch, VALIDATION, arch, [params], data.validation, [0], False)
    records += _node_records(config.epochs, TEST, arch, [params], data.test, [0], True)
    return RunResult(config, records, [params], None, steps)


def build_shards(config: ExperimentConfig, train: LabeledDataset) -> list[LabeledDataset]:
    split_seed = derive_seed(config.seed, "split")
    if config.split == "biased":
        return split_biased(train, MixSpec(config.mix_rate, config.num_nodes, split_seed))
    return split_equal(train, config.num_nodes, split_seed)


def build_nodes(config: ExperimentConfig, arch: Architecture,
                shards: Sequence[LabeledDataset]) -> list[Node]:
    nodes = []
    for i, shard in enumerate(shards):
        ncfg = NodeConfig(i, config.n_local, config.m_sends, config.gamma,
                          derive_seed(config.seed, "init", i))
        batches = BatchStream(shard, config.batch_size,
                              np.random.default_rng(derive_seed(config.seed, "data", i)))
        nodes.append(Node(ncfg, init_params(arch, ncfg.init_seed), arch=arch,
                          adam=_adam(arch, config), batches=batches,
                          rng=np.random.default_rng(derive_seed(config.seed, "gossip", i))))
    return nodes


def run_epoch(nodes: Sequence[Node], net: Network) -> list[int]:
    """Advance every node through one full pass over its shard.

    Global rounds service nodes in ascending id; a node whose pass is
    complete sits out the remaining rounds of the epoch. The last local
    phase of a pass is shortened so each node trains exactly
    ceil(shard / batch_size) batches. Returns the step count per node.
    """
    remaining = [n.batches.batches_per_pass for n in nodes]
    done = [0] * len(nodes)
    while any(remaining):
        for i, node in enumerate(nodes):
            if remaining[i] == 0:
                continue
            k = min(node.config.n_local, remaining[i])
            node.run_round(net, k)
            remaining[i] -= k
            done[i] += k
        net.advance_time()
    return done


def run_consensus(config: ExperimentConfig, data: DataBundle | None = None) -> RunResult:
    data = data or load_data(config)
    arch = _architecture(config, data)
    shards = build_shards(config, data.train)
    if any(len(s) == 0 for s in shards):
        raise UsageError("a node received an empty shard")
    nodes = build_nodes(config, arch, shards)
    net = Network(NetworkConfig(config.num_nodes, "full", config.drop_weights,
                                config.drop_deltas, Delivery(config.delivery),
                                derive_seed(config.seed, "network")))
    records: list[MetricsRecord] = []
    steps = []
    for epoch in range(1, config.epochs + 1):
        steps.append(run_epoch(nodes, net))
        records += _node_records(epoch, VALIDATION, arch, [n.params for n in nodes],
                                 data.validation, net.bytes_sent, False)
        log.debug("epoch %d: mean val acc %.4f", epoch,
                  np.mean([r.accuracy for r in records[-len(nodes):]]))
    records += _node_records(config.epochs, TEST, arch, [n.params for n in nodes],
                             data.test, net.bytes_sent, True)
    return RunResult(config, records, [n.params.copy() for n in nodes], net.stats(), steps)


def run(config: ExperimentConfig, data: DataBundle | None = None) -> RunResult:
    if config.mode == "monolithic":
        return run_monolithic(config, data)
    return run_consensus(config, data)


# -- sweeps -------------------------------------------------------------------

# parameter name -> (config field, Table 1 block label, symbol)
SWEEPS = {
    "m_sends": ("m_sends", "Update Rate", "M_i"),
    "mix_rate": ("mix_rate", "Mixed Data", "r_m"),
    "drop_deltas": ("drop_deltas", "Droprate", "dr"),
}
_ALIASES = {"mi": "m_sends", "M_i": "m_sends", "r_m": "mix_rate", "mix-rate": "mix_rate",
            "dr": "drop_deltas", "drop-deltas": "drop_deltas"}


@dataclass
class SummaryRow:
    experiment: str
    parameter: str
    value: str
    loss: float
    accuracy: float


def sweep_configs(base: ExperimentConfig, parameter: str,
                  values: Iterable) -> list[ExperimentConfig]:
    name = _ALIASES.get(parameter, parameter)
    if name not in SWEEPS:
        raise UsageError(f"cannot sweep {parameter!r}; choose from {', '.join(SWEEPS)}")
    field_name = SWEEPS[name][0]
    configs = []
    for idx, value in enumerate(values):
        changes = {field_name: type(getattr(base, field_name))(value), "mode": "consensus",
                   "seed": derive_seed(base.seed, "sweep", idx)}
        if name == "mix_rate":
            changes["split"] = "biased"
        configs.append(base.with_updates(**changes))
    return configs


def sweep(base: ExperimentConfig, parameter: str, values: Sequence,
          out_dir: str | Path | None = None,
          data: DataBundle | None = None) -> tuple[list[RunResult], list[SummaryRow]]:
    """One consensus run per value; optionally one CSV per run plus ``summary.csv``."""
    name = _ALIASES.get(parameter, parameter)
    configs = sweep_configs(base, name, values)
    data = data or load_data(base)
    results, summary = [], []
    _, label, symbol = SWEEPS[name]
    for cfg, value in zip(configs, values):
        log.info("sweep %s=%s", symbol, value)
        res = run_consensus(cfg, data)
        results.append(res)
        final = res.final()
        summary.append(SummaryRow(label, symbol, _fmt_value(getattr(cfg, SWEEPS[name][0])),
                                  final.loss, final.accuracy))
        if out_dir is not None:
            write_csv(res.records, Path(out_dir) / f"{name}_{_fmt_value(value)}.csv")
    if out_dir is not None:
        write_summary(summary, Path(out_dir) / "summary.csv")
    return results, summary


def _fmt_value(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def table(base: ExperimentConfig, out_dir: str | Path | None = None,
          m_values=(0, 1, 2, 5), mix_values=tuple(range(10, 100, 10)),
          drop_values=(0.0, 0.25, 0.5, 0.75, 1.0),
          bias_nodes: int = 10) -> list[SummaryRow]:
    """Monolithic baseline plus the three sweeps, summarized like the results table."""
    data = load_data(base)
    mono = run_monolithic(base.with_updates(mode="monolithic"), data).final()
    rows = [SummaryRow("Monolithic", "", "", mono.loss, mono.accuracy)]
    sub = None if out_dir is None else Path(out_dir)
    for name, values, cfg in (("m_sends", m_values, base),
                              ("mix_rate", mix_values, base.with_updates(num_nodes=bias_nodes)),
                              ("drop_deltas", drop_values, base)):
        rows += sweep(cfg, name, values, None if sub is None else sub / name, data)[1]
    if sub is not None:
        write_summary(rows, sub / "summary.csv")
    return rows


# -- CSV ----------------------------------------------------------------------

def _sort_key(r: MetricsRecord):
    node = (1, 0) if r.node_id == AGGREGATE else (0, int(r.node_id))
    return (r.epoch, 0 if r.split == VALIDATION else 1, node)


def write_csv(records: Iterable[MetricsRecord], path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in sorted(records, key=_sort_key):
                w.writerow([r.epoch, r.node_id, r.split, repr(r.loss), repr(r.accuracy),
                            repr(r.divergence), repr(r.bytes_sent)])
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc


def read_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise UsageError(f"{path}: unexpected header {reader.fieldnames}")
        return [MetricsRecord(int(row["epoch"]),
                              row["node_id"] if row["node_id"] == AGGREGATE else int(row["node_id"]),
                              row["split"], float(row["loss"]), float(row["accuracy"]),
                              float(row["divergence"]), float(row["bytes_sent"]))
                for row in reader]


def write_summary(rows: Iterable[SummaryRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["experiment", "parameter", "value", "loss", "accuracy"])
        for r in rows:
            w.writerow([r.experiment, r.parameter, r.value, f"{r.loss:.4f}", f"{r.accuracy:.4f}"])
