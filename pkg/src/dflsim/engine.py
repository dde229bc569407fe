"""Round-based decentralized training over a time-varying topology.

Protocol per experiment: every data node first trains on its own rows; then
each round (in dfl mode) nodes send their current parameters to out-neighbors
of the active snapshot, aggregate whatever arrived on top of their own model
by elementwise averaging, and run further local epochs. Rounds are
synchronous: every send uses the pre-round parameter snapshot, so results do
not depend on node processing order. Jammed nodes lose all incoming edges but
keep transmitting; poisoned nodes have their training labels flipped once, up
front. Dataless nodes hold parameters and may relay (receive, aggregate,
forward) but never train or evaluate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import analysis
from .data import LabeledRows, Population, flip_labels
from .errors import ConfigError
from .nn import (
    ModelArch,
    ModelParams,
    TrainConfig,
    evaluate,
    federated_average,
    init_params,
    train_local,
)
from .topology import TopologySeries, in_neighbor_lists

SCHEMA_VERSION = 1

# Sub-stream tags for per-node seed derivation.
_TRAIN_STREAM = 1
_POISON_STREAM = 2


@dataclass
class SimConfig:
    """Everything the engine needs besides the population and topology."""

    arch: ModelArch
    train: TrainConfig = TrainConfig()
    rounds: int | None = None  # default: one round per topology snapshot
    aggregation_weighting: str = "uniform"  # or "data-size"
    mode: str = "dfl"  # or "local-only"
    master_seed: int = 0
    initial_epochs: int | None = None  # default: local_epochs_per_round
    dataless_participate: bool = True
    record_traces: bool = False
    trace_accuracy: bool = False
    init_seed_overrides: Mapping[int, int] | None = None

    def __post_init__(self):
        if self.mode not in ("dfl", "local-only"):
            raise ConfigError(f"mode must be 'dfl' or 'local-only', got {self.mode!r}")
        if self.aggregation_weighting not in ("uniform", "data-size"):
            raise ConfigError(
                f"aggregation_weighting must be 'uniform' or 'data-size', "
                f"got {self.aggregation_weighting!r}"
            )
        if self.rounds is not None and self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.initial_epochs is not None and self.initial_epochs < 0:
            raise ConfigError("initial_epochs must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "arch": {
                "input_dim": self.arch.input_dim,
                "hidden_dims": list(self.arch.hidden_dims),
                "output_dim": self.arch.output_dim,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "batch_size": self.train.batch_size,
                "local_epochs_per_round": self.train.local_epochs_per_round,
                "seed": self.train.seed,
            },
            "rounds": self.rounds,
            "aggregation_weighting": self.aggregation_weighting,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "initial_epochs": self.initial_epochs,
            "dataless_participate": self.dataless_participate,
            "record_traces": self.record_traces,
            "trace_accuracy": self.trace_accuracy,
            "init_seed_overrides": (
                {str(k): v for k, v in sorted(self.init_seed_overrides.items())}
                if self.init_seed_overrides
                else None
            ),
        }


@dataclass
class NodeState:
    """One node's live state inside a run."""

    node_id: int
    params: ModelParams
    train_rows: LabeledRows | None
    rng: np.random.Generator
    jammed: bool = False
    poisoned: bool = False

    @property
    def has_data(self) -> bool:
        return self.train_rows is not None


@dataclass
class RoundTrace:
    round_index: int
    received_from: dict[int, list[int]]
    train_loss: dict[int, float]
    accuracy_pre: dict[int, float] | None = None
    accuracy_post: dict[int, float] | None = None

    def to_json_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "received_from": {str(k): v for k, v in sorted(self.received_from.items())},
            "train_loss": {str(k): v for k, v in sorted(self.train_loss.items())},
            "accuracy_pre": (
                {str(k): v for k, v in sorted(self.accuracy_pre.items())}
                if self.accuracy_pre is not None
                else None
            ),
            "accuracy_post": (
                {str(k): v for k, v in sorted(self.accuracy_post.items())}
                if self.accuracy_post is not None
                else None
            ),
        }


@dataclass
class ExperimentReport:
    """Final per-node accuracies plus aggregate stats and full provenance."""

    config: dict
    attack: dict | None
    data_node_ids: list[int]
    accuracies: dict[int, float]
    train_sizes: dict[int, int]
    stats: analysis.AccuracyStats
    dataless_node_ids: list[int]
    traces: list[RoundTrace] | None = None

    def results_dict(self) -> dict:
        return {
            "data_node_ids": self.data_node_ids,
            "accuracies": {str(k): v for k, v in sorted(self.accuracies.items())},
            "train_sizes": {str(k): v for k, v in sorted(self.train_sizes.items())},
            "stats": self.stats.to_json_dict(),
            "dataless_node_ids": self.dataless_node_ids,
            "traces": [t.to_json_dict() for t in self.traces] if self.traces is not None else None,
        }

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "experiment_report",
            "config": self.config,
            "attack": self.attack,
            "results": self.results_dict(),
        }

    def to_json_bytes(self) -> bytes:
        return _canonical_json(self.to_json_dict())

    def results_bytes(self) -> bytes:
        return _canonical_json(self.results_dict())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_json_bytes())

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExperimentReport":
        if obj.get("schema_version") != SCHEMA_VERSION or obj.get("kind") != "experiment_report":
            raise ConfigError("not an experiment report (or unsupported schema)")
        res = obj["results"]
        stats_obj = res["stats"]
        imp = stats_obj.get("improvement_pct")
        stats = analysis.AccuracyStats(
            stats_obj["average"],
            stats_obj["minimum"],
            stats_obj["maximum"],
            stats_obj["std_dev"],
            improvement=analysis.Improvement(
                imp["average"], imp["minimum"], imp["maximum"], imp["std_dev"]
            )
            if imp
            else None,
        )
        traces = None
        if res.get("traces") is not None:
            traces = [
                RoundTrace(
                    t["round_index"],
                    {int(k): v for k, v in t["received_from"].items()},
                    {int(k): v for k, v in t["train_loss"].items()},
                    {int(k): v for k, v in t["accuracy_pre"].items()} if t.get("accuracy_pre") else None,
                    {int(k): v for k, v in t["accuracy_post"].items()} if t.get("accuracy_post") else None,
                )
                for t in res["traces"]
            ]
        return cls(
            config=obj["config"],
            attack=obj.get("attack"),
            data_node_ids=list(res["data_node_ids"]),
            accuracies={int(k): v for k, v in res["accuracies"].items()},
            train_sizes={int(k): v for k, v in res["train_sizes"].items()},
            stats=stats,
            dataless_node_ids=list(res["dataless_node_ids"]),
            traces=traces,
        )

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        with open(path, "rb") as fh:
            return cls.from_json_dict(json.loads(fh.read().decode("utf-8")))


def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True) + "\n").encode(
        "utf-8"
    )


def shared_init_seed(master_seed: int) -> int:
    """Default parameter-init seed, common to every node.

    Elementwise model averaging only makes sense when hidden units line up
    across nodes, so all nodes start from one shared initialization unless
    ``init_seed_overrides`` says otherwise.
    """
    return int(np.random.SeedSequence((master_seed,)).generate_state(1)[0])


def _poison_seed(master_seed: int, node_id: int) -> int:
    return int(
        np.random.SeedSequence((master_seed, node_id, _POISON_STREAM)).generate_state(1)[0]
    )


def exchange_and_aggregate(
    params_by_node: Sequence[ModelParams],
    edges,
    jam_set: frozenset[int] = frozenset(),
    *,
    weighting: str = "uniform",
    train_sizes: Sequence[int] | None = None,
    participants: frozenset[int] | None = None,
    node_order: Sequence[int] | None = None,
) -> tuple[list[ModelParams], dict[int, list[int]]]:
    """One synchronous exchange step over a snapshot's edge set.

    Every node i (unless jammed or excluded) receives the pre-step
    parameters of each in-neighbor j with an edge j -> i and averages them
    with its own. Returns the new parameter list plus who received from
    whom. ``node_order`` only changes iteration order, never the result.
    """
    n = len(params_by_node)
    in_nb = in_neighbor_lists(frozenset(edges), n)
    if weighting == "data-size" and train_sizes is None:
        raise ConfigError("data-size weighting requires per-node training sizes")
    order = range(n) if node_order is None else node_order
    new_params: list[ModelParams | None] = [None] * n
    received_from: dict[int, list[int]] = {}
    for i in order:
        if participants is not None and i not in participants:
            new_params[i] = params_by_node[i]
            received_from[i] = []
            continue
        if i in jam_set:
            senders = []
        else:
            senders = [
                j
                for j in in_nb[i]
                if participants is None or j in participants
            ]
        received_from[i] = senders
        models = [params_by_node[j] for j in senders]
        if weighting == "data-size":
            weights = [float(train_sizes[i])] + [float(train_sizes[j]) for j in senders]
            if sum(weights) <= 0:
                new_params[i] = params_by_node[i].copy()
                continue
            new_params[i] = federated_average(params_by_node[i], models, weights)
        else:
            new_params[i] = federated_average(params_by_node[i], models)
    return list(new_params), received_from


def run_experiment(
    population: Population,
    topology: TopologySeries,
    cfg: SimConfig,
    plan=None,
    *,
    node_order: Sequence[int] | None = None,
) -> ExperimentReport:
    """Execute one full experiment and return its report.

    ``plan`` is any object with ``jam_targets``, ``poison_targets`` and
    ``flip_prob`` attributes (or None for a clean run). ``node_order`` is a
    diagnostic knob permuting iteration order; reports are identical for any
    permutation.
    """
    if population.node_count != topology.node_count:
        raise ConfigError(
            f"population has {population.node_count} nodes but topology has "
            f"{topology.node_count}"
        )
    n = population.node_count
    jam_set = frozenset(plan.jam_targets) if plan is not None else frozenset()
    poison_set = frozenset(plan.poison_targets) if plan is not None else frozenset()
    flip_prob = float(plan.flip_prob) if plan is not None else 0.0
    if not all(0 <= i < n for i in jam_set | poison_set):
        raise ConfigError("attack plan names node ids outside the population")

    if node_order is None:
        order = list(range(n))
    else:
        order = list(node_order)
        if sorted(order) != list(range(n)):
            raise ConfigError("node_order must be a permutation of all node ids")

    rounds = cfg.rounds if cfg.rounds is not None else len(topology.snapshots)
    if rounds < 1:
        raise ConfigError("resolved round count must be >= 1")

    overrides = dict(cfg.init_seed_overrides) if cfg.init_seed_overrides else {}
    datasets = {ds.node_id: ds for ds in population.nodes}
    trainable = {i for i, ds in datasets.items() if ds.train.n > 0}
    bad_poison = poison_set - trainable
    if bad_poison:
        raise ConfigError(f"cannot poison nodes without training data: {sorted(bad_poison)}")

    default_seed = shared_init_seed(cfg.master_seed)
    states: list[NodeState] = []
    for i in range(n):
        node_seed = overrides.get(i, default_seed)
        params = init_params(cfg.arch, node_seed)
        train_rows = None
        poisoned = False
        if i in trainable:
            train_rows = datasets[i].train
            if i in poison_set:
                train_rows = flip_labels(train_rows, flip_prob, _poison_seed(cfg.master_seed, i))
                poisoned = True
        rng = np.random.default_rng(np.random.SeedSequence((node_seed, _TRAIN_STREAM)))
        states.append(
            NodeState(i, params, train_rows, rng, jammed=(i in jam_set), poisoned=poisoned)
        )

    initial_epochs = (
        cfg.initial_epochs if cfg.initial_epochs is not None else cfg.train.local_epochs_per_round
    )
    for i in order:
        s = states[i]
        if s.has_data and initial_epochs > 0:
            train_local(
                s.params,
                s.train_rows.features,
                s.train_rows.labels,
                cfg.train,
                rng=s.rng,
                epochs=initial_epochs,
            )

    participants = None
    if not cfg.dataless_participate:
        participants = frozenset(trainable)
    train_sizes_vec = [states[i].train_rows.n if states[i].has_data else 0 for i in range(n)]

    def _trace_accuracies() -> dict[int, float]:
        accs = {}
        for i in sorted(trainable):
            test = datasets[i].test
            if test.n:
                accs[i] = evaluate(states[i].params, test.features, test.labels)
        return accs

    traces: list[RoundTrace] | None = [] if cfg.record_traces else None
    n_snapshots = len(topology.snapshots)
    for r in range(rounds):
        received_from: dict[int, list[int]] = {}
        acc_pre = _trace_accuracies() if cfg.record_traces and cfg.trace_accuracy else None
        if cfg.mode == "dfl":
            _, edges = topology.snapshots[r % n_snapshots]
            current = [s.params for s in states]
            new_params, received_from = exchange_and_aggregate(
                current,
                edges,
                jam_set,
                weighting=cfg.aggregation_weighting,
                train_sizes=train_sizes_vec,
                participants=participants,
                node_order=order,
            )
            for i in range(n):
                states[i].params = new_params[i]
        acc_post = _trace_accuracies() if cfg.record_traces and cfg.trace_accuracy else None

        round_losses: dict[int, float] = {}
        for i in order:
            s = states[i]
            if s.has_data and cfg.train.local_epochs_per_round > 0:
                stats = train_local(
                    s.params,
                    s.train_rows.features,
                    s.train_rows.labels,
                    cfg.train,
                    rng=s.rng,
                )
                round_losses[i] = stats.epoch_losses[-1]
        if traces is not None:
            traces.append(
                RoundTrace(
                    round_index=r,
                    received_from=received_from,
                    train_loss=round_losses,
                    accuracy_pre=acc_pre,
                    accuracy_post=acc_post,
                )
            )

    accuracies: dict[int, float] = {}
    train_sizes: dict[int, int] = {}
    for i in sorted(trainable):
        test = datasets[i].test
        if test.n == 0:
            continue
        accuracies[i] = evaluate(states[i].params, test.features, test.labels)
        train_sizes[i] = states[i].train_rows.n
    if not accuracies:
        raise ConfigError("no node has both training and test data; nothing to report")

    config_echo = cfg.to_json_dict()
    config_echo["rounds"] = rounds
    config_echo["initial_epochs"] = initial_epochs
    attack_echo = None
    if plan is not None:
        attack_echo = {
            "jam_targets": sorted(jam_set),
            "poison_targets": sorted(poison_set),
            "flip_prob": flip_prob,
            "provenance": getattr(plan, "provenance", None),
        }
    ordered_ids = sorted(accuracies)
    return ExperimentReport(
        config=config_echo,
        attack=attack_echo,
        data_node_ids=ordered_ids,
        accuracies=accuracies,
        train_sizes=train_sizes,
        stats=analysis.accuracy_stats([accuracies[i] for i in ordered_ids]),
        dataless_node_ids=sorted(population.dataless_node_ids),
        traces=traces,
    )
