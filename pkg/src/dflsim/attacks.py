"""Attack planning and sweeps: ranked target selection, jamming/poisoning
plans, joint plans, and grids that share one set of clean baseline runs."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Population
from .engine import ExperimentReport, SimConfig, run_experiment
from .errors import ConfigError, PlanError, SelectionError
from .topology import NodeNetStats, TopologySeries, node_net_stats

STRATEGY_KINDS = (
    "dfl_rank",
    "local_rank",
    "degree",
    "cc_size",
    "conn_time",
    "explicit_list",
    "random",
)

# score field on RankingInputs and a human description of its prerequisite
_SCORE_SOURCES = {
    "dfl_rank": ("dfl_accuracy", "a clean dfl-mode baseline run"),
    "local_rank": ("local_accuracy", "a local-only baseline run"),
    "degree": ("avg_in_degree", "topology node statistics"),
    "cc_size": ("avg_component_size", "topology node statistics"),
    "conn_time": ("connected_ratio", "topology node statistics"),
}


@dataclass(frozen=True)
class TargetingStrategy:
    """How to pick a target set: a ranking kind plus its size k.

    Ranked kinds take the k highest-scoring nodes, ties broken by ascending
    node id. ``explicit_list`` uses ``node_ids`` verbatim; ``random`` draws a
    seeded shuffle prefix, so growing k only extends the set.
    """

    kind: str
    k: int = 0
    node_ids: tuple[int, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown targeting kind {self.kind!r}")
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        if self.kind == "explicit_list":
            if self.node_ids is None:
                raise ConfigError("explicit_list targeting requires node_ids")
            if len(set(self.node_ids)) != len(self.node_ids):
                raise ConfigError("explicit_list node_ids must be unique")
        if self.kind == "random" and self.seed is None:
            raise ConfigError("random targeting requires a seed")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "node_ids": list(self.node_ids) if self.node_ids is not None else None,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RankingInputs:
    """Score vectors a strategy may rank by, each keyed by node id."""

    dfl_accuracy: Mapping[int, float] | None = None
    local_accuracy: Mapping[int, float] | None = None
    avg_in_degree: Mapping[int, float] | None = None
    avg_component_size: Mapping[int, float] | None = None
    connected_ratio: Mapping[int, float] | None = None
    eligible: tuple[int, ...] | None = None  # pool for random targeting

    def restricted_to(self, node_ids: Iterable[int]) -> "RankingInputs":
        keep = set(node_ids)

        def cut(vec):
            return {k: v for k, v in vec.items() if k in keep} if vec is not None else None

        eligible = None
        if self.eligible is not None:
            eligible = tuple(i for i in self.eligible if i in keep)
        return RankingInputs(
            dfl_accuracy=cut(self.dfl_accuracy),
            local_accuracy=cut(self.local_accuracy),
            avg_in_degree=cut(self.avg_in_degree),
            avg_component_size=cut(self.avg_component_size),
            connected_ratio=cut(self.connected_ratio),
            eligible=eligible,
        )


def select_targets(strategy: TargetingStrategy, inputs: RankingInputs) -> list[int]:
    """Resolve a strategy to an ordered target list of length k."""
    if strategy.kind == "explicit_list":
        return list(strategy.node_ids)
    if strategy.kind == "random":
        if inputs.eligible is None:
            raise PlanError("random targeting requires the eligible node set")
        pool = sorted(inputs.eligible)
        if strategy.k > len(pool):
            raise SelectionError(f"k={strategy.k} exceeds {len(pool)} eligible nodes")
        rng = np.random.default_rng(strategy.seed)
        perm = rng.permutation(len(pool))
        return [pool[i] for i in perm[: strategy.k]]

    score_field, prerequisite = _SCORE_SOURCES[strategy.kind]
    scores = getattr(inputs, score_field)
    if scores is None:
        raise PlanError(f"{strategy.kind} targeting requires {prerequisite}")
    if strategy.k > len(scores):
        raise SelectionError(f"k={strategy.k} exceeds {len(scores)} eligible nodes")
    ranked = sorted(scores, key=lambda i: (-scores[i], i))
    return ranked[: strategy.k]


@dataclass(frozen=True)
class AttackPlan:
    """Resolved attack: who gets jammed, who gets poisoned, how hard."""

    jam_targets: frozenset[int] = frozenset()
    poison_targets: frozenset[int] = frozenset()
    flip_prob: float = 0.0
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.flip_prob <= 1.0):
            raise ConfigError("flip_prob must be in [0, 1]")
        object.__setattr__(self, "jam_targets", frozenset(self.jam_targets))
        object.__setattr__(self, "poison_targets", frozenset(self.poison_targets))

    @staticmethod
    def none() -> "AttackPlan":
        return AttackPlan()

    def to_json_dict(self) -> dict:
        return {
            "jam_targets": sorted(self.jam_targets),
            "poison_targets": sorted(self.poison_targets),
            "flip_prob": self.flip_prob,
            "provenance": self.provenance or None,
        }


def build_plan(
    jam_strategy: TargetingStrategy | None = None,
    poison_strategy: TargetingStrategy | None = None,
    flip_prob: float = 0.0,
    *,
    ranking: RankingInputs,
    data_node_ids: Iterable[int],
) -> AttackPlan:
    """Resolve both strategies against baseline scores into a concrete plan.

    Poison targets are ranked over (and limited to) data nodes; jam targets
    may be any node. Overlap between the two sets is allowed.
    """
    data_ids = sorted(set(data_node_ids))
    provenance: dict = {}
    jam_ids: list[int] = []
    poison_ids: list[int] = []
    if jam_strategy is not None:
        jam_ids = select_targets(jam_strategy, ranking)
        provenance["jam"] = {"strategy": jam_strategy.to_json_dict(), "targets": jam_ids}
    if poison_strategy is not None:
        poison_ids = select_targets(poison_strategy, ranking.restricted_to(data_ids))
        outside = set(poison_ids) - set(data_ids)
        if outside:
            raise ConfigError(f"cannot poison nodes without training data: {sorted(outside)}")
        provenance["poison"] = {
            "strategy": poison_strategy.to_json_dict(),
            "targets": poison_ids,
        }
    return AttackPlan(frozenset(jam_ids), frozenset(poison_ids), flip_prob, provenance)


@dataclass
class BaselineBundle:
    """Clean runs and topology stats every targeting strategy may need."""

    dfl_report: ExperimentReport
    local_report: ExperimentReport
    node_stats: list[NodeNetStats]

    def ranking_inputs(self) -> RankingInputs:
        all_ids = tuple(range(len(self.node_stats)))
        return RankingInputs(
            dfl_accuracy=dict(self.dfl_report.accuracies),
            local_accuracy=dict(self.local_report.accuracies),
            avg_in_degree={i: s.avg_in_degree for i, s in enumerate(self.node_stats)},
            avg_component_size={i: s.avg_component_size for i, s in enumerate(self.node_stats)},
            connected_ratio={i: s.connected_ratio for i, s in enumerate(self.node_stats)},
            eligible=all_ids,
        )


def compute_baselines(
    population: Population, topology: TopologySeries, cfg: SimConfig
) -> BaselineBundle:
    """Run the clean dfl and local-only baselines plus topology stats."""
    dfl_report = run_experiment(population, topology, replace(cfg, mode="dfl"))
    local_report = run_experiment(population, topology, replace(cfg, mode="local-only"))
    return BaselineBundle(dfl_report, local_report, node_net_stats(topology))


@dataclass(frozen=True)
class SweepCell:
    """One grid point: optional jam and poison settings plus intensity.

    ``jam_k`` / ``poison_k`` accept an absolute count, a fraction in (0, 1)
    of the eligible nodes, or the string "all" (jam only).
    """

    label: str
    jam_kind: str | None = None
    jam_k: object = None
    poison_kind: str | None = None
    poison_k: object = None
    flip_prob: float = 0.0


@dataclass(frozen=True)
class SweepSpec:
    cells: tuple[SweepCell, ...]


@dataclass
class SweepCellResult:
    cell: SweepCell
    plan: AttackPlan
    report: ExperimentReport


@dataclass
class SweepResult:
    baselines: BaselineBundle
    cells: list[SweepCellResult]

    TABLE_HEADER = (
        "label",
        "jam_kind",
        "jam_k",
        "poison_kind",
        "poison_k",
        "flip_prob",
        "average",
        "minimum",
        "maximum",
        "std_dev",
    )

    def table_rows(self) -> list[tuple]:
        rows = []
        for res in self.cells:
            c, st = res.cell, res.report.stats
            rows.append(
                (
                    c.label,
                    c.jam_kind or "",
                    "" if c.jam_k is None else c.jam_k,
                    c.poison_kind or "",
                    "" if c.poison_k is None else c.poison_k,
                    c.flip_prob,
                    st.average,
                    st.minimum,
                    st.maximum,
                    st.std_dev,
                )
            )
        return rows


def resolve_k(value, eligible_count: int) -> int:
    """Absolute k, or a fraction of the eligible pool rounded to nearest."""
    if isinstance(value, float) and 0.0 < value < 1.0:
        return int(round(value * eligible_count))
    if isinstance(value, float) and value == 1.0:
        return eligible_count
    k = int(value)
    if k < 0:
        raise ConfigError("k must be non-negative")
    return k


def _cell_strategies(
    cell: SweepCell, *, all_ids: Sequence[int], data_ids: Sequence[int]
) -> tuple[TargetingStrategy | None, TargetingStrategy | None]:
    jam = None
    if cell.jam_kind is not None:
        if cell.jam_k == "all":
            jam = TargetingStrategy("explicit_list", k=len(all_ids), node_ids=tuple(all_ids))
        else:
            base = len(data_ids) if cell.jam_kind in ("dfl_rank", "local_rank") else len(all_ids)
            jam = TargetingStrategy(cell.jam_kind, k=resolve_k(cell.jam_k, base))
    poison = None
    if cell.poison_kind is not None:
        poison = TargetingStrategy(cell.poison_kind, k=resolve_k(cell.poison_k, len(data_ids)))
    return jam, poison


def _run_cell(args):
    population, topology, cfg, plan = args
    return run_experiment(population, topology, cfg, plan)


def attack_sweep(
    population: Population,
    topology: TopologySeries,
    cfg: SimConfig,
    sweep: SweepSpec,
    *,
    baselines: BaselineBundle | None = None,
    workers: int = 1,
) -> SweepResult:
    """Run every grid cell against shared baselines with shared seeds."""
    if baselines is None:
        baselines = compute_baselines(population, topology, cfg)
    ranking = baselines.ranking_inputs()
    data_ids = sorted(baselines.local_report.accuracies)
    all_ids = list(range(population.node_count))

    plans = []
    for cell in sweep.cells:
        jam, poison = _cell_strategies(cell, all_ids=all_ids, data_ids=data_ids)
        plans.append(
            build_plan(jam, poison, cell.flip_prob, ranking=ranking, data_node_ids=data_ids)
        )

    run_cfg = replace(cfg, mode="dfl")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(
                pool.map(_run_cell, [(population, topology, run_cfg, plan) for plan in plans])
            )
    else:
        reports = [run_experiment(population, topology, run_cfg, plan) for plan in plans]

    results = [
        SweepCellResult(cell, plan, report)
        for cell, plan, report in zip(sweep.cells, plans, reports)
    ]
    return SweepResult(baselines, results)


def jamming_grid(
    ks: Sequence = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90),
    include_all: bool = True,
    kind: str = "dfl_rank",
) -> SweepSpec:
    """Jamming-intensity grid; the final cell severs every node's inputs."""
    cells = [
        SweepCell(label=f"jam_{kind}_k{k}", jam_kind=kind, jam_k=k) for k in ks
    ]
    if include_all:
        cells.append(SweepCell(label="jam_all", jam_kind=kind, jam_k="all"))
    return SweepSpec(tuple(cells))


def poisoning_grid(
    ks: Sequence = (25, 47, 70),
    flip_probs: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
    kind: str = "local_rank",
) -> SweepSpec:
    cells = [
        SweepCell(
            label=f"poison_{kind}_k{k}_p{p}",
            poison_kind=kind,
            poison_k=k,
            flip_prob=p,
        )
        for k in ks
        for p in flip_probs
    ]
    return SweepSpec(tuple(cells))


def joint_grid(
    jam_ks: Sequence = (25, 47, 70),
    poison_ks: Sequence = (25, 47, 70),
    flip_probs: Sequence[float] = (0.5, 1.0),
    jam_kind: str = "dfl_rank",
    poison_kind: str = "local_rank",
) -> SweepSpec:
    cells = [
        SweepCell(
            label=f"jam_k{kj}_poison_k{kp}_p{p}",
            jam_kind=jam_kind,
            jam_k=kj,
            poison_kind=poison_kind,
            poison_k=kp,
            flip_prob=p,
        )
        for kp in poison_ks
        for kj in jam_ks
        for p in flip_probs
    ]
    return SweepSpec(tuple(cells))


def network_property_grid(
    property_kind: str,
    ks: Sequence = (25, 47, 70),
    flip_probs: Sequence[float] = (0.5, 1.0),
) -> SweepSpec:
    """Jam-only, poison-only and joint cells targeted by one network metric."""
    if property_kind not in ("degree", "cc_size", "conn_time"):
        raise ConfigError(f"property_kind must be a network metric, got {property_kind!r}")
    cells = []
    for k in ks:
        cells.append(
            SweepCell(label=f"{property_kind}_k{k}_jam", jam_kind=property_kind, jam_k=k)
        )
        for p in flip_probs:
            cells.append(
                SweepCell(
                    label=f"{property_kind}_k{k}_poison_p{p}",
                    poison_kind=property_kind,
                    poison_k=k,
                    flip_prob=p,
                )
            )
            cells.append(
                SweepCell(
                    label=f"{property_kind}_k{k}_joint_p{p}",
                    jam_kind=property_kind,
                    jam_k=k,
                    poison_kind=property_kind,
                    poison_k=k,
                    flip_prob=p,
                )
            )
    return SweepSpec(tuple(cells))
