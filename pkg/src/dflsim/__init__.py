"""Deterministic simulator for decentralized federated learning over
time-varying networks, with a multi-domain attack harness."""

from .analysis import (
    AccuracyStats,
    CorrelationTable,
    accuracy_stats,
    correlation_report,
    histogram,
    pearson,
    spearman,
)
from .attacks import (
    AttackPlan,
    BaselineBundle,
    RankingInputs,
    SweepCell,
    SweepSpec,
    TargetingStrategy,
    attack_sweep,
    build_plan,
    compute_baselines,
    select_targets,
)
from .data import (
    IngestFormat,
    LabeledRows,
    NodeDataset,
    Population,
    SyntheticSpec,
    flip_labels,
    generate_synthetic,
    ingest,
    load_population,
    save_population,
)
from .engine import ExperimentReport, SimConfig, exchange_and_aggregate, run_experiment
from .errors import (
    AggregationError,
    ConfigError,
    CorrelationUndefinedError,
    DFLSimError,
    IngestionError,
    NumericError,
    PlanError,
    SelectionError,
)
from .nn import (
    ModelArch,
    ModelParams,
    TrainConfig,
    evaluate,
    federated_average,
    forward,
    forward_batch,
    gradients,
    init_params,
    large_arch,
    small_arch,
    train_local,
)
from .topology import (
    MobilityConfig,
    NetworkMetricsSeries,
    NodeNetStats,
    TopologySeries,
    aggregate_adjacency,
    connected_components,
    generate_mobility_topology,
    load_topology,
    metrics_over_time,
    node_net_stats,
    save_topology,
)

__version__ = "0.1.0"
