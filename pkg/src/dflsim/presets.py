"""Built-in scenarios.

``benchmark_*`` is the standard 100-node vehicular-style setup: 94 nodes
carry heterogeneous amounts of labeled data (training sizes span 86 to 2514
rows with a mean of 689, test sets are as small as 3 rows), 6 nodes carry
none and act as relays, and connectivity comes from a random waypoint walk.

``connectivity_*`` is a smaller setup where per-node data is nearly uniform
but nodes roam only around fixed home points, so time-averaged connectivity
is the dominant axis of heterogeneity.
"""
from __future__ import annotations

from .data import SyntheticSpec
from .engine import SimConfig
from .nn import TrainConfig, large_arch, small_arch
from .topology import MobilityConfig

BENCHMARK_SNAPSHOTS = 20
CONNECTIVITY_SNAPSHOTS = 20


def benchmark_population_spec(seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        node_count=100,
        dataless_count=6,
        train_size_range=(86, 2514),
        train_size_mean_target=689,
        test_size_range=(3, 114),
        class_balance=0.5,
        separation=2.2,
        heterogeneity=0.3,
        seed=seed,
    )


def benchmark_mobility() -> MobilityConfig:
    return MobilityConfig(radius=0.16, speed_range=(0.02, 0.08), pause_range=(0.0, 2.0))


def benchmark_sim_config(master_seed: int, *, arch: str = "large", mode: str = "dfl") -> SimConfig:
    return SimConfig(
        arch=large_arch() if arch == "large" else small_arch(),
        train=TrainConfig(learning_rate=0.05, batch_size=32, local_epochs_per_round=1),
        rounds=BENCHMARK_SNAPSHOTS,
        mode=mode,
        master_seed=master_seed,
    )


def connectivity_population_spec(seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        node_count=40,
        dataless_count=0,
        train_size_range=(150, 250),
        train_size_mean_target=200,
        test_size_range=(40, 60),
        class_balance=0.5,
        separation=1.8,
        heterogeneity=0.0,
        seed=seed,
    )


def connectivity_mobility() -> MobilityConfig:
    return MobilityConfig(
        radius=0.12,
        speed_range=(0.01, 0.04),
        pause_range=(0.0, 2.0),
        roam_radius=0.18,
    )


def connectivity_sim_config(master_seed: int, *, mode: str = "dfl") -> SimConfig:
    return SimConfig(
        arch=small_arch(),
        train=TrainConfig(learning_rate=0.05, batch_size=32, local_epochs_per_round=1),
        rounds=CONNECTIVITY_SNAPSHOTS,
        mode=mode,
        master_seed=master_seed,
    )
