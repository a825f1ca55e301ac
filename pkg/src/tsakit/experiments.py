"""Seeded experiment orchestration behind the command-line interface.

A single master seed derives every sub-seed (enumeration, split, validation
carve, initialization/batching, noise), so rerunning any command with the
same effective configuration reproduces its outputs byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import assess, cases, lstm
from .cases import Dataset, ProtocolRules
from .grid import GridCase
from .grids import builtin_grid
from .report import SelectionResult, SelectionRow, SweepResult, SweepRow
from .simulate import SimConfig


@dataclass(frozen=True)
class ExperimentConfig:
    grid: str = "wscc9"
    # generation protocol
    include_nominal: bool = True
    include_n_minus_1: bool = True
    load_levels: tuple[float, ...] = (0.8, 1.0, 1.2)
    bus_faults: bool = True
    line_fault_fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    clearing_range: tuple[float, float] = (0.1, 0.4)
    clearing_samples: int = 1
    target_count: int | None = None
    split_ratio: tuple[int, int] = (3, 1)
    angle_mode: str = "relative"
    # simulation
    dt: float = 1e-3
    horizon: float = 5.0
    fault_start: float = 0.1
    cycles: int = 20
    stop_when_unstable: bool = False
    # assessment
    window: int = 5          # training observation window T
    delta: float = 0.4
    t_max: int = 20
    # training
    max_epochs: int = 100
    batch_size: int = 32
    patience: int = 10
    hidden_size: int = 128
    dense_size: int = 32
    learning_rate: float = 1e-3
    per_timestep_loss: bool = True
    valid_fraction: float = 0.1
    # studies
    tve: float = 0.01
    sfs_epochs: int = 30
    time_repeats: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta}")
        if not 1 <= self.window <= self.t_max:
            raise ValueError(f"need 1 <= T <= t_max, got T={self.window}, t_max={self.t_max}")
        if self.cycles < self.t_max:
            raise ValueError(f"cycles per case ({self.cycles}) < t_max ({self.t_max})")

    def rules(self) -> ProtocolRules:
        return ProtocolRules(
            include_nominal=self.include_nominal,
            include_n_minus_1=self.include_n_minus_1,
            load_levels=tuple(self.load_levels),
            bus_faults=self.bus_faults,
            line_fault_fractions=tuple(self.line_fault_fractions),
            clearing_range=tuple(self.clearing_range),
            clearing_samples=self.clearing_samples,
            target_count=self.target_count,
        )

    def sim(self) -> SimConfig:
        return SimConfig(dt=self.dt, cycles=self.cycles, horizon=self.horizon,
                         fault_start=self.fault_start,
                         stop_when_unstable=self.stop_when_unstable)

    def train_config(self, seed: int, max_epochs: int | None = None) -> lstm.TrainConfig:
        return lstm.TrainConfig(
            max_epochs=max_epochs if max_epochs is not None else self.max_epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            seed=seed,
            per_timestep_loss=self.per_timestep_loss,
            hidden_size=self.hidden_size,
            dense_size=self.dense_size,
            learning_rate=self.learning_rate,
        )


def config_from_dict(doc: dict) -> ExperimentConfig:
    base = asdict(ExperimentConfig())
    unknown = set(doc) - set(base)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    base.update(doc)
    for key in ("load_levels", "line_fault_fractions", "clearing_range", "split_ratio"):
        base[key] = tuple(base[key])
    return ExperimentConfig(**base)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def derive_seed(master: int, label: str) -> int:
    """Stable sub-seed for one named random stream."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).hexdigest()
    return int(digest[:16], 16) % (2**63)


def resolve_workers(explicit: int | None = None) -> int:
    if explicit and explicit > 0:
        return explicit
    env = os.environ.get("TSAKIT_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return 1


def get_grid(config: ExperimentConfig) -> GridCase:
    return builtin_grid(config.grid)


def generate_and_split(config: ExperimentConfig, grid: GridCase | None = None,
                       workers: int | None = None) -> tuple[Dataset, Dataset]:
    grid = grid or get_grid(config)
    full = cases.generate_dataset(
        grid, config.rules(), seed=derive_seed(config.seed, "enumerate"),
        sim=config.sim(), angle_mode=config.angle_mode,
        workers=resolve_workers(workers))
    return cases.split_dataset(full, config.split_ratio,
                               seed=derive_seed(config.seed, "split"))


def carve_validation(config: ExperimentConfig, train: Dataset) -> tuple[Dataset, Dataset]:
    """Hold out a seeded validation slice of the training cases."""
    n = len(train.cases)
    n_valid = max(1, round(n * config.valid_fraction))
    if n_valid >= n:
        raise ValueError(f"cannot carve {n_valid} validation cases from {n}")
    perm = np.random.default_rng(derive_seed(config.seed, "valid")).permutation(n)
    valid_ix = sorted(perm[:n_valid])
    train_ix = sorted(perm[n_valid:])
    fit = replace(train, cases=[train.cases[i] for i in train_ix], split_tag="fit")
    valid = replace(train, cases=[train.cases[i] for i in valid_ix], split_tag="valid")
    return fit, valid


def train_from_config(config: ExperimentConfig, train: Dataset,
                      seed: int | None = None, max_epochs: int | None = None,
                      window: int | None = None):
    """Truncate to the observation window, carve validation, train one model."""
    t = window if window is not None else config.window
    fit, valid = carve_validation(config, train)
    fit = cases.truncate_window(fit, t)
    valid = cases.truncate_window(valid, t)
    tc = config.train_config(seed if seed is not None else derive_seed(config.seed, "train"),
                             max_epochs)
    t0 = time.perf_counter()
    params, history = lstm.train_model(fit, valid, tc)
    return params, history, time.perf_counter() - t0


def run_delta_sweep(config: ExperimentConfig, model: lstm.ModelParams,
                    test: Dataset) -> SweepResult:
    """Evaluate one trained model across the 49-point threshold grid."""
    scores = lstm.forward_scores(test.feature_matrix(config.t_max), model)
    labels = [case.label.y for case in test.cases]
    rows = []
    for delta_c in [round(0.10 + 0.01 * k, 2) for k in range(49)]:
        outcomes = [assess.decide_from_scores(scores[i], delta_c, config.t_max)
                    for i in range(len(test.cases))]
        rep = assess.report_from_outcomes(outcomes, labels, delta_c, config.t_max,
                                          test.dataset_id)
        rows.append(SweepRow(delta_c, rep.art, rep.accuracy, rep.fallback_rate, 0.0))
    return SweepResult("delta", rows)


def run_t_sweep(config: ExperimentConfig, train: Dataset, test: Dataset,
                t_values: list[int]) -> SweepResult:
    """Train a fresh seeded model per observation window, test on full streams."""
    rows = []
    for t in t_values:
        if t > train.cycles:
            raise ValueError(f"T={t} exceeds the {train.cycles} cycles per case")
        params, _, seconds = train_from_config(
            config, train, seed=derive_seed(config.seed, f"sweep-T-{t}"), window=t)
        rep = assess.evaluate_dataset(params, test, config.delta, config.t_max)
        rows.append(SweepRow(float(t), rep.art, rep.accuracy, rep.fallback_rate, seconds))
    return SweepResult("T", rows)


def _selection_metrics(config: ExperimentConfig, train: Dataset, test: Dataset,
                       bus_set: tuple[int, ...], seed: int,
                       max_epochs: int | None) -> tuple[float, float]:
    sub_train = cases.select_buses(train, bus_set)
    sub_test = cases.select_buses(test, bus_set)
    params, _, _ = train_from_config(config, sub_train, seed=seed, max_epochs=max_epochs)
    rep = assess.evaluate_dataset(params, sub_test, config.delta, config.t_max)
    return rep.accuracy, rep.art


def run_feature_selection(config: ExperimentConfig, train: Dataset, test: Dataset,
                          direction: str = "forward") -> SelectionResult:
    """Greedy wrapper selection over per-bus measurement groups.

    Candidates train at the reduced ``sfs_epochs`` budget; each retained set
    is re-trained at the full budget for the reported metrics. Ties break on
    accuracy, then lower ART, then lowest bus id.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    all_buses = list(train.bus_ids)
    cand_seed = derive_seed(config.seed, "selection")
    final_seed = derive_seed(config.seed, "train")

    chosen_sets: list[tuple[int, ...]] = []
    if direction == "forward":
        current: list[int] = []
        while len(current) < len(all_buses):
            best = None
            for bus in [b for b in all_buses if b not in current]:
                trial = tuple(sorted(current + [bus]))
                acc, art = _selection_metrics(config, train, test, trial,
                                              cand_seed, config.sfs_epochs)
                key = (-acc, art, bus)
                if best is None or key < best[0]:
                    best = (key, bus)
            current.append(best[1])
            chosen_sets.append(tuple(sorted(current)))
    else:
        current = list(all_buses)
        chosen_sets.append(tuple(sorted(current)))
        while len(current) > 1:
            best = None
            for bus in list(current):
                trial = tuple(sorted(b for b in current if b != bus))
                acc, art = _selection_metrics(config, train, test, trial,
                                              cand_seed, config.sfs_epochs)
                key = (-acc, art, bus)
                if best is None or key < best[0]:
                    best = (key, bus)
            current.remove(best[1])
            chosen_sets.append(tuple(sorted(current)))

    rows = []
    for bus_set in chosen_sets:
        acc, art = _selection_metrics(config, train, test, bus_set, final_seed, None)
        rows.append(SelectionRow(len(bus_set), bus_set, acc, art))
    rows.sort(key=lambda r: r.count)
    return SelectionResult(direction, rows)


def run_noise_study(config: ExperimentConfig, train: Dataset, test: Dataset,
                    clean_model: lstm.ModelParams | None = None):
    """Clean-baseline and noisy reports under the configured TVE bound.

    Noise is injected into both training and testing phasors; the noisy model
    trains with the same seed as the clean baseline so a zero TVE reproduces
    the clean run exactly.
    """
    if clean_model is None:
        clean_model, _, _ = train_from_config(config, train)
    clean_report = assess.evaluate_dataset(clean_model, test, config.delta, config.t_max)

    noisy_train = cases.inject_pmu_noise(train, config.tve,
                                         derive_seed(config.seed, "noise-train"))
    noisy_test = cases.inject_pmu_noise(test, config.tve,
                                        derive_seed(config.seed, "noise-test"))
    noisy_model, _, _ = train_from_config(config, noisy_train)
    noisy_report = assess.evaluate_dataset(noisy_model, noisy_test,
                                           config.delta, config.t_max)
    return clean_report, noisy_report, noisy_train, noisy_test
