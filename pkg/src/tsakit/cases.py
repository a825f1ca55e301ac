"""Contingency enumeration, labeled-sequence generation, and dataset handling.

Feature vectors follow the fixed column contract: per cycle, bus voltage
magnitudes occupy columns 0..B-1 and bus angles columns B..2B-1, both in
bus-id order. Angles are, by default, referenced to the frame's bus-average
(circular mean) angle so features are invariant to a common rotation.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .grid import (BusFault, Fault, GridCase, LineFault, apply_contingency_phases,
                   scale_operating_point, survivable_outages, with_branch_out)
from .simulate import (SimConfig, SimulationError, StabilityLabel, TrajectoryRecord,
                       label_from_trajectory, simulate_case)

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolRules:
    """Which dimensions of the generation protocol to enumerate."""

    include_nominal: bool = True
    include_n_minus_1: bool = True
    load_levels: tuple[float, ...] = (0.8, 1.0, 1.2)
    bus_faults: bool = True
    line_fault_fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    clearing_range: tuple[float, float] = (0.1, 0.4)
    clearing_samples: int = 1   # independent clearing-time draws per combination
    target_count: int | None = None


@dataclass(frozen=True)
class ContingencySpec:
    """One labeled scenario to simulate."""

    topology: int | None        # None = nominal, else out-branch index
    load_ratio: float
    fault: Fault
    clearing_time: float
    seed: int

    def __post_init__(self):
        if isinstance(self.fault, LineFault) and self.topology == self.fault.branch:
            raise DatasetError("faulted branch coincides with the out-of-service branch")


@dataclass
class LabeledSequence:
    case_id: str
    features: np.ndarray        # (T, 2B)
    label: StabilityLabel
    spec: ContingencySpec


@dataclass
class Dataset:
    cases: list[LabeledSequence]
    bus_count: int
    bus_ids: tuple[int, ...]
    cycle_rate: float
    cycles: int
    split_tag: str
    grid_name: str
    seed: int
    angle_mode: str = "relative"
    noise_tve: float = 0.0

    @property
    def dataset_id(self) -> str:
        tag = f"{self.grid_name}-s{self.seed}-{self.split_tag}"
        if self.noise_tve:
            tag += f"-tve{self.noise_tve:g}"
        return tag

    def label_counts(self) -> tuple[int, int]:
        """(stable, unstable) case counts."""
        stable = sum(c.label.y for c in self.cases)
        return stable, len(self.cases) - stable

    def feature_matrix(self, window: int | None = None) -> np.ndarray:
        t = window if window is not None else self.cycles
        return np.stack([c.features[:t] for c in self.cases])

    def labels(self) -> np.ndarray:
        return np.array([c.label.y for c in self.cases], dtype=float)


def enumerate_contingencies(grid: GridCase, rules: ProtocolRules,
                            seed: int) -> list[ContingencySpec]:
    """Cartesian product of topologies x load levels x faults, seeded.

    Clearing times are drawn uniformly from the configured range, one per
    spec, in enumeration order; the optional target count subsamples the
    product uniformly. Identical (grid, rules, seed) give an identical list.
    """
    topologies: list[int | None] = []
    if rules.include_nominal:
        topologies.append(None)
    if rules.include_n_minus_1:
        topologies.extend(survivable_outages(grid))
    if not topologies:
        raise DatasetError("protocol rules enumerate no topologies")

    if rules.clearing_samples < 1:
        raise DatasetError("clearing_samples must be >= 1")
    skeleton: list[tuple[int | None, float, Fault]] = []
    for topo in topologies:
        faults: list[Fault] = []
        if rules.bus_faults:
            faults.extend(BusFault(b.id) for b in grid.buses)
        for k, br in grid.in_service_branches():
            if k == topo:
                continue
            faults.extend(LineFault(k, f) for f in rules.line_fault_fractions)
        for ratio in rules.load_levels:
            for fault in faults:
                skeleton.extend([(topo, ratio, fault)] * rules.clearing_samples)
    if not skeleton:
        raise DatasetError("protocol rules enumerate no contingencies")

    rng = np.random.default_rng(seed)
    lo, hi = rules.clearing_range
    clearing = rng.uniform(lo, hi, size=len(skeleton))
    case_seeds = rng.integers(0, 2**31 - 1, size=len(skeleton))
    specs = [ContingencySpec(topo, ratio, fault, float(ct), int(cs))
             for (topo, ratio, fault), ct, cs in zip(skeleton, clearing, case_seeds)]

    if rules.target_count is not None and rules.target_count < len(specs):
        keep = np.sort(rng.choice(len(specs), size=rules.target_count, replace=False))
        specs = [specs[i] for i in keep]
    return specs


def realize_grid(grid: GridCase, spec: ContingencySpec) -> GridCase:
    g = scale_operating_point(grid, spec.load_ratio)
    if spec.topology is not None:
        g = with_branch_out(g, spec.topology)
    return g


def simulate_spec(grid: GridCase, spec: ContingencySpec,
                  sim: SimConfig) -> TrajectoryRecord:
    g = realize_grid(grid, spec)
    phases = apply_contingency_phases(g, spec.fault, spec.clearing_time)
    return simulate_case(g, phases, sim)


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2 * np.pi)


def _circular_mean(angles: np.ndarray) -> float:
    return float(np.angle(np.exp(1j * angles).sum()))


def build_feature_sequence(record: TrajectoryRecord, window: int,
                           angle_mode: str = "relative") -> np.ndarray:
    """Per-cycle feature vectors [V_1..V_B, theta_1..theta_B] for t = 1..window."""
    if len(record.frames) < window:
        raise DatasetError(
            f"trajectory has {len(record.frames)} frames, need {window}")
    if angle_mode not in ("relative", "raw"):
        raise DatasetError(f"unknown angle mode {angle_mode!r}")
    rows = []
    for frame in record.frames[:window]:
        ang = frame.angles
        if angle_mode == "relative":
            ang = _wrap_angle(ang - _circular_mean(ang))
        rows.append(np.concatenate([frame.magnitudes, ang]))
    return np.array(rows)


def _realize_one(args) -> tuple[int, LabeledSequence | None]:
    grid, spec, sim, window, angle_mode, index = args
    case_id = f"{grid.name}-c{index:05d}"
    try:
        record = simulate_spec(grid, spec, sim)
    except SimulationError as exc:
        log.warning("skipping %s (%s): %s", case_id, spec, exc)
        return index, None
    label = label_from_trajectory(record)
    features = build_feature_sequence(record, window, angle_mode)
    return index, LabeledSequence(case_id, features, label, spec)


def generate_dataset(grid: GridCase, rules: ProtocolRules, seed: int,
                     sim: SimConfig = SimConfig(), angle_mode: str = "relative",
                     workers: int = 1) -> Dataset:
    """Enumerate, simulate, and label the full protocol as one dataset.

    Specs with no pre-fault equilibrium (possible at extreme load levels) are
    skipped with a warning; everything else is deterministic in (grid, rules,
    seed) including the case order.
    """
    specs = enumerate_contingencies(grid, rules, seed)
    jobs = [(grid, spec, sim, sim.cycles, angle_mode, i) for i, spec in enumerate(specs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_realize_one, jobs, chunksize=8))
    else:
        results = [_realize_one(j) for j in jobs]
    cases = [c for _, c in results if c is not None]
    skipped = len(results) - len(cases)
    if skipped:
        log.warning("generation skipped %d of %d specs (no equilibrium)",
                    skipped, len(results))
    if not cases:
        raise DatasetError("no contingency case could be simulated")
    return Dataset(
        cases=cases,
        bus_count=grid.bus_count,
        bus_ids=tuple(b.id for b in grid.buses),
        cycle_rate=grid.base_frequency,
        cycles=sim.cycles,
        split_tag="all",
        grid_name=grid.name,
        seed=seed,
    )


def split_dataset(dataset: Dataset, ratio: tuple[int, int] = (3, 1),
                  seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random permutation, then a proportional train/test partition."""
    n = len(dataset.cases)
    parts = sum(ratio)
    if ratio[0] < 1 or ratio[1] < 1:
        raise DatasetError("split ratio parts must be positive integers")
    if n < parts:
        raise DatasetError(f"cannot split {n} cases at ratio {ratio[0]}:{ratio[1]}")
    n_train = n * ratio[0] // parts
    perm = np.random.default_rng(seed).permutation(n)
    train_ix = sorted(perm[:n_train])
    test_ix = sorted(perm[n_train:])
    train = replace(dataset, cases=[dataset.cases[i] for i in train_ix], split_tag="train")
    test = replace(dataset, cases=[dataset.cases[i] for i in test_ix], split_tag="test")
    return train, test


def inject_pmu_noise(dataset: Dataset, tve_max: float, seed: int) -> Dataset:
    """Perturb every voltage phasor within a complex disc of radius tve_max*|V|.

    The perturbed magnitude/angle features are rebuilt with the dataset's
    angle referencing; labels are untouched. The draw is uniform over the
    disc, so every sample satisfies |e|/|V| <= tve_max by construction.
    """
    if not 0.0 <= tve_max < 1.0:
        raise DatasetError(f"tve_max must be in [0, 1), got {tve_max}")
    if tve_max == 0.0:
        return replace(dataset, cases=[replace(c, features=c.features.copy())
                                       for c in dataset.cases], noise_tve=0.0)
    rng = np.random.default_rng(seed)
    b = dataset.bus_count
    noisy_cases = []
    for case in dataset.cases:
        mags = case.features[:, :b]
        angs = case.features[:, b:]
        phasor = mags * np.exp(1j * angs)
        radius = tve_max * mags * np.sqrt(rng.uniform(size=mags.shape))
        phase = rng.uniform(0.0, 2 * np.pi, size=mags.shape)
        noisy = phasor + radius * np.exp(1j * phase)
        scale = np.where(mags > 0, mags, 1.0)
        if (np.abs(noisy - phasor) / scale).max() > tve_max * (1 + 1e-12):
            raise AssertionError("noise draw exceeded the TVE bound")
        new_angs = np.angle(noisy)
        if dataset.angle_mode == "relative":
            new_angs = np.array([
                _wrap_angle(row - _circular_mean(row)) for row in new_angs])
        features = np.concatenate([np.abs(noisy), new_angs], axis=1)
        noisy_cases.append(replace(case, features=features))
    return replace(dataset, cases=noisy_cases, noise_tve=tve_max)


def truncate_window(dataset: Dataset, window: int) -> Dataset:
    """Keep only the first ``window`` cycles of every case."""
    if window < 1 or window > dataset.cycles:
        raise DatasetError(f"window {window} outside 1..{dataset.cycles}")
    cases = [replace(c, features=c.features[:window].copy()) for c in dataset.cases]
    return replace(dataset, cases=cases, cycles=window)


def select_buses(dataset: Dataset, bus_ids: tuple[int, ...] | list[int]) -> Dataset:
    """Restrict features to the measurement columns of the given buses.

    Relative angles are re-referenced to the circular mean over the kept
    buses, so the reduced feature set is self-contained.
    """
    positions = []
    for bus in bus_ids:
        try:
            positions.append(dataset.bus_ids.index(bus))
        except ValueError:
            raise DatasetError(f"bus {bus} not in dataset") from None
    b = dataset.bus_count
    cases = []
    for case in dataset.cases:
        mags = case.features[:, positions]
        angs = case.features[:, [b + p for p in positions]]
        if dataset.angle_mode == "relative":
            angs = np.array([_wrap_angle(row - _circular_mean(row)) for row in angs])
        cases.append(replace(case, features=np.concatenate([mags, angs], axis=1)))
    return replace(dataset, cases=cases, bus_count=len(positions),
                   bus_ids=tuple(bus_ids))


# ---------------------------------------------------------------------------
# Persistence: JSON lines, one header record then one record per case.
# Floats survive a round trip bit-exactly (shortest-repr JSON encoding).

def _fault_to_dict(fault: Fault) -> dict:
    if isinstance(fault, BusFault):
        return {"kind": "bus", "bus": fault.bus}
    return {"kind": "line", "branch": fault.branch, "fraction": fault.fraction}


def _fault_from_dict(doc: dict) -> Fault:
    if doc["kind"] == "bus":
        return BusFault(int(doc["bus"]))
    return LineFault(int(doc["branch"]), float(doc["fraction"]))


def save_dataset(dataset: Dataset, path) -> None:
    header = {
        "format": "tsakit-dataset",
        "version": DATASET_FORMAT_VERSION,
        "grid": dataset.grid_name,
        "dataset_id": dataset.dataset_id,
        "bus_count": dataset.bus_count,
        "bus_ids": list(dataset.bus_ids),
        "cycles": dataset.cycles,
        "cycle_rate": dataset.cycle_rate,
        "seed": dataset.seed,
        "split": dataset.split_tag,
        "angle_mode": dataset.angle_mode,
        "noise_tve": dataset.noise_tve,
        "case_count": len(dataset.cases),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for case in dataset.cases:
            rec = {
                "case_id": case.case_id,
                "spec": {
                    "topology": case.spec.topology,
                    "load_ratio": case.spec.load_ratio,
                    "fault": _fault_to_dict(case.spec.fault),
                    "clearing_time": case.spec.clearing_time,
                    "seed": case.spec.seed,
                },
                "label": {"eta": case.label.eta, "y": case.label.y},
                "features": case.features.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "tsakit-dataset":
            raise DatasetError(f"{path} is not a dataset file")
        if header.get("version") != DATASET_FORMAT_VERSION:
            raise DatasetError(f"unsupported dataset version {header.get('version')}")
        cases = []
        for line in fh:
            rec = json.loads(line)
            sd = rec["spec"]
            spec = ContingencySpec(
                topology=sd["topology"],
                load_ratio=float(sd["load_ratio"]),
                fault=_fault_from_dict(sd["fault"]),
                clearing_time=float(sd["clearing_time"]),
                seed=int(sd["seed"]),
            )
            label = StabilityLabel(eta=float(rec["label"]["eta"]), y=int(rec["label"]["y"]))
            cases.append(LabeledSequence(rec["case_id"], np.array(rec["features"]),
                                         label, spec))
    if len(cases) != header["case_count"]:
        raise DatasetError(f"{path}: case count mismatch")
    return Dataset(
        cases=cases,
        bus_count=int(header["bus_count"]),
        bus_ids=tuple(header["bus_ids"]),
        cycle_rate=float(header["cycle_rate"]),
        cycles=int(header["cycles"]),
        split_tag=header["split"],
        grid_name=header["grid"],
        seed=int(header["seed"]),
        angle_mode=header["angle_mode"],
        noise_tve=float(header["noise_tve"]),
    )
