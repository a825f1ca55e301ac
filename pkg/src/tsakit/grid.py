"""Power network model: buses, branches, machines, loads, and admittance matrices.

All quantities are per-unit on a common system MVA base. Admittance matrices
are dense complex numpy arrays; buses are addressed by integer id and mapped
to matrix indices in the order they appear in ``GridCase.buses``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

# Near-ideal short used to ground the faulted node; keeps the matrix order
# constant across contingency phases instead of eliminating the node.
GROUNDING_SHUNT = 1e6 + 0j


class GridError(ValueError):
    """Invalid grid data or an operation that the network cannot support."""


@dataclass(frozen=True)
class Bus:
    id: int
    shunt: complex = 0j  # shunt admittance to ground


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    in_service: bool = True

    @property
    def impedance(self) -> complex:
        return complex(self.r, self.x)

    @property
    def admittance(self) -> complex:
        return 1.0 / self.impedance


@dataclass(frozen=True)
class Machine:
    bus: int
    h: float        # inertia constant, seconds
    d: float        # damping, per-unit torque per rad/s
    xdp: float      # transient reactance X'd
    pm: float       # mechanical power
    ep: float       # internal EMF magnitude E'


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class BusFault:
    bus: int


@dataclass(frozen=True)
class LineFault:
    branch: int           # index into GridCase.branches
    fraction: float       # position along the line, measured from from_bus


Fault = BusFault | LineFault


@dataclass(frozen=True)
class GridCase:
    """One operating point of a power network."""

    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    machines: tuple[Machine, ...]
    loads: tuple[Load, ...]
    base_frequency: float = 60.0

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise GridError(f"duplicate bus ids in grid {self.name!r}")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise GridError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
            if br.impedance == 0:
                raise GridError(f"branch {br.from_bus}-{br.to_bus} has zero series impedance")
        for m in self.machines:
            if m.bus not in known:
                raise GridError(f"machine at unknown bus {m.bus}")
            if m.h <= 0 or m.xdp <= 0:
                raise GridError(f"machine at bus {m.bus} needs H > 0 and X'd > 0")
        for ld in self.loads:
            if ld.bus not in known:
                raise GridError(f"load at unknown bus {ld.bus}")
        if self.base_frequency not in (50.0, 60.0):
            raise GridError("base frequency must be 50 or 60 Hz")

    @property
    def bus_count(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index_map()[bus_id]
        except KeyError:
            raise GridError(f"unknown bus id {bus_id}") from None

    def _index_map(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def in_service_branches(self) -> list[tuple[int, Branch]]:
        return [(i, br) for i, br in enumerate(self.branches) if br.in_service]


def build_admittance(grid: GridCase) -> np.ndarray:
    """Assemble the bus admittance matrix from in-service branches and shunts.

    Raises GridError naming the isolated nodes if the in-service branch set
    leaves the network disconnected.
    """
    check_connected(grid)
    n = grid.bus_count
    idx = grid._index_map()
    y = np.zeros((n, n), dtype=complex)
    for _, br in grid.in_service_branches():
        i, j = idx[br.from_bus], idx[br.to_bus]
        ybr = br.admittance
        y[i, i] += ybr
        y[j, j] += ybr
        y[i, j] -= ybr
        y[j, i] -= ybr
    for b in grid.buses:
        y[idx[b.id], idx[b.id]] += b.shunt
    return y


def check_connected(grid: GridCase) -> None:
    """Verify the in-service branch set leaves all buses on one island."""
    if grid.bus_count == 0:
        raise GridError("grid has no buses")
    adj: dict[int, set[int]] = {b.id: set() for b in grid.buses}
    for _, br in grid.in_service_branches():
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    start = grid.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    isolated = sorted(set(b.id for b in grid.buses) - seen)
    if isolated:
        raise GridError(f"network is disconnected; isolated buses: {isolated}")


def kron_reduce(y: np.ndarray, keep: list[int] | np.ndarray) -> np.ndarray:
    """Eliminate all nodes not in ``keep`` via the Schur complement.

    Returns Y_kk - Y_ke @ Y_ee^-1 @ Y_ek over the kept nodes, in the order
    given by ``keep``.
    """
    keep = np.asarray(keep, dtype=int)
    n = y.shape[0]
    elim = np.setdiff1d(np.arange(n), keep)
    if elim.size == 0:
        return y[np.ix_(keep, keep)].copy()
    y_kk = y[np.ix_(keep, keep)]
    y_ke = y[np.ix_(keep, elim)]
    y_ek = y[np.ix_(elim, keep)]
    y_ee = y[np.ix_(elim, elim)]
    try:
        sol = np.linalg.solve(y_ee, y_ek)
    except np.linalg.LinAlgError:
        raise GridError("eliminated block is singular (isolated eliminated node?)") from None
    return y_kk - y_ke @ sol


@dataclass(frozen=True)
class ContingencyPhases:
    """Admittance matrices for the three phases of one contingency.

    For line faults ``fault_on`` has one extra node (the internal fault point,
    appended last); ``fault_node`` is its index. For bus faults the order is
    unchanged and ``fault_node`` is the faulted bus index.
    """

    prefault: np.ndarray
    fault_on: np.ndarray
    postfault: np.ndarray
    clearing_time: float
    fault_node: int

    def __post_init__(self):
        if self.clearing_time <= 0:
            raise GridError("clearing time must be positive")


def apply_contingency_phases(grid: GridCase, fault: Fault, clearing_time: float) -> ContingencyPhases:
    """Build pre-fault / fault-on / post-fault admittance matrices.

    Bus faults ground the bus through ``GROUNDING_SHUNT`` and leave the
    post-fault network equal to the pre-fault one. Line faults split the
    branch at the given fraction into two series segments joined at a new
    grounded node; clearing removes the whole branch.
    """
    pre = build_admittance(grid)
    idx = grid._index_map()
    if isinstance(fault, BusFault):
        k = grid.bus_index(fault.bus)
        fault_on = pre.copy()
        fault_on[k, k] += GROUNDING_SHUNT
        return ContingencyPhases(pre, fault_on, pre.copy(), clearing_time, k)

    if not isinstance(fault, LineFault):
        raise GridError(f"unsupported fault descriptor {fault!r}")
    if not 0.0 < fault.fraction < 1.0:
        raise GridError(f"line fault fraction {fault.fraction} outside (0, 1)")
    try:
        br = grid.branches[fault.branch]
    except IndexError:
        raise GridError(f"no branch with index {fault.branch}") from None
    if not br.in_service:
        raise GridError(f"fault on out-of-service branch {fault.branch} ({br.from_bus}-{br.to_bus})")

    i, j = idx[br.from_bus], idx[br.to_bus]
    ybr = br.admittance
    n = grid.bus_count

    # Remove the faulted branch; what remains is the post-fault network.
    post = pre.copy()
    post[i, i] -= ybr
    post[j, j] -= ybr
    post[i, j] += ybr
    post[j, i] += ybr

    # Fault-on: branch split into fraction*z and (1-fraction)*z around a new
    # node n, which carries the grounding shunt.
    y1 = 1.0 / (fault.fraction * br.impedance)
    y2 = 1.0 / ((1.0 - fault.fraction) * br.impedance)
    fault_on = np.zeros((n + 1, n + 1), dtype=complex)
    fault_on[:n, :n] = post
    fault_on[i, i] += y1
    fault_on[n, n] += y1 + y2 + GROUNDING_SHUNT
    fault_on[i, n] -= y1
    fault_on[n, i] -= y1
    fault_on[j, j] += y2
    fault_on[j, n] -= y2
    fault_on[n, j] -= y2
    return ContingencyPhases(pre, fault_on, post, clearing_time, n)


def scale_operating_point(grid: GridCase, ratio: float) -> GridCase:
    """Scale all load powers and machine mechanical powers by ``ratio``."""
    if ratio <= 0:
        raise GridError(f"load/generation scaling ratio must be positive, got {ratio}")
    machines = tuple(replace(m, pm=m.pm * ratio) for m in grid.machines)
    loads = tuple(replace(ld, p=ld.p * ratio, q=ld.q * ratio) for ld in grid.loads)
    return replace(grid, machines=machines, loads=loads)


def with_branch_out(grid: GridCase, branch: int) -> GridCase:
    """Return the N-1 variant with one branch switched out of service."""
    try:
        br = grid.branches[branch]
    except IndexError:
        raise GridError(f"no branch with index {branch}") from None
    if not br.in_service:
        raise GridError(f"branch {branch} is already out of service")
    branches = tuple(replace(b, in_service=False) if k == branch else b
                     for k, b in enumerate(grid.branches))
    return replace(grid, branches=branches)


def survivable_outages(grid: GridCase) -> list[int]:
    """Branch indices whose individual removal keeps the network connected.

    Outages that would island the network are skipped with a logged warning.
    """
    out = []
    for k, br in grid.in_service_branches():
        try:
            check_connected(with_branch_out(grid, k))
        except GridError:
            log.warning("skipping N-1 outage of branch %d (%d-%d): network would disconnect",
                        k, br.from_bus, br.to_bus)
            continue
        out.append(k)
    return out


# ---------------------------------------------------------------------------
# Grid description files (JSON). Field names documented in the README.

def grid_to_dict(grid: GridCase) -> dict:
    return {
        "name": grid.name,
        "base_frequency": grid.base_frequency,
        "buses": [{"id": b.id, "gs": b.shunt.real, "bs": b.shunt.imag} for b in grid.buses],
        "branches": [{"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
                      "status": int(br.in_service)} for br in grid.branches],
        "machines": [{"bus": m.bus, "h": m.h, "d": m.d, "xdp": m.xdp, "pm": m.pm, "ep": m.ep}
                     for m in grid.machines],
        "loads": [{"bus": ld.bus, "p": ld.p, "q": ld.q} for ld in grid.loads],
    }


def grid_from_dict(doc: dict) -> GridCase:
    return GridCase(
        name=doc["name"],
        base_frequency=float(doc.get("base_frequency", 60.0)),
        buses=tuple(Bus(int(b["id"]), complex(b.get("gs", 0.0), b.get("bs", 0.0)))
                    for b in doc["buses"]),
        branches=tuple(Branch(int(br["from"]), int(br["to"]), float(br["r"]), float(br["x"]),
                              bool(br.get("status", 1))) for br in doc["branches"]),
        machines=tuple(Machine(int(m["bus"]), float(m["h"]), float(m["d"]), float(m["xdp"]),
                               float(m["pm"]), float(m["ep"])) for m in doc["machines"]),
        loads=tuple(Load(int(ld["bus"]), float(ld["p"]), float(ld["q"])) for ld in doc["loads"]),
    )


def save_grid(grid: GridCase, path) -> None:
    with open(path, "w") as fh:
        json.dump(grid_to_dict(grid), fh, indent=2)
        fh.write("\n")


def load_grid(path) -> GridCase:
    with open(path) as fh:
        return grid_from_dict(json.load(fh))
