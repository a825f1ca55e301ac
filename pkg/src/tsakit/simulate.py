"""Classical-model swing simulation through a contingency's three phases.

Machines are constant EMF behind transient reactance. Loads become constant
shunt admittances, the network is Kron-reduced to the machine internal nodes
for the swing computation, and the full node set is kept for per-bus phasor
output. Integration is fixed-step RK4 with the step shortened where needed to
land exactly on phase switches and cycle sampling instants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import ContingencyPhases, GridCase, build_admittance, scale_operating_point

LOAD_CONVERSION_VOLTAGE = 1.0  # per-unit voltage at which loads become shunts


class SimulationError(RuntimeError):
    """Raised when no equilibrium exists or the network cannot be solved."""


@dataclass
class SwingState:
    """Rotor angles (rad), speed deviations (rad/s), and simulation time (s)."""

    angles: np.ndarray
    speeds: np.ndarray
    time: float

    def copy(self) -> "SwingState":
        return SwingState(self.angles.copy(), self.speeds.copy(), self.time)


@dataclass
class PhasorFrame:
    """Per-bus voltage magnitudes (pu) and angles wrapped to (-pi, pi]."""

    magnitudes: np.ndarray
    angles: np.ndarray
    cycle_index: int


@dataclass
class TrajectoryRecord:
    frames: list[PhasorFrame]
    delta_max: float          # degrees, max pairwise rotor-angle spread over time
    sim_duration: float       # seconds simulated in total
    cycle_rate: float
    clearing_instant: float   # absolute time of fault clearance
    machine_angles: list[np.ndarray]  # rotor angles at each sampled frame


@dataclass(frozen=True)
class StabilityLabel:
    eta: float
    y: int


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    cycles: int = 20          # phasor frames sampled after clearance
    horizon: float = 5.0      # post-fault window over which delta_max is tracked
    fault_start: float = 0.1  # settled pre-fault hold before fault inception
    # Stop integrating once the angle spread passes 360 degrees (after all
    # frames are sampled): the label is already decided and only the reported
    # delta_max magnitude would keep growing.
    stop_when_unstable: bool = False


class PhaseNetwork:
    """One contingency phase with loads as shunts and machines attached.

    Holds the machine-reduced admittance for swing dynamics and a factorized
    bus block for phasor recovery.
    """

    def __init__(self, grid: GridCase, y_bus: np.ndarray,
                 load_voltage: float = LOAD_CONVERSION_VOLTAGE):
        n_nodes = y_bus.shape[0]
        m = len(grid.machines)
        if m == 0:
            raise SimulationError("grid has no machines to simulate")
        y_bb = y_bus.astype(complex).copy()
        for ld in grid.loads:
            b = grid.bus_index(ld.bus)
            y_bb[b, b] += complex(ld.p, -ld.q) / load_voltage**2
        y_bg = np.zeros((n_nodes, m), dtype=complex)
        y_gg = np.zeros((m, m), dtype=complex)
        for k, mach in enumerate(grid.machines):
            b = grid.bus_index(mach.bus)
            yg = 1.0 / complex(0.0, mach.xdp)
            y_bb[b, b] += yg
            y_bg[b, k] = -yg
            y_gg[k, k] = yg
        try:
            self._lu = lu_factor(y_bb)
        except Exception as exc:
            raise SimulationError(f"singular network in phase assembly: {exc}") from exc
        self._y_bg = y_bg
        self.y_red = y_gg - y_bg.T @ lu_solve(self._lu, y_bg)
        self.emf = np.array([mach.ep for mach in grid.machines])
        self.n_bus = grid.bus_count

    def electrical_power(self, angles: np.ndarray) -> np.ndarray:
        e = self.emf * np.exp(1j * angles)
        return (e * np.conj(self.y_red @ e)).real

    def bus_voltages(self, angles: np.ndarray) -> np.ndarray:
        """Complex voltage at every original bus for the given rotor angles."""
        e = self.emf * np.exp(1j * angles)
        v = lu_solve(self._lu, -self._y_bg @ e)
        return v[: self.n_bus]

    def injection_residual(self, angles: np.ndarray) -> float:
        """Max injected-current residual of the phasor solve (diagnostic)."""
        e = self.emf * np.exp(1j * angles)
        v = lu_solve(self._lu, -self._y_bg @ e)
        lu_mat, piv = self._lu
        y_bb = _reconstruct_from_lu(lu_mat, piv)
        return float(np.abs(y_bb @ v + self._y_bg @ e).max())


def _reconstruct_from_lu(lu_mat: np.ndarray, piv: np.ndarray) -> np.ndarray:
    n = lu_mat.shape[0]
    lower = np.tril(lu_mat, -1) + np.eye(n)
    upper = np.triu(lu_mat)
    a = lower @ upper
    for i in reversed(range(n)):
        if piv[i] != i:
            a[[i, piv[i]], :] = a[[piv[i], i], :]
    return a


@dataclass
class SwingDynamics:
    """Everything the swing RHS needs for one phase."""

    network: PhaseNetwork
    pm: np.ndarray
    m_coeff: np.ndarray   # 2H / omega_base
    damping: np.ndarray

    def accel(self, angles: np.ndarray, speeds: np.ndarray) -> np.ndarray:
        pe = self.network.electrical_power(angles)
        return (self.pm - pe - self.damping * speeds) / self.m_coeff


@dataclass
class Equilibrium:
    state: SwingState
    emf_phasors: np.ndarray
    pm: np.ndarray          # effective dispatch, balance machine adjusted
    balance_machine: int
    residual: float


def machine_inertia_coeff(grid: GridCase) -> np.ndarray:
    omega_base = 2 * math.pi * grid.base_frequency
    return np.array([2 * m.h / omega_base for m in grid.machines])


def solve_prefault_equilibrium(grid: GridCase, network: PhaseNetwork | None = None,
                               tol: float = 1e-10, max_iter: int = 60) -> Equilibrium:
    """Newton-solve rotor angles so electrical power matches dispatch.

    The machine with the largest inertia acts as the angle reference and
    balance machine: its dispatch absorbs network losses, since an arbitrary
    Pm vector is not exactly realizable on a lossy network. All other
    machines meet their stored Pm to within ``tol``.

    Heavily loaded cases that defeat a flat Newton start are retried along a
    loading ramp, warm-starting each stage from the previous solution.
    """
    if network is None:
        network = PhaseNetwork(grid, build_admittance(grid))
    m = len(grid.machines)
    pm = np.array([mach.pm for mach in grid.machines])
    slack = int(np.argmax([mach.h for mach in grid.machines]))
    others = [i for i in range(m) if i != slack]

    delta, ok = _newton_angles(network, pm, others, np.zeros(m), tol, max_iter)
    if not ok:
        delta = np.zeros(m)
        for lam in (0.25, 0.5, 0.75, 0.9, 1.0):
            stage_grid = scale_operating_point(grid, lam) if lam != 1.0 else grid
            stage_net = network if lam == 1.0 else \
                PhaseNetwork(stage_grid, build_admittance(stage_grid))
            stage_pm = np.array([mach.pm for mach in stage_grid.machines])
            delta, ok = _newton_angles(stage_net, stage_pm, others, delta, tol, max_iter)
            if not ok:
                res = stage_net.electrical_power(delta) - stage_pm
                worst = others[int(np.argmax(np.abs(res[others])))]
                raise SimulationError(
                    f"no pre-fault equilibrium: machine {worst} "
                    f"(bus {grid.machines[worst].bus}) cannot deliver "
                    f"Pm={pm[worst]:.4f} pu at {lam:.0%} loading "
                    f"(residual {np.abs(res[others]).max():.3e})")

    pm_eff = pm.copy()
    pm_eff[slack] = network.electrical_power(delta)[slack]
    final = np.abs(network.electrical_power(delta) - pm_eff).max()
    state = SwingState(angles=delta, speeds=np.zeros(m), time=0.0)
    return Equilibrium(state=state, emf_phasors=network.emf * np.exp(1j * delta),
                       pm=pm_eff, balance_machine=slack, residual=float(final))


def _newton_angles(network: PhaseNetwork, pm: np.ndarray, others: list[int],
                   delta0: np.ndarray, tol: float, max_iter: int):
    """Damped Newton on the non-slack power mismatch; returns (delta, converged)."""
    delta = delta0.copy()
    if not others:
        return delta, True
    emf = network.emf
    g_mat = network.y_red.real
    b_mat = network.y_red.imag
    for _ in range(max_iter):
        res = (network.electrical_power(delta) - pm)[others]
        norm = np.abs(res).max()
        if norm < tol:
            return delta, True
        jac = _power_jacobian(delta, emf, g_mat, b_mat)[np.ix_(others, others)]
        try:
            step = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError:
            return delta, False
        # backtracking keeps the iteration inside the basin of attraction
        scale = 1.0
        for _ in range(12):
            trial = delta.copy()
            trial[others] -= scale * step
            if np.abs((network.electrical_power(trial) - pm)[others]).max() < norm:
                break
            scale *= 0.5
        delta[others] -= scale * step
    res = (network.electrical_power(delta) - pm)[others]
    return delta, bool(np.abs(res).max() < tol)


def _power_jacobian(delta: np.ndarray, emf: np.ndarray,
                    g_mat: np.ndarray, b_mat: np.ndarray) -> np.ndarray:
    m = delta.size
    dd = delta[:, None] - delta[None, :]
    ee = emf[:, None] * emf[None, :]
    off = ee * (g_mat * np.sin(dd) - b_mat * np.cos(dd))
    jac = off.copy()
    np.fill_diagonal(jac, 0.0)
    diag = -jac.sum(axis=1)
    jac[np.arange(m), np.arange(m)] = diag
    return jac


def rk4_step(state: SwingState, dyn: SwingDynamics, dt: float) -> SwingState:
    """One classical fourth-order Runge-Kutta advance of the swing equations."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    d, w = _rk4(state.angles, state.speeds, dyn, dt)
    return SwingState(angles=d, speeds=w, time=state.time + dt)


def _rk4(d: np.ndarray, w: np.ndarray, dyn: SwingDynamics, h: float):
    a1 = dyn.accel(d, w)
    d2 = d + 0.5 * h * w
    w2 = w + 0.5 * h * a1
    a2 = dyn.accel(d2, w2)
    d3 = d + 0.5 * h * w2
    w3 = w + 0.5 * h * a2
    a3 = dyn.accel(d3, w3)
    d4 = d + h * w3
    w4 = w + h * a3
    a4 = dyn.accel(d4, w4)
    d_new = d + h / 6.0 * (w + 2 * w2 + 2 * w3 + w4)
    w_new = w + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return d_new, w_new


def compute_bus_phasors(state: SwingState, network: PhaseNetwork,
                        cycle_index: int = 1) -> PhasorFrame:
    """Solve the linear network for the per-bus voltage phasors."""
    v = network.bus_voltages(state.angles)
    return PhasorFrame(magnitudes=np.abs(v), angles=np.angle(v), cycle_index=cycle_index)


class _SpanIntegrator:
    """Advances state to exact target times with fixed interior steps."""

    def __init__(self, state: SwingState, dt: float):
        self.angles = state.angles.copy()
        self.speeds = state.speeds.copy()
        self.time = state.time
        self.dt = dt
        self.spread = float(self.angles.max() - self.angles.min())

    def run_to(self, t_end: float, dyn: SwingDynamics,
               stop_spread: float | None = None) -> None:
        span = t_end - self.time
        if span <= 1e-12:
            self.time = t_end
            return
        n_full = int(math.floor(span / self.dt + 1e-9))
        rem = span - n_full * self.dt
        for k in range(n_full):
            self.angles, self.speeds = _rk4(self.angles, self.speeds, dyn, self.dt)
            s = self.angles.max() - self.angles.min()
            if s > self.spread:
                self.spread = float(s)
                if stop_spread is not None and self.spread > stop_spread:
                    self.time += (k + 1) * self.dt
                    return
        if rem > 1e-12:
            self.angles, self.speeds = _rk4(self.angles, self.speeds, dyn, rem)
            s = self.angles.max() - self.angles.min()
            if s > self.spread:
                self.spread = float(s)
        self.time = t_end

    def state(self) -> SwingState:
        return SwingState(self.angles.copy(), self.speeds.copy(), self.time)


def simulate_case(grid: GridCase, phases: ContingencyPhases,
                  config: SimConfig = SimConfig()) -> TrajectoryRecord:
    """Integrate one contingency and sample post-clearance phasor frames.

    Frames are sampled at each cycle boundary after clearance (cycle_index
    1..config.cycles); the maximum pairwise rotor-angle spread is tracked
    from fault inception through the full post-fault horizon.
    """
    f_cyc = grid.base_frequency
    if config.horizon < config.cycles / f_cyc:
        raise SimulationError(
            f"post-fault horizon {config.horizon}s shorter than "
            f"{config.cycles} cycles at {f_cyc} Hz")

    net_pre = PhaseNetwork(grid, phases.prefault)
    net_fault = PhaseNetwork(grid, phases.fault_on)
    net_post = PhaseNetwork(grid, phases.postfault)

    eq = solve_prefault_equilibrium(grid, network=net_pre)
    m_coeff = machine_inertia_coeff(grid)
    damping = np.array([mach.d for mach in grid.machines])
    dyn_pre = SwingDynamics(net_pre, eq.pm, m_coeff, damping)
    dyn_fault = SwingDynamics(net_fault, eq.pm, m_coeff, damping)
    dyn_post = SwingDynamics(net_post, eq.pm, m_coeff, damping)

    walker = _SpanIntegrator(eq.state, config.dt)
    walker.run_to(config.fault_start, dyn_pre)
    t_clear = config.fault_start + phases.clearing_time
    walker.run_to(t_clear, dyn_fault)

    frames: list[PhasorFrame] = []
    machine_angles: list[np.ndarray] = []
    for k in range(1, config.cycles + 1):
        walker.run_to(t_clear + k / f_cyc, dyn_post)
        frames.append(compute_bus_phasors(walker.state(), net_post, cycle_index=k))
        machine_angles.append(walker.angles.copy())
    t_end = t_clear + config.horizon
    stop_spread = 2 * math.pi if config.stop_when_unstable else None
    walker.run_to(t_end, dyn_post, stop_spread=stop_spread)

    return TrajectoryRecord(
        frames=frames,
        delta_max=math.degrees(walker.spread),
        sim_duration=walker.time,
        cycle_rate=f_cyc,
        clearing_instant=t_clear,
        machine_angles=machine_angles,
    )


def label_from_trajectory(record: TrajectoryRecord) -> StabilityLabel:
    """Power-angle stability index from the recorded maximum angle spread."""
    if record.delta_max < 0:
        raise ValueError("delta_max must be nonnegative")
    eta = (360.0 - record.delta_max) / (360.0 + record.delta_max)
    return StabilityLabel(eta=eta, y=1 if eta > 0 else 0)


def write_trajectory(record: TrajectoryRecord, path) -> None:
    """Dump sampled cycles as delimited text: time, per-bus V and angle, rotor angles."""
    n_bus = record.frames[0].magnitudes.size if record.frames else 0
    n_mach = record.machine_angles[0].size if record.machine_angles else 0
    cols = ["time", "cycle"]
    cols += [f"v{b+1}" for b in range(n_bus)]
    cols += [f"theta{b+1}" for b in range(n_bus)]
    cols += [f"delta{g+1}" for g in range(n_mach)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for frame, angles in zip(record.frames, record.machine_angles):
            t = record.clearing_instant + frame.cycle_index / record.cycle_rate
            row = [repr(t), str(frame.cycle_index)]
            row += [repr(v) for v in frame.magnitudes]
            row += [repr(a) for a in frame.angles]
            row += [repr(a) for a in angles]
            fh.write(",".join(row) + "\n")
