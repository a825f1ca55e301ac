"""Built-in study systems: smib, wscc9, and ne39.

Machine, branch, and load tables are per-unit on a 100 MVA system base.
Line charging is folded into the endpoint bus shunts (half per end), since
branches carry only a series impedance.
"""

from __future__ import annotations

import math

from .grid import Branch, Bus, GridCase, GridError, Load, Machine

# Inertia constant standing in for an infinite bus: large enough that the
# reference machine barely moves over any study horizon.
INFINITE_H = 1.0e6


def _smib() -> GridCase:
    """Single machine vs. infinite bus over a lossless tie.

    E' = 1.0 on both ends, X'd + line reactance = 0.5, so the steady-state
    power transfer limit is 2.0 and Pm = 1.0 sits at a 30 degree angle.
    Machines are undamped, which keeps the equal-area analysis exact.
    """
    return GridCase(
        name="smib",
        buses=(Bus(1), Bus(2)),
        branches=(Branch(1, 2, 0.0, 0.3),),
        machines=(
            Machine(bus=1, h=5.0, d=0.0, xdp=0.2, pm=1.0, ep=1.0),
            Machine(bus=2, h=INFINITE_H, d=0.0, xdp=1e-6, pm=0.0, ep=1.0),
        ),
        loads=(),
    )


def _wscc9() -> GridCase:
    """WSCC 3-machine, 9-bus system (Anderson-Fouad data).

    Bus shunts carry the summed half line-charging of incident lines.
    Damping is light (envelope decay around 0.35/s) so stable swings settle
    within the 5 s study window.
    """
    charging = {  # total line B, halved onto each end below
        (4, 5): 0.176, (4, 6): 0.158, (5, 7): 0.306,
        (6, 9): 0.358, (7, 8): 0.149, (8, 9): 0.209,
    }
    bus_b = {b: 0.0 for b in range(1, 10)}
    for (i, j), b_tot in charging.items():
        bus_b[i] += b_tot / 2
        bus_b[j] += b_tot / 2
    return GridCase(
        name="wscc9",
        buses=tuple(Bus(b, complex(0.0, bus_b[b])) for b in range(1, 10)),
        branches=(
            Branch(1, 4, 0.0, 0.0576),      # step-up transformers
            Branch(2, 7, 0.0, 0.0625),
            Branch(3, 9, 0.0, 0.0586),
            Branch(4, 5, 0.010, 0.085),     # transmission lines
            Branch(4, 6, 0.017, 0.092),
            Branch(5, 7, 0.032, 0.161),
            Branch(6, 9, 0.039, 0.170),
            Branch(7, 8, 0.0085, 0.072),
            Branch(8, 9, 0.0119, 0.1008),
        ),
        machines=(
            Machine(bus=1, h=23.64, d=0.090, xdp=0.0608, pm=0.716, ep=1.0566),
            Machine(bus=2, h=6.40, d=0.025, xdp=0.1198, pm=1.630, ep=1.0502),
            Machine(bus=3, h=3.01, d=0.012, xdp=0.1813, pm=0.850, ep=1.0170),
        ),
        loads=(
            Load(5, 1.25, 0.50),
            Load(6, 0.90, 0.30),
            Load(8, 1.00, 0.35),
        ),
    )


_NE39_LINES = [
    # from, to, r, x, total charging b
    (1, 2, 0.0035, 0.0411, 0.6987),
    (1, 39, 0.0010, 0.0250, 0.7500),
    (2, 3, 0.0013, 0.0151, 0.2572),
    (2, 25, 0.0070, 0.0086, 0.1460),
    (3, 4, 0.0013, 0.0213, 0.2214),
    (3, 18, 0.0011, 0.0133, 0.2138),
    (4, 5, 0.0008, 0.0128, 0.1342),
    (4, 14, 0.0008, 0.0129, 0.1382),
    (5, 6, 0.0002, 0.0026, 0.0434),
    (5, 8, 0.0008, 0.0112, 0.1476),
    (6, 7, 0.0006, 0.0092, 0.1130),
    (6, 11, 0.0007, 0.0082, 0.1389),
    (7, 8, 0.0004, 0.0046, 0.0780),
    (8, 9, 0.0023, 0.0363, 0.3804),
    (9, 39, 0.0010, 0.0250, 1.2000),
    (10, 11, 0.0004, 0.0043, 0.0729),
    (10, 13, 0.0004, 0.0043, 0.0729),
    (13, 14, 0.0009, 0.0101, 0.1723),
    (14, 15, 0.0018, 0.0217, 0.3660),
    (15, 16, 0.0009, 0.0094, 0.1710),
    (16, 17, 0.0007, 0.0089, 0.1342),
    (16, 19, 0.0016, 0.0195, 0.3040),
    (16, 21, 0.0008, 0.0135, 0.2548),
    (16, 24, 0.0003, 0.0059, 0.0680),
    (17, 18, 0.0007, 0.0082, 0.1319),
    (17, 27, 0.0013, 0.0173, 0.3216),
    (21, 22, 0.0008, 0.0140, 0.2565),
    (22, 23, 0.0006, 0.0096, 0.1846),
    (23, 24, 0.0022, 0.0350, 0.3610),
    (25, 26, 0.0032, 0.0323, 0.5310),
    (26, 27, 0.0014, 0.0147, 0.2396),
    (26, 28, 0.0043, 0.0474, 0.7802),
    (26, 29, 0.0057, 0.0625, 1.0290),
    (28, 29, 0.0014, 0.0151, 0.2490),
]

_NE39_TRANSFORMERS = [
    (2, 30, 0.0, 0.0181),
    (6, 31, 0.0, 0.0250),
    (10, 32, 0.0, 0.0200),
    (12, 11, 0.0016, 0.0435),
    (12, 13, 0.0016, 0.0435),
    (19, 20, 0.0007, 0.0138),
    (19, 33, 0.0007, 0.0142),
    (20, 34, 0.0009, 0.0180),
    (22, 35, 0.0, 0.0143),
    (23, 36, 0.0005, 0.0272),
    (25, 37, 0.0006, 0.0232),
    (29, 38, 0.0008, 0.0156),
]

_NE39_LOADS = [
    (3, 3.220, 0.024),
    (4, 5.000, 1.840),
    (7, 2.338, 0.840),
    (8, 5.220, 1.760),
    (12, 0.085, 0.880),
    (15, 3.200, 1.530),
    (16, 3.294, 0.323),
    (18, 1.580, 0.300),
    (20, 6.800, 1.030),
    (21, 2.740, 1.150),
    (23, 2.475, 0.846),
    (24, 3.086, -0.922),
    (25, 2.240, 0.472),
    (26, 1.390, 0.170),
    (27, 2.810, 0.755),
    (28, 2.060, 0.276),
    (29, 2.835, 0.269),
    (31, 0.092, 0.046),
    (39, 11.040, 2.500),
]

_NE39_MACHINES = [
    # bus, H, X'd, Pm
    (30, 42.0, 0.0310, 2.50),
    (31, 30.3, 0.0697, 5.73),
    (32, 35.8, 0.0531, 6.50),
    (33, 28.6, 0.0436, 6.32),
    (34, 26.0, 0.1320, 5.08),
    (35, 34.8, 0.0500, 6.50),
    (36, 26.4, 0.0490, 5.60),
    (37, 24.3, 0.0570, 5.40),
    (38, 34.5, 0.0570, 8.30),
    (39, 500.0, 0.0060, 10.00),
]


def _ne39() -> GridCase:
    """New England 10-machine, 39-bus system (Pai data), optional stretch case."""
    omega = 2 * math.pi * 60.0
    bus_b = {b: 0.0 for b in range(1, 40)}
    branches = []
    for i, j, r, x, b_tot in _NE39_LINES:
        branches.append(Branch(i, j, r, x))
        bus_b[i] += b_tot / 2
        bus_b[j] += b_tot / 2
    for i, j, r, x in _NE39_TRANSFORMERS:
        branches.append(Branch(i, j, r, x))
    # E' = 1.10 flat: high enough to carry the nominal dispatch without
    # voltage collapse once loads are converted to shunts. The 120% operating
    # point is beyond the classical shunt-load feasibility nose and is skipped
    # at generation time.
    machines = tuple(
        Machine(bus=bus, h=h, d=round(0.7 * 2 * h / omega, 4), xdp=xdp, pm=pm, ep=1.10)
        for bus, h, xdp, pm in _NE39_MACHINES
    )
    return GridCase(
        name="ne39",
        buses=tuple(Bus(b, complex(0.0, bus_b[b])) for b in range(1, 40)),
        branches=tuple(branches),
        machines=machines,
        loads=tuple(Load(b, p, q) for b, p, q in _NE39_LOADS),
    )


_BUILTIN = {"smib": _smib, "wscc9": _wscc9, "ne39": _ne39}


def builtin_grid(name: str) -> GridCase:
    try:
        factory = _BUILTIN[name]
    except KeyError:
        raise GridError(f"unknown built-in grid {name!r}; have {sorted(_BUILTIN)}") from None
    return factory()


def builtin_names() -> list[str]:
    return sorted(_BUILTIN)
