"""
Seeded random grid generator for regression files and property tests.

Grids are connected (random spanning tree plus a few chords), share one R/X
ratio across all lines and use proportional droops m = k n.
"""

from __future__ import annotations

import math

import numpy as np

from .grid_model import BusSpec, GridSpec, InverterSpec, LineSpec

OMEGA0 = 2 * math.pi * 50


def random_grid(
    rng: np.random.Generator,
    n_inverters: int | tuple[int, int] = (3, 10),
    n_passive: int | tuple[int, int] = 0,
    rho: float | tuple[float, float] = (0.3, 3.0),
    k: float | tuple[float, float] = (0.5, 10.0),
    extra_lines: int | tuple[int, int] = (0, 3),
    with_loads: bool = True,
) -> GridSpec:
    """Draw a grid; scalar arguments are fixed, (lo, hi) pairs are sampled."""

    def draw_int(x):
        return int(rng.integers(x[0], x[1] + 1)) if isinstance(x, tuple) else int(x)

    def draw(x):
        return float(rng.uniform(*x)) if isinstance(x, tuple) else float(x)

    v = draw_int(n_inverters)
    p = draw_int(n_passive)
    rho_v, k_v = draw(rho), draw(k)
    n_bus = v + p
    ids = [str(i + 1) for i in range(n_bus)]
    passive = set(rng.choice(n_bus, size=p, replace=False).tolist()) if p else set()

    buses = []
    for i, bid in enumerate(ids):
        inv = None
        if i not in passive:
            m = float(rng.uniform(0.005, 0.05))
            inv = InverterSpec(m=m, n=m / k_v)
        load = None
        if with_loads:
            load = complex(rng.uniform(10, 60), rng.uniform(0.5, 15))
        buses.append(BusSpec(id=bid, inverter=inv, load_ohm=load))

    l_per_km = float(rng.uniform(2e-4, 8e-4))
    r_per_km = rho_v * OMEGA0 * l_per_km
    order = rng.permutation(n_bus)
    edges = set()
    for j in range(1, n_bus):
        a, b = int(order[j]), int(order[rng.integers(0, j)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(draw_int(extra_lines)):
        a, b = rng.choice(n_bus, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    lines = tuple(
        LineSpec(ids[a], ids[b], float(rng.uniform(0.5, 30.0)), r_per_km, l_per_km)
        for a, b in sorted(edges)
    )
    return GridSpec(
        omega0_rad_s=OMEGA0,
        base_voltage_V=230.0,
        base_power_VA=10e3,
        buses=tuple(buses),
        lines=lines,
    )
