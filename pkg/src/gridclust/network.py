"""
Nodal susceptance matrices and Kron reduction onto inverter buses.

The network matrix follows the convention B = incidence^T X^-1 incidence over
all buses (a weighted Laplacian in per-unit 1/X), with the line dynamics
entering the state model through the scaled copy (1 + rho^2) B.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import GridValidationError, ReductionError
from .grid_model import PuNetwork

PIVOT_TOLERANCE = 1e-12


class LoadMode(str, Enum):
    LINES_ONLY = "lines-only"
    SHUNT_ABSORBED = "shunt-absorbed"


def build_incidence(network: PuNetwork) -> np.ndarray:
    """Signed |V| x |E| incidence matrix: -1 where a line leaves, +1 where it enters."""
    D = np.zeros((network.n_buses, len(network.line_ends)))
    for e, (a, b) in enumerate(network.line_ends):
        D[a, e] = -1.0
        D[b, e] = 1.0
    return D


def build_susceptance(network: PuNetwork, mode: LoadMode | str = LoadMode.LINES_ONLY) -> np.ndarray:
    """Full-bus susceptance matrix.

    ``lines-only`` gives the weighted Laplacian of 1/X. ``shunt-absorbed``
    also places -Im(y_load) on the diagonal of each loaded bus.
    """
    mode = LoadMode(mode)
    X = network.X
    if np.any(X <= 0):
        bad = [network.line_names()[e] for e in np.flatnonzero(X <= 0)]
        raise GridValidationError(f"zero or negative reactance on lines: {', '.join(bad)}")
    D = build_incidence(network)
    B = D @ np.diag(1.0 / X) @ D.T if X.size else np.zeros((network.n_buses, network.n_buses))
    if mode is LoadMode.SHUNT_ABSORBED:
        B = B + np.diag(-network.load_admittance.imag)
    return B


def _isolated_components(B: np.ndarray, keep: list[int], elim: list[int]) -> list[list[int]]:
    """Connected components of the eliminated subgraph with no tie to kept nodes and no shunt."""
    elim_set = set(elim)
    seen = set()
    out = []
    for start in elim:
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in elim:
                if j not in seen and j in elim_set and B[i, j] != 0:
                    seen.add(j)
                    stack.append(j)
        tied = any(B[i, j] != 0 for i in comp for j in keep)
        shunt = abs(B[np.ix_(comp, comp)].sum()) > PIVOT_TOLERANCE * max(1.0, np.abs(B).max())
        if not tied and not shunt:
            out.append(sorted(comp))
    return out


def kron_reduce(B: np.ndarray, keep, labels=None) -> np.ndarray:
    """Schur complement B_kk - B_ke B_ee^-1 B_ek eliminating every node not in ``keep``.

    ``keep`` is an iterable of row indices; the result is ordered like ``keep``.
    The eliminated block is factorised with a Cholesky decomposition whose
    pivots must exceed ``PIVOT_TOLERANCE`` relative to the largest diagonal entry.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    keep = list(keep)
    elim = [i for i in range(n) if i not in set(keep)]
    Bkk = B[np.ix_(keep, keep)]
    if not elim:
        return Bkk.copy()
    Bee = B[np.ix_(elim, elim)]
    Bke = B[np.ix_(keep, elim)]

    def fail():
        comps = _isolated_components(B, keep, elim)
        names = [[labels[i] if labels is not None else i for i in c] for c in comps]
        detail = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in names) or "unknown"
        raise ReductionError(f"singular eliminated block; isolated eliminated component(s): {detail}")

    scale = max(np.abs(np.diag(Bee)).max(), np.finfo(float).tiny)
    try:
        L = scipy.linalg.cholesky(Bee, lower=True)
    except np.linalg.LinAlgError:
        fail()
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOLERANCE * scale:
        fail()
    W = scipy.linalg.cho_solve((L, True), Bke.T)
    R = Bkk - Bke @ W
    return 0.5 * (R + R.T)


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    """Susceptance matrix over inverter buses after eliminating passive buses."""

    B: np.ndarray
    rho: float
    bus_ids: tuple[str, ...]
    original_index: tuple[int, ...]
    load_mode: LoadMode
    eliminated: tuple[str, ...] = ()

    @property
    def scaled(self) -> np.ndarray:
        """(1 + rho^2) B, the matrix entering the state model."""
        return (1.0 + self.rho**2) * self.B

    @property
    def size(self) -> int:
        return self.B.shape[0]


def reduce_network(network: PuNetwork, mode: LoadMode | str = LoadMode.LINES_ONLY) -> ReducedNetwork:
    """Build the susceptance matrix and Kron-reduce onto the inverter buses."""
    mode = LoadMode(mode)
    if mode is LoadMode.SHUNT_ABSORBED and np.any(network.load_admittance != 0):
        warnings.warn(
            "shunt-absorbed load mode: load R/X ratios differ from the line ratio, "
            "so the homogeneous-network decoupling holds only approximately",
            stacklevel=2,
        )
    B = build_susceptance(network, mode)
    keep = list(network.inverter_index)
    Bred = kron_reduce(B, keep, labels=network.bus_ids)
    Bred.setflags(write=False)
    elim = tuple(b for i, b in enumerate(network.bus_ids) if i not in set(keep))
    return ReducedNetwork(
        B=Bred,
        rho=network.rho,
        bus_ids=network.inverter_ids,
        original_index=tuple(keep),
        load_mode=mode,
        eliminated=elim,
    )
