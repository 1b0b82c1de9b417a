"""
First-order sensitivities of the cluster eigenvalues mu_i.

For a simple eigenvalue of C with right eigenvector psi and left eigenvector
phi = M^-1 psi, d mu = phi^T dC psi / (phi^T psi). The derivatives are taken of
C exactly as assembled, (1 + rho^2) factor included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SensitivityError
from .grid_model import PuNetwork
from .network import LoadMode, ReducedNetwork, reduce_network
from .spectrum import ClusterSpectrum, network_spectrum

FD_STEP = 1e-6
FD_MIN_STEP = 1e-8
_OVERLAP_MIN = 0.9


def _check_simple(spec: ClusterSpectrum, i: int):
    if not 0 <= i < spec.size:
        raise SensitivityError(f"cluster index {i} out of range")
    if spec.is_degenerate(i):
        raise SensitivityError(
            f"mu_{i + 1} = {spec.mu[i]:.6g} is degenerate; use an invariant-subspace "
            "sensitivity instead (not provided)"
        )


def retained_line_positions(network: PuNetwork, reduced: ReducedNetwork, e: int) -> tuple[int, int]:
    """Positions in the reduced matrix of both ends of line ``e``.

    Only lines between two retained buses enter the reduced matrix additively.
    """
    a, b = network.line_ends[e]
    pos = {orig: p for p, orig in enumerate(reduced.original_index)}
    if a not in pos or b not in pos:
        raise SensitivityError(
            f"line {network.line_names()[e]}: sensitivity only for retained lines "
            "(an endpoint was eliminated by Kron reduction)"
        )
    return pos[a], pos[b]


def _line_index(network: PuNetwork, line) -> int:
    if isinstance(line, (int, np.integer)):
        return int(line)
    a, b = line
    return network.line_index(a, b)


def dmu_dlength(spec: ClusterSpectrum, network: PuNetwork, reduced: ReducedNetwork, i: int, line) -> float:
    """d mu_i / d l_e in 1/km for a line given by index or (bus, bus)."""
    _check_simple(spec, i)
    e = _line_index(network, line)
    a, b = retained_line_positions(network, reduced, e)
    psi, phi = spec.psi[:, i], spec.phi[:, i]
    x, l = network.x_pu_per_km[e], network.line_length_km[e]
    scale = (1.0 + reduced.rho**2) / (x * l * l)
    # dC/dl = -scale * M (e_a - e_b)(e_a - e_b)^T ; phi^T M = psi^T
    num = -scale * (psi[a] - psi[b]) ** 2
    return float(num / (phi @ psi))


def dmu_ddroop(spec: ClusterSpectrum, reduced: ReducedNetwork, i: int, pos: int) -> float:
    """d mu_i / d m_k for the inverter at position ``pos`` in the reduced ordering."""
    _check_simple(spec, i)
    psi, phi = spec.psi[:, i], spec.phi[:, i]
    num = phi[pos] * (reduced.scaled[pos] @ psi)
    return float(num / (phi @ psi))


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    """``dl[i, e]`` is NaN for lines not retained; rows of ``dm`` follow clusters."""

    dl: np.ndarray
    dm: np.ndarray
    line_names: tuple[str, ...]
    bus_ids: tuple[str, ...]
    mu: np.ndarray

    def ranked(self, i: int, network: PuNetwork) -> list[dict]:
        """Actionable parameters for cluster ``i`` ranked by elasticity |p d mu / d p|."""
        out = []
        for e, name in enumerate(self.line_names):
            s = self.dl[i, e]
            if np.isnan(s):
                continue
            p = float(network.line_length_km[e])
            out.append({
                "parameter": f"l_{name}",
                "kind": "line",
                "value": p,
                "sensitivity": float(s),
                "elasticity": float(p * s),
                "action": f"lengthen line {name}" if s < 0 else f"shorten line {name}",
            })
        for k, bus in enumerate(self.bus_ids):
            s = self.dm[i, k]
            p = float(network.m[k])
            out.append({
                "parameter": f"m_{bus}",
                "kind": "droop",
                "value": p,
                "sensitivity": float(s),
                "elasticity": float(p * s),
                "action": f"reduce droop m at bus {bus}" if s > 0 else f"increase droop m at bus {bus}",
            })
        out.sort(key=lambda r: -abs(r["elasticity"]))
        return out


def sensitivity_report(spec: ClusterSpectrum, network: PuNetwork, reduced: ReducedNetwork) -> SensitivityReport:
    v = spec.size
    E = len(network.line_ends)
    dl = np.full((v, E), np.nan)
    dm = np.full((v, v), np.nan)
    for i in range(v):
        if spec.is_degenerate(i):
            continue
        for e in range(E):
            try:
                dl[i, e] = dmu_dlength(spec, network, reduced, i, e)
            except SensitivityError:
                pass
        for k in range(v):
            dm[i, k] = dmu_ddroop(spec, reduced, i, k)
    return SensitivityReport(
        dl=dl,
        dm=dm,
        line_names=tuple(network.line_names()),
        bus_ids=reduced.bus_ids,
        mu=np.array(spec.mu),
    )


@dataclass(frozen=True)
class FiniteDiffCheck:
    analytic: float
    numeric: float
    abs_err: float
    rel_err: float
    step: float


def _track(ref: ClusterSpectrum, i: int, new: ClusterSpectrum) -> tuple[int, float]:
    """Index in ``new`` of the eigenvector closest to ref.psi[:, i] in the M^-1 inner product."""
    w = 1.0 / ref.m
    u = ref.psi[:, i]
    nu = np.sqrt(u @ (w * u))
    best, score = 0, -1.0
    for j in range(new.size):
        x = new.psi[:, j]
        c = abs(u @ (w * x)) / (nu * np.sqrt(x @ (w * x)))
        if c > score:
            best, score = j, c
    return best, score


def finite_diff_check(
    network: PuNetwork,
    i: int,
    parameter,
    mode: LoadMode | str = LoadMode.LINES_ONLY,
    step: float = FD_STEP,
) -> FiniteDiffCheck:
    """Compare the analytic derivative with a central difference on the rebuilt network.

    ``parameter`` is ``("line", e_or_pair)`` or ``("droop", bus_id)``. The
    perturbed eigenvalue is re-identified by maximal eigenvector overlap; if
    the overlap is ambiguous (eigenvalue crossing inside the step) the step is
    shrunk tenfold down to ``FD_MIN_STEP``.

    Each perturbed eigenvalue carries round-off of order eps * ||C||, so the
    difference quotient has an absolute noise floor near eps * ||C|| / (2h).
    Derivatives that are small compared with that floor cannot be confirmed
    to tight relative tolerances in double precision.
    """
    kind, which = parameter
    reduced = reduce_network(network, mode)
    base = network_spectrum(reduced, network.m)
    _check_simple(base, i)

    if kind == "line":
        e = _line_index(network, which)
        retained_line_positions(network, reduced, e)
        p0 = float(network.line_length_km[e])
        analytic = dmu_dlength(base, network, reduced, i, e)

        def rebuild(p):
            return network.with_line_length(e, p)
    elif kind == "droop":
        pos = network.inverter_position(which) if isinstance(which, str) else int(which)
        p0 = float(network.m[pos])
        analytic = dmu_ddroop(base, reduced, i, pos)

        def rebuild(p):
            return network.with_droop(pos, p)
    else:
        raise SensitivityError(f"unknown parameter kind {kind!r}")

    h_rel = step
    while h_rel >= FD_MIN_STEP * (1 - 1e-12):
        h = h_rel * p0
        vals = []
        ok = True
        for p in (p0 + h, p0 - h):
            net = rebuild(p)
            sp = network_spectrum(reduce_network(net, mode), net.m)
            j, score = _track(base, i, sp)
            if score < _OVERLAP_MIN or sp.is_degenerate(j):
                ok = False
                break
            vals.append(sp.mu[j])
        if ok:
            numeric = float((vals[0] - vals[1]) / (2 * h))
            abs_err = abs(analytic - numeric)
            denom = max(abs(analytic), abs(numeric))
            rel = abs_err / denom if denom > 0 else 0.0
            return FiniteDiffCheck(analytic, numeric, abs_err, rel, h)
        h_rel /= 10.0
    raise SensitivityError("eigenvalue crossing within the finite-difference step; no stable estimate")
