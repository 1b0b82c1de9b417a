"""
End-to-end assessment: threshold, spectrum, verdict and remedial parameters,
plus parameter sweeps of the spectrum.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boundary import StabilityVerdict, assess, mu_cr_lower_bound, mu_critical
from .errors import GridValidationError
from .grid_model import GridSpec, PuNetwork, to_per_unit
from .network import LoadMode, ReducedNetwork, reduce_network
from .sensitivity import SensitivityReport, sensitivity_report
from .spectrum import DEFAULT_MEMBER_THRESHOLD, ClusterSpectrum, network_spectrum


@dataclass(frozen=True, eq=False)
class Analysis:
    network: PuNetwork
    reduced: ReducedNetwork
    spectrum: ClusterSpectrum
    verdict: StabilityVerdict | None
    sensitivities: SensitivityReport | None

    @property
    def status(self) -> str:
        return "stable" if self.verdict is None else self.verdict.status


def grid_mu_cr(network: PuNetwork) -> tuple[float, float | None]:
    mu_cr = mu_critical(network.rho, network.k, network.tau, network.tau0)
    lb = mu_cr_lower_bound(network.rho, network.k) if network.rho > 0 else None
    return mu_cr, lb


def analyze(
    spec: GridSpec,
    mode: LoadMode | str = LoadMode.LINES_ONLY,
    threshold: float = DEFAULT_MEMBER_THRESHOLD,
    rho_tolerance: float = 1e-6,
    top_actions: int = 5,
) -> Analysis:
    """Threshold -> spectrum -> verdict -> (if not stable) ranked remedial parameters.

    A grid without lines has no inter-inverter clusters; ``verdict`` is then
    ``None`` and the grid is reported stable.
    """
    net = to_per_unit(spec, rho_tolerance=rho_tolerance, require_proportional=True)
    if net.n_inverters == 0:
        raise GridValidationError("grid has no inverters")
    red = reduce_network(net, mode)
    sp = network_spectrum(red, net.m, threshold)
    if not net.line_ends:
        return Analysis(net, red, sp, None, None)
    mu_cr, lb = grid_mu_cr(net)
    verdict = assess(sp, mu_cr, lb)
    sens = sensitivity_report(sp, net, red)
    recs = []
    for c in verdict.critical:
        if sp.is_degenerate(c.index):
            continue
        for r in sens.ranked(c.index, net)[:top_actions]:
            recs.append({"cluster": c.index + 1, **r})
    verdict = StabilityVerdict(
        mu_cr=verdict.mu_cr,
        mu_cr_lower_bound=verdict.mu_cr_lower_bound,
        clusters=verdict.clusters,
        status=verdict.status,
        recommendations=tuple(recs),
    )
    return Analysis(net, red, sp, verdict, sens)


@dataclass(frozen=True)
class SweepSpec:
    """Parameter path plus an inclusive linear range.

    ``kind`` is ``"line"`` (target = (bus, bus), value in km) or ``"droop"``
    (target = bus id, value as a fraction).
    """

    kind: str
    target: tuple | str
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.kind not in ("line", "droop"):
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        if self.count < 2:
            raise ValueError("sweep count must be >= 2")
        if self.kind == "line" and not (self.start > 0 and self.stop > 0):
            raise ValueError("line-length sweeps must stay positive")
        if self.kind == "droop" and not (self.start > 0 and self.stop > 0):
            raise ValueError("droop sweeps must stay positive")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    @property
    def label(self) -> str:
        if self.kind == "line":
            return f"l_{self.target[0]}-{self.target[1]}"
        return f"m_{self.target}"

    @classmethod
    def parse(cls, param: str, rng: str) -> SweepSpec:
        """``param`` like ``line:3-4`` or ``droop:3``; ``rng`` like ``1:6:51``."""
        mo = re.fullmatch(r"(line|droop|l|m):(.+)", param.strip())
        if not mo:
            raise ValueError(f"cannot parse sweep parameter {param!r}")
        kind = {"l": "line", "m": "droop"}.get(mo.group(1), mo.group(1))
        target = mo.group(2)
        if kind == "line":
            ends = target.split("-")
            if len(ends) != 2:
                raise ValueError(f"line target must look like A-B, got {target!r}")
            target = tuple(ends)
        parts = rng.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:count, got {rng!r}")
        return cls(kind, target, float(parts[0]), float(parts[1]), int(parts[2]))

    def apply(self, spec: GridSpec, value: float) -> GridSpec:
        if self.kind == "line":
            return spec.with_line_length(self.target[0], self.target[1], value)
        return spec.with_droop(self.target, value, keep_ratio=True)


@dataclass(frozen=True, eq=False)
class SweepResult:
    sweep: SweepSpec
    values: np.ndarray
    mu_sorted: np.ndarray
    mu_tracked: np.ndarray
    mu_cr: float | None

    def crossings(self, curve: np.ndarray | None = None, level: float | None = None) -> list[float]:
        """Parameter values where ``curve`` (default: largest mu) crosses ``level`` (default mu_cr)."""
        curve = self.mu_sorted[:, -1] if curve is None else curve
        level = self.mu_cr if level is None else level
        return find_crossings(self.values, curve, level)


def find_crossings(x, y, level) -> list[float]:
    x = np.asarray(x, dtype=float)
    d = np.asarray(y, dtype=float) - level
    out = []
    for i in range(len(x) - 1):
        if d[i] == 0:
            out.append(float(x[i]))
        elif d[i] * d[i + 1] < 0:
            out.append(float(x[i] - d[i] * (x[i + 1] - x[i]) / (d[i + 1] - d[i])))
    if len(d) and d[-1] == 0:
        out.append(float(x[-1]))
    return out


def _point(spec: GridSpec, sweep: SweepSpec, value: float, mode) -> ClusterSpectrum:
    net = to_per_unit(sweep.apply(spec, value))
    return network_spectrum(reduce_network(net, mode), net.m)


def _track_curves(spectra: list[ClusterSpectrum]) -> np.ndarray:
    """Follow each eigenvalue branch by maximal eigenvector overlap between neighbours."""
    n, v = len(spectra), spectra[0].size
    out = np.empty((n, v))
    perm = list(range(v))
    out[0] = spectra[0].mu
    for s in range(1, n):
        prev, cur = spectra[s - 1], spectra[s]
        w = 1.0 / np.sqrt(prev.m * cur.m)
        overlap = np.abs((prev.psi * w[:, None]).T @ cur.psi)
        mapping, used_prev, used_cur = {}, set(), set()
        # strongest overlaps first
        for flat in np.argsort(-overlap, axis=None, kind="stable"):
            a, b = divmod(int(flat), v)
            if a in used_prev or b in used_cur:
                continue
            mapping[a] = b
            used_prev.add(a)
            used_cur.add(b)
            if len(mapping) == v:
                break
        perm = [mapping[perm[label]] for label in range(v)]
        out[s] = [cur.mu[perm[label]] for label in range(v)]
    return out


def run_sweep(
    spec: GridSpec,
    sweep: SweepSpec,
    mode: LoadMode | str = LoadMode.LINES_ONLY,
    jobs: int = 1,
) -> SweepResult:
    values = sweep.values
    base = to_per_unit(spec, require_proportional=True)
    mu_cr = grid_mu_cr(base)[0] if base.line_ends else None
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            spectra = list(pool.map(lambda x: _point(spec, sweep, x, mode), values))
    else:
        spectra = [_point(spec, sweep, x, mode) for x in values]
    return SweepResult(
        sweep=sweep,
        values=values,
        mu_sorted=np.array([s.mu for s in spectra]),
        mu_tracked=_track_curves(spectra),
        mu_cr=mu_cr,
    )
