"""
Stability threshold mu_cr and the cluster-by-cluster stability verdict.

mu_cr depends only on (rho, k, tau, tau0): it is the smallest mu > 0 at which
one of the five cluster modes reaches the imaginary axis. Any cluster with
mu_i above it is unstable, whatever the topology that produced mu_i.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError
from .spectrum import ClusterSpectrum, cluster_modes

log = logging.getLogger(__name__)

MU_MAX = 1e4
MU_TOLERANCE = 1e-6
MAX_BISECTIONS = 200
MARGINAL_BAND = 1e-4
_SCAN_POINTS = 64


def max_real_part(mu, rho, k, tau, tau0) -> float:
    return float(cluster_modes(mu, rho, k, tau, tau0).real.max())


def mu_cr_lower_bound(rho: float, k: float) -> float:
    """Closed-form conservative estimate of mu_cr for the two-bus equivalent."""
    if not rho > 0:
        raise ValueError("lower bound is defined only for rho > 0")
    if not k > 0:
        raise ValueError("k must be positive")
    if k > 0.5 * rho * (rho * rho + 1.0):
        return (rho * rho + 1.0) ** 2 / (4.0 * rho)
    return k * (rho * rho + 1.0) / (2.0 * rho * rho)


def mu_critical(
    rho: float,
    k: float,
    tau: float,
    tau0: float,
    tol: float = MU_TOLERANCE,
    mu_max: float = MU_MAX,
) -> float:
    """Smallest mu > 0 where the largest real part among the cluster modes crosses zero.

    The bracket starts at the closed-form lower bound and doubles upward until
    a mode is unstable. The bracket is then scanned to locate the first
    crossing (a warning lists all crossings if there are several) and
    bisected to ``tol``; bisection continues until the returned point also
    has |max Re| <= 1e-8 / tau0.
    """
    if not (rho >= 0 and k > 0 and tau > 0 and tau0 > 0):
        raise ValueError("require rho >= 0, k > 0, tau > 0, tau0 > 0")

    def f(mu):
        return max_real_part(mu, rho, k, tau, tau0)

    lo = mu_cr_lower_bound(rho, k) if rho > 0 else 1e-3
    while f(lo) >= 0:
        lo *= 0.5
        if lo < 1e-12:
            raise BoundaryError("no stable cluster region found above mu = 0")
    hi = lo
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > mu_max:
            raise BoundaryError("no finite stability boundary in search range")

    # scan (0, hi] so that a crossing below the bound-derived bracket is not missed
    grid = np.linspace(hi / _SCAN_POINTS, hi, _SCAN_POINTS)
    vals = np.array([f(mu) for mu in grid])
    unstable = vals >= 0
    flips = np.flatnonzero(unstable[1:] != unstable[:-1])
    first = int(np.argmax(unstable))
    if first > 0:
        lo, hi = grid[first - 1], grid[first]
    elif unstable[0]:
        lo, hi = 0.0, grid[0]
    if len(flips) > 1:
        warnings.warn(
            "several stability crossings found near mu = "
            + ", ".join(f"{grid[i + 1]:.4g}" for i in flips)
            + "; reporting the first upward crossing",
            stacklevel=2,
        )

    atol = 1e-8 / tau0
    mid = 0.5 * (lo + hi)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if (hi - lo) <= tol and abs(val) <= atol:
            break
        if val < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    log.debug("mu_cr(rho=%g, k=%g) = %.12g", rho, k, mid)
    return float(mid)


@dataclass(frozen=True)
class ClusterRecord:
    index: int
    mu: float
    margin: float
    status: str
    members: tuple[str, ...]
    psi: tuple[float, ...]

    @property
    def stable(self) -> bool:
        return self.status == "stable"


@dataclass(frozen=True)
class StabilityVerdict:
    mu_cr: float
    mu_cr_lower_bound: float | None
    clusters: tuple[ClusterRecord, ...]
    status: str
    recommendations: tuple = field(default=())

    @property
    def stable(self) -> bool:
        return self.status == "stable"

    @property
    def n_unstable(self) -> int:
        return sum(1 for c in self.clusters if c.mu > self.mu_cr)

    @property
    def critical(self) -> tuple[ClusterRecord, ...]:
        """Unstable or marginal clusters, most critical first."""
        return tuple(c for c in self.clusters if c.status != "stable")

    def to_dict(self) -> dict:
        return {
            "mu_cr": self.mu_cr,
            "mu_cr_lower_bound": self.mu_cr_lower_bound,
            "status": self.status,
            "n_unstable": self.n_unstable,
            "clusters": [
                {
                    "index": c.index + 1,
                    "mu": c.mu,
                    "margin": c.margin,
                    "status": c.status,
                    "members": list(c.members),
                    "psi": list(c.psi),
                }
                for c in self.clusters
            ],
            "recommendations": [dict(r) for r in self.recommendations],
        }


def assess(
    spec: ClusterSpectrum,
    mu_cr: float,
    mu_lb: float | None = None,
    marginal_band: float = MARGINAL_BAND,
) -> StabilityVerdict:
    """Compare every cluster eigenvalue with mu_cr; clusters ranked by descending mu.

    A cluster within ``marginal_band`` of mu_cr is reported as ``marginal``
    and makes the overall status ``marginal`` unless another cluster is
    outright unstable.
    """
    records = []
    for i in sorted(range(spec.size), key=lambda j: -spec.mu[j]):
        mu = float(spec.mu[i])
        if abs(mu - mu_cr) < marginal_band:
            status = "marginal"
        elif mu > mu_cr:
            status = "unstable"
        else:
            status = "stable"
        records.append(
            ClusterRecord(
                index=i,
                mu=mu,
                margin=float(mu_cr - mu),
                status=status,
                members=spec.members[i],
                psi=tuple(float(x) for x in spec.psi[:, i]),
            )
        )
    statuses = {r.status for r in records}
    if "unstable" in statuses:
        overall = "unstable"
    elif "marginal" in statuses:
        overall = "marginal"
    else:
        overall = "stable"
    if mu_lb is None or math.isnan(mu_lb):
        mu_lb = None
    return StabilityVerdict(mu_cr=float(mu_cr), mu_cr_lower_bound=mu_lb, clusters=tuple(records), status=overall)
