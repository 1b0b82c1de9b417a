"""
Spectrum of the droop-weighted susceptance matrix C = M (1 + rho^2) B.

C is not symmetric, but M^-1/2 C M^1/2 = M^1/2 (1 + rho^2) B M^1/2 is, so the
eigenvalues mu_i are real and non-negative. Each mu_i indexes a cluster whose
five modes are the roots of a scalar quintic (see :func:`cluster_modes`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import SpectrumError
from .network import ReducedNetwork

DEFAULT_MEMBER_THRESHOLD = 0.3
DEGENERACY_TOLERANCE = 1e-9
ZERO_CLAMP = 1e-12


def weighted_susceptance(reduced: ReducedNetwork, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (reduced.size,):
        raise SpectrumError(f"droop vector has shape {m.shape}, expected ({reduced.size},)")
    return m[:, None] * reduced.scaled


def identify_members(psi, threshold: float = DEFAULT_MEMBER_THRESHOLD, bus_ids=None) -> tuple:
    """Buses whose |psi| reaches ``threshold`` times the largest component.

    ``psi`` may be a vector or a (v, d) basis of a degenerate invariant
    subspace, in which case row norms are compared. The argmax always
    qualifies, so the result is never empty.
    """
    psi = np.asarray(psi)
    mag = np.linalg.norm(psi, axis=1) if psi.ndim == 2 else np.abs(psi)
    top = mag.max()
    idx = [int(np.argmax(mag))] if top == 0 else list(np.flatnonzero(mag >= threshold * top))
    if bus_ids is None:
        return tuple(idx)
    return tuple(bus_ids[i] for i in idx)


@dataclass(frozen=True, eq=False)
class ClusterSpectrum:
    mu: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    m: np.ndarray
    bus_ids: tuple[str, ...]
    members: tuple[tuple[str, ...], ...]
    groups: tuple[tuple[int, ...], ...]
    threshold: float = DEFAULT_MEMBER_THRESHOLD

    @property
    def size(self) -> int:
        return self.mu.size

    def group_of(self, i: int) -> tuple[int, ...]:
        for g in self.groups:
            if i in g:
                return g
        return (i,)

    def is_degenerate(self, i: int) -> bool:
        return len(self.group_of(i)) > 1

    def residual(self, C) -> np.ndarray:
        """Per-pair residual norms ||C psi - mu psi||."""
        return np.linalg.norm(C @ self.psi - self.psi * self.mu, axis=0)


def _sign_fix(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return u * s


def _degenerate_groups(mu: np.ndarray) -> tuple[tuple[int, ...], ...]:
    if mu.size == 0:
        return ()
    tol = DEGENERACY_TOLERANCE * max(np.abs(mu).max(), 1e-300)
    groups, cur = [], [0]
    for i in range(1, mu.size):
        if mu[i] - mu[cur[-1]] < tol:
            cur.append(i)
        else:
            groups.append(tuple(cur))
            cur = [i]
    groups.append(tuple(cur))
    return tuple(groups)


def spectrum(C, m, bus_ids=None, threshold: float = DEFAULT_MEMBER_THRESHOLD) -> ClusterSpectrum:
    """Eigen-decomposition of C = M * Bscaled through the symmetric similarity transform.

    Returns eigenvalues ascending, right eigenvectors psi (unit 2-norm, largest
    component positive) and left eigenvectors phi = M^-1 psi.
    """
    C = np.asarray(C, dtype=float)
    m = np.asarray(m)
    if m.ndim == 2:
        if np.any(m - np.diag(np.diag(m))):
            raise SpectrumError("droop matrix must be diagonal")
        m = np.diag(m)
    m = m.astype(float)
    if np.any(m <= 0):
        raise SpectrumError("droop gains must be positive")
    v = m.size
    if C.shape != (v, v):
        raise SpectrumError(f"C has shape {C.shape}, expected ({v}, {v})")
    if bus_ids is None:
        bus_ids = tuple(str(i + 1) for i in range(v))

    sq = np.sqrt(m)
    S = C / sq[:, None] * sq[None, :]
    S = 0.5 * (S + S.T)
    mu, U = np.linalg.eigh(S)
    if v:
        mu[np.abs(mu) <= ZERO_CLAMP * max(np.linalg.norm(S, 2), 1.0)] = 0.0
    psi = sq[:, None] * U
    psi = psi / np.linalg.norm(psi, axis=0)
    psi = _sign_fix(psi)
    phi = psi / m[:, None]

    groups = _degenerate_groups(mu)
    members = [None] * v
    for g in groups:
        ids = identify_members(psi[:, list(g)], threshold, bus_ids)
        for i in g:
            members[i] = ids
    for arr in (mu, psi, phi):
        arr.setflags(write=False)
    return ClusterSpectrum(
        mu=mu,
        psi=psi,
        phi=phi,
        m=m,
        bus_ids=tuple(bus_ids),
        members=tuple(members),
        groups=groups,
        threshold=threshold,
    )


def network_spectrum(reduced: ReducedNetwork, m, threshold: float = DEFAULT_MEMBER_THRESHOLD):
    return spectrum(weighted_susceptance(reduced, m), m, reduced.bus_ids, threshold)


def cluster_polynomial(mu: float, rho: float, k: float, tau: float, tau0: float) -> np.ndarray:
    """Coefficients (ascending) of the cluster quintic in z = lambda * tau0.

    In lambda the equation reads

        tau0 k f(lambda) + g(lambda) (k + tau0 lambda) mu + mu^2 = 0,
        f = lambda g^2 (h^2 + 1),  g = 1 + tau lambda,  h = rho + tau0 lambda,

    which is the scalar form of the state model projected on an eigenvector
    of C. Writing lambda = z / tau0 and r = tau / tau0 gives

        k z (1 + r z)^2 ((rho + z)^2 + 1) + (1 + r z)(k + z) mu + mu^2 = 0,

    whose coefficients are O(1) for typical parameters.
    """
    r = tau / tau0
    g = np.array([1.0, r])
    h2p1 = np.array([rho * rho + 1.0, 2.0 * rho, 1.0])
    quint = k * P.polymul(P.polymul([0.0, 1.0], P.polymul(g, g)), h2p1)
    quad = mu * P.polymul(g, [k, 1.0])
    out = P.polyadd(quint, quad)
    out[0] += mu * mu
    return out


def companion(coeffs) -> np.ndarray:
    """Upper-Hessenberg companion matrix of a polynomial given in ascending order."""
    c = np.asarray(coeffs, dtype=float)
    c = c / c[-1]
    n = c.size - 1
    A = np.zeros((n, n))
    A[0, :] = -c[-2::-1]
    A[np.arange(1, n), np.arange(n - 1)] = 1.0
    return A


def cluster_modes(mu: float, rho: float, k: float, tau: float, tau0: float) -> np.ndarray:
    """The five modes (rad/s) of the cluster with eigenvalue ``mu``.

    Sorted by real part, descending.
    """
    if mu < 0:
        raise SpectrumError(f"mu must be non-negative, got {mu}")
    if not (tau > 0 and tau0 > 0 and k > 0):
        raise SpectrumError("tau, tau0 and k must be positive")
    z = np.linalg.eigvals(companion(cluster_polynomial(mu, rho, k, tau, tau0)))
    lam = z / tau0
    return lam[np.lexsort((-lam.imag, -lam.real))]
