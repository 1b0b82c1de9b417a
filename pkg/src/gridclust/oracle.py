"""
Full 5v-state linear model and the checks that tie it to the cluster spectrum.

State ordering is [theta, omega, V, I_d, I_q], each block of length v (one
entry per inverter). The model is written as S x' = K x with
S = diag(1, tau, tau, tau0, tau0) (x) I and A = S^-1 K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EigenSolverError, HypothesisError
from .grid_model import PuNetwork
from .network import LoadMode, ReducedNetwork
from .spectrum import ClusterSpectrum, cluster_modes, network_spectrum

RESIDUAL_TOLERANCE = 1e-8
MATCH_TOLERANCE = 1e-6  # times omega0
SINGULARITY_TOLERANCE = 1e-8
BLOCKS = ("theta", "omega", "V", "Id", "Iq")


@dataclass(frozen=True, eq=False)
class StateMatrix:
    A: np.ndarray
    v: int
    bus_ids: tuple[str, ...]
    omega0: float
    tau: float
    tau0: float
    m: np.ndarray
    n: np.ndarray

    def block(self, name: str) -> slice:
        i = BLOCKS.index(name)
        return slice(i * self.v, (i + 1) * self.v)


def assemble_state_matrix(network: PuNetwork, reduced: ReducedNetwork) -> StateMatrix:
    v = reduced.size
    if network.n_inverters != v:
        raise ValueError(f"network has {network.n_inverters} inverters but reduced matrix is {v}x{v}")
    I = np.eye(v)
    Z = np.zeros((v, v))
    Bs = reduced.scaled
    rho = reduced.rho
    K = np.block([
        [Z, I, Z, Z, Z],
        [Z, -I, Z, -network.omega0 * network.M, Z],
        [Z, Z, -I, Z, network.N],
        [Z, Z, Bs, -rho * I, I],
        [Bs, Z, Z, -I, -rho * I],
    ])
    s = np.repeat([1.0, network.tau, network.tau, network.tau0, network.tau0], v)
    A = K / s[:, None]
    A.setflags(write=False)
    return StateMatrix(
        A=A,
        v=v,
        bus_ids=reduced.bus_ids,
        omega0=network.omega0,
        tau=network.tau,
        tau0=network.tau0,
        m=np.array(network.m),
        n=np.array(network.n),
    )


def eig_general(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and right eigenvectors of a dense real matrix.

    LAPACK ``geev`` (Hessenberg reduction + shifted QR). Every pair is
    checked for ||A v - lambda v|| <= 1e-8 ||A||.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise EigenSolverError("matrix has non-finite entries")
    if A.size == 0:
        return np.zeros(0, complex), np.zeros((0, 0), complex)
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigenvalue iteration did not converge: {exc}") from exc
    res = np.linalg.norm(A @ V - V * w, axis=0)
    bad = res > RESIDUAL_TOLERANCE * max(np.linalg.norm(A, 2), 1.0)
    if np.any(bad):
        raise EigenSolverError(
            f"{int(bad.sum())} eigenpairs exceed the residual bound", partial=(w, V, bad)
        )
    return w.astype(complex), V.astype(complex)


@dataclass(frozen=True, eq=False)
class ModeMatch:
    oracle: np.ndarray
    predicted: np.ndarray
    source_cluster: np.ndarray
    distance: np.ndarray
    hausdorff: float

    @property
    def max_pair_distance(self) -> float:
        return float(self.distance.max()) if self.distance.size else 0.0


def hausdorff(a, b) -> float:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size == 0 and b.size == 0:
        return 0.0
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def greedy_match(predicted, oracle) -> tuple[np.ndarray, np.ndarray]:
    """Pair each predicted value with its nearest unused oracle value, smallest |lambda| first."""
    predicted = np.asarray(predicted)
    oracle = np.asarray(oracle)
    order = np.argsort(np.abs(predicted), kind="stable")
    used = np.zeros(oracle.size, bool)
    pair = np.empty(predicted.size, int)
    for p in order:
        d = np.abs(oracle - predicted[p])
        d[used] = np.inf
        j = int(np.argmin(d))
        used[j] = True
        pair[p] = j
    return pair, np.abs(oracle[pair] - predicted)


def predicted_modes(spec: ClusterSpectrum, network: PuNetwork) -> tuple[np.ndarray, np.ndarray]:
    """All 5v cluster modes with the index of the cluster each came from."""
    lam, src = [], []
    for i, mu in enumerate(spec.mu):
        lam.append(cluster_modes(max(float(mu), 0.0), network.rho, network.k, network.tau, network.tau0))
        src.append(np.full(5, i))
    if not lam:
        return np.zeros(0, complex), np.zeros(0, int)
    return np.concatenate(lam), np.concatenate(src)


def check_hypotheses(network: PuNetwork, reduced: ReducedNetwork):
    if network.k is None:
        raise HypothesisError("droop gains are not proportional (M = kN required)")
    if not network.homogeneous:
        raise HypothesisError("lines do not share a common R/X ratio")
    if reduced.load_mode is not LoadMode.LINES_ONLY:
        raise HypothesisError("mode correspondence is only asserted in lines-only load mode")


def verify_mode_correspondence(network: PuNetwork, reduced: ReducedNetwork) -> ModeMatch:
    """Match eig(A) against the union of the cluster quintics' roots."""
    check_hypotheses(network, reduced)
    sm = assemble_state_matrix(network, reduced)
    w, _ = eig_general(sm.A)
    spec = network_spectrum(reduced, network.m)
    pred, src = predicted_modes(spec, network)
    pair, dist = greedy_match(pred, w)
    return ModeMatch(
        oracle=w[pair],
        predicted=pred,
        source_cluster=src,
        distance=dist,
        hausdorff=hausdorff(w, pred),
    )


@dataclass(frozen=True, eq=False)
class SingularityReport:
    eigenvalues: np.ndarray
    checked: np.ndarray
    relative_sigma_min: np.ndarray

    @property
    def worst(self) -> float:
        r = self.relative_sigma_min[self.checked]
        return float(r.max()) if r.size else 0.0

    @property
    def ok(self) -> bool:
        return self.worst <= SINGULARITY_TOLERANCE


def polynomial_matrix(lam: complex, network: PuNetwork, reduced: ReducedNetwork) -> tuple[np.ndarray, float]:
    """T(lambda) = f tau0 M^-1 + g (Bs + tau0 lambda Bs N M^-1) + Bs N Bs and a magnitude scale.

    The scale bounds each term by the magnitudes of its factors (for example
    |lambda| |g|^2 (|h|^2 + 1) for f), so the singularity test is insensitive
    to cancellation both between and inside the terms.
    """
    tau, tau0, rho = network.tau, network.tau0, reduced.rho
    g = 1 + tau * lam
    h = rho + tau0 * lam
    f = lam * g * g * (h * h + 1)
    Minv = np.diag(1.0 / network.m)
    N = network.N
    Bs = reduced.scaled
    t1 = f * tau0 * Minv
    t2 = g * (Bs + tau0 * lam * Bs @ N @ Minv)
    t3 = Bs @ N @ Bs
    f_mag = abs(lam) * abs(g) ** 2 * (abs(h) ** 2 + 1)
    scale = (
        f_mag * tau0 * np.linalg.norm(Minv, 2)
        + abs(g) * (np.linalg.norm(Bs, 2) + tau0 * abs(lam) * np.linalg.norm(Bs @ N @ Minv, 2))
        + np.linalg.norm(t3, 2)
    )
    return t1 + t2 + t3, scale


def verify_polynomial_singularity(network: PuNetwork, reduced: ReducedNetwork) -> SingularityReport:
    """Check that T(lambda) is singular at every eigenvalue of A.

    Eigenvalues with g(lambda) h(lambda) = 0 are skipped: they are introduced by
    multiplying through by g h and carry no information about T.
    """
    sm = assemble_state_matrix(network, reduced)
    w, _ = eig_general(sm.A)
    checked = np.ones(w.size, bool)
    rel = np.zeros(w.size)
    for i, lam in enumerate(w):
        g = 1 + network.tau * lam
        h = reduced.rho + network.tau0 * lam
        if abs(g) <= 1e-6 * (1 + abs(network.tau * lam)) or abs(h) <= 1e-6 * (1 + abs(network.tau0 * lam)):
            checked[i] = False
            continue
        T, scale = polynomial_matrix(lam, network, reduced)
        s = np.linalg.svd(T, compute_uv=False)
        rel[i] = s[-1] / scale if scale > 0 else 0.0
    return SingularityReport(eigenvalues=w, checked=checked, relative_sigma_min=rel)


def right_half_plane_pairs(w, omega0: float, tol: float = 1e-9) -> int:
    """Number of eigenvalues with Re > tol * omega0 (a complex pair counts twice)."""
    return int(np.sum(np.real(w) > tol * omega0))


def dominant_rate(w, omega0: float, zero_tol: float = 1e-9) -> complex:
    """Eigenvalue with the largest real part, ignoring the angle-translation zeros."""
    w = np.asarray(w)
    keep = np.abs(w) > zero_tol * omega0
    cand = w[keep]
    return complex(cand[np.argmax(cand.real)])


def assemble_line_current_matrix(network: PuNetwork) -> np.ndarray:
    """State matrix with one current pair per line instead of per node.

    States: [theta, omega, V] per inverter bus, then [I_d, I_q] per line.
    Every bus must carry an inverter (no Kron reduction in this form). Each
    line keeps its own R/X ratio; the line equations are

        tau0 I_d' = X^-1 D^T V - rho_e I_d + I_q
        tau0 I_q' = X^-1 D^T theta - I_d - rho_e I_q

    with D the incidence matrix and nodal injections P = D I_d, Q = -D I_q.
    Under a common rho, projecting with D reproduces the nodal model whose
    line block is D X^-1 D^T.
    """
    from .network import build_incidence

    if network.n_inverters != network.n_buses:
        raise ValueError("line-current form needs an inverter at every bus")
    v = network.n_buses
    E = len(network.line_ends)
    D = build_incidence(network)
    Xinv = np.diag(1.0 / network.X)
    rho_e = np.diag(network.R / network.X)
    Iv, Ie = np.eye(v), np.eye(E)
    Zvv, Zve, Zev = np.zeros((v, v)), np.zeros((v, E)), np.zeros((E, v))
    K = np.block([
        [Zvv, Iv, Zvv, Zve, Zve],
        [Zvv, -Iv, Zvv, -network.omega0 * network.M @ D, Zve],
        [Zvv, Zvv, -Iv, Zve, network.N @ D],
        [Zev, Zev, Xinv @ D.T, -rho_e, Ie],
        [Xinv @ D.T, Zev, Zev, -Ie, -rho_e],
    ])
    s = np.concatenate([np.ones(v), np.full(2 * v, network.tau), np.full(2 * E, network.tau0)])
    return K / s[:, None]


# names used by the operation catalogue
verify_theorem1 = verify_mode_correspondence
verify_lemma1 = verify_polynomial_singularity
