import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import gridclust as gc
from gridclust.boundary import assess, max_real_part, mu_cr_lower_bound, mu_critical
from gridclust.errors import BoundaryError
from gridclust.spectrum import cluster_polynomial, spectrum

TAU, TAU0 = 1 / (2 * math.pi * 5), 1 / (2 * math.pi * 50)


def hurwitz_stable(coeffs_ascending) -> bool:
    """Routh-Hurwitz test via leading principal minors of the Hurwitz matrix."""
    a = np.asarray(coeffs_ascending, dtype=float)[::-1]  # a0 s^n + a1 s^(n-1) + ...
    a = a / a[0]
    n = a.size - 1
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            k = 2 * j - i + 1
            if 0 <= k <= n:
                H[i, j] = a[k]
    return all(np.linalg.det(H[:d, :d]) > 0 for d in range(1, n + 1))


def hurwitz_mu_cr(rho, k, hi=50.0):
    lo = 1e-6
    assert hurwitz_stable(cluster_polynomial(lo, rho, k, TAU, TAU0))
    while hurwitz_stable(cluster_polynomial(hi, rho, k, TAU, TAU0)):
        hi *= 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if hurwitz_stable(cluster_polynomial(mid, rho, k, TAU, TAU0)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_reference_threshold():
    mu_cr = mu_critical(1.4, 3.0, TAU, TAU0)
    assert mu_cr == pytest.approx(1.9644, abs=1e-3)
    assert mu_cr >= 1.5646
    assert abs(max_real_part(mu_cr, 1.4, 3.0, TAU, TAU0)) <= 1e-8 / TAU0


@pytest.mark.parametrize("rho,k", [(1.4, 3.0), (0.5, 1.0), (2.5, 8.0), (0.3, 0.7), (1.0, 1.0)])
def test_threshold_matches_routh_hurwitz(rho, k):
    assert mu_critical(rho, k, TAU, TAU0) == pytest.approx(hurwitz_mu_cr(rho, k), abs=2e-6)


@given(st.floats(0.2, 5.0), st.floats(0.5, 10.0))
def test_just_below_threshold_is_stable(rho, k):
    mu_cr = mu_critical(rho, k, TAU, TAU0)
    assert np.all(gc.cluster_modes(mu_cr * (1 - 1e-3), rho, k, TAU, TAU0).real < 0)
    assert max_real_part(mu_cr * (1 + 1e-3), rho, k, TAU, TAU0) > 0
    assert mu_cr_lower_bound(rho, k) <= mu_cr


def test_lower_bound_branches():
    assert mu_cr_lower_bound(1.4, 3) == pytest.approx(2.96**2 / 5.6, abs=1e-12)
    assert mu_cr_lower_bound(1.4, 3) == pytest.approx(1.5646, abs=1e-4)
    assert mu_cr_lower_bound(1.4, 1) == pytest.approx(2.96 / 3.92, abs=1e-12)
    assert mu_cr_lower_bound(1.4, 1) == pytest.approx(0.7551, abs=1e-4)
    # continuity at the branch point k = rho (rho^2 + 1) / 2
    assert mu_cr_lower_bound(1.0, 1.0) == pytest.approx(1.0)
    assert mu_cr_lower_bound(1.0, 1.0 + 1e-12) == pytest.approx(1.0)
    assert mu_cr_lower_bound(1.0, 1.0 - 1e-12) == pytest.approx(1.0)


def test_lower_bound_rejects_lossless():
    with pytest.raises(ValueError):
        mu_cr_lower_bound(0.0, 3.0)


def test_lossless_has_no_stable_window():
    # undamped line modes sit on the imaginary axis at mu = 0 and move right for mu > 0
    assert max_real_part(1e-3, 0.0, 3.0, TAU, TAU0) >= 0
    with pytest.raises(BoundaryError, match="no stable cluster region"):
        mu_critical(0.0, 3.0, TAU, TAU0)


def test_no_boundary_in_range():
    with pytest.raises(BoundaryError, match="no finite stability boundary"):
        mu_critical(1.4, 3.0, TAU, TAU0, mu_max=1.0)


def _spec(mu):
    # diagonal C with the given eigenvalues
    return spectrum(np.diag(mu), np.ones(len(mu)))


def test_assess_table_spectrum():
    v = assess(_spec([0, 0.93, 1.05, 2.06]), 1.97)
    assert v.status == "unstable" and v.n_unstable == 1
    assert [c.mu for c in v.clusters] == [2.06, 1.05, 0.93, 0]
    assert len(v.critical) == 1 and v.critical[0].mu == 2.06
    assert v.clusters[0].margin == pytest.approx(-0.09)


def test_assess_single_inverter():
    v = assess(_spec([0.0]), 1.97)
    assert v.stable and v.clusters[0].margin == 1.97


def test_assess_two_unstable():
    v = assess(_spec([0, 0.5, 2.1, 2.5]), 1.97)
    assert v.n_unstable == 2 and len(v.critical) == 2


def test_assess_marginal():
    v = assess(_spec([0, 1.97 + 5e-5]), 1.97)
    assert v.status == "marginal" and not v.stable


def test_kundur_verdict(kundur):
    a = gc.analyze(kundur)
    v = a.verdict
    assert v.status == "unstable" and v.n_unstable == 1
    assert v.critical[0].members == ("3", "4")
    assert v.mu_cr_lower_bound <= v.mu_cr
    assert v.recommendations[0]["parameter"] == "l_3-4"
    assert {r["parameter"] for r in v.recommendations[:3]} == {"l_3-4", "m_3", "m_4"}


@given(st.integers(0, 2**32 - 1))
def test_verdict_never_improves_when_coupling_grows(seed):
    from gridclust.randgrid import random_grid

    rng = np.random.default_rng(seed)
    spec = random_grid(rng)
    before = gc.analyze(spec).status
    b = spec.buses[int(rng.integers(len(spec.buses)))]
    stronger = spec.with_droop(b.id, b.inverter.m * 1.5)
    ln = spec.lines[int(rng.integers(len(spec.lines)))]
    stronger = stronger.with_line_length(ln.from_bus, ln.to_bus, ln.length_km * 0.7)
    after = gc.analyze(stronger).status
    if before == "unstable":
        assert after == "unstable"
