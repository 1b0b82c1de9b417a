import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import gridclust as gc
from gridclust.errors import (
    GridFormatError,
    GridValidationError,
    HomogeneityError,
    ProportionalityError,
)
from gridclust.grid_model import bus_load_power, grid_to_dict
from gridclust.randgrid import random_grid


def _mutate(doc, fn):
    d = json.loads(json.dumps(doc))
    fn(d)
    return json.dumps(d)


def test_kundur_document(kundur):
    assert len(kundur.buses) == 4
    assert len(kundur.lines) == 3
    assert kundur.omega0_rad_s == pytest.approx(2 * math.pi * 50)


def test_single_inverter_document():
    doc = {
        "omega0_rad_s": 314.159,
        "base_voltage_V": 230,
        "base_power_VA": 1e4,
        "buses": [{"id": "A", "inverter": {"m": 0.02, "n": 0.01}}],
        "lines": [],
    }
    spec = gc.parse_grid(json.dumps(doc))
    assert len(spec.buses) == 1 and not spec.lines


def test_unknown_bus(kundur_doc):
    with pytest.raises(GridValidationError, match="unknown bus"):
        gc.parse_grid(_mutate(kundur_doc, lambda d: d["lines"][0].update(to="5")))


def test_duplicate_bus(kundur_doc):
    with pytest.raises(GridValidationError, match="duplicate"):
        gc.parse_grid(_mutate(kundur_doc, lambda d: d["buses"][1].update(id="1")))


def test_unknown_field_rejected(kundur_doc):
    with pytest.raises(GridFormatError):
        gc.parse_grid(_mutate(kundur_doc, lambda d: d["buses"][0].update(colour="red")))


def test_schema_error_names_field(kundur_doc):
    with pytest.raises(GridFormatError) as exc:
        gc.parse_grid(_mutate(kundur_doc, lambda d: d["buses"][2]["inverter"].update(m="x")))
    assert "buses[2].inverter.m" in str(exc.value)


def test_syntax_error_position():
    with pytest.raises(GridFormatError) as exc:
        gc.parse_grid('{\n  "omega0_rad_s": ,\n}')
    assert exc.value.line == 2 and exc.value.column > 0


@pytest.mark.parametrize(
    "fn",
    [
        lambda d: d.update(omega0_rad_s=0),
        lambda d: d.update(base_voltage_V=-1),
        lambda d: d["lines"][0].update(length_km=0),
        lambda d: d["lines"][0].update(l_H_per_km=0),
        lambda d: d["lines"][0].update(to="1"),
        lambda d: d["buses"][0]["inverter"].update(n=0),
    ],
)
def test_invalid_values(kundur_doc, fn):
    with pytest.raises((GridValidationError, GridFormatError)):
        gc.parse_grid(_mutate(kundur_doc, fn))


def test_line_34_per_unit(kundur_net):
    e = kundur_net.line_index("3", "4")
    z_base = 230.0**2 / 1e4
    assert z_base == pytest.approx(5.29)
    x = kundur_net.X[e]
    assert x == pytest.approx(3 * 2 * math.pi * 50 * 0.51e-3 / 5.29, rel=1e-12)
    assert x == pytest.approx(0.0909, abs=1e-4)
    assert kundur_net.rho == pytest.approx(0.2222 / (2 * math.pi * 50 * 0.51e-3), rel=1e-12)
    assert kundur_net.rho == pytest.approx(1.39, abs=0.005)


def test_droop_ratio(kundur_net):
    assert kundur_net.k == pytest.approx(3.0)
    assert kundur_net.tau == pytest.approx(1 / (2 * math.pi * 5))
    assert kundur_net.tau0 == pytest.approx(1 / (2 * math.pi * 50))


def test_lossless_network_accepted(kundur_doc):
    spec = gc.parse_grid(_mutate(kundur_doc, lambda d: [ln.update(r_ohm_per_km=0) for ln in d["lines"]]))
    assert gc.to_per_unit(spec).rho == 0.0


def test_heterogeneous_rho_rejected(kundur_doc):
    spec = gc.parse_grid(_mutate(kundur_doc, lambda d: d["lines"][1].update(r_ohm_per_km=0.5)))
    with pytest.raises(HomogeneityError) as exc:
        gc.to_per_unit(spec)
    assert exc.value.offending_lines == ("2-3",)
    assert gc.to_per_unit(spec, rho_tolerance=2.0).rho > 0


def test_nonuniform_k_rejected_when_required(kundur_doc):
    spec = gc.parse_grid(_mutate(kundur_doc, lambda d: d["buses"][1]["inverter"].update(n=0.02)))
    with pytest.raises(ProportionalityError):
        gc.to_per_unit(spec, require_proportional=True)
    assert gc.to_per_unit(spec).k is None


def test_load_power(kundur):
    p = bus_load_power(kundur)
    # S = |V|^2 / conj(Z) at 1 p.u.: inductive loads draw Q > 0
    z = (20 + 1j) / 5.29
    assert p["1"] == pytest.approx(1 / np.conj(z))
    assert p["4"].imag > 0


def test_with_droop_keeps_ratio(kundur):
    s = kundur.with_droop("3", 0.01)
    b = s.bus("3").inverter
    assert b.m == pytest.approx(0.01) and b.m / b.n == pytest.approx(3.0)


def test_base_power_scaling(kundur):
    a = gc.to_per_unit(kundur)
    b = gc.to_per_unit(dataclasses.replace(kundur, base_power_VA=2 * kundur.base_power_VA))
    np.testing.assert_allclose(1 / b.X, 0.5 / a.X, rtol=1e-12)
    np.testing.assert_allclose(b.load_admittance, 0.5 * a.load_admittance, rtol=1e-12)


@given(st.floats(0.2, 5.0))
def test_joint_rescaling_leaves_mu_invariant(c):
    spec = gc.load_grid(gc.example_path("kundur4.json"))
    scaled = dataclasses.replace(
        spec,
        lines=tuple(dataclasses.replace(ln, length_km=ln.length_km * c) for ln in spec.lines),
    )
    for b in spec.buses:
        scaled = scaled.with_droop(b.id, b.inverter.m * c)
    mu0 = gc.analyze(spec).spectrum.mu
    mu1 = gc.analyze(scaled).spectrum.mu
    np.testing.assert_allclose(mu1, mu0, atol=1e-10 * mu0.max())


@given(st.integers(0, 2**32 - 1))
def test_serialize_round_trip(seed):
    spec = random_grid(np.random.default_rng(seed), n_passive=(0, 2))
    again = gc.parse_grid(gc.serialize_grid(spec))
    assert again == spec
    assert grid_to_dict(again) == grid_to_dict(spec)
