"""
Microgrid description: parsing, validation and per-unit conversion.

A grid document is UTF-8 JSON with SI quantities (ohms, henries, volts,
volt-amperes, rad/s). Droop gains are plain fractions (0.03 means 3 %).
``to_per_unit`` turns the physical description into a :class:`PuNetwork`
holding per-unit line reactances/resistances, the common R/X ratio and the
droop vectors.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import (
    GridFormatError,
    GridValidationError,
    HomogeneityError,
    ProportionalityError,
)

DEFAULT_OMEGA_C = 2 * math.pi * 5.0
DEFAULT_RHO_TOLERANCE = 1e-6
DEFAULT_K_TOLERANCE = 1e-6

_NUM = {"type": "number"}

GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["omega0_rad_s", "base_voltage_V", "base_power_VA", "buses", "lines"],
    "properties": {
        "omega0_rad_s": _NUM,
        "omega_c_rad_s": _NUM,
        "base_voltage_V": _NUM,
        "base_power_VA": _NUM,
        "buses": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"type": "string"},
                    "inverter": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["m", "n"],
                        "properties": {"m": _NUM, "n": _NUM},
                    },
                    "load_ohm": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["re", "im"],
                        "properties": {"re": _NUM, "im": _NUM},
                    },
                },
            },
        },
        "lines": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to", "length_km", "r_ohm_per_km", "l_H_per_km"],
                "properties": {
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "length_km": _NUM,
                    "r_ohm_per_km": _NUM,
                    "l_H_per_km": _NUM,
                },
            },
        },
    },
}


@dataclass(frozen=True)
class InverterSpec:
    m: float
    n: float


@dataclass(frozen=True)
class BusSpec:
    id: str
    inverter: InverterSpec | None = None
    load_ohm: complex | None = None

    def __post_init__(self):
        inv = self.inverter
        if inv is not None and not (inv.m > 0 and inv.n > 0):
            raise GridValidationError(
                f"bus {self.id!r}: droop gains must be positive (m={inv.m}, n={inv.n})"
            )
        if self.load_ohm is not None and self.load_ohm == 0:
            raise GridValidationError(f"bus {self.id!r}: zero load impedance")


@dataclass(frozen=True)
class LineSpec:
    from_bus: str
    to_bus: str
    length_km: float
    r_ohm_per_km: float
    l_H_per_km: float

    def __post_init__(self):
        name = f"{self.from_bus}-{self.to_bus}"
        if self.from_bus == self.to_bus:
            raise GridValidationError(f"line {name}: self-loop")
        if not self.length_km > 0:
            raise GridValidationError(f"line {name}: length_km must be > 0")
        if not self.r_ohm_per_km >= 0:
            raise GridValidationError(f"line {name}: resistance must be >= 0")
        if not self.l_H_per_km > 0:
            raise GridValidationError(f"line {name}: inductance must be > 0")

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class GridSpec:
    omega0_rad_s: float
    base_voltage_V: float
    base_power_VA: float
    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...] = ()
    omega_c_rad_s: float = DEFAULT_OMEGA_C

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        for name in ("omega0_rad_s", "base_voltage_V", "base_power_VA", "omega_c_rad_s"):
            if not getattr(self, name) > 0:
                raise GridValidationError(f"{name} must be > 0")
        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise GridValidationError(f"duplicate bus id {bus.id!r}")
            seen.add(bus.id)
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in seen:
                    raise GridValidationError(f"line {line.name}: unknown bus {end!r}")

    def bus(self, bus_id: str) -> BusSpec:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise GridValidationError(f"unknown bus {bus_id!r}")

    def line_index(self, a: str, b: str) -> int:
        """Index of the line joining buses ``a`` and ``b`` (either orientation)."""
        for i, line in enumerate(self.lines):
            if {line.from_bus, line.to_bus} == {a, b}:
                return i
        raise GridValidationError(f"no line between {a!r} and {b!r}")

    def with_line_length(self, a: str, b: str, length_km: float) -> GridSpec:
        i = self.line_index(a, b)
        lines = list(self.lines)
        lines[i] = dataclasses.replace(lines[i], length_km=length_km)
        return dataclasses.replace(self, lines=tuple(lines))

    def with_droop(self, bus_id: str, m: float, keep_ratio: bool = True) -> GridSpec:
        """Copy with frequency droop ``m`` at ``bus_id``.

        With ``keep_ratio`` the voltage droop is rescaled so that m/n is unchanged,
        which keeps proportional-droop grids proportional.
        """
        buses = list(self.buses)
        for i, bus in enumerate(buses):
            if bus.id == bus_id:
                if bus.inverter is None:
                    raise GridValidationError(f"bus {bus_id!r} has no inverter")
                n = bus.inverter.n * m / bus.inverter.m if keep_ratio else bus.inverter.n
                buses[i] = dataclasses.replace(bus, inverter=InverterSpec(m=m, n=n))
                return dataclasses.replace(self, buses=tuple(buses))
        raise GridValidationError(f"unknown bus {bus_id!r}")


def _schema_path(error: jsonschema.ValidationError) -> str:
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<document>"


def parse_grid(document: str | bytes) -> GridSpec:
    """Parse a JSON grid document into a validated :class:`GridSpec`."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GridFormatError(
            f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc

    validator = jsonschema.Draft7Validator(GRID_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = _schema_path(err)
        raise GridFormatError(f"schema violation at {path}: {err.message}", field=path)

    buses = []
    for b in raw["buses"]:
        inv = b.get("inverter")
        load = b.get("load_ohm")
        buses.append(
            BusSpec(
                id=b["id"],
                inverter=InverterSpec(float(inv["m"]), float(inv["n"])) if inv else None,
                load_ohm=complex(load["re"], load["im"]) if load else None,
            )
        )
    lines = [
        LineSpec(
            from_bus=ln["from"],
            to_bus=ln["to"],
            length_km=float(ln["length_km"]),
            r_ohm_per_km=float(ln["r_ohm_per_km"]),
            l_H_per_km=float(ln["l_H_per_km"]),
        )
        for ln in raw["lines"]
    ]
    return GridSpec(
        omega0_rad_s=float(raw["omega0_rad_s"]),
        omega_c_rad_s=float(raw.get("omega_c_rad_s", DEFAULT_OMEGA_C)),
        base_voltage_V=float(raw["base_voltage_V"]),
        base_power_VA=float(raw["base_power_VA"]),
        buses=tuple(buses),
        lines=tuple(lines),
    )


def load_grid(path: str | Path) -> GridSpec:
    return parse_grid(Path(path).read_text(encoding="utf-8"))


def grid_to_dict(spec: GridSpec) -> dict:
    buses = []
    for b in spec.buses:
        d = {"id": b.id}
        if b.inverter is not None:
            d["inverter"] = {"m": b.inverter.m, "n": b.inverter.n}
        if b.load_ohm is not None:
            d["load_ohm"] = {"re": b.load_ohm.real, "im": b.load_ohm.imag}
        buses.append(d)
    return {
        "omega0_rad_s": spec.omega0_rad_s,
        "omega_c_rad_s": spec.omega_c_rad_s,
        "base_voltage_V": spec.base_voltage_V,
        "base_power_VA": spec.base_power_VA,
        "buses": buses,
        "lines": [
            {
                "from": ln.from_bus,
                "to": ln.to_bus,
                "length_km": ln.length_km,
                "r_ohm_per_km": ln.r_ohm_per_km,
                "l_H_per_km": ln.l_H_per_km,
            }
            for ln in spec.lines
        ],
    }


def serialize_grid(spec: GridSpec) -> str:
    return json.dumps(grid_to_dict(spec), indent=2)


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PuNetwork:
    """Per-unit network with a single R/X ratio.

    Lines are stored by bus index; ``m``/``n`` and every matrix derived from them
    are ordered like ``inverter_index`` (inverter buses in document order).
    """

    bus_ids: tuple[str, ...]
    inverter_index: tuple[int, ...]
    line_ends: tuple[tuple[int, int], ...]
    line_length_km: np.ndarray
    x_pu_per_km: np.ndarray
    r_pu_per_km: np.ndarray
    rho: float
    m: np.ndarray
    n: np.ndarray
    k: float | None
    omega0: float
    omega_c: float
    load_admittance: np.ndarray
    homogeneous: bool = True
    line_rho: np.ndarray = field(default=None)

    @property
    def X(self) -> np.ndarray:
        return self.x_pu_per_km * self.line_length_km

    @property
    def R(self) -> np.ndarray:
        return self.r_pu_per_km * self.line_length_km

    @property
    def tau(self) -> float:
        return 1.0 / self.omega_c

    @property
    def tau0(self) -> float:
        return 1.0 / self.omega0

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.m)

    @property
    def N(self) -> np.ndarray:
        return np.diag(self.n)

    @property
    def inverter_ids(self) -> tuple[str, ...]:
        return tuple(self.bus_ids[i] for i in self.inverter_index)

    @property
    def n_buses(self) -> int:
        return len(self.bus_ids)

    @property
    def n_inverters(self) -> int:
        return len(self.inverter_index)

    def line_names(self) -> list[str]:
        return [f"{self.bus_ids[a]}-{self.bus_ids[b]}" for a, b in self.line_ends]

    def line_index(self, a: str, b: str) -> int:
        ia, ib = self.bus_ids.index(a), self.bus_ids.index(b)
        for e, ends in enumerate(self.line_ends):
            if set(ends) == {ia, ib}:
                return e
        raise GridValidationError(f"no line between {a!r} and {b!r}")

    def inverter_position(self, bus_id: str) -> int:
        """Position of ``bus_id`` within the inverter ordering."""
        try:
            return self.inverter_ids.index(bus_id)
        except ValueError:
            raise GridValidationError(f"bus {bus_id!r} has no inverter") from None

    def with_line_length(self, e: int, length_km: float) -> PuNetwork:
        lengths = np.array(self.line_length_km, dtype=float)
        lengths[e] = length_km
        return dataclasses.replace(self, line_length_km=_frozen(lengths))

    def with_droop(self, pos: int, m: float, keep_ratio: bool = True) -> PuNetwork:
        mm = np.array(self.m, dtype=float)
        nn = np.array(self.n, dtype=float)
        if keep_ratio:
            nn[pos] *= m / mm[pos]
        mm[pos] = m
        k = self.k if keep_ratio else None
        return dataclasses.replace(self, m=_frozen(mm), n=_frozen(nn), k=k)


def _common_rho(spec: GridSpec, rho_e: np.ndarray, tol: float) -> float:
    if rho_e.size == 0:
        return 0.0
    ref = float(np.median(rho_e))
    scale = abs(ref) if ref != 0 else 1.0
    bad = [spec.lines[i].name for i in np.flatnonzero(np.abs(rho_e - ref) > tol * scale)]
    if bad:
        raise HomogeneityError(
            f"lines do not share a common R/X ratio (reference {ref:.6g}); "
            f"offending lines: {', '.join(bad)}",
            offending_lines=bad,
        )
    return float(np.mean(rho_e))


def _droop_ratio(spec: GridSpec, m, n, tol: float, required: bool) -> float | None:
    if len(m) == 0:
        return None
    ratios = m / n
    ref = float(np.median(ratios))
    bad = np.flatnonzero(np.abs(ratios - ref) > tol * ref)
    if bad.size:
        if required:
            inv = [b.id for b in spec.buses if b.inverter is not None]
            names = ", ".join(f"{inv[i]} (k={ratios[i]:.6g})" for i in bad)
            raise ProportionalityError(
                f"droop ratio m/n is not uniform (reference k={ref:.6g}); offending buses: {names}"
            )
        return None
    return float(np.mean(ratios))


def to_per_unit(
    spec: GridSpec,
    rho_tolerance: float = DEFAULT_RHO_TOLERANCE,
    k_tolerance: float = DEFAULT_K_TOLERANCE,
    require_proportional: bool = False,
    require_homogeneous: bool = True,
) -> PuNetwork:
    """Convert a :class:`GridSpec` to per-unit quantities.

    Parameters
    ----------
    rho_tolerance : float
        Relative tolerance on each line's R/X ratio around the common value.
    k_tolerance : float
        Relative tolerance on m/n across inverters.
    require_proportional : bool
        Raise :class:`ProportionalityError` when m/n is not uniform. Otherwise
        ``k`` is ``None`` for non-proportional grids.
    require_homogeneous : bool
        Disable only for diagnostics; a heterogeneous network gets ``rho`` set
        to the median line ratio and ``homogeneous=False``.
    """
    z_base = spec.base_voltage_V**2 / spec.base_power_VA
    ids = tuple(b.id for b in spec.buses)
    pos = {b: i for i, b in enumerate(ids)}

    ends = tuple((pos[ln.from_bus], pos[ln.to_bus]) for ln in spec.lines)
    x_km = np.array([spec.omega0_rad_s * ln.l_H_per_km / z_base for ln in spec.lines], dtype=float)
    r_km = np.array([ln.r_ohm_per_km / z_base for ln in spec.lines], dtype=float)
    lengths = np.array([ln.length_km for ln in spec.lines], dtype=float)
    rho_e = r_km / x_km if len(spec.lines) else np.zeros(0)

    homogeneous = True
    try:
        rho = _common_rho(spec, rho_e, rho_tolerance)
    except HomogeneityError:
        if require_homogeneous:
            raise
        homogeneous = False
        rho = float(np.median(rho_e))

    inv_idx = tuple(i for i, b in enumerate(spec.buses) if b.inverter is not None)
    m = np.array([spec.buses[i].inverter.m for i in inv_idx], dtype=float)
    n = np.array([spec.buses[i].inverter.n for i in inv_idx], dtype=float)
    k = _droop_ratio(spec, m, n, k_tolerance, require_proportional)

    y_load = np.array(
        [0j if b.load_ohm is None else z_base / b.load_ohm for b in spec.buses], dtype=complex
    )
    return PuNetwork(
        bus_ids=ids,
        inverter_index=inv_idx,
        line_ends=ends,
        line_length_km=_frozen(lengths),
        x_pu_per_km=_frozen(x_km),
        r_pu_per_km=_frozen(r_km),
        rho=rho,
        m=_frozen(m),
        n=_frozen(n),
        k=k,
        omega0=spec.omega0_rad_s,
        omega_c=spec.omega_c_rad_s,
        load_admittance=_frozen(y_load),
        homogeneous=homogeneous,
        line_rho=_frozen(rho_e),
    )


def bus_load_power(spec: GridSpec) -> dict[str, complex]:
    """Per-unit complex power drawn by each bus load at 1 p.u. voltage."""
    z_base = spec.base_voltage_V**2 / spec.base_power_VA
    out = {}
    for b in spec.buses:
        if b.load_ohm is not None:
            out[b.id] = 1.0 / np.conj(b.load_ohm / z_base)
    return out
