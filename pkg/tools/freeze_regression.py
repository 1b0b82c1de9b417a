"""Regenerate the random regression grids and their frozen expected outputs.

Run from the repository root: python3 tools/freeze_regression.py
"""

import json
from pathlib import Path

import numpy as np

from gridclust.analysis import analyze
from gridclust.grid_model import serialize_grid
from gridclust.oracle import assemble_state_matrix, eig_general, right_half_plane_pairs
from gridclust.randgrid import random_grid

OUT = Path(__file__).resolve().parents[1] / "src" / "gridclust" / "examples"
CASES = {
    "random_a": dict(seed=11, n_inverters=4, n_passive=0),
    "random_b": dict(seed=22, n_inverters=6, n_passive=2),
    "random_c": dict(seed=33, n_inverters=8, n_passive=1),
}


def expected(spec) -> dict:
    a = analyze(spec)
    sm = assemble_state_matrix(a.network, a.reduced)
    w, _ = eig_general(sm.A)
    return {
        "rho": a.network.rho,
        "k": a.network.k,
        "mu": [float(x) for x in a.spectrum.mu],
        "members": [list(m) for m in a.spectrum.members],
        "mu_cr": a.verdict.mu_cr,
        "status": a.status,
        "n_right_half_plane": right_half_plane_pairs(w, a.network.omega0),
    }


def main():
    for name, case in CASES.items():
        case = dict(case)
        rng = np.random.default_rng(case.pop("seed"))
        spec = random_grid(rng, **case)
        (OUT / f"{name}.json").write_text(serialize_grid(spec), encoding="utf-8")
        (OUT / f"{name}.expected.json").write_text(json.dumps(expected(spec), indent=2) + "\n", encoding="utf-8")
        print(name, expected(spec)["status"])


if __name__ == "__main__":
    main()
