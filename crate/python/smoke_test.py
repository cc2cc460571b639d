#!/usr/bin/env python3
"""Smoke test for the blockcorr_py extension module.

Build the module first, then run this script from anywhere:

    cargo build -p blockcorr-py
    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path


def load_module():
    """Copy the freshest built cdylib into a temp dir under the importable
    name and import it."""
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / profile / "libblockcorr_py.so"
        for profile in ("debug", "release")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no libblockcorr_py.so under target/; run `cargo build -p blockcorr-py`")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="blockcorr_py."))
    shutil.copy2(newest, stage / "blockcorr_py.so")
    sys.path.insert(0, str(stage))
    import blockcorr_py

    return blockcorr_py


def main():
    bc = load_module()
    print(f"loaded blockcorr_py {bc.__version__}")

    layout = bc.BlockLayout([16, 16], 64)
    assert layout.p_total == 32 and layout.samples == 64
    assert layout.ratios("known") == [0.25, 0.25]

    # Closed-form null parameters, checked by hand.
    mean, variance = bc.null_params(layout, stat="schott", mean="known")
    assert abs(mean - 40.0) < 1e-12, mean
    assert abs(variance - 0.28125) < 1e-12, variance
    print(f"schott null params ok: mean={mean}, variance={variance}")

    # The contour route must agree with the closed form.
    c_mean, c_var = bc.null_params(layout, stat="poly:0,0,1", mean="known")
    assert abs(c_mean - mean) < 1e-4 * mean, c_mean
    assert abs(c_var - variance) < 1e-4 * variance, c_var
    print("contour route agrees with the closed form")

    # A null Gaussian sample should not be rejected wildly.
    import numpy as np

    rng = np.random.default_rng(7)
    data = rng.standard_normal((64, 32))
    report = bc.run_test(data.tolist(), layout, stat="schott")
    assert abs(report.z_score) < 4.0, report.z_score
    assert report.p_value is not None and 0.0 <= report.p_value <= 1.0
    assert report.method == "schott-closed" and report.mean_mode == "unknown"
    print(f"run_test ok: {report!r}")

    # Limiting density: total mass of the continuous part plus the atom
    # at zero is one.
    y = [0.05] * 16
    a, b = bc.support_interval(y)
    assert 0.0 < a < b, (a, b)
    xs = np.linspace(a - 0.05, b + 0.05, 1501)
    dens = bc.density(y, xs.tolist(), 1e-6)
    mass = float(np.trapezoid(dens, xs))
    atom = 1.0 - sum(y)
    assert abs(mass + atom - 1.0) < 0.01, mass
    print(f"density mass ok: continuous={mass:.4f}, atom at 0={atom}")

    # Simulation round: a small null run should look standard normal.
    config = {
        "dist": "gaussian",
        "cov": "identity",
        "regime": "2p",
        "blocks": {"sizes": [8, 8]},
        "alt": "null",
        "reps": 200,
        "seed": 11,
        "statistic": "schott",
    }
    sim = bc.simulate(json.dumps(config))
    assert len(sim.raw) == 200
    assert abs(sim.standardized_mean()) < 0.35, sim.standardized_mean()
    assert 0.5 < sim.standardized_variance() < 1.6, sim.standardized_variance()
    assert sim.ks_distance < 0.15, sim.ks_distance
    print(f"simulate ok: {sim!r}")

    # Invalid inputs surface as ValueError with the library's message.
    for bad in (
        lambda: bc.BlockLayout([0, 8], 64),
        lambda: bc.null_params(layout, stat="poly:0,0,1", method="closed"),
        lambda: bc.density([0.3, 1.2], [0.5], 1e-6),
        lambda: bc.simulate("{}"),
    ):
        try:
            bad()
        except ValueError as err:
            print(f"rejected as expected: {err}")
        else:
            sys.exit("expected a ValueError")

    assert not math.isnan(report.statistic)
    print("smoke test passed")


if __name__ == "__main__":
    main()
