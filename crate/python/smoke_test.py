"""Smoke test for the Python bindings.

Build first with `cargo build --release -p geoplan-py`. The shared library is
copied to a temporary directory as `geoplan.so` so Python can import it
without a packaging step.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_geoplan():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libgeoplan.so"
        if lib.exists():
            break
    else:
        sys.exit("libgeoplan.so not found; run `cargo build --release -p geoplan-py`")
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "geoplan.so")
    sys.path.insert(0, str(tmp))
    import geoplan

    return geoplan


def main():
    geoplan = import_geoplan()

    torus = geoplan.Manifold.torus(2)
    assert torus.dim == 2
    assert abs(torus.distance([0.95, 0.5], [0.05, 0.5]) - 0.1) < 1e-12
    assert torus.canonicalize([1.25, -0.25]) == [0.25, 0.75]
    strip = torus.unroll(0, 0.0)
    assert abs(strip.distance([0.95, 0.5], [0.05, 0.5]) - 0.9) < 1e-12

    band = geoplan.Scenario.load(str(ROOT / "scenarios" / "band.json"))
    plan = band.plan()
    print(plan)
    assert abs(plan.objective - 0.4) < 1e-6
    assert plan.optimal
    assert plan.equivalence_residual <= 1e-9
    assert plan.trajectory_csv().startswith("t_index,")
    assert json.loads(plan.metadata_json())["mode"] == "exact"
    assert sum(plan.check_gconvex(samples=200)) == 0

    baseline = band.plan(unroll="0:0")
    assert baseline.objective >= 1.2 * plan.objective

    fixed = band.plan(path=plan.path_indices)
    assert abs(fixed.objective - plan.objective) < 1e-9

    grid = band.grid_length(resolution=128, connectivity=16)
    assert abs(grid - 0.4) < 0.02

    base, supra, sub = geoplan.sphere_parallelogramoid(0.1)
    assert supra < base and sub < base

    try:
        geoplan.Scenario.from_json('{"manifold": [], "start": [], "goal": []}')
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("empty manifold accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
