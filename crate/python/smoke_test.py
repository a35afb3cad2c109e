"""Smoke test for the pynlscont extension.

Build with `cargo build --release -p nlscont-python`; the script copies the
shared library next to itself as pynlscont.so when it is not importable.
"""
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent


def load():
    try:
        import pynlscont
        return pynlscont
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = HERE.parent / "target" / profile / "libpynlscont.so"
        if lib.exists():
            shutil.copy(lib, HERE / "pynlscont.so")
            sys.path.insert(0, str(HERE))
            import pynlscont
            return pynlscont
    sys.exit("pynlscont not built; run cargo build --release -p nlscont-python")


def main():
    m = load()
    free = {"grid": {"half_width": 20.0, "nodes": 801},
            "model": json.loads(m.default_config())["model"]}
    free["model"]["potential"] = {"kind": "zero", "depth": 0.0, "separation": 0.0, "width": 1.0}
    cfg = json.dumps(free)

    x = m.grid_nodes(cfg)
    exact = m.free_soliton(2.0, -1.0, 1.0, x)
    assert abs(max(exact) - math.sqrt(2.0)) < 1e-3

    phi, iters, res = m.solve(exact, 1.0, cfg)
    assert res < 1e-8, res
    energy, charge, *_ = m.functionals(phi, cfg)
    assert abs(charge - 2.0) < 1e-2, charge

    rq, rk = m.predicted_ratios(2.0)
    assert (rq, rk) == (0.75, 0.25)
    assert m.predicted_morse([("minimum", 2)]) == 2
    assert m.predicted_morse([("maximum", 1)]) == 2
    try:
        m.predicted_morse([("degenerate", 1)])
    except ValueError:
        pass
    else:
        raise AssertionError("degenerate placement accepted")

    small = json.dumps({"grid": {"half_width": 15.0, "nodes": 600},
                        "continuation": {"e_max": 5.0}, "budget": 3})
    with tempfile.TemporaryDirectory() as out:
        summary = json.loads(m.run_diagram(out, small))
        assert summary["branches"], summary
        assert (Path(out) / "summary.json").exists()

    print(f"ok: newton {iters} its, Q = {charge:.6f}, E_func = {energy:.6f}, "
          f"{len(summary['branches'])} branches")


if __name__ == "__main__":
    main()
