"""Smoke test for the levyheat Python extension.

Build and install first:
    pip install maturin
    pip install --no-build-isolation ./crates/py
"""

import json
import math
import pathlib
import tempfile

import jsonschema
import levyheat

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    bm = levyheat.Kernel.brownian()
    assert close(bm.theta(), math.sqrt(2.0), 1e-6)
    assert close(bm.upsilon(4.0), 0.25, 1e-8)
    assert close(bm.gamma(3.0), 54.0, 1e-6)
    lower, mid, upper = bm.pp_triple(0.3)
    assert lower < mid < upper and close(mid, 0.5, 1e-6)

    st = levyheat.Kernel.stable(1.5)
    assert close(st.theta(), 2 ** (1 / 1.5), 1e-4)
    try:
        levyheat.Kernel.stable(1.0)
    except RuntimeError as e:
        assert "divergent resolvent" in str(e)
    else:
        raise AssertionError("alpha = 1 must be rejected")

    info = json.loads(levyheat.kernel_info(json.dumps({"kernel": {"kind": "brownian", "kappa": 1}, "beta": [1, 4], "k": [2, 3]})))
    assert [round(v, 6) for v in info["upsilon"]] == [0.5, 0.25]

    u0 = levyheat.Measure.dirac()
    d = u0.heat_convolve(bm, 0.5, [0.0])[0]
    assert close(d, 1 / math.sqrt(math.pi), 1e-10)

    grid = json.dumps({"dt": 1 / 64, "dx": 0.1875, "L": 6.0, "t_end": 0.25})
    t, x, rows = levyheat.simulate(bm, u0, json.dumps({"kind": "linear", "lambda": 0.0}), grid, 7)
    j = min(range(len(x)), key=lambda i: abs(x[i]))
    assert close(rows[-1][j], bm.p(t[-1], x[j]), 1e-10)

    schema = json.loads((ROOT / "docs" / "config.schema.json").read_text())
    for path in sorted((ROOT / "configs").glob("*.json")):
        jsonschema.validate(json.loads(path.read_text()), schema)

    cfg = json.loads((ROOT / "configs" / "smoke.json").read_text())
    cfg["claims"] = ["lemma_pp", "mean_identity"]
    cfg["seeds"] = {"first": 0, "count": 256}
    exp = levyheat.Experiment(json.dumps(cfg))
    verdicts = exp.verify()
    assert verdicts and all(v[4] for v in verdicts), verdicts
    with tempfile.TemporaryDirectory() as out:
        assert exp.run(out)
        assert (pathlib.Path(out) / "manifest.json").exists()

    print(f"levyheat {levyheat.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
