"""Smoke test for the pygmmdyn extension.

Build and run from the repository root:

    cargo build --release -p gmmdyn-py
    cp target/release/libpygmmdyn.so python/pygmmdyn.so
    python3 python/smoke_test.py
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import pygmmdyn as g


def main():
    w1, w2 = g.logistic_moments(0.0, 0.0)
    assert abs(w1 - 0.5) < 1e-12 and abs(w2 - 0.25) < 1e-12
    a, _ = g.logistic_moments(1.3, 2.0)
    b, _ = g.logistic_moments(-1.3, 2.0)
    assert abs(a + b - 1.0) < 1e-12

    report = g.classify_regime(1.5, 0.2)
    assert report["regime"] == "extreme" and report["extreme_family"]
    assert g.classify_regime(0.5, 0.2)["regime"] == "mild"

    model = g.SpectralMixture.identity(200)
    assert model.dim == 200 and model.num_classes == 2
    assert model.validate() == []
    task = g.Task.binary_logistic()
    times = [0.5 * k for k in range(11)]

    ode = g.integrate_ode(model, task, 0.5, times)
    assert ode["t"] == times
    assert abs(ode["loss"][0] - math.log(2.0)) < 1e-12
    assert ode["loss"][-1] < ode["loss"][0]

    sgd = g.run_sgd(model, task, 0.5, times, seed=3)
    gap = max(abs(x - y) for x, y in zip(ode["loss"], sgd["loss"]))
    assert gap < 0.05, gap

    zo = g.SpectralMixture.zero_one(400, [0.25] * 4, [0.4, 0.1, 0.4, 0.1])
    blocks = g.integrate_ode(zo, task, 0.9, times)
    assert "m00" in blocks and "v11" in blocks

    mse = g.integrate_ode(g.SpectralMixture.power_law_multiclass(100, 1.3, 4), g.Task.mse(100, 4), 0.5, times)
    assert mse["loss"][-1] < mse["loss"][0]

    try:
        g.SpectralMixture.identity(0)
    except ValueError:
        pass
    else:
        raise AssertionError("d = 0 accepted")

    print(f"ok: ode/sgd loss gap {gap:.2e}, final ode loss {ode['loss'][-1]:.4f}")


if __name__ == "__main__":
    main()
