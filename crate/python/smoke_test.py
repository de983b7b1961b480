"""Smoke test for the speccomp_py extension.

Build and install first:
    pip install maturin
    cd crates/py && maturin build --release -o ../../target/wheels
    pip install ../../target/wheels/speccomp_py-*.whl
Then run: python python/smoke_test.py
"""

import math
import sys

import numpy as np

import speccomp_py as sc


def check(name, ok, detail=""):
    print(f"[{'ok' if ok else 'FAIL'}] {name} {detail}")
    return ok


def main():
    results = []

    c = sc.Compressor.init("cube-root")
    x = [[8.0] * c.n_channels, [1.0] * c.n_channels]
    y = np.array(c.forward(x))
    results.append(check("cube root", np.allclose(y[0], 2.0) and np.all(y[1] == 1.0), repr(c)))
    params, d_input = c.gradients(x)
    want = -2.0 * math.log(8.0) / 9.0
    results.append(check("alpha gradient", abs(params["alpha_0"][0][0] - want) < 1e-12))
    results.append(check("csv dump", c.to_csv().splitlines()[1] == "0,3"))

    mr = sc.Compressor.init("drc", mode="mr-cd")
    p = mr.params()
    results.append(check("mr drc init", [p[f"r_{i}"][0] for i in range(3)] == [0.0, 0.5, 1.0]))

    rng = np.random.default_rng(0)
    samples = rng.uniform(-1, 1, 16000)
    mags = np.array(sc.stft_magnitude(samples.tolist()))
    window = np.hamming(400)
    ref = np.abs(np.fft.rfft(samples[160 * 5 : 160 * 5 + 400] * window, n=512))
    err = np.max(np.abs(mags[5] - ref)) / np.max(ref)
    results.append(check("stft vs numpy", mags.shape == (98, 257) and err < 1e-9, f"{err:.1e}"))

    eer, _ = sc.compute_eer([0.9, 0.7], [0.8, 0.6])
    results.append(check("eer example", abs(eer - 0.5) < 1e-12, f"{eer}"))
    dcf, _ = sc.compute_min_dcf([1.0, 2.0], [0.0, 0.5])
    results.append(check("separable min dcf", dcf == 0.0))

    loss = sc.aam_softmax_loss([[1.0, 0.0]], [0], [[1.0, 0.0], [0.0, 1.0]])
    z = math.exp(30 * math.cos(0.2))
    results.append(check("aam aligned", abs(loss - math.log1p(1 / z)) < 1e-9 * max(1.0, loss) + 1e-18))

    passed, points, max_err, _ = sc.gradcheck("power", "cd", seed=7)
    results.append(check("gradcheck", passed and points >= 1000, f"max {max_err:.1e}"))

    try:
        sc.Compressor.init("cube-root", mode="nope")
        results.append(check("bad mode raises", False))
    except ValueError:
        results.append(check("bad mode raises", True))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
