"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once per path to warm up (numba compiles on first use),
then timed ``--repeat`` times; the best time is reported. Both paths must
produce the same answer, which is checked before timing.
"""

import argparse
import time

import numpy as np

from aigts.kernels import bin_features, cost_matrix, dp_table, grow_tree, knn_predict, silhouette_samples


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    X = (rng.random((720, 27)) < 0.05).astype(np.int8)
    yield "segment cost+dp (720 bins, k<=20)", lambda a: dp_table(cost_matrix(X, accel=a), 20, accel=a)

    Xt = rng.standard_normal((3000, 29))
    yt = Xt[:, 0] + rng.standard_normal(3000)
    binned = bin_features(Xt)
    w = np.ones(3000)
    yield "tree grow (3000x29, depth 8)", lambda a: grow_tree(binned, yt, w, 8, 2, 29, 0, accel=a)[1]

    V = rng.random((2000, 27))
    labels = rng.integers(0, 5, 2000)
    yield "silhouette (2000x27, 5 clusters)", lambda a: silhouette_samples(V, labels, accel=a)

    Q = rng.standard_normal((600, 29))
    yield "knn predict (3000 train, 600 queries, k=9)", lambda a: knn_predict(Xt, yt, Q, 9, accel=a)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':45s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, run in cases(rng):
        if not np.allclose(run(True), run(False), rtol=0, atol=1e-12, equal_nan=True):
            raise SystemExit(f"{name}: numba and numpy paths disagree")
        t_nb = _best(lambda run=run: run(True), args.repeat)
        t_np = _best(lambda run=run: run(False), args.repeat)
        print(f"{name:45s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
