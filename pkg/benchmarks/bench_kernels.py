"""Compiled vs pure-Python kernels: DMM Gibbs sweeps and the LDA batch e-step.

Usage: python3 benchmarks/bench_kernels.py [--docs N] [--repeats R]

Each timing is the best of R runs. Both backends consume the same random
stream, so the DMM runs are also checked for identical labels.
"""

import argparse
import time

import numpy as np

from shorttopics import dmm, lda, synth
from shorttopics.kernels import available_backends


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the python backend is timed")

    dmm_corpus = synth.planted_dmm(args.docs, 10, seed=0).corpus
    dmm_params = dmm.DmmParams(K=20, iterations=10, seed=0)
    lda_corpus = synth.planted_lda(args.docs // 4, 10, doc_len=30, seed=0).corpus
    lam = np.random.default_rng(0).gamma(100.0, 0.01, size=(10, lda_corpus.V))

    rows = []
    labels = {}
    for b in backends:
        t, model = best_of(lambda: dmm.train(dmm_corpus, dmm_params, backend=b), args.repeats)
        labels[b] = model.labels
        rows.append(("dmm: 10 sweeps, K=20", b, t))
    for b in backends:
        t, _ = best_of(lambda: lda.batch_e_step(lda_corpus, lam, 0.1, 1e-3, 100, backend=b),
                       args.repeats)
        rows.append(("lda: batch e-step, K=10", b, t))

    print(f"{'kernel':26s} {'backend':8s} {'seconds':>9s} {'speedup':>8s}")
    base = {name: t for name, b, t in rows if b == "python"}
    for name, b, t in rows:
        print(f"{name:26s} {b:8s} {t:9.4f} {base[name] / t:8.1f}x")
    if len(labels) == 2:
        same = np.array_equal(labels["cython"], labels["python"])
        print(f"dmm labels identical across backends: {same}")


if __name__ == "__main__":
    main()
