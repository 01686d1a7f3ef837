"""Compare the compiled kernels against the pure-numpy fallback.

Times the GRU sequence layer (forward and forward+backward) and the
softmax/NLL rows at training-shaped sizes. Run:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from penstyle.kernels import available_backends


def time_call(fn, repeats=20, warmup=3):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_gru_layer(backend, T=80, B=32, I=32, H=128, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(T, B, I))
    h0 = np.zeros((B, H))
    params = [
        rng.normal(size=(I, H)) * 0.3, rng.normal(size=(H, H)) * 0.3, np.zeros((1, H)),
        rng.normal(size=(I, H)) * 0.3, rng.normal(size=(H, H)) * 0.3, np.zeros((1, H)),
        rng.normal(size=(I, H)) * 0.3, rng.normal(size=(H, H)) * 0.3, np.zeros((1, H)),
    ]
    douts = rng.normal(size=(T, B, H))

    def forward():
        backend.gru_layer_forward(xs, h0, None, *params)

    hs, cache = backend.gru_layer_forward(xs, h0, None, *params)

    def backward():
        backend.gru_layer_backward(douts, xs, h0, hs, None, cache, *params)

    return time_call(forward), time_call(backward)


def bench_softmax(backend, N=2500, K=17, seed=0):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(N, K)) * 2
    targets = rng.integers(0, K, size=N)
    gl = rng.normal(size=N)

    def fwd():
        backend.softmax_nll_forward(logits, targets)

    _, probs = backend.softmax_nll_forward(logits, targets)

    def bwd():
        backend.softmax_nll_backward(gl, probs, targets)

    return time_call(fwd, repeats=50), time_call(bwd, repeats=50)


def main():
    backends = available_backends()
    names = [b.NAME for b in backends]
    print(f"backends available: {names}")
    print(f"{'kernel':<28}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    rows = [
        ("gru_layer fwd (80x32x128)", lambda b: bench_gru_layer(b)[0]),
        ("gru_layer bwd (80x32x128)", lambda b: bench_gru_layer(b)[1]),
        ("softmax_nll fwd (2500x17)", lambda b: bench_softmax(b)[0]),
        ("softmax_nll bwd (2500x17)", lambda b: bench_softmax(b)[1]),
    ]
    for label, runner in rows:
        times = [runner(b) for b in backends]
        cells = "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        speedup = f"{times[0] / times[-1]:>9.2f}x" if len(times) > 1 else "       n/a"
        print(f"{label:<28}{cells}{speedup}")


if __name__ == "__main__":
    main()
