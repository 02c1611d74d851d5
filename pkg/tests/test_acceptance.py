"""Acceptance suite: one test per numbered criterion, each printing a
PASS/FAIL line (run with -s to watch them live).

Criteria 5 and 6 need the real MNIST IDX files, which cannot be bundled or
downloaded here; they run whenever the files are present (see conftest
mnist_dir: $BLOCKCIRC_MNIST_DIR or ./data/mnist) and skip loudly otherwise.
An always-on stand-in trains the same architecture family on the bundled
sklearn digits to keep the end-to-end path exercised either way.
"""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from blockcirc import circulant as bc
from blockcirc import fftcore as fc
from blockcirc import hwmodel as hw
from blockcirc import quantization as qz
from blockcirc import training as tr
from blockcirc.datasets import load_mnist

from conftest import mnist_dir


def _line(num, status, detail=""):
    print(f"\n[criterion {num}] {status}" + (f": {detail}" if detail else ""))


# ----------------------------------------------------------- criterion 1


def test_criterion_1_fft_vs_dense_oracle():
    rng = np.random.default_rng(2024)
    sizes = [2, 4, 8, 16, 32, 64]
    t0 = time.perf_counter()
    worst = 0.0
    n_pairs = 1000
    for _ in range(n_pairs):
        k = int(rng.choice(sizes))
        m = int(rng.integers(k, 8 * k + 1))
        n = int(rng.integers(k, 8 * k + 1))
        p, q = -(-m // k), -(-n // k)
        Wb = bc.BlockCirculantMatrix(m, n, k, rng.normal(size=(p, q, k)))
        x = rng.normal(size=n)
        err = np.abs(bc.block_matvec(Wb, x) - bc.dense_expand(Wb) @ x).max()
        worst = max(worst, float(err))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 30
    _line(1, "PASS" if ok else "FAIL",
          f"{n_pairs} random layers, max |fft - dense| = {worst:.2e}, "
          f"{elapsed:.1f}s")
    assert worst < 1e-9
    assert elapsed < 30


# ----------------------------------------------------------- criterion 2


def test_criterion_2_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    n_nets = 0
    for seed in range(30):  # fully connected stacks
        rng = np.random.default_rng(1000 + seed)
        spec = tr.ArchSpec((6,), [
            ("fc", {"out": 8, "k": int(rng.choice([2, 4])), "act": "relu"}),
            ("fc", {"out": 3, "k": 2, "act": "identity"})])
        net = tr.init_network(spec, seed=seed)
        rep = tr.grad_check(net, (rng.normal(size=6), seed % 3))
        worst = max(worst, rep.max_rel_error)
        n_nets += 1
    for seed in range(20):  # convolutional stacks, half with pooling
        rng = np.random.default_rng(2000 + seed)
        stages = [("conv", {"out": 2, "r": 3, "k": 2}), ("relu", {})]
        if seed % 2:
            stages += [("pool", {})]
            shape = (6, 6, 2)
        else:
            shape = (4, 4, 2)
        stages += [("flatten", {}), ("fc", {"out": 2, "k": 2, "act": "identity"})]
        net = tr.init_network(tr.ArchSpec(shape, stages), seed=seed)
        rep = tr.grad_check(net, (rng.normal(size=shape), seed % 2))
        worst = max(worst, rep.max_rel_error)
        n_nets += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 120
    _line(2, "PASS" if ok else "FAIL",
          f"{n_nets} seeded networks, max relative error {worst:.2e}, "
          f"{elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 120


# ----------------------------------------------------------- criterion 3


def _block_path_mults(k):
    Wb = bc.BlockCirculantMatrix(k, k, k,
                                 np.random.default_rng(k).normal(size=(1, 1, k)))
    Wb.cache_spectra()
    c = fc.OpCounter()
    bc.block_matvec(Wb, np.random.default_rng(1).normal(size=k), counter=c)
    return c.real_mults


def test_criterion_3_complexity_scaling():
    details = []
    ok = True
    for k in [16, 32, 64, 128, 256, 512]:
        got = _block_path_mults(2 * k) / _block_path_mults(k)
        want = 2 * math.log2(2 * k) / math.log2(k)
        off = abs(got - want) / want
        details.append(f"k={k}: {got:.3f} vs {want:.3f} ({off:.1%})")
        ok &= off <= 0.15
    dense_ratio = (512 * 512) / _block_path_mults(512)
    ok &= dense_ratio > 25
    _line(3, "PASS" if ok else "FAIL",
          f"flop growth within 15% of k log k at every size; "
          f"dense/circulant at k=512 = {dense_ratio:.1f}x")
    for k in [16, 32, 64, 128, 256, 512]:
        got = _block_path_mults(2 * k) / _block_path_mults(k)
        want = 2 * math.log2(2 * k) / math.log2(k)
        assert abs(got - want) / want <= 0.15, (k, got, want)
    assert dense_ratio > 25


# ----------------------------------------------------------- criterion 4


def test_criterion_4_compression_accounting():
    toy = tr.init_network(tr.ArchSpec(
        (3,), [("fc", {"out": 6, "k": 3, "act": "identity"})]), seed=0)
    r_toy = qz.compression_report(toy, 32, 32).model_ratio
    big = tr.init_network(tr.ArchSpec(
        (4096,), [("fc", {"out": 9216, "k": 512, "act": "identity"})]), seed=0)
    r_big = qz.compression_report(big, 32, 16).layers[0].ratio
    k1 = tr.init_network(tr.ArchSpec(
        (7,), [("fc", {"out": 5, "k": 1, "act": "identity"})]), seed=0)
    r_k1 = qz.compression_report(k1, 32, 32).model_ratio
    ok = (r_toy == Fraction(3) and r_big == Fraction(1024)
          and 400 <= r_big <= 4096 and r_k1 == Fraction(1))
    _line(4, "PASS" if ok else "FAIL",
          f"toy 6x3/k3 ratio {r_toy}, 9216x4096/k512 byte ratio {r_big} "
          f"(inside the 400x-4000+x band), k=1 ratio {r_k1} (all exact)")
    assert r_toy == Fraction(3)
    assert r_big == Fraction(1024)
    assert 400 <= r_big  # inside the reported range, whose top end is open
    assert r_k1 == Fraction(1)


# -------------------------------------------------------- criteria 5 and 6


MNIST_SKIP = ("MNIST IDX files not found; place train-images-idx3-ubyte, "
              "train-labels-idx1-ubyte, t10k-images-idx3-ubyte, "
              "t10k-labels-idx1-ubyte under ./data/mnist or set "
              "$BLOCKCIRC_MNIST_DIR. Criterion asserts >= 95% test accuracy "
              "for the k=16 hidden-256 model in 5 epochs under 15 min.")


@pytest.fixture(scope="module")
def mnist_model():
    d = mnist_dir()
    if d is None:
        pytest.skip(MNIST_SKIP)
    train_data = load_mnist(os.path.join(d, "train-images-idx3-ubyte"),
                            os.path.join(d, "train-labels-idx1-ubyte"))
    test_data = load_mnist(os.path.join(d, "t10k-images-idx3-ubyte"),
                           os.path.join(d, "t10k-labels-idx1-ubyte"))
    spec = tr.ArchSpec((784,), [("fc", {"out": 256, "k": 16, "act": "relu"}),
                                ("fc", {"out": 10, "k": 16, "act": "identity"})])
    net = tr.init_network(spec, seed=0)
    cfg = tr.TrainConfig(learning_rate=0.1, epochs=5, batch_size=64, seed=0)
    report = tr.train(net, train_data, cfg, eval_data=test_data)
    return net, test_data, report


def test_criterion_5_mnist_accuracy(mnist_model):
    net, test_data, report = mnist_model
    ok = report.accuracy >= 0.95 and report.wall_time_s <= 900
    _line(5, "PASS" if ok else "FAIL",
          f"k=16 hidden-256 model: test accuracy {report.accuracy:.4f} "
          f"in {report.wall_time_s:.0f}s (5 epochs)")
    assert report.accuracy >= 0.95
    assert report.wall_time_s <= 900


def test_criterion_6_mnist_quantization_robustness(mnist_model):
    net, test_data, _ = mnist_model
    base = tr.evaluate(net, test_data)
    qnet = qz.apply_quantization(net, qz.quantize_network(net))
    quant = tr.evaluate(qnet, test_data)
    drop = base - quant
    ok = abs(drop) <= 0.005
    _line(6, "PASS" if ok else "FAIL",
          f"16-bit fixed point moves test accuracy {base:.4f} -> {quant:.4f} "
          f"({drop * 100:+.2f} points)")
    assert abs(drop) <= 0.005


def test_end_to_end_stand_in_bundled_digits():
    """Always-on reduced-scale stand-in for the learning pipeline (the real
    criterion is the MNIST test above): same layer family on the bundled
    8x8 digits, shuffled split, plus the quantization robustness check."""
    sklearn = pytest.importorskip("sklearn.datasets")
    d = sklearn.load_digits()
    X = d.images.astype(np.float64).reshape(-1, 64) / 16.0
    y = d.target.astype(np.int64)
    perm = np.random.default_rng(42).permutation(len(X))
    X, y = X[perm], y[perm]
    split = 1437
    spec = tr.ArchSpec((64,), [("fc", {"out": 256, "k": 16, "act": "relu"}),
                               ("fc", {"out": 10, "k": 2, "act": "identity"})])
    net = tr.init_network(spec, seed=0)
    cfg = tr.TrainConfig(learning_rate=0.2, epochs=30, batch_size=32, seed=0)
    rep = tr.train(net, (X[:split], y[:split]), cfg,
                   eval_data=(X[split:], y[split:]))
    qnet = qz.apply_quantization(net, qz.quantize_network(net))
    qacc = tr.evaluate(qnet, (X[split:], y[split:]))
    drop = rep.accuracy - qacc
    print(f"\n[stand-in] digits: accuracy {rep.accuracy:.4f}, "
          f"quantized {qacc:.4f} ({drop * 100:+.2f} points), "
          f"{rep.wall_time_s:.1f}s")
    assert rep.accuracy >= 0.95
    assert abs(drop) <= 0.005


# ----------------------------------------------------------- criterion 7


def test_criterion_7_optimizer_matches_grid():
    wl = hw.workload_of(tr.init_network(tr.ArchSpec(
        (1024,), [("fc", {"out": 1024, "k": 128, "act": "identity"})]), seed=0))
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    matched = 0
    fallbacks = 0
    trials = 0
    while trials < 20:
        params = hw.CostParams(
            static_power_w=float(rng.uniform(0.05, 1.0)),
            energy_per_butterfly_j=float(rng.uniform(1e-12, 1e-10)),
            mem_access_energy_j=float(rng.uniform(0.0, 1e-11)),
            mem_bandwidth_limit=float(rng.uniform(8, 512)),
            resource_limit=int(rng.integers(8, 512)),
        )
        mode = hw.MetricSpec(kind=str(rng.choice(["efficiency", "weighted"])),
                             alpha=1.0, beta=float(rng.uniform(0.0, 2.0)))
        trials += 1
        cfg, rep = hw.optimize_design(params, wl, (1, 64), (1, 3), mode)
        best = max(((p, d) for p in range(1, 65) for d in range(1, 4)),
                   key=lambda pd: hw._score(hw.HwConfig(*pd), params, wl, mode))
        if (cfg.p_par, cfg.d) == best:
            matched += 1
        fallbacks += rep.fallback_used
    elapsed = time.perf_counter() - t0
    ok = matched == 20 and elapsed < 10
    _line(7, "PASS" if ok else "FAIL",
          f"{matched}/20 randomized cost sets match the exhaustive argmax "
          f"({fallbacks} used the fallback), {elapsed:.1f}s")
    assert matched == 20
    assert elapsed < 10


# ----------------------------------------------------------- criterion 8


def test_criterion_8_calibration_bands():
    params, clock = hw.load_cost_params()
    wl = hw.workload_of(tr.init_network(tr.ArchSpec(
        (1024,), [("fc", {"out": 1024, "k": 128, "act": "identity"})]), seed=0))
    r16 = hw.estimate_perf(hw.HwConfig(16, 1, clock_hz=clock), params, wl)
    r32 = hw.estimate_perf(hw.HwConfig(32, 1, clock_hz=clock), params, wl)
    r32d2 = hw.estimate_perf(hw.HwConfig(32, 2, clock_hz=clock), params, wl)
    dp_power = r32.power_w / r16.power_w - 1
    dp_perf = r32.throughput_gops / r16.throughput_gops - 1
    dd_power = r32d2.power_w / r32.power_w - 1
    ok = dp_power < 0.10 and 0.40 <= dp_perf <= 0.60 and dd_power < 0.10
    _line(8, "PASS" if ok else "FAIL",
          f"p 16->32: power {dp_power:+.1%}, throughput {dp_perf:+.1%}; "
          f"d 1->2 at p=32: power {dd_power:+.1%}")
    assert dp_power < 0.10
    assert 0.40 <= dp_perf <= 0.60
    assert dd_power < 0.10


# ----------------------------------------------------------- criterion 9


def test_criterion_9_real_input_saving():
    worst_ratio = 0.0
    worst_rt = 0.0
    rng = np.random.default_rng(9)
    for e in range(3, 11):  # k = 8 .. 1024
        k = 1 << e
        p = fc.get_plan(k)
        x = rng.normal(size=k)
        full = fc.OpCounter()
        fc.fft(p, x.astype(np.complex128), counter=full)
        half = fc.OpCounter()
        spec = fc.rfft(p, x, counter=half)
        worst_ratio = max(worst_ratio, half.real_mults / full.real_mults)
        worst_rt = max(worst_rt, float(np.abs(fc.irfft(spec) - x).max()))
    ok = worst_ratio <= 0.6 and worst_rt < 1e-10
    _line(9, "PASS" if ok else "FAIL",
          f"rfft/fft multiply ratio <= {worst_ratio:.3f} for k in 8..1024; "
          f"round-trip error {worst_rt:.2e}")
    assert worst_ratio <= 0.6
    assert worst_rt < 1e-10
