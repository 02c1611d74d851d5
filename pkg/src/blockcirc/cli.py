"""Command-line surface: train, eval, compress-report, grad-check, explore, bench.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 failed check.
Commands are deterministic given their flags; report files written with
--out get a companion .png figure rendered next to the delimited output.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import os
import sys

import numpy as np

from . import hwmodel, plots
from .datasets import load_mnist, synth_dataset
from .errors import BlockcircError
from .modelfile import load_arch, load_model, parse_arch, save_model
from .quantization import compression_report
from .training import TrainConfig, evaluate, grad_check, init_network, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the interface contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_data_options(sp):
    sp.add_argument("--data", choices=("mnist", "synth"), default="synth")
    sp.add_argument("--data-dir", default="data/mnist",
                    help="directory holding the four standard IDX files")
    sp.add_argument("--synth-classes", type=int, default=3)
    sp.add_argument("--synth-dim", type=int, default=16)
    sp.add_argument("--synth-n", type=int, default=200,
                    help="samples per class")
    sp.add_argument("--synth-separation", type=float, default=10.0)
    sp.add_argument("--synth-seed", type=int, default=123)


def _load_split(args, split: str):
    if args.data == "mnist":
        images, labels = (os.path.join(args.data_dir, f) for f in MNIST_FILES[split])
        return load_mnist(images, labels)
    # one doubled draw, stride-split, so both splits share the class layout
    full = synth_dataset(seed=args.synth_seed, n_per_class=2 * args.synth_n,
                         classes=args.synth_classes, dim=args.synth_dim,
                         separation=args.synth_separation)
    off = 0 if split == "train" else 1
    from .datasets import DatasetHandle

    return DatasetHandle(images=full.images[off::2], labels=full.labels[off::2],
                         n_classes=full.n_classes)


def _write_csv(path_or_stdout, columns, rows):
    def fmt(v):
        return repr(v) if isinstance(v, float) else v

    if path_or_stdout is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    else:
        with open(path_or_stdout, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(v) for v in r])


def _packaged(name: str) -> str:
    return importlib.resources.files("blockcirc").joinpath(f"data/{name}").read_text()


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    spec = load_arch(args.arch, default_k=args.block_size)
    net = init_network(spec, args.seed)
    train_data = _load_split(args, "train")
    report = None
    if args.epochs > 0:
        try:
            eval_data = _load_split(args, "test")
        except FileNotFoundError:
            eval_data = train_data
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                          batch_size=args.batch_size, seed=args.seed,
                          precision=args.precision)
        report = train(net, train_data, cfg, eval_data=eval_data)
    save_model(net, args.out)
    csv_path = args.out + ".train.csv"
    if report is not None:
        rows = [(e + 1, loss, report.accuracy, report.circ_mults_per_inference,
                 report.dense_mults_per_inference)
                for e, loss in enumerate(report.epoch_losses)]
        _write_csv(csv_path, ("epoch", "mean_loss", "final_accuracy",
                              "circ_mults_per_inference",
                              "dense_mults_per_inference"), rows)
        plots.save_loss_curve(report.epoch_losses, args.out + ".train.png",
                              accuracy=report.accuracy)
        print(f"model written to {args.out}; accuracy {report.accuracy:.4f}; "
              f"wall {report.wall_time_s:.1f}s; "
              f"mults/inference {report.circ_mults_per_inference} circulant vs "
              f"{report.dense_mults_per_inference} dense")
    else:
        _write_csv(csv_path, ("epoch", "mean_loss", "final_accuracy",
                              "circ_mults_per_inference",
                              "dense_mults_per_inference"), [])
        print(f"model written to {args.out} (initialized, no training epochs)")
    return EXIT_OK


def cmd_eval(args) -> int:
    net, _ = load_model(args.model)
    acc = evaluate(net, _load_split(args, args.split))
    print(f"accuracy {acc:.4f}")
    return EXIT_OK


def cmd_compress_report(args) -> int:
    net, _ = load_model(args.model)
    rep = compression_report(net, baseline_bits=args.baseline_bits,
                             compressed_bits=args.bits)
    rows = rep.rows()
    if args.out:
        _write_csv(args.out, rep.CSV_COLUMNS, rows)
        plots.save_compression_chart(rep, args.out + ".png")
        print(f"model byte ratio {float(rep.model_ratio):g} "
              f"({args.baseline_bits}-bit dense over {args.bits}-bit circulant); "
              f"report in {args.out}")
    else:
        _write_csv(None, rep.CSV_COLUMNS, rows)
    return EXIT_OK


def cmd_grad_check(args) -> int:
    if args.arch:
        spec = load_arch(args.arch, default_k=args.block_size)
    else:
        spec = parse_arch(_packaged("gradcheck_default.arch"))
    net = init_network(spec, args.seed)
    rng = np.random.default_rng(args.seed)
    x = rng.normal(size=net.input_shape)
    rep = grad_check(net, (x, args.seed % net.n_classes), h=args.h,
                     tolerance=args.tolerance)
    status = "ok" if rep.passed(args.tolerance) else "FAIL"
    print(f"grad-check {status}: max relative error {rep.max_rel_error:.3e} "
          f"over {rep.n_params} parameters (tolerance {args.tolerance:g})")
    return EXIT_OK if rep.passed(args.tolerance) else EXIT_CHECK


def cmd_explore(args) -> int:
    net, _ = load_model(args.model)
    wl = hwmodel.workload_of(net)
    if not wl.ffts:
        print("error: model has no power-of-two block layers to schedule",
              file=sys.stderr)
        return EXIT_DATA
    params, clock = hwmodel.load_cost_params(args.costs)
    mode = hwmodel.MetricSpec(kind=args.metric, power_budget_w=args.power_budget,
                              alpha=args.alpha, beta=args.beta)
    rows, cfg, rep = hwmodel.design_sweep(params, wl, (args.p_min, args.p_max),
                                          (1, args.d_max), mode, clock_hz=clock)
    columns = ("p", "d", "cycles", "gops", "power_w", "gops_per_w",
               "feasible", "fallback_used")
    flat = [tuple(r[c] for c in columns) for r in rows]
    if args.out:
        _write_csv(args.out, columns, flat)
        plots.save_exploration_chart(rows, args.out + ".png", chosen=cfg)
    else:
        _write_csv(None, columns, flat)
    print(f"best p={cfg.p_par} d={cfg.d}: {rep.throughput_gops:.1f} GOPS, "
          f"{rep.power_w:.3f} W, {rep.efficiency_gops_per_w:.1f} GOPS/W"
          + (" (ternary fallback to exhaustive scan)" if rep.fallback_used else ""),
          file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import layers as ly
    from .fftcore import OpCounter

    net, _ = load_model(args.model)
    shape = tuple(net.input_shape)
    rows = []
    idx = 0
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            idx += 1
            c = OpCounter()
            ly.fc_forward(s, np.zeros(shape), counter=c)
            rows.append({"layer": f"fc{idx}", "circ_mults": c.real_mults,
                         "dense_mults": s.W.rows * s.W.cols})
            shape = (s.out_features,)
        elif isinstance(s, ly.ConvLayer):
            idx += 1
            c = OpCounter()
            ly.conv_forward(s, np.zeros(shape), counter=c)
            wo, ho = shape[0] - s.r + 1, shape[1] - s.r + 1
            rows.append({"layer": f"conv{idx}", "circ_mults": c.real_mults,
                         "dense_mults": wo * ho * s.r * s.r
                         * s.in_channels * s.out_channels})
            shape = (wo, ho, s.out_channels)
        elif isinstance(s, ly.MaxPool):
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(s, ly.Flatten):
            shape = (int(np.prod(shape)),)
    for r in rows:
        r["ratio"] = r["dense_mults"] / r["circ_mults"] if r["circ_mults"] else 1.0
    columns = ("layer", "dense_mults", "circ_mults", "ratio")
    flat = [(r["layer"], r["dense_mults"], r["circ_mults"], r["ratio"]) for r in rows]
    if args.out:
        _write_csv(args.out, columns, flat)
        plots.save_bench_chart(rows, args.out + ".png")
        print(f"flop report in {args.out}")
    else:
        _write_csv(None, columns, flat)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blockcirc",
                description="Block-circulant network training, compression "
                            "reports and FFT-engine design exploration.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[], help="train a model from an arch file")
    t.add_argument("--arch", required=True)
    t.add_argument("--block-size", type=int, default=None,
                   help="default k for arch lines without an explicit one")
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--precision", choices=("float64", "float32"), default="float64")
    t.add_argument("--out", required=True, help="model file to write")
    _add_data_options(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy of a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--split", choices=("train", "test"), default="test")
    _add_data_options(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compress-report", help="storage accounting CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--bits", type=int, default=16, help="compressed weight bits")
    c.add_argument("--baseline-bits", type=int, default=32)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_compress_report)

    g = sub.add_parser("grad-check", help="finite-difference gradient audit")
    g.add_argument("--arch", default=None, help="defaults to the packaged arch")
    g.add_argument("--block-size", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=float, default=1e-6)
    g.add_argument("--tolerance", type=float, default=1e-5)
    g.set_defaults(func=cmd_grad_check)

    x = sub.add_parser("explore", help="design-space sweep of the FFT engine")
    x.add_argument("--model", required=True)
    x.add_argument("--costs", default=None, help="cost-parameter json")
    x.add_argument("--p-min", type=int, default=1)
    x.add_argument("--p-max", type=int, default=64)
    x.add_argument("--d-max", type=int, default=3)
    x.add_argument("--metric", choices=("efficiency", "perf-capped", "weighted"),
                   default="efficiency")
    x.add_argument("--power-budget", type=float, default=None)
    x.add_argument("--alpha", type=float, default=1.0)
    x.add_argument("--beta", type=float, default=1.0)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_explore)

    b = sub.add_parser("bench", help="dense vs circulant multiply counts")
    b.add_argument("--model", required=True)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (BlockcircError, FileNotFoundError, IsADirectoryError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
