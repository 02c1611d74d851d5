"""Deterministic SGD training over stacks of block-circulant layers.

The optimizer is plain minibatch SGD with batch-averaged gradients: the
fewest moving parts that make runs bit-reproducible from a seed. Circulant
structure is preserved by construction; only the defining vectors and
biases ever change, so parameter counts are invariant across training.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import layers as ly
from .circulant import BlockCirculantMatrix, _is_pow2
from .errors import DivergedError, InvalidSpec, InvalidValue
from .fftcore import OpCounter

PRECISIONS = ("float64", "float32")


@dataclass
class ArchSpec:
    """Declarative network description: input shape plus stage records.

    Stage records are ("fc", {"out", "k", "act"}), ("conv", {"out", "r", "k"}),
    ("pool", {}), ("relu", {}) or ("flatten", {}).
    """

    input_shape: tuple
    stages: list


@dataclass
class Network:
    input_shape: tuple
    stages: list

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        shape = _walk_shapes(self.input_shape, self.stages)
        if len(shape) != 1 or shape[0] < 2:
            raise InvalidSpec(f"network must end in >= 2 logits, got shape {shape}")
        self.n_classes = shape[0]

    def param_layers(self):
        return [s for s in self.stages if isinstance(s, (ly.FcLayer, ly.ConvLayer))]

    def cache_spectra(self):
        for s in self.param_layers():
            for Wb in _layer_matrices(s):
                if _is_pow2(Wb.k):
                    Wb.cache_spectra()


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise InvalidValue("learning rate, epochs and batch size must be positive")
        if self.precision not in PRECISIONS:
            raise InvalidValue(f"precision must be one of {PRECISIONS}")


@dataclass
class TrainReport:
    epoch_losses: list
    accuracy: float
    wall_time_s: float
    circ_mults_per_inference: int
    dense_mults_per_inference: int
    epochs: int = 0
    seed: int = 0


def _layer_matrices(stage):
    if isinstance(stage, ly.FcLayer):
        return [stage.W]
    return [b for row in stage.F_blocks for b in row]


def _walk_shapes(input_shape, stages):
    shape = tuple(input_shape)
    for s in stages:
        if isinstance(s, ly.FcLayer):
            if shape != (s.in_features,):
                raise InvalidSpec(
                    f"fc layer expects ({s.in_features},), previous stage gives {shape}")
            shape = (s.out_features,)
        elif isinstance(s, ly.ConvLayer):
            if len(shape) != 3 or shape[2] != s.in_channels:
                raise InvalidSpec(
                    f"conv layer expects (W, H, {s.in_channels}), got {shape}")
            if shape[0] < s.r or shape[1] < s.r:
                raise InvalidSpec(f"kernel {s.r} larger than input {shape[:2]}")
            shape = (shape[0] - s.r + 1, shape[1] - s.r + 1, s.out_channels)
        elif isinstance(s, ly.MaxPool):
            if len(shape) != 3 or shape[0] % 2 or shape[1] % 2:
                raise InvalidSpec(f"2x2 pool needs even spatial dims, got {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(s, ly.Relu):
            pass
        elif isinstance(s, ly.Flatten):
            shape = (int(np.prod(shape)),)
        else:
            raise InvalidSpec(f"unknown stage {type(s).__name__}")
    return shape


# -------------------------------------------------------------------- init


def init_network(spec: ArchSpec, seed: int) -> Network:
    """Build and initialize a network from its declarative description.

    Defining vectors draw from uniform(-hw, hw) with hw = sqrt(6/(fan_in +
    fan_out)) / sqrt(k): each stored parameter appears in k dense rows, so
    the extra 1/sqrt(k) keeps pre-activation variance at the dense level.
    k = 1 therefore reproduces plain dense initialization. Biases start at
    zero. Fully determined by the seed.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in spec.input_shape)
    stages = []
    for kind, args in spec.stages:
        if kind == "fc":
            if len(shape) != 1:
                raise InvalidSpec(f"fc stage needs a flat input, got {shape}")
            n, m = shape[0], int(args["out"])
            k = int(args.get("k", 1))
            act = args.get("act", "relu")
            hw = math.sqrt(6.0 / (m + n)) / math.sqrt(k)
            p, q = -(-m // k), -(-n // k)
            W = BlockCirculantMatrix(m, n, k, rng.uniform(-hw, hw, size=(p, q, k)))
            stages.append(ly.FcLayer(W=W, bias=np.zeros(m), activation=act))
            shape = (m,)
        elif kind == "conv":
            if len(shape) != 3:
                raise InvalidSpec(f"conv stage needs a W x H x C input, got {shape}")
            C, P = shape[2], int(args["out"])
            r = int(args.get("r", 3))
            k = int(args.get("k", 1))
            if C % k or P % k:
                raise InvalidSpec(f"block size {k} must divide C={C} and P={P}")
            hw = math.sqrt(6.0 / (r * r * C + P)) / math.sqrt(k)
            draw = rng.uniform(-hw, hw, size=(r, r, C // k, P // k, k))
            grid = [[BlockCirculantMatrix(C, P, k, draw[i, j]) for j in range(r)]
                    for i in range(r)]
            stages.append(ly.ConvLayer(r=r, in_channels=C, out_channels=P, k=k,
                                       F_blocks=grid, bias=np.zeros(P)))
            shape = (shape[0] - r + 1, shape[1] - r + 1, P)
        elif kind == "pool":
            stages.append(ly.MaxPool())
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif kind == "relu":
            stages.append(ly.Relu())
        elif kind == "flatten":
            stages.append(ly.Flatten())
            shape = (int(np.prod(shape)),)
        else:
            raise InvalidSpec(f"unknown stage kind {kind!r}")
    net = Network(input_shape=spec.input_shape, stages=stages)
    net.cache_spectra()
    return net


# ----------------------------------------------------------------- forward


def _prepare_batch(net: Network, X) -> np.ndarray:
    """Coerce a sample or batch to (B,) + input_shape, flattening if needed."""
    X = np.asarray(X, dtype=np.float64)
    ish = net.input_shape
    want = int(np.prod(ish))
    if X.shape == ish:
        return X[None]
    if X.shape[1:] == ish:
        return X
    if X.ndim >= 2 and int(np.prod(X.shape[1:])) == want:
        return X.reshape((X.shape[0],) + ish)
    if int(np.prod(X.shape)) == want:
        return X.reshape((1,) + ish)
    raise InvalidSpec(
        f"data of shape {X.shape} cannot feed network input {ish}")


def forward(net: Network, X, counter: OpCounter | None = None, keep: bool = False):
    """Run a batch through all stages, returning (B, classes) logits; with
    keep=True also return the per-stage values the backward pass needs."""
    acts = _prepare_batch(net, X)
    cache = []
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            a_pre, out = ly.fc_forward(s, acts, counter=counter)
            cache.append((acts, a_pre))
            acts = out
        elif isinstance(s, ly.ConvLayer):
            out = ly.conv_forward(s, acts, counter=counter)
            cache.append(acts)
            acts = out
        elif isinstance(s, ly.Relu):
            cache.append(acts)
            acts = np.maximum(acts, 0.0)
        elif isinstance(s, ly.MaxPool):
            acts, pc = ly.maxpool_forward(acts)
            cache.append(pc)
        elif isinstance(s, ly.Flatten):
            cache.append(acts.shape)
            acts = acts.reshape(acts.shape[0], -1)
    return (acts, cache) if keep else acts


def backward(net: Network, cache, d_logits):
    """Gradients for every parameterized stage, summed over the batch.

    Returns (grads, d_input) where grads[i] is None for stages without
    parameters and a LayerGradients otherwise.
    """
    grads = [None] * len(net.stages)
    d = d_logits
    for i in range(len(net.stages) - 1, -1, -1):
        s = net.stages[i]
        c = cache[i]
        if isinstance(s, ly.FcLayer):
            x_in, a_pre = c
            g = ly.fc_backward(s, x_in, a_pre, d)
            grads[i] = g
            d = g.d_input
        elif isinstance(s, ly.ConvLayer):
            g = ly.conv_backward(s, c, d)
            grads[i] = g
            d = g.d_input
        elif isinstance(s, ly.Relu):
            d = d * (c > 0)
        elif isinstance(s, ly.MaxPool):
            d = ly.maxpool_backward(c, d)
        elif isinstance(s, ly.Flatten):
            d = d.reshape(c)
    return grads, d


def _apply_grads(net: Network, grads, scale: float):
    for s, g in zip(net.stages, grads):
        if g is None:
            continue
        if isinstance(s, ly.FcLayer):
            s.W.weights -= scale * g.d_weights
            s.bias -= scale * g.d_bias
            if _is_pow2(s.W.k):
                s.W.cache_spectra()
            else:
                s.W.invalidate_spectra()
        else:
            for i in range(s.r):
                for j in range(s.r):
                    blk = s.F_blocks[i][j]
                    blk.weights -= scale * g.d_weights[i, j]
                    if _is_pow2(blk.k):
                        blk.cache_spectra()
                    else:
                        blk.invalidate_spectra()
            s.bias -= scale * g.d_bias


def _cast_network(net: Network, dtype):
    for s in net.param_layers():
        for Wb in _layer_matrices(s):
            Wb.weights = Wb.weights.astype(dtype)
            Wb.invalidate_spectra()
        s.bias = s.bias.astype(dtype)
    net.cache_spectra()


# ------------------------------------------------------------------- train


def _dataset_arrays(data):
    if hasattr(data, "images"):
        return np.asarray(data.images), np.asarray(data.labels)
    X, y = data
    return np.asarray(X), np.asarray(y)


def dense_equivalent_mults(net: Network) -> int:
    """Multiplies one inference would take with unstructured dense weights."""
    shape = tuple(net.input_shape)
    total = 0
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            total += s.out_features * s.in_features
            shape = (s.out_features,)
        elif isinstance(s, ly.ConvLayer):
            wo, ho = shape[0] - s.r + 1, shape[1] - s.r + 1
            total += wo * ho * s.r * s.r * s.in_channels * s.out_channels
            shape = (wo, ho, s.out_channels)
        elif isinstance(s, ly.MaxPool):
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(s, ly.Flatten):
            shape = (int(np.prod(shape)),)
    return total


def measured_forward_mults(net: Network) -> int:
    c = OpCounter()
    forward(net, np.zeros((1,) + net.input_shape), counter=c)
    return c.real_mults


def train(net: Network, data, cfg: TrainConfig, eval_data=None) -> TrainReport:
    """Minibatch SGD: w <- w - lr * mean-over-batch gradient.

    Batches are drawn from a seeded shuffle each epoch; everything is
    deterministic given the config. Raises DivergedError (with the epoch
    index) as soon as the running loss stops being finite.
    """
    X, y = _dataset_arrays(data)
    if len(X) == 0:
        raise InvalidValue("empty dataset")
    if cfg.precision == "float32":
        _cast_network(net, np.float32)
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for lo in range(0, len(X), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            logits, cache = forward(net, xb, keep=True)
            batch_losses, dlogits = ly.softmax_xent(logits, yb)
            total += float(np.sum(batch_losses))
            grads, _ = backward(net, cache, dlogits)
            _apply_grads(net, grads, cfg.learning_rate / len(idx))
        mean_loss = total / len(X)
        if not math.isfinite(mean_loss):
            raise DivergedError(epoch)
        losses.append(mean_loss)
    if cfg.precision == "float32":
        _cast_network(net, np.float64)
    acc = evaluate(net, eval_data if eval_data is not None else data)
    return TrainReport(
        epoch_losses=losses,
        accuracy=acc,
        wall_time_s=time.perf_counter() - start,
        circ_mults_per_inference=measured_forward_mults(net),
        dense_mults_per_inference=dense_equivalent_mults(net),
        epochs=cfg.epochs,
        seed=cfg.seed,
    )


def evaluate(net: Network, data) -> float:
    """Classification accuracy; argmax ties resolve to the lowest class."""
    X, y = _dataset_arrays(data)
    if len(X) == 0:
        raise InvalidValue("empty dataset")
    hits = 0
    for lo in range(0, len(X), 512):
        logits = forward(net, X[lo : lo + 512])
        hits += int(np.sum(np.argmax(logits, axis=-1) == y[lo : lo + 512]))
    return hits / len(X)


# -------------------------------------------------------------- grad check


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_params: int
    per_stage: list = field(default_factory=list)

    def passed(self, tolerance: float = 1e-5) -> bool:
        return self.max_rel_error < tolerance


def _sample_loss(net: Network, x, label) -> float:
    logits = forward(net, x[None])
    loss, _ = ly.softmax_xent(logits[0], label)
    return loss


GRAD_FLOOR = 1e-4


def grad_check(net: Network, sample, h: float = 1e-6, tolerance: float = 1e-5) -> GradCheckReport:
    """Central differences against the analytic gradient, per parameter.

    Relative error uses a magnitude floor of 1e-4: parameters whose
    gradients sit below it (dead units, true zeros) are effectively held to
    an absolute bound of floor * tolerance, i.e. 1e-9 at the default
    tolerance, which is where central-difference cancellation noise lives.
    Needs 64-bit weights; the (L(w+h) - L(w-h)) / 2h cancellation leaves
    no headroom at 32-bit.
    """
    x, label = sample
    x = np.asarray(x, dtype=np.float64)
    for s in net.param_layers():
        for Wb in _layer_matrices(s):
            if Wb.weights.dtype != np.float64:
                raise InvalidValue("grad_check requires float64 parameters")
    logits, cache = forward(net, x[None], keep=True)
    _, dlogits = ly.softmax_xent(logits, np.array([label]))
    grads, _ = backward(net, cache, dlogits)

    worst_rel = 0.0
    worst_abs = 0.0
    n_params = 0
    per_stage = []
    for si, (s, g) in enumerate(zip(net.stages, grads)):
        if g is None:
            continue
        mats = _layer_matrices(s)
        if isinstance(s, ly.FcLayer):
            packs = [(mats[0].weights, np.asarray(g.d_weights))]
        else:
            w_all = g.d_weights  # (r, r, pb, qb, k)
            packs = [(s.F_blocks[i][j].weights, w_all[i, j])
                     for i in range(s.r) for j in range(s.r)]
        packs.append((s.bias, np.asarray(g.d_bias)))
        stage_rel = 0.0
        for arr, analytic in packs:
            flat = arr.reshape(-1)
            ga = analytic.reshape(-1)
            for t in range(flat.size):
                keep = flat[t]
                flat[t] = keep + h
                _refresh(s)
                lp = _sample_loss(net, x, label)
                flat[t] = keep - h
                _refresh(s)
                lm = _sample_loss(net, x, label)
                flat[t] = keep
                _refresh(s)
                num = (lp - lm) / (2 * h)
                abs_err = abs(num - ga[t])
                rel = abs_err / max(abs(num), abs(ga[t]), GRAD_FLOOR)
                stage_rel = max(stage_rel, rel)
                worst_abs = max(worst_abs, abs_err)
                n_params += 1
        worst_rel = max(worst_rel, stage_rel)
        per_stage.append((si, type(s).__name__, stage_rel))
    return GradCheckReport(max_rel_error=worst_rel, max_abs_error=worst_abs,
                           n_params=n_params, per_stage=per_stage)


def _refresh(stage):
    for Wb in _layer_matrices(stage):
        if _is_pow2(Wb.k):
            Wb.cache_spectra()
        else:
            Wb.invalidate_spectra()
