"""16-bit fixed-point quantization and exact compression accounting.

Weights are quantized at rest with one binary point per tensor; the
inference datapath stays floating point, so quantization only changes what
is stored and how large the model file is. All compression ratios are exact
rationals: parameter counting is integer arithmetic, never floats.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import layers as ly
from .errors import InvalidValue
from .training import Network, forward

INT16_MAX = 32767
INT16_MIN = -32768


@dataclass
class FixedPointTensor:
    """value = raw * 2**(-frac_bits), raw int16, one binary point per tensor."""

    shape: tuple
    raw: np.ndarray
    frac_bits: int


def quantize(t) -> FixedPointTensor:
    """Round-to-nearest-even 16-bit quantization.

    The binary point is placed from the tensor's max magnitude: 15 minus the
    integer bits needed for it, nudged down if rounding would still
    overflow. Values then fit without saturation whenever max|t| < 2**15,
    which bounds every element's error by half an lsb.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.size and not np.all(np.isfinite(t)):
        raise InvalidValue("cannot quantize non-finite values")
    m = max(float(np.max(np.abs(t))) if t.size else 0.0, 2.0**-15)
    ibits = math.frexp(m)[1]  # floor(log2 m) + 1
    frac = min(max(15 - ibits, 0), 15)
    while frac > 0 and round(m * 2.0**frac) > INT16_MAX:
        frac -= 1
    raw = np.clip(np.rint(t * 2.0**frac), INT16_MIN, INT16_MAX).astype(np.int16)
    return FixedPointTensor(shape=t.shape, raw=raw, frac_bits=frac)


def dequantize(q: FixedPointTensor) -> np.ndarray:
    """Exact scaling back to float64; quantize(dequantize(q)) == q bitwise."""
    return q.raw.astype(np.float64).reshape(q.shape) * 2.0 ** (-q.frac_bits)


# --------------------------------------------------------------- accounting


@dataclass
class LayerCompression:
    name: str
    dense_params: int
    circ_params: int
    dense_bytes: Fraction
    comp_bytes: Fraction
    ratio: Fraction


@dataclass
class CompressionReport:
    layers: list
    model_ratio: Fraction
    baseline_bits: int
    compressed_bits: int

    CSV_COLUMNS = ("layer", "dense_params", "circ_params",
                   "dense_bytes", "comp_bytes", "ratio")

    def rows(self):
        out = [(l.name, l.dense_params, l.circ_params,
                float(l.dense_bytes), float(l.comp_bytes), float(l.ratio))
               for l in self.layers]
        dense = sum(l.dense_bytes for l in self.layers)
        comp = sum(l.comp_bytes for l in self.layers)
        out.append(("model", sum(l.dense_params for l in self.layers),
                    sum(l.circ_params for l in self.layers),
                    float(dense), float(comp), float(self.model_ratio)))
        return out

    def to_csv(self, fileobj=None) -> str:
        buf = fileobj or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue() if fileobj is None else ""


def compression_report(net: Network, baseline_bits: int = 32,
                       compressed_bits: int = 16) -> CompressionReport:
    """Per-layer and whole-model storage ratios, exact.

    Dense baseline: m*n (FC) or r*r*C*P (CONV) weights at baseline_bits.
    Compressed: p*q*k defining values per block grid at compressed_bits.
    Byte ratio factorizes exactly as parameter ratio times bit-width ratio.
    """
    rows = []
    idx = 0
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            idx += 1
            dense = s.W.rows * s.W.cols
            circ = s.W.p * s.W.q * s.W.k
            name = f"fc{idx}"
        elif isinstance(s, ly.ConvLayer):
            idx += 1
            dense = s.r * s.r * s.in_channels * s.out_channels
            blk = s.F_blocks[0][0]
            circ = s.r * s.r * blk.p * blk.q * blk.k
            name = f"conv{idx}"
        else:
            continue
        dense_bytes = Fraction(dense * baseline_bits, 8)
        comp_bytes = Fraction(circ * compressed_bits, 8)
        rows.append(LayerCompression(name, dense, circ, dense_bytes, comp_bytes,
                                     dense_bytes / comp_bytes))
    total_dense = sum(r.dense_bytes for r in rows)
    total_comp = sum(r.comp_bytes for r in rows)
    return CompressionReport(layers=rows, model_ratio=total_dense / total_comp,
                             baseline_bits=baseline_bits,
                             compressed_bits=compressed_bits)


# ------------------------------------------------------- quantized networks


def quantize_network(net: Network) -> list:
    """One FixedPointTensor pair (weights, bias) per parameterized layer."""
    out = []
    for s in net.param_layers():
        if isinstance(s, ly.FcLayer):
            w = s.W.weights
        else:
            w = s.weight_arrays()
        out.append({"weights": quantize(w), "bias": quantize(s.bias)})
    return out


def apply_quantization(net: Network, qlayers: list) -> Network:
    """A copy of the network with parameters replaced by their dequantized
    fixed-point values; spectra are rebuilt from the rounded weights."""
    qnet = copy.deepcopy(net)
    params = qnet.param_layers()
    if len(params) != len(qlayers):
        raise InvalidValue(
            f"{len(qlayers)} quantized layers for {len(params)} parameterized stages")
    for s, q in zip(params, qlayers):
        w = dequantize(q["weights"])
        if isinstance(s, ly.FcLayer):
            s.W.weights[:] = w
        else:
            for i in range(s.r):
                for j in range(s.r):
                    s.F_blocks[i][j].weights[:] = w[i, j]
        s.bias[:] = dequantize(q["bias"])
    qnet.cache_spectra()
    return qnet


def quantized_inference(net: Network, qlayers: list, x) -> np.ndarray:
    """Logits of the quantized model on x (standard float forward path)."""
    return forward(apply_quantization(net, qlayers), x)


def quantization_deviation(net: Network, qlayers: list, x) -> float:
    """Max absolute logit change caused by quantizing the weights."""
    a = forward(net, x)
    b = quantized_inference(net, qlayers, x)
    return float(np.max(np.abs(a - b)))
