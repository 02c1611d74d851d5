"""Model serialization and the plain-text architecture format.

Model files are a 4-byte magic, a little-endian uint32 header length, a
JSON header, then the little-endian payload: each parameterized stage's
defining vectors followed by its bias, in stage order. The header records
format version 1 and a CRC-32 of the payload, so truncation, corruption
and future-version files are all detected before anything is built.

Architecture files are one stage per line:

    # 2-layer classifier
    input 784
    fc 256 k=16 act=relu
    fc 10 k=16 act=identity

with conv/pool/relu/flatten stages available for convolutional stacks,
e.g. ``conv 8 r=3 k=4``.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from . import layers as ly
from .errors import ChecksumMismatch, InvalidSpec, TruncatedFile, VersionMismatch
from .quantization import FixedPointTensor, dequantize
from .training import ArchSpec, Network

MAGIC = b"BCMF"
VERSION = 1


def _stage_headers(net: Network, qlayers):
    stages = []
    qi = 0
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            h = {"type": "fc", "m": s.W.rows, "n": s.W.cols, "k": s.W.k,
                 "activation": s.activation}
        elif isinstance(s, ly.ConvLayer):
            h = {"type": "conv", "r": s.r, "in_channels": s.in_channels,
                 "out_channels": s.out_channels, "k": s.k}
        elif isinstance(s, ly.MaxPool):
            stages.append({"type": "pool"})
            continue
        elif isinstance(s, ly.Relu):
            stages.append({"type": "relu"})
            continue
        else:
            stages.append({"type": "flatten"})
            continue
        if qlayers is not None:
            h["w_frac"] = qlayers[qi]["weights"].frac_bits
            h["b_frac"] = qlayers[qi]["bias"].frac_bits
            qi += 1
        stages.append(h)
    return stages


def _weight_array(stage):
    if isinstance(stage, ly.FcLayer):
        return stage.W.weights
    return stage.weight_arrays()


def save_model(net: Network, path, qlayers=None) -> None:
    """Write the network; pass quantize_network() output to store int16."""
    chunks = []
    qi = 0
    for s in net.stages:
        if not isinstance(s, (ly.FcLayer, ly.ConvLayer)):
            continue
        if qlayers is None:
            chunks.append(np.ascontiguousarray(_weight_array(s), dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(s.bias, dtype="<f8").tobytes())
        else:
            q = qlayers[qi]
            qi += 1
            chunks.append(np.ascontiguousarray(q["weights"].raw, dtype="<i2").tobytes())
            chunks.append(np.ascontiguousarray(q["bias"].raw, dtype="<i2").tobytes())
    payload = b"".join(chunks)
    header = {
        "version": VERSION,
        "crc32": zlib.crc32(payload) & 0xFFFFFFFF,
        "input_shape": list(net.input_shape),
        "quantized": qlayers is not None,
        "stages": _stage_headers(net, qlayers),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload)


def _fc_shapes(h):
    p = -(-h["m"] // h["k"])
    q = -(-h["n"] // h["k"])
    return (p, q, h["k"]), (h["m"],)


def _conv_shapes(h):
    pb = h["in_channels"] // h["k"]
    qb = h["out_channels"] // h["k"]
    return (h["r"], h["r"], pb, qb, h["k"]), (h["out_channels"],)


def load_model(path):
    """Returns (network, qlayers) where qlayers is None for float models."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise VersionMismatch(f"{path}: not a model file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise TruncatedFile(f"{path}: header cut short")
    header = json.loads(raw[8 : 8 + hlen])
    if header.get("version") != VERSION:
        raise VersionMismatch(
            f"{path}: format version {header.get('version')}, supported {VERSION}")
    payload = raw[8 + hlen :]
    expected = _payload_length(header)
    if len(payload) < expected:
        raise TruncatedFile(
            f"{path}: payload {len(payload)} bytes, header declares {expected}")
    payload = payload[:expected]
    if (zlib.crc32(payload) & 0xFFFFFFFF) != header["crc32"]:
        raise ChecksumMismatch(f"{path}: payload checksum mismatch")
    return _build(header, payload)


def _payload_length(header) -> int:
    itemsize = 2 if header["quantized"] else 8
    total = 0
    for h in header["stages"]:
        if h["type"] == "fc":
            wshape, bshape = _fc_shapes(h)
        elif h["type"] == "conv":
            wshape, bshape = _conv_shapes(h)
        else:
            continue
        total += (int(np.prod(wshape)) + int(np.prod(bshape))) * itemsize
    return total


def _build(header, payload):
    quantized = header["quantized"]
    dtype = np.dtype("<i2") if quantized else np.dtype("<f8")
    off = 0

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype=dtype, count=n, offset=off)
        off += n * dtype.itemsize
        return arr.reshape(shape)

    stages = []
    qlayers = [] if quantized else None
    from .circulant import BlockCirculantMatrix

    for h in header["stages"]:
        if h["type"] == "fc":
            wshape, bshape = _fc_shapes(h)
            w_raw, b_raw = take(wshape), take(bshape)
            if quantized:
                qw = FixedPointTensor(wshape, w_raw.copy(), h["w_frac"])
                qb = FixedPointTensor(bshape, b_raw.copy(), h["b_frac"])
                qlayers.append({"weights": qw, "bias": qb})
                w, b = dequantize(qw), dequantize(qb)
            else:
                w, b = w_raw.astype(np.float64), b_raw.astype(np.float64)
            W = BlockCirculantMatrix(h["m"], h["n"], h["k"], w)
            stages.append(ly.FcLayer(W=W, bias=b, activation=h["activation"]))
        elif h["type"] == "conv":
            wshape, bshape = _conv_shapes(h)
            w_raw, b_raw = take(wshape), take(bshape)
            if quantized:
                qw = FixedPointTensor(wshape, w_raw.copy(), h["w_frac"])
                qb = FixedPointTensor(bshape, b_raw.copy(), h["b_frac"])
                qlayers.append({"weights": qw, "bias": qb})
                w, b = dequantize(qw), dequantize(qb)
            else:
                w, b = w_raw.astype(np.float64), b_raw.astype(np.float64)
            C, P, k = h["in_channels"], h["out_channels"], h["k"]
            grid = [[BlockCirculantMatrix(C, P, k, w[i, j].copy())
                     for j in range(h["r"])] for i in range(h["r"])]
            stages.append(ly.ConvLayer(r=h["r"], in_channels=C, out_channels=P,
                                       k=k, F_blocks=grid, bias=b.copy()))
        elif h["type"] == "pool":
            stages.append(ly.MaxPool())
        elif h["type"] == "relu":
            stages.append(ly.Relu())
        elif h["type"] == "flatten":
            stages.append(ly.Flatten())
        else:
            raise InvalidSpec(f"unknown stage type {h['type']!r} in model header")
    net = Network(input_shape=tuple(header["input_shape"]), stages=stages)
    net.cache_spectra()
    return net, qlayers


# ------------------------------------------------------- architecture files


def _parse_kv(parts, allowed):
    out = {}
    for tok in parts:
        if "=" not in tok:
            raise InvalidSpec(f"expected key=value, got {tok!r}")
        key, val = tok.split("=", 1)
        if key not in allowed:
            raise InvalidSpec(f"unknown option {key!r} (allowed: {sorted(allowed)})")
        out[key] = val
    return out


def parse_arch(text: str, default_k: int | None = None) -> ArchSpec:
    """Parse the line-oriented architecture format into an ArchSpec."""
    input_shape = None
    stages = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        try:
            if kind == "input":
                if input_shape is not None:
                    raise InvalidSpec("duplicate input line")
                input_shape = tuple(int(v) for v in parts[1:])
                if len(input_shape) not in (1, 3):
                    raise InvalidSpec("input needs 1 dim (flat) or 3 (W H C)")
            elif kind == "fc":
                kv = _parse_kv(parts[2:], {"k", "act"})
                stages.append(("fc", {"out": int(parts[1]),
                                      "k": int(kv.get("k", default_k or 1)),
                                      "act": kv.get("act", "relu")}))
            elif kind == "conv":
                kv = _parse_kv(parts[2:], {"k", "r"})
                stages.append(("conv", {"out": int(parts[1]),
                                        "r": int(kv.get("r", 3)),
                                        "k": int(kv.get("k", default_k or 1))}))
            elif kind in ("pool", "relu", "flatten"):
                stages.append((kind, {}))
            else:
                raise InvalidSpec(f"unknown stage {kind!r}")
        except (ValueError, IndexError) as e:
            raise InvalidSpec(f"arch line {lineno}: {raw!r} ({e})") from e
    if input_shape is None:
        raise InvalidSpec("arch file needs an input line")
    if not stages:
        raise InvalidSpec("arch file declares no stages")
    return ArchSpec(input_shape=input_shape, stages=stages)


def load_arch(path, default_k: int | None = None) -> ArchSpec:
    with open(path) as f:
        return parse_arch(f.read(), default_k=default_k)
