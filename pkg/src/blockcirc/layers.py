"""Network layers built on the block-circulant product.

Every operation accepts a single sample or a leading batch axis. Backward
passes return weight/bias gradients summed over the batch (the training
loop divides by the batch size) and input gradients per sample.

Gradients flow through the same spectral identity as the forward pass:
reversing a defining vector conjugates its spectrum, so the chain-rule
correlations become conjugated bin products. Correctness is pinned by the
finite-difference tests, not by trusting the algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fftcore
from .circulant import (
    BlockCirculantMatrix,
    _is_pow2,
    _pad_blocks,
    block_matvec,
    block_matvec_t,
)
from .errors import InvalidShape, InvalidSpec, InvalidValue, SizeMismatch
from .fftcore import OpCounter, Spectrum, get_plan

ACTIVATIONS = ("relu", "identity")


def apply_activation(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "identity":
        return a
    raise InvalidValue(f"unknown activation {kind!r}")


def activation_grad(kind: str, a_pre: np.ndarray) -> np.ndarray:
    """Derivative evaluated at the pre-activation; relu'(0) = 0."""
    if kind == "relu":
        return (a_pre > 0).astype(a_pre.dtype)
    if kind == "identity":
        return np.ones_like(a_pre)
    raise InvalidValue(f"unknown activation {kind!r}")


@dataclass
class FcLayer:
    W: BlockCirculantMatrix
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.bias.shape != (self.W.rows,):
            raise InvalidSpec(
                f"bias length {self.bias.shape} != output count {self.W.rows}")
        if self.activation not in ACTIVATIONS:
            raise InvalidSpec(f"unknown activation {self.activation!r}")

    @property
    def in_features(self) -> int:
        return self.W.cols

    @property
    def out_features(self) -> int:
        return self.W.rows


@dataclass
class ConvLayer:
    """Valid, stride-1 convolution whose channel mixing is block-circulant.

    For each kernel offset (i, j) the in-channel by out-channel matrix is a
    BlockCirculantMatrix of shape C x P with block size k; k must divide
    both channel counts, so no channel padding ever occurs.
    """

    r: int
    in_channels: int
    out_channels: int
    k: int
    F_blocks: list            # r x r nested list of BlockCirculantMatrix
    bias: np.ndarray

    def __post_init__(self):
        C, P, k = self.in_channels, self.out_channels, self.k
        if C % k or P % k:
            raise InvalidSpec(
                f"block size {k} must divide channel counts C={C}, P={P}")
        if len(self.F_blocks) != self.r or any(len(row) != self.r for row in self.F_blocks):
            raise InvalidSpec("F_blocks must be an r x r grid")
        for row in self.F_blocks:
            for blk in row:
                if (blk.rows, blk.cols, blk.k) != (C, P, k):
                    raise InvalidSpec(
                        f"every block grid must be {C}x{P} with block size {k}")
        if self.bias.shape != (P,):
            raise InvalidSpec(f"bias length {self.bias.shape} != out channels {P}")

    def weight_arrays(self) -> np.ndarray:
        """Defining vectors packed as (r, r, C/k, P/k, k)."""
        return np.stack([np.stack([b.weights for b in row]) for row in self.F_blocks])


@dataclass
class LayerGradients:
    d_weights: np.ndarray
    d_bias: np.ndarray
    d_input: np.ndarray


# generic pooling / reshape stages used between the parameterized layers
@dataclass
class Relu:
    pass


@dataclass
class MaxPool:
    window: int = 2


@dataclass
class Flatten:
    pass


# ------------------------------------------------------------------ FC


def fc_forward(layer: FcLayer, x, counter: OpCounter | None = None):
    """Returns (a_pre, y): the pre-activation is kept for the backward pass."""
    a_pre = block_matvec(layer.W, x, counter=counter) + layer.bias
    return a_pre, apply_activation(layer.activation, a_pre)


def _grad_through_blocks(g_blk, x_blk, w_spec_or_weights, k, pow2, counter=None):
    """Weight and input gradients for one block grid.

    g_blk: (B, p, k) upstream gradient, x_blk: (B, q, k) input, both padded.
    Returns (dW (p,q,k), dX (B,q,k)).
    """
    if pow2:
        pl = get_plan(k)
        G = fftcore.rfft(pl, g_blk, counter=counter).coeffs        # (B, p, f)
        Xs = np.conj(fftcore.rfft(pl, x_blk, counter=counter).coeffs)
        Ws = np.conj(w_spec_or_weights)                            # (p, q, f)
        gf = np.moveaxis(G, -1, 0)                                 # (f, B, p)
        dw_spec = np.moveaxis(np.moveaxis(gf, -1, 1) @ np.moveaxis(Xs, -1, 0), 0, -1)
        # (f, p, B) @ (f, B, q) -> (f, p, q) -> (p, q, f)
        dx_spec = np.moveaxis(gf @ np.moveaxis(Ws, -1, 0), 0, -1)  # (B, q, f)
        dW = fftcore.irfft(Spectrum(k, dw_spec), counter=counter)
        dX = fftcore.irfft(Spectrum(k, dx_spec), counter=counter)
    else:
        # time domain: dW[i,j,t] = sum_{b,u} g[b,i,u] x[b,j,(u-t)%k]
        u = np.arange(k)
        idx = (u[None, :] - u[:, None]) % k                        # [t, u]
        Xg = x_blk[..., idx]                                       # (B, q, t, u)
        dW = np.einsum("biu,bjtu->ijt", g_blk, Xg)
        Wg = w_spec_or_weights[..., idx]                           # (p, q, t, u)
        dX = np.einsum("biu,ijtu->bjt", g_blk, Wg)
    return dW, dX


def fc_backward(layer: FcLayer, x, a_pre, dL_dy, counter: OpCounter | None = None) -> LayerGradients:
    """Chain rule through activation, bias and the block-circulant product."""
    x = np.asarray(x)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    gb = np.atleast_2d(np.asarray(dL_dy)) * activation_grad(layer.activation,
                                                            np.atleast_2d(a_pre))
    W = layer.W
    if gb.shape[-1] != W.rows or xb.shape[-1] != W.cols:
        raise SizeMismatch("gradient/input lengths do not match the layer")
    g_blk = _pad_blocks(gb, W.p, W.k)
    x_blk = _pad_blocks(xb, W.q, W.k)
    pow2 = _is_pow2(W.k)
    ref = W.spectra(counter=counter) if pow2 else W.weights
    dW, dXb = _grad_through_blocks(g_blk, x_blk, ref, W.k, pow2, counter=counter)
    d_bias = gb.sum(axis=0)
    dX = dXb.reshape(xb.shape[0], W.q * W.k)[:, : W.cols]
    if single:
        dX = dX[0]
    return LayerGradients(d_weights=dW, d_bias=d_bias, d_input=dX)


# ------------------------------------------------------------------ CONV


def _check_conv_input(layer: ConvLayer, X: np.ndarray):
    if X.shape[-1] != layer.in_channels:
        raise InvalidShape(
            f"input has {X.shape[-1]} channels, layer expects {layer.in_channels}")
    if X.shape[-3] < layer.r or X.shape[-2] < layer.r:
        raise InvalidShape(
            f"spatial dims {X.shape[-3:-1]} smaller than kernel {layer.r}")


def conv_forward(layer: ConvLayer, X, counter: OpCounter | None = None):
    """Accumulates one transposed block product per kernel offset.

    Output spatial size is (W-r+1, H-r+1): valid padding, stride 1.
    """
    X = np.asarray(X)
    single = X.ndim == 3
    Xb = X[None] if single else X
    _check_conv_input(layer, Xb)
    B, W, H, _ = Xb.shape
    r = layer.r
    Wo, Ho = W - r + 1, H - r + 1
    out = np.zeros((B, Wo, Ho, layer.out_channels), dtype=np.float64)
    for i in range(r):
        for j in range(r):
            patch = Xb[:, i : i + Wo, j : j + Ho, :].reshape(B * Wo * Ho, -1)
            contrib = block_matvec_t(layer.F_blocks[i][j], patch, counter=counter)
            out += contrib.reshape(B, Wo, Ho, layer.out_channels)
    out += layer.bias
    return out[0] if single else out


def conv_backward(layer: ConvLayer, X, dL_dY, counter: OpCounter | None = None) -> LayerGradients:
    X = np.asarray(X)
    dY = np.asarray(dL_dY)
    single = X.ndim == 3
    Xb = X[None] if single else X
    dYb = dY[None] if single else dY
    _check_conv_input(layer, Xb)
    B, W, H, C = Xb.shape
    r, P, k = layer.r, layer.out_channels, layer.k
    Wo, Ho = W - r + 1, H - r + 1
    if dYb.shape != (B, Wo, Ho, P):
        raise InvalidShape(f"upstream gradient shape {dYb.shape} != {(B, Wo, Ho, P)}")
    pb, qb = C // k, P // k
    S = B * Wo * Ho
    g = dYb.reshape(S, P)
    g_blk = g.reshape(S, qb, k)
    dF = np.zeros((r, r, pb, qb, k))
    dX = np.zeros_like(Xb, dtype=np.float64)
    pow2 = _is_pow2(k)
    pl = get_plan(k) if pow2 else None
    if pow2:
        RG = fftcore.rfft(pl, g_blk, counter=counter).coeffs       # (S, qb, f)
    for i in range(r):
        for j in range(r):
            Wb = layer.F_blocks[i][j]
            patch = Xb[:, i : i + Wo, j : j + Ho, :].reshape(S, pb, k)
            if pow2:
                RX = fftcore.rfft(pl, patch, counter=counter).coeffs
                # dF[i,j] per bin: sum_s RX[s, bi] * conj(RG[s, bj])
                xf = np.moveaxis(RX, -1, 0)                        # (f, S, pb)
                gf = np.conj(np.moveaxis(RG, -1, 0))               # (f, S, qb)
                spec = np.moveaxis(np.moveaxis(xf, -1, 1) @ gf, 0, -1)
                dF[i, j] = fftcore.irfft(Spectrum(k, spec), counter=counter)
            else:
                u = np.arange(k)
                idx = (u[:, None] + u[None, :]) % k                # [t, v]
                Xg = patch[..., idx]                               # (S, pb, t, v)
                dF[i, j] = np.einsum("sjv,sitv->ijt", g_blk, Xg)
            dpatch = block_matvec(Wb, g, counter=counter)          # (S, C)
            dX[:, i : i + Wo, j : j + Ho, :] += dpatch.reshape(B, Wo, Ho, C)
    d_bias = g.sum(axis=0)
    if single:
        dX = dX[0]
    return LayerGradients(d_weights=dF, d_bias=d_bias, d_input=dX)


def conv_filter_tensor(layer: ConvLayer) -> np.ndarray:
    """Dense rank-4 filter tensor F[i, j, c, p] expanded from the blocks."""
    from .circulant import dense_expand

    r, C, P = layer.r, layer.in_channels, layer.out_channels
    F = np.zeros((r, r, C, P))
    for i in range(r):
        for j in range(r):
            F[i, j] = dense_expand(layer.F_blocks[i][j])
    return F


# ------------------------------------------------------------------ im2col


def im2col(X, r: int) -> np.ndarray:
    """Patch matrix of a W x H x C tensor for an r x r valid convolution.

    Row (x, y) holds the flattened patch at that output position with the
    channel index fastest: column index c + C*i + C*r*j for kernel offset
    (i, j). The convolution then becomes patch_matrix @ filter_matrix.
    """
    X = np.asarray(X)
    if X.ndim != 3:
        raise InvalidShape(f"expected a W x H x C tensor, got shape {X.shape}")
    W, H, C = X.shape
    if r > W or r > H:
        raise InvalidShape(f"kernel size {r} exceeds input dims {(W, H)}")
    Wo, Ho = W - r + 1, H - r + 1
    cols = np.empty((Wo, Ho, r, r, C), dtype=X.dtype)
    for i in range(r):
        for j in range(r):
            cols[:, :, j, i, :] = X[i : i + Wo, j : j + Ho, :]
    return cols.reshape(Wo * Ho, C * r * r)


# ------------------------------------------------------------------ pooling


def maxpool_forward(X, window: int = 2):
    """Non-overlapping 2x2 max pool; returns (pooled, argmax map).

    The argmax map records, per output cell, which of the four window
    positions won (first index in row-major window order on ties) plus the
    input shape, which is all the backward pass needs.
    """
    if window != 2:
        raise InvalidShape("only 2x2 pooling windows are supported")
    X = np.asarray(X)
    single = X.ndim == 3
    Xb = X[None] if single else X
    B, W, H, C = Xb.shape
    if W % 2 or H % 2:
        raise InvalidShape(f"spatial dims {(W, H)} not divisible by the window")
    v = Xb.reshape(B, W // 2, 2, H // 2, 2, C).transpose(0, 1, 3, 2, 4, 5)
    v = v.reshape(B, W // 2, H // 2, 4, C)
    idx = np.argmax(v, axis=3)
    pooled = np.take_along_axis(v, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    cache = (idx, Xb.shape, single)
    return (pooled[0] if single else pooled), cache


def maxpool_backward(cache, dL_dY):
    """Routes each output gradient to its recorded argmax; zero elsewhere."""
    idx, x_shape, single = cache
    dY = np.asarray(dL_dY)
    dYb = dY[None] if single else dY
    B, W, H, C = x_shape
    dV = np.zeros((B, W // 2, H // 2, 4, C), dtype=np.float64)
    np.put_along_axis(dV, idx[:, :, :, None, :], dYb[:, :, :, None, :], axis=3)
    dX = dV.reshape(B, W // 2, H // 2, 2, 2, C).transpose(0, 1, 3, 2, 4, 5)
    dX = dX.reshape(B, W, H, C)
    return dX[0] if single else dX


# ------------------------------------------------------------------ loss


def softmax_xent(logits, label):
    """Stabilized softmax cross-entropy.

    Single sample: (loss, dL_dlogits). Batched: per-sample loss vector and
    per-sample gradients (not averaged).
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    zb = np.atleast_2d(z)
    c = zb.shape[-1]
    if c < 2:
        raise InvalidValue("need at least two classes")
    lab = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if lab.shape[0] != zb.shape[0]:
        raise SizeMismatch("one label per sample required")
    if np.any(lab < 0) or np.any(lab >= c):
        raise InvalidValue(f"label out of range [0, {c})")
    m = zb.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(zb - m), axis=-1))
    loss = lse - zb[np.arange(zb.shape[0]), lab]
    p = np.exp(zb - lse[:, None])
    grad = p.copy()
    grad[np.arange(zb.shape[0]), lab] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return loss, grad
