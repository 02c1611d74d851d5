"""Block-circulant matrices and their FFT-accelerated matrix-vector products.

A logical m-by-n matrix is stored as a p-by-q grid of k-by-k circulant
blocks, each defined by a single length-k vector: the block's first
*column*. Under that convention a block acting on a vector is exactly the
circular convolution of its defining vector with the input, so the product
runs as irfft(rfft(w) * rfft(x)) per block. Dimensions that are not
multiples of k are zero-padded on input and truncated on output.

Power-of-two block sizes take the FFT path; any other k >= 1 falls back to
direct circular convolution so degenerate layouts (k = 1 is plain dense
storage) still work.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fftcore
from .errors import SizeMismatch
from .fftcore import OpCounter, Spectrum, get_plan


def _is_pow2(k: int) -> bool:
    return k >= 2 and (k & (k - 1)) == 0


@dataclass
class CirculantBlock:
    """One k-by-k circulant tile: defining vector plus optional spectrum."""

    k: int
    w: np.ndarray
    cached_spectrum: Spectrum | None = None

    def __post_init__(self):
        if self.w.shape != (self.k,):
            raise SizeMismatch(f"defining vector shape {self.w.shape} != ({self.k},)")


@dataclass
class BlockCirculantMatrix:
    """m-by-n matrix stored as ceil(m/k) x ceil(n/k) circulant blocks.

    ``weights[i, j]`` is the defining vector of block (i, j). The spectra
    cache is rebuilt explicitly (``cache_spectra``) after any mutation;
    reads of an unmutated instance are safe to share across threads.
    """

    rows: int
    cols: int
    k: int
    weights: np.ndarray                       # (p, q, k)
    _spectra: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.k < 1:
            raise SizeMismatch("rows, cols and block size must be positive")
        p = -(-self.rows // self.k)
        q = -(-self.cols // self.k)
        if self.weights.shape != (p, q, self.k):
            raise SizeMismatch(
                f"weights shape {self.weights.shape} != ({p}, {q}, {self.k}) "
                f"for a {self.rows}x{self.cols} matrix with block size {self.k}")

    @property
    def p(self) -> int:
        return self.weights.shape[0]

    @property
    def q(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, rows: int, cols: int, k: int) -> "BlockCirculantMatrix":
        p = -(-rows // k)
        q = -(-cols // k)
        return cls(rows, cols, k, np.zeros((p, q, k)))

    def block(self, i: int, j: int) -> CirculantBlock:
        spec = None
        if self._spectra is not None:
            spec = Spectrum(self.k, self._spectra[i, j])
        return CirculantBlock(self.k, self.weights[i, j], spec)

    def cache_spectra(self) -> None:
        """Precompute rfft of every defining vector (power-of-two k only)."""
        self._spectra = fftcore.rfft(get_plan(self.k), self.weights).coeffs

    def invalidate_spectra(self) -> None:
        self._spectra = None

    def spectra(self, counter: OpCounter | None = None) -> np.ndarray:
        if self._spectra is not None:
            return self._spectra
        return fftcore.rfft(get_plan(self.k), self.weights, counter=counter).coeffs


def circ_matvec_dense(w, x):
    """Circular convolution by direct summation: y[u] = sum_t w[t] x[(u-t) % k].

    This is the oracle side of the convolution theorem; it never touches the
    FFT path.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape or w.ndim != 1:
        raise SizeMismatch(f"operand shapes differ: {w.shape} vs {x.shape}")
    k = w.shape[0]
    u = np.arange(k)
    return np.asarray([(w * x[(v - u) % k]).sum() for v in range(k)])


def circ_matvec_fft(w_spec: Spectrum, x, counter: OpCounter | None = None):
    """Single-block product via the convolution theorem."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w_spec.full_size:
        raise SizeMismatch(
            f"input length {x.shape[-1]} != block size {w_spec.full_size}")
    p = get_plan(w_spec.full_size)
    xs = fftcore.rfft(p, x, counter=counter)
    return fftcore.irfft(fftcore.spectrum_mul(w_spec, xs, counter=counter),
                         counter=counter)


def _pad_blocks(x: np.ndarray, nblocks: int, k: int) -> np.ndarray:
    """(batch, n) -> (batch, nblocks, k), zero-padding the tail."""
    b, n = x.shape
    out = np.zeros((b, nblocks * k), dtype=x.dtype)
    out[:, :n] = x
    return out.reshape(b, nblocks, k)


def _spec_matmul(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-bin batched matmul: (B, q, f) x (p, q, f) -> (B, p, f)."""
    af = np.moveaxis(a, -1, 0)                # (f, B, q)
    wf = np.transpose(w, (2, 1, 0))           # (f, q, p)
    return np.moveaxis(af @ wf, 0, -1)        # (B, p, f)


def _roll_gather(xb: np.ndarray, k: int, sign: int) -> np.ndarray:
    """Gathered cyclic shifts for the direct (non power-of-two) path."""
    u = np.arange(k)
    idx = (u[:, None] - sign * u[None, :]) % k
    return xb[..., idx]


def block_matvec(Wb: BlockCirculantMatrix, x, counter: OpCounter | None = None):
    """y = W x for the logical m-by-n matrix, via per-block convolutions.

    Accepts a single vector (n,) or a batch (B, n) and returns matching
    shape with m outputs. Uses cached block spectra when present.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[-1] != Wb.cols:
        raise SizeMismatch(f"input length {xb.shape[-1]} != cols {Wb.cols}")
    blocks = _pad_blocks(xb, Wb.q, Wb.k)
    if _is_pow2(Wb.k):
        pl = get_plan(Wb.k)
        xs = fftcore.rfft(pl, blocks, counter=counter).coeffs      # (B, q, f)
        ws = Wb.spectra(counter=counter)                           # (p, q, f)
        acc = _spec_matmul(xs, ws)                                 # (B, p, f)
        if counter is not None:
            nb = Wb.k // 2 + 1
            batch = xb.shape[0]
            counter.count_complex_mults(batch * Wb.p * Wb.q * nb)
            counter.count_real_adds(2 * batch * Wb.p * (Wb.q - 1) * nb)
        y = fftcore.irfft(Spectrum(Wb.k, acc), counter=counter)    # (B, p, k)
    else:
        shifted = _roll_gather(blocks, Wb.k, 1)                    # (B, q, k, k)
        y = np.einsum("pqt,bqut->bpu", Wb.weights, shifted)
        if counter is not None:
            batch = xb.shape[0]
            counter.count_real_mults(batch * Wb.p * Wb.q * Wb.k * Wb.k)
            counter.count_real_adds(batch * Wb.p * (Wb.q * Wb.k - 1) * Wb.k)
    y = y.reshape(xb.shape[0], Wb.p * Wb.k)[:, : Wb.rows]
    return y[0] if single else y


def block_matvec_t(Wb: BlockCirculantMatrix, y, counter: OpCounter | None = None):
    """x = W^T y: the transposed product, n outputs from m inputs.

    A circulant block's transpose is circulant with the reversed defining
    vector, whose spectrum is the conjugate of the original; no separate
    storage is needed.
    """
    y = np.asarray(y)
    single = y.ndim == 1
    yb = y[None, :] if single else y
    if yb.shape[-1] != Wb.rows:
        raise SizeMismatch(f"input length {yb.shape[-1]} != rows {Wb.rows}")
    blocks = _pad_blocks(yb, Wb.p, Wb.k)
    if _is_pow2(Wb.k):
        pl = get_plan(Wb.k)
        ys = fftcore.rfft(pl, blocks, counter=counter).coeffs        # (B, p, f)
        ws = np.conj(Wb.spectra(counter=counter))                    # (p, q, f)
        af = np.moveaxis(ys, -1, 0)                                  # (f, B, p)
        wf = np.moveaxis(ws, -1, 0)                                  # (f, p, q)
        acc = np.moveaxis(af @ wf, 0, -1)                            # (B, q, f)
        if counter is not None:
            nb = Wb.k // 2 + 1
            batch = yb.shape[0]
            counter.count_complex_mults(batch * Wb.p * Wb.q * nb)
            counter.count_real_adds(2 * batch * Wb.q * (Wb.p - 1) * nb)
        x = fftcore.irfft(Spectrum(Wb.k, acc), counter=counter)
    else:
        shifted = _roll_gather(blocks, Wb.k, -1)                     # (B, p, k, k)
        x = np.einsum("pqs,bpvs->bqv", Wb.weights, shifted)
        if counter is not None:
            batch = yb.shape[0]
            counter.count_real_mults(batch * Wb.p * Wb.q * Wb.k * Wb.k)
            counter.count_real_adds(batch * Wb.q * (Wb.p * Wb.k - 1) * Wb.k)
    x = x.reshape(yb.shape[0], Wb.q * Wb.k)[:, : Wb.cols]
    return x[0] if single else x


def dense_expand(Wb: BlockCirculantMatrix) -> np.ndarray:
    """Materialize the logical m-by-n dense matrix (test oracle).

    Block (i, j) has entries W[u, v] = w_ij[(u - v) mod k]; rows beyond m
    and columns beyond n are dropped.
    """
    k = Wb.k
    u = np.arange(k)
    idx = (u[:, None] - u[None, :]) % k
    tiles = Wb.weights[:, :, idx]                       # (p, q, k, k)
    full = tiles.transpose(0, 2, 1, 3).reshape(Wb.p * k, Wb.q * k)
    return full[: Wb.rows, : Wb.cols]


def param_count(Wb: BlockCirculantMatrix) -> int:
    """Stored parameters: p * q * k."""
    return Wb.p * Wb.q * Wb.k
