"""Radix-2 FFT engine with a packed real-input fast path and operation counting.

Everything here works on the last axis of numpy arrays, so a single call
transforms a whole batch of equal-length signals. Sizes are restricted to
powers of two; the forward transform uses exp(-2*pi*i*j*t/k) and the 1/k
normalization sits entirely on the inverse, so circular-convolution
identities hold without extra scale factors.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSize, InvalidSpectrum, InvalidValue, SizeMismatch

MAX_SIZE = 1 << 20


@dataclass
class OpCounter:
    """Tally of real multiplies/adds and butterfly executions.

    Counters are per call context, never global: pass one instance into the
    transforms you want measured. Counts only ever increase.
    """

    real_mults: int = 0
    real_adds: int = 0
    butterflies: int = 0

    def count_complex_mults(self, n: int) -> None:
        # one complex multiply = 4 real multiplies + 2 real adds
        self.real_mults += 4 * n
        self.real_adds += 2 * n

    def count_real_mults(self, n: int) -> None:
        self.real_mults += n

    def count_real_adds(self, n: int) -> None:
        self.real_adds += n

    def count_butterflies(self, n: int) -> None:
        self.butterflies += n


@dataclass(frozen=True)
class FftPlan:
    """Precomputed constants for one transform size.

    Immutable after construction and safe to share between threads; all
    transforms take caller-owned input and scratch.
    """

    size: int
    twiddles: np.ndarray        # exp(-2j*pi*i/size), i = 0 .. size/2 - 1
    bit_reversal: np.ndarray    # involutive permutation of 0 .. size-1
    half: "FftPlan | None" = None
    # real-path constants, index j = 0 .. size//4:
    #   split_coeffs[j] = -0.5j * exp(-2j*pi*j/size)        (rfft post-pass)
    #   merge_coeffs[j] = conj(split_coeffs[j]) * (2/size)  (irfft pre-pass,
    #   inverse normalization folded in so the half-size FFT runs unscaled)
    split_coeffs: np.ndarray = field(default=None, repr=False)
    merge_coeffs: np.ndarray = field(default=None, repr=False)


@dataclass
class Spectrum:
    """Half spectrum of a real signal of even length ``full_size``.

    ``coeffs`` holds bins 0 .. full_size/2 along the last axis; the missing
    bins follow from conjugate symmetry. DC and Nyquist bins are real.
    """

    full_size: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[-1] != self.full_size // 2 + 1:
            raise SizeMismatch(
                f"expected {self.full_size // 2 + 1} bins for size "
                f"{self.full_size}, got {self.coeffs.shape[-1]}"
            )


def _bit_reversal_permutation(k: int) -> np.ndarray:
    bits = k.bit_length() - 1
    rev = np.zeros(k, dtype=np.intp)
    for i in range(1, k):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    return rev


def plan(k: int) -> FftPlan:
    """Build the constants for a size-``k`` transform.

    ``k`` must be a power of two with 1 <= k <= 2**20. Deterministic: the
    same ``k`` always yields identical tables.
    """
    if not isinstance(k, (int, np.integer)):
        raise InvalidSize(f"size must be an integer, got {type(k).__name__}")
    k = int(k)
    if k < 1 or k & (k - 1):
        raise InvalidSize(f"size must be a power of two >= 1, got {k}")
    if k > MAX_SIZE:
        raise InvalidSize(f"size {k} exceeds the supported maximum {MAX_SIZE}")
    tw = np.exp(-2j * np.pi * np.arange(k // 2) / k)
    j = np.arange(k // 4 + 1)
    split = -0.5j * np.exp(-2j * np.pi * j / k)
    merge = np.conj(split) * (2.0 / k)
    half = plan(k // 2) if k >= 2 else None
    for arr in (tw, split, merge):
        arr.setflags(write=False)
    br = _bit_reversal_permutation(k)
    br.setflags(write=False)
    return FftPlan(size=k, twiddles=tw, bit_reversal=br, half=half,
                   split_coeffs=split, merge_coeffs=merge)


# plans are immutable, so one shared instance per size is safe
get_plan = functools.lru_cache(maxsize=None)(plan)


def _work_dtype(x: np.ndarray):
    if x.dtype in (np.float32, np.complex64):
        return np.complex64
    return np.complex128


def _batch(x: np.ndarray) -> int:
    return int(np.prod(x.shape[:-1], dtype=np.int64)) if x.ndim > 1 else 1


def _fft_raw(p: FftPlan, x: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    """Iterative decimation-in-time butterflies on the last axis.

    Input is copied (the bit-reversal gather allocates), so callers keep
    their arrays. The first butterfly of every group has a unit twiddle and
    skips its multiply; the counter records that.
    """
    k = p.size
    a = x[..., p.bit_reversal]
    if k == 1:
        return a
    batch = _batch(a)
    tw = p.twiddles
    if a.dtype == np.complex64:
        tw = tw.astype(np.complex64)
    half = 1
    while half < k:
        m = 2 * half
        groups = k // m
        b = a.reshape(a.shape[:-1] + (groups, m))
        u = b[..., :half]
        v = b[..., half:]
        t = np.empty_like(v)
        t[..., 0] = v[..., 0]
        if half > 1:
            w = tw[:: k // m]
            t[..., 1:] = v[..., 1:] * w[1:]
        s = u + t
        d = u - t
        b[..., :half] = s
        b[..., half:] = d
        if counter is not None:
            nbf = batch * (k // 2)
            trivial = batch * groups
            counter.count_butterflies(nbf)
            counter.count_complex_mults(nbf - trivial)
            counter.count_real_adds(4 * nbf)
        half = m
    return a


def fft(p: FftPlan, x, counter: OpCounter | None = None) -> np.ndarray:
    """Forward DFT of the last axis: X[j] = sum_t x[t] exp(-2*pi*i*j*t/k)."""
    a = np.asarray(x)
    if a.shape[-1] != p.size:
        raise SizeMismatch(f"input length {a.shape[-1]} != plan size {p.size}")
    a = a.astype(_work_dtype(a), copy=False)
    return _fft_raw(p, a, counter)


def ifft(p: FftPlan, X, counter: OpCounter | None = None) -> np.ndarray:
    """Inverse DFT via conjugate-forward-conjugate, scaled by 1/k."""
    a = np.asarray(X)
    if a.shape[-1] != p.size:
        raise SizeMismatch(f"input length {a.shape[-1]} != plan size {p.size}")
    a = np.conj(a.astype(_work_dtype(a), copy=False))
    a = _fft_raw(p, a, counter)
    np.conj(a, out=a)
    a *= 1.0 / p.size
    if counter is not None:
        counter.count_real_mults(2 * p.size * _batch(a))
    return a


def rfft(p: FftPlan, x, counter: OpCounter | None = None) -> Spectrum:
    """Half spectrum of a real signal via one complex FFT of half the size.

    Even/odd samples are packed into a length-k/2 complex signal; a split
    pass then untangles the two interleaved spectra. Costs roughly half the
    multiplies of the full complex transform.
    """
    k = p.size
    if k < 2:
        raise InvalidSize("rfft needs size >= 2; a length-1 signal has no half spectrum")
    a = np.asarray(x)
    if np.iscomplexobj(a):
        raise InvalidValue("rfft input must be real")
    if a.shape[-1] != k:
        raise SizeMismatch(f"input length {a.shape[-1]} != plan size {k}")
    cdtype = np.complex64 if a.dtype == np.float32 else np.complex128
    z = np.empty(a.shape[:-1] + (k // 2,), dtype=cdtype)
    z.real = a[..., 0::2]
    z.imag = a[..., 1::2]
    Z = _fft_raw(p.half, z, counter)
    batch = _batch(a)

    out = np.empty(a.shape[:-1] + (k // 2 + 1,), dtype=cdtype)
    z0 = Z[..., 0]
    out[..., 0] = z0.real + z0.imag
    out[..., k // 2] = z0.real - z0.imag
    if counter is not None:
        counter.count_real_adds(2 * batch)
    if k >= 4:
        out[..., k // 4] = np.conj(Z[..., k // 4])
        pj = np.arange(1, k // 4)
        if pj.size:
            coeffs = p.split_coeffs
            if cdtype == np.complex64:
                coeffs = coeffs.astype(np.complex64)
            Zj = Z[..., pj]
            Zr = np.conj(Z[..., k // 2 - pj])
            A = Zj + Zr
            B = Zj - Zr
            hA = 0.5 * A
            uB = coeffs[pj] * B
            out[..., pj] = hA + uB
            out[..., k // 2 - pj] = np.conj(hA - uB)
            if counter is not None:
                n = batch * pj.size
                counter.count_real_mults(2 * n)   # 0.5 * A
                counter.count_complex_mults(n)    # u_j * B
                counter.count_real_adds(8 * n)    # A, B, hA +/- uB
    return Spectrum(full_size=k, coeffs=out)


def irfft(spec: Spectrum, counter: OpCounter | None = None) -> np.ndarray:
    """Real signal from its half spectrum; inverse of :func:`rfft`.

    Raises InvalidSpectrum when the DC or Nyquist bin carries more than 1e-9
    of imaginary part, since no real signal can produce one.
    """
    k = spec.full_size
    if k < 2 or k & (k - 1):
        raise InvalidSize(f"spectrum full_size must be an even power of two, got {k}")
    X = np.asarray(spec.coeffs)
    if X.shape[-1] != k // 2 + 1:
        raise SizeMismatch(
            f"expected {k // 2 + 1} bins for size {k}, got {X.shape[-1]}")
    bad = max(float(np.max(np.abs(X[..., 0].imag), initial=0.0)),
              float(np.max(np.abs(X[..., k // 2].imag), initial=0.0)))
    if bad > 1e-9:
        raise InvalidSpectrum(
            f"DC/Nyquist bins of a real-signal spectrum must be real "
            f"(imaginary magnitude {bad:.3e})")
    p = get_plan(k)
    cdtype = np.complex64 if X.dtype == np.complex64 else np.complex128
    X = X.astype(cdtype, copy=False)
    batch = _batch(X)

    Z = np.empty(X.shape[:-1] + (k // 2,), dtype=cdtype)
    c1 = 1.0 / k  # includes the inverse normalization of the half-size FFT
    x0 = X[..., 0].real
    xn = X[..., k // 2].real
    Z[..., 0] = c1 * (x0 + xn) + (c1 * (x0 - xn)) * 1j
    if counter is not None:
        counter.count_real_mults(2 * batch)
        counter.count_real_adds(2 * batch)
    if k >= 4:
        Z[..., k // 4] = (2.0 / k) * np.conj(X[..., k // 4])
        if counter is not None:
            counter.count_real_mults(2 * batch)
        pj = np.arange(1, k // 4)
        if pj.size:
            coeffs = p.merge_coeffs
            if cdtype == np.complex64:
                coeffs = coeffs.astype(np.complex64)
            Xj = X[..., pj]
            Xr = np.conj(X[..., k // 2 - pj])
            A = Xj + Xr
            B = Xj - Xr
            hA = c1 * A
            mB = coeffs[pj] * B
            Z[..., pj] = hA + mB
            Z[..., k // 2 - pj] = np.conj(hA - mB)
            if counter is not None:
                n = batch * pj.size
                counter.count_real_mults(2 * n)
                counter.count_complex_mults(n)
                counter.count_real_adds(8 * n)
    np.conj(Z, out=Z)
    w = _fft_raw(p.half, Z, counter)
    np.conj(w, out=w)
    rdtype = np.float32 if cdtype == np.complex64 else np.float64
    out = np.empty(X.shape[:-1] + (k,), dtype=rdtype)
    out[..., 0::2] = w.real
    out[..., 1::2] = w.imag
    return out


def spectrum_mul(a: Spectrum, b: Spectrum, counter: OpCounter | None = None) -> Spectrum:
    """Bin-by-bin product of two half spectra (circular convolution in time)."""
    if a.full_size != b.full_size:
        raise SizeMismatch(f"spectrum sizes differ: {a.full_size} vs {b.full_size}")
    out = a.coeffs * b.coeffs
    # DC/Nyquist products of real bins are real; clear rounding residue so the
    # invariant survives arbitrary chains of products
    out[..., 0] = out[..., 0].real
    out[..., -1] = out[..., -1].real
    if counter is not None:
        nb = out.shape[-1]
        batch = _batch(out)
        counter.count_complex_mults(batch * (nb - 2))
        counter.count_real_mults(2 * batch)  # the two real-by-real bins
    return Spectrum(full_size=a.full_size, coeffs=out)


@functools.lru_cache(maxsize=None)
def real_mult_ratio(k: int, inverse: bool = False) -> float:
    """Measured multiply ratio of the real path over the full complex FFT.

    The packed real transforms skip the conjugate-symmetric half of the
    work; the exact saving depends on size, so it is measured rather than
    asserted. Used by the hardware model as the elision credit.
    """
    p = get_plan(k)
    x = np.linspace(-1.0, 1.0, k)
    full = OpCounter()
    fft(p, x.astype(np.complex128), counter=full)
    if full.real_mults == 0:
        return 1.0  # k = 2 has only trivial twiddles; nothing to elide
    real = OpCounter()
    if inverse:
        irfft(rfft(p, x), counter=real)
        # subtract the forward half so only the inverse path is measured
        fwd = OpCounter()
        rfft(p, x, counter=fwd)
        mults = real.real_mults - fwd.real_mults
    else:
        rfft(p, x, counter=real)
        mults = real.real_mults
    return mults / full.real_mults


def dft_butterfly_count(k: int) -> int:
    """Analytic butterfly count of a size-k complex FFT: (k/2) * log2(k)."""
    return (k // 2) * int(math.log2(k)) if k > 1 else 0
