"""Independent brute-force references used across the test suite.

These deliberately avoid the package's fast paths: direct summation DFT,
time-domain circular convolution, dense matrix products, triple-sum
convolution, and central finite differences.
"""

import numpy as np


def naive_dft(x):
    """O(k^2) direct-summation DFT, forward sign convention exp(-2*pi*i*j*t/k)."""
    x = np.asarray(x, dtype=np.complex128)
    k = x.shape[-1]
    j = np.arange(k)
    M = np.exp(-2j * np.pi * np.outer(j, j) / k)
    return M @ x


def naive_idft(X):
    X = np.asarray(X, dtype=np.complex128)
    k = X.shape[-1]
    j = np.arange(k)
    M = np.exp(2j * np.pi * np.outer(j, j) / k)
    return (M @ X) / k


def circular_convolve(w, x):
    """y[u] = sum_t w[t] * x[(u - t) mod k], by direct summation."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    k = len(w)
    y = np.zeros(k)
    for u in range(k):
        for t in range(k):
            y[u] += w[t] * x[(u - t) % k]
    return y


def conv3d_triple_sum(X, F, bias=None):
    """Direct valid convolution: Y[a,b,p] = sum_{i,j,c} F[i,j,c,p] X[a+i,b+j,c]."""
    W, H, C = X.shape
    r = F.shape[0]
    P = F.shape[3]
    Wo, Ho = W - r + 1, H - r + 1
    Y = np.zeros((Wo, Ho, P))
    for a in range(Wo):
        for b in range(Ho):
            for p in range(P):
                acc = 0.0
                for i in range(r):
                    for j in range(r):
                        for c in range(C):
                            acc += F[i, j, c, p] * X[a + i, b + j, c]
                Y[a, b, p] = acc
    if bias is not None:
        Y += bias
    return Y


def central_diff(f, x0, h=1e-6):
    """Central finite-difference gradient of scalar f at flat vector x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
