"""Mixed-radix FFT over the last axis, with Bluestein's chirp-z for large primes.

Lengths factor into small radices (4, 2, 3, 5, 7, ...) handled by
decimation in time; any prime factor above ``_DIRECT_MAX`` is transformed
through a power-of-two circular convolution.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

_DIRECT_MAX = 31


@lru_cache(maxsize=None)
def _factors(n: int) -> tuple[int, ...]:
    out = []
    while n % 4 == 0:
        out.append(4)
        n //= 4
    p = 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return tuple(out)


@lru_cache(maxsize=None)
def _dft_matrix(n: int, sign: int) -> np.ndarray:
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(sign * 2j * np.pi * jk / n)


@lru_cache(maxsize=None)
def _twiddles(r: int, m: int, sign: int) -> np.ndarray:
    n = r * m
    qk = np.outer(np.arange(r), np.arange(m)) % n
    return np.exp(sign * 2j * np.pi * qk / n)


@lru_cache(maxsize=None)
def _chirp(n: int, sign: int) -> tuple[np.ndarray, np.ndarray, int]:
    j = np.arange(n)
    # j^2 mod 2n keeps the phase argument small for large n
    chirp = np.exp(sign * 1j * np.pi * ((j * j) % (2 * n)) / n)
    size = 1 << (2 * n - 2).bit_length()
    b = np.zeros(size, dtype=complex)
    b[:n] = np.conj(chirp)
    b[size - n + 1 :] = np.conj(chirp[1:])[::-1]
    return chirp, _fft(b, -1), size


def _bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    chirp, b_hat, size = _chirp(n, sign)
    a = np.zeros(x.shape[:-1] + (size,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _fft(_fft(a, -1) * b_hat, 1) / size
    return conv[..., :n] * chirp


def _fft(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.astype(complex, copy=True)
    r = _factors(n)[0]
    if r == n:
        if n <= _DIRECT_MAX:
            return x @ _dft_matrix(n, sign).T
        return _bluestein(x, sign)
    m = n // r
    # sub[..., q, j] = x[..., j*r + q]
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, r)), -1, -2)
    y = _fft(sub, sign) * _twiddles(r, m, sign)
    # X[k1 + m*k2] = sum_q W_r^(q*k2) * y[q, k1]
    z = np.einsum("pq,...qk->...pk", _dft_matrix(r, sign), y)
    return z.reshape(x.shape[:-1] + (n,))


def dft(x) -> np.ndarray:
    """Unnormalised forward DFT along the last axis."""
    arr = np.asarray(x, dtype=complex)
    if arr.shape[-1] < 1:
        raise ValueError("DFT of an empty series")
    return _fft(arr, -1)


def idft(X) -> np.ndarray:
    """Inverse of :func:`dft` (applies the 1/N scaling)."""
    arr = np.asarray(X, dtype=complex)
    if arr.shape[-1] < 1:
        raise ValueError("IDFT of an empty series")
    return _fft(arr, 1) / arr.shape[-1]


def naive_dft(x, sign: int = -1) -> np.ndarray:
    """O(N^2) reference transform, kept for cross-checks."""
    arr = np.asarray(x, dtype=complex)
    return arr @ _dft_matrix(arr.shape[-1], sign).T
