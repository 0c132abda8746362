"""Walsh-Hadamard transform and the index-shift operator used for chirp decoding."""

import numpy as np


def _check_pow2(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    return n.bit_length() - 1


def fwht(v, inplace=False):
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    Computes H_m @ v with H_m in natural (Sylvester) order, so that
    fwht(fwht(v)) == 2**m * v.  Leading axes are treated as a batch.
    With ``inplace=True`` the butterflies run in ``v`` itself, which must
    then be a contiguous float or complex array.
    """
    if inplace:
        out = v
        if not out.flags.c_contiguous:
            raise ValueError("in-place transform needs a C-contiguous array")
    else:
        out = np.array(v, dtype=np.result_type(np.asarray(v).dtype, np.float64), copy=True)
    n = out.shape[-1]
    _check_pow2(n)
    h = 1
    while h < n:
        w = out.reshape(-1, n // (2 * h), 2, h)
        lo = w[:, :, 0, :]
        hi = w[:, :, 1, :]
        tmp = lo - hi
        lo += hi
        hi[...] = tmp
        h *= 2
    return out


def hadamard(m):
    """Dense H_m from the block recursion [[H, H], [H, -H]]."""
    H = np.ones((1, 1))
    for _ in range(m):
        H = np.block([[H, H], [H, -H]])
    return H


def shift_by_unit(v, j):
    """Return v(x + e_j): swap neighbouring blocks of size 2^(j-1).

    j is 1-based; bit j-1 of the index is flipped.  Works along the last axis.
    """
    v = np.asarray(v)
    n = v.shape[-1]
    m = _check_pow2(n)
    if not 1 <= j <= m:
        raise ValueError(f"j={j} out of range [1, {m}]")
    h = 1 << (j - 1)
    lead = v.shape[:-1]
    w = v.reshape(lead + (n // (2 * h), 2, h))
    return w[..., ::-1, :].reshape(v.shape)


def pointwise_conj_mul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * np.conj(b)
