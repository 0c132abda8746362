"""Binary linear algebra over GF(2) and arithmetic in GF(2^m).

Field elements are plain integers: bit i is the coefficient of alpha^i,
where alpha is a root of the fixed primitive polynomial for m.  Binary
vectors and matrices are numpy uint8 arrays; vectors convert to integers
least-significant-bit first, so ``bits_to_int([1, 0, 1]) == 5``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Lexicographically smallest primitive polynomial of each degree.
PRIMITIVE_POLYS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
}


class ConstructionError(ValueError):
    pass


def int_to_bits(value, m):
    if not 0 <= value < (1 << m):
        raise ValueError(f"{value} does not fit in {m} bits")
    return np.array([(value >> i) & 1 for i in range(m)], dtype=np.uint8)


def bits_to_int(bits):
    out = 0
    for i, bit in enumerate(np.asarray(bits).ravel()):
        if bit not in (0, 1):
            raise ValueError("binary vector entries must be 0 or 1")
        out |= int(bit) << i
    return out


@lru_cache(maxsize=None)
def index_bits(m):
    """(2^m, m) array whose row x holds the LSB-first bits of x."""
    x = np.arange(1 << m)
    out = ((x[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int64)
    out.flags.writeable = False
    return out


def columns_to_int(P):
    """Integer encoding int(P e_j) of every column of a binary matrix."""
    P = np.asarray(P, dtype=np.int64)
    return (P << np.arange(P.shape[0])[:, None]).sum(axis=0)


def pack_columns(P):
    """Pack an m x m binary matrix into one int, column j at bits [j*m, (j+1)*m)."""
    m = P.shape[0]
    return sum(int(c) << (j * m) for j, c in enumerate(columns_to_int(P)))


def unpack_columns(packed, m):
    mask = (1 << m) - 1
    cols = [(packed >> (j * m)) & mask for j in range(m)]
    return np.array([[(cols[j] >> i) & 1 for j in range(m)] for i in range(m)], dtype=np.uint8)


def is_symmetric(P):
    P = np.asarray(P)
    return P.ndim == 2 and P.shape[0] == P.shape[1] and np.array_equal(P, P.T)


def poly_mulmod(a, b, poly):
    """Shift-and-add product of two binary polynomials, reduced modulo poly."""
    deg = poly.bit_length() - 1
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> deg:
            a ^= poly
    return out


def multiplicative_order(poly):
    deg = poly.bit_length() - 1
    x, n = 2, 1
    if deg == 1:
        return 1
    while x != 1:
        x = poly_mulmod(x, 2, poly)
        n += 1
        if n > (1 << deg):
            return 0
    return n


def is_primitive(poly):
    deg = poly.bit_length() - 1
    if deg < 1 or not poly & 1:
        return False
    return multiplicative_order(poly) == (1 << deg) - 1


@dataclass(frozen=True)
class FieldContext:
    """Log/antilog tables and a trace table for GF(2^m)."""

    m: int
    primitive_poly: int = None
    exp: np.ndarray = field(init=False, repr=False, compare=False)
    log: np.ndarray = field(init=False, repr=False, compare=False)
    traces: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.primitive_poly is None:
            if self.m not in PRIMITIVE_POLYS:
                raise ValueError(f"no primitive polynomial tabulated for m={self.m}")
            object.__setattr__(self, "primitive_poly", PRIMITIVE_POLYS[self.m])
        if self.primitive_poly.bit_length() - 1 != self.m:
            raise ValueError("primitive polynomial degree does not match m")
        if not is_primitive(self.primitive_poly):
            raise ValueError(f"{self.primitive_poly:#b} is not primitive")

        q = 1 << self.m
        exp = np.zeros(2 * q, dtype=np.int64)
        log = np.full(q, -1, dtype=np.int64)
        x = 1
        for i in range(q - 1):
            exp[i] = x
            log[x] = i
            x = poly_mulmod(x, 2, self.primitive_poly)
        # doubled table avoids a modulo in mul
        exp[q - 1:2 * q - 2] = exp[:q - 1]
        object.__setattr__(self, "exp", exp)
        object.__setattr__(self, "log", log)

        traces = np.zeros(q, dtype=np.uint8)
        for a in range(q):
            acc, p = 0, a
            for _ in range(self.m):
                acc ^= p
                p = self._mul(p, p)
            if acc not in (0, 1):
                raise ConstructionError(f"trace of {a} left the prime field")
            traces[a] = acc
        object.__setattr__(self, "traces", traces)
        for arr in (exp, log, traces):
            arr.flags.writeable = False

    @property
    def order(self):
        return 1 << self.m

    def antilog(self, i):
        return int(self.exp[i % (self.order - 1)])

    def _mul(self, a, b):
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def check(self, a):
        if not 0 <= a < self.order:
            raise ValueError(f"field element {a} out of range for GF(2^{self.m})")

    def mul(self, a, b):
        self.check(a)
        self.check(b)
        return self._mul(a, b)

    def pow2k(self, a, k):
        """a^(2^k), the k-fold Frobenius image."""
        self.check(a)
        for _ in range(k):
            a = self._mul(a, a)
        return a

    def trace(self, a):
        self.check(a)
        return int(self.traces[a])


@lru_cache(maxsize=None)
def field_context(m):
    return FieldContext(m)


def gf2m_mul(a, b, ctx):
    return ctx.mul(a, b)


def gf2m_trace(a, ctx):
    return ctx.trace(a)


def gf2_rank(M):
    """Rank over GF(2) by Gaussian elimination on integer-packed rows."""
    M = np.asarray(M)
    rows = [bits_to_int(row) for row in M % 2]
    rank = 0
    ncols = M.shape[1] if M.ndim == 2 else 0
    for col in range(ncols):
        bit = 1 << col
        pivot = next((i for i in range(rank, len(rows)) if rows[i] & bit), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] & bit:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


def gram_matrix(form, ctx):
    """Evaluate a symmetric bilinear form on the polynomial basis {alpha^i}.

    ``form(x, y)`` gets field elements and must return 0 or 1.  Raises
    ConstructionError if the resulting matrix is not symmetric.
    """
    m = ctx.m
    G = np.zeros((m, m), dtype=np.uint8)
    for i in range(m):
        for j in range(m):
            G[i, j] = form(1 << i, 1 << j)
    if not np.array_equal(G, G.T):
        raise ConstructionError("bilinear form is not symmetric")
    return G
