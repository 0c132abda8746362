"""Layered second-order Reed-Muller codebook.

User IDs map to (P, b) pairs: the low m bits are b, the next m bits pick a
Kerdock matrix, and each further group of m bits picks a matrix from the
Delsarte-Goethals DG(m, t) layer, t = 1..r.  P is the GF(2) sum of the
components, so small IDs only ever touch the low-coherence layers.

Kerdock matrices are Gram matrices of the trace form tr(a x y); DG(m, t)
matrices are Gram matrices of tr(a (x y^(2^t) + x^(2^t) y)).  Both are
GF(2)-linear in a, which makes the whole ID -> P map linear.
"""

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gf import (
    ConstructionError,
    bits_to_int,
    field_context,
    gf2_rank,
    gram_matrix,
    index_bits,
    int_to_bits,
    is_symmetric,
    pack_columns,
)

_QUARTER_TURNS = np.array([1, 1j, -1, -1j])


class InvalidP(ValueError):
    """P is not a member of the codebook's DG(m, r) span."""


def max_r(m):
    return (m - 1) // 2


@dataclass(frozen=True)
class RmParams:
    m: int
    r: int
    C: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not 0 <= self.r <= max_r(self.m):
            raise ValueError(f"r={self.r} outside [0, {max_r(self.m)}] for m={self.m}")
        if not 1 <= self.C <= self.capacity:
            raise ValueError(f"C={self.C} outside [1, 2^{self.m * (self.r + 2)}]")

    @property
    def N(self):
        return 1 << self.m

    @property
    def capacity(self):
        return 1 << (self.m * (self.r + 2))

    @classmethod
    def auto(cls, m, C):
        """Smallest r whose space holds C users."""
        bits = max(C - 1, 1).bit_length()
        r = max(0, math.ceil(bits / m) - 2)
        return cls(m, r, C)


def kerdock_matrix(a, ctx):
    ctx.check(a)
    return gram_matrix(lambda x, y: ctx.trace(ctx.mul(a, ctx.mul(x, y))), ctx)


def dg_matrix(a, t, ctx):
    ctx.check(a)
    if not 1 <= t <= max_r(ctx.m):
        raise ValueError(f"t={t} outside [1, {max_r(ctx.m)}] for m={ctx.m}")

    def form(x, y):
        s = ctx.mul(x, ctx.pow2k(y, t)) ^ ctx.mul(ctx.pow2k(x, t), y)
        return ctx.trace(ctx.mul(a, s))

    return gram_matrix(form, ctx)


def _upper(P):
    """Pack the upper triangle (diagonal included) of a symmetric matrix."""
    m = P.shape[0]
    iu = np.triu_indices(m)
    return bits_to_int(P[iu])


class Codebook:
    """ID <-> (P, b) bijection for the first C sequences of the (m, r) space.

    ``basis[g * m + i]`` is the component matrix selected by bit i of
    group g (g = 0 Kerdock, g = t for DG(m, t)).
    """

    def __init__(self, params):
        self.params = params
        m, r = params.m, params.r
        self.ctx = field_context(m)
        if m % 2 == 0 and r > 0:
            raise ConstructionError(f"even m={m} is only supported with r=0")

        mats = []
        for g in range(r + 1):
            for i in range(m):
                if g == 0:
                    mats.append(kerdock_matrix(1 << i, self.ctx))
                else:
                    mats.append(dg_matrix(1 << i, g, self.ctx))
        self.basis = np.array(mats, dtype=np.uint8)
        self.basis.flags.writeable = False
        self.packed_basis = tuple(pack_columns(M) for M in self.basis)
        self._pivots = self._eliminate()
        if m % 2 == 0:
            _check_even_kerdock(m)

    def _eliminate(self):
        pivots = []
        for k, M in enumerate(self.basis):
            if not is_symmetric(M):
                raise ConstructionError(f"generator {k} is not symmetric")
            v, c = _upper(M), 1 << k
            for bit, pv, pc in pivots:
                if v & bit:
                    v ^= pv
                    c ^= pc
            if v == 0:
                raise ConstructionError(f"generator {k} is linearly dependent")
            pivots.append((v & -v, v, c))
        return pivots

    @property
    def m(self):
        return self.params.m

    @property
    def r(self):
        return self.params.r

    @property
    def C(self):
        return self.params.C

    @property
    def N(self):
        return self.params.N

    def matrix_from_index(self, index):
        """XOR of the generators selected by the bits of ``index``."""
        P = np.zeros((self.m, self.m), dtype=np.uint8)
        k = 0
        while index:
            if index & 1:
                P ^= self.basis[k]
            index >>= 1
            k += 1
        return P

    def matrix_index(self, P):
        P = np.asarray(P, dtype=np.uint8)
        if P.shape != (self.m, self.m) or not is_symmetric(P):
            raise InvalidP("P must be a symmetric m x m binary matrix")
        v, c = _upper(P), 0
        for bit, pv, pc in self._pivots:
            if v & bit:
                v ^= pv
                c ^= pc
        if v:
            raise InvalidP("P is outside the DG span of this codebook")
        return c

    def id_to_pb(self, uid):
        if not 0 <= uid < self.C:
            raise ValueError(f"id {uid} outside [0, {self.C})")
        b = int_to_bits(uid & (self.N - 1), self.m)
        return self.matrix_from_index(uid >> self.m), b

    def pb_to_id(self, P, b):
        b = np.asarray(b)
        if b.shape != (self.m,):
            raise ValueError("b must have length m")
        return (self.matrix_index(P) << self.m) | bits_to_int(b)

    def sequence(self, uid):
        return rm_sequence(*self.id_to_pb(uid))

    def level(self, uid):
        """Space level of an ID: 1 for a single P, 2 Kerdock, l for DG(m, l-2)."""
        hi = uid >> self.m
        return 1 if hi == 0 else 2 + (hi.bit_length() - 1) // self.m

    def level_matrices(self, level):
        """All P matrices of the given space level (level 1 is just P = 0)."""
        if not 1 <= level <= self.r + 2:
            raise ValueError(f"level {level} outside [1, {self.r + 2}]")
        count = 1 << (self.m * (level - 1))
        return np.array([self.matrix_from_index(i) for i in range(count)], dtype=np.uint8)


@lru_cache(maxsize=None)
def _check_even_kerdock(m):
    # every nonzero member (equivalently every pairwise difference) must be nonsingular
    ctx = field_context(m)
    for a in range(1, 1 << m):
        if gf2_rank(kerdock_matrix(a, ctx)) != m:
            raise ConstructionError(f"Kerdock rank check failed at m={m}, a={a}")
    return True


@lru_cache(maxsize=None)
def codebook(m, r, C):
    return Codebook(RmParams(m, r, C))


def id_to_pb(uid, cb):
    return cb.id_to_pb(uid)


def pb_to_id(P, b, cb):
    return cb.pb_to_id(P, b)


def rm_sequence(P, b):
    """phi_{P,b}(x) = (-1)^wt(b) / sqrt(2^m) * i^((2b + Px)^T x), x LSB-first."""
    P = np.asarray(P, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    m = b.shape[0]
    if P.shape != (m, m):
        raise ValueError(f"P has shape {P.shape}, expected ({m}, {m})")
    if not np.array_equal(P, P.T):
        raise ValueError("P must be symmetric")
    X = index_bits(m)
    quad = ((X @ P) * X).sum(axis=1)
    e = (quad + 2 * (X @ b)) % 4
    sign = -1.0 if b.sum() % 2 else 1.0
    return sign / math.sqrt(1 << m) * _QUARTER_TURNS[e]


def table_max_coherence(m, level):
    """Max coherence of a space level: 0 for one P, 2^-(m - 2(l-2))/2 above."""
    if level == 1:
        return 0.0
    return 2.0 ** (-(m - 2 * (level - 2)) / 2)


def _pair_coherence(phi_a, phi_b):
    # |<phi_{P,b}, phi_{Q,b'}>| depends on b xor b' only: one FWHT covers all pairs
    from .transforms import fwht

    return np.abs(fwht(phi_a * np.conj(phi_b)))


def level_coherence(m, r, level, sample_pairs=200, rng=None, exhaustive=None):
    """Largest |<s1, s2>| over distinct sequences of a space level.

    Pairs with the same P are orthogonal, so for levels >= 2 only P != Q
    pairs are scanned.  Returns (max_coherence, pairs_checked, exhaustive).
    """
    cb = codebook(m, r, 1 << (m * (r + 2)))
    if not 1 <= level <= r + 2:
        raise ValueError(f"level {level} outside [1, {r + 2}]")
    zero_b = np.zeros(m, dtype=np.uint8)
    if level == 1:
        # orthogonality inside the single-P space: off-diagonal Gram entries
        S = np.array([rm_sequence(np.zeros((m, m), dtype=np.uint8), int_to_bits(b, m))
                      for b in range(cb.N)])
        G = np.abs(S.conj() @ S.T)
        np.fill_diagonal(G, 0.0)
        return float(G.max()), cb.N * (cb.N - 1) // 2, True

    count = 1 << (m * (level - 1))
    total = count * (count - 1) // 2
    if exhaustive is None:
        exhaustive = m <= 5
    best = 0.0
    if exhaustive:
        phi = np.array([rm_sequence(cb.matrix_from_index(i), zero_b) for i in range(count)])
        for i in range(count - 1):
            best = max(best, float(_pair_coherence(phi[i], phi[i + 1:]).max()))
        return best, total, True

    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(sample_pairs):
        i, j = rng.choice(count, size=2, replace=False)
        a = rm_sequence(cb.matrix_from_index(int(i)), zero_b)
        b = rm_sequence(cb.matrix_from_index(int(j)), zero_b)
        best = max(best, float(_pair_coherence(a, b).max()))
    return best, sample_pairs, False


def coherence(s1, s2):
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    if s1.shape != s2.shape:
        raise ValueError("sequences differ in length")
    return float(abs(np.vdot(s1, s2)))


def hex_rows(P):
    """Colon-joined hex of each row, row i encoded LSB-first over columns."""
    width = max(1, math.ceil(P.shape[0] / 4))
    return ":".join(f"{bits_to_int(row):0{width}x}" for row in P)


def export_codebook(cb, fh, ids=None):
    """Write ``id,P_rows,b`` CSV rows.

    P_rows joins one hex integer per row, row i encoded LSB-first over
    columns (bit j = P[i][j]); b is the integer of the LSB-first b vector.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id", "P_rows", "b"])
    for uid in (range(cb.C) if ids is None else ids):
        P, b = cb.id_to_pb(uid)
        writer.writerow([uid, hex_rows(P), bits_to_int(b)])


def parse_hex_rows(text, m):
    rows = [int(tok, 16) for tok in text.split(":")]
    if len(rows) != m:
        raise ValueError(f"expected {m} rows, got {len(rows)}")
    return np.array([int_to_bits(v, m) for v in rows], dtype=np.uint8)
