"""Successive-interference-cancellation detection of RM sequences.

Each SIC iteration computes the m chirp spectra of the residual once,
recovers several candidate P matrices under different column orders,
attaches the strongest b to each, scores the candidates, and cancels the
winner jointly with all earlier detections by least squares.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import transforms
from .codebook import InvalidP, hex_rows, rm_sequence
from .gf import columns_to_int, gf2_rank, index_bits, int_to_bits, is_symmetric, unpack_columns

MODES = ("known-k", "residual-threshold")
RULES = ("distance", "residual-energy")
COLUMN_SEARCH = ("symmetric", "span")


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class DetectorConfig:
    mode: str = "known-k"
    k: int = None
    epsilon: float = 0.0
    t_max: int = 64
    p_max: int = 4
    decision_rule: str = "distance"
    reshuffle_limit: int = 8
    column_search: str = "span"
    refine_rounds: int = 0
    restarts: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.decision_rule not in RULES:
            raise ValueError(f"decision_rule must be one of {RULES}, got {self.decision_rule!r}")
        if self.column_search not in COLUMN_SEARCH:
            raise ValueError(f"column_search must be one of {COLUMN_SEARCH}, got {self.column_search!r}")
        if self.mode == "known-k" and (self.k is None or self.k < 1):
            raise ValueError("known-k mode needs k >= 1")
        if self.p_max < 1 or self.t_max < 1:
            raise ValueError("p_max and t_max must be >= 1")
        if min(self.epsilon, self.reshuffle_limit, self.refine_rounds, self.restarts) < 0:
            raise ValueError("epsilon, reshuffle_limit, refine_rounds and restarts must be non-negative")


def residual_epsilon(m, sigma):
    """Stopping threshold on the residual norm for per-sample noise std sigma."""
    return 1.1 * np.sqrt(1 << m) * sigma


@dataclass
class Candidate:
    P: np.ndarray
    b: np.ndarray
    score: float = None
    amplitude: float = 0.0


@dataclass
class DetectedUser:
    id: int
    P: np.ndarray
    b: np.ndarray
    gain: complex
    score: float = None
    iteration: int = 0


@dataclass
class DetectionReport:
    users: list = field(default_factory=list)
    residual_energy: list = field(default_factory=list)
    complete: bool = True

    @property
    def ids(self):
        return [u.id for u in self.users]

    def to_dict(self):
        return {
            "complete": self.complete,
            "users": [
                {
                    "id": u.id,
                    "P_rows": hex_rows(u.P),
                    "b": int(sum(int(v) << i for i, v in enumerate(u.b))),
                    "gain_re": float(np.real(u.gain)),
                    "gain_im": float(np.imag(u.gain)),
                    "score": None if u.score is None else float(u.score),
                    "iteration": u.iteration,
                }
                for u in self.users
            ],
            "residual_energy": [float(e) for e in self.residual_energy],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _walsh_peaks(Y, n):
    """Indices of the n largest |Y|, descending, ties to the lowest index."""
    mag = np.abs(Y)
    order = np.lexsort((np.arange(mag.size), -mag))
    return order[:n], mag


def detect_level1(y, P, k):
    """All users share P: the k strongest Walsh peaks of y * conj(phi_{P,0})."""
    y = np.asarray(y)
    m = y.size.bit_length() - 1
    if k > y.size:
        raise ValueError(f"k={k} exceeds the {y.size} sequences of one P")
    Y = transforms.fwht(y * np.conj(rm_sequence(P, np.zeros(m, dtype=np.uint8))))
    idx, mag = _walsh_peaks(Y, k)
    return [(int_to_bits(int(i), m), float(mag[i])) for i in idx]


def column_spectra(y):
    """Y_{e_j} = fwht(y(x + e_j) * conj(y(x))) for j = 1..m, stacked as (m, N)."""
    y = np.asarray(y, dtype=complex)
    m = y.size.bit_length() - 1
    prods = np.empty((m, y.size), dtype=complex)
    cy = np.conj(y)
    for j in range(1, m + 1):
        prods[j - 1] = transforms.shift_by_unit(y, j) * cy
    return transforms.fwht(prods, inplace=True)


def recover_p(spectra, order, cb=None):
    """Assemble P column by column in ``order`` (0-based column indices).

    Column j is the argmax of |Y_{e_j}| restricted to indices whose bit i
    equals the already fixed entry P[j][i] for every earlier column i.
    Returns None when ``cb`` is given and the result fails validate_p.
    """
    mags = np.abs(spectra)
    m, n = mags.shape
    bits = index_bits(m)
    cols = {}
    for j in order:
        allowed = np.ones(n, dtype=bool)
        for i, col in cols.items():
            allowed &= bits[:, i] == ((col >> j) & 1)
        cols[j] = int(np.argmax(np.where(allowed, mags[j], -1.0)))
    P = np.array([[(cols[j] >> i) & 1 for j in range(m)] for i in range(m)], dtype=np.uint8)
    assert is_symmetric(P), "symmetry-constrained recovery produced an asymmetric P"
    if cb is not None and not validate_p(P, cb):
        return None
    return P


class SpanTracker:
    """Codebook members still consistent with the columns fixed so far.

    The set is ``base + span(free)`` with every matrix packed into one int,
    column j occupying bits [j*m, (j+1)*m).  Only generators reachable by
    IDs below C take part.
    """

    def __init__(self, cb):
        self.m = cb.m
        self.mask = (1 << cb.m) - 1
        self.base = 0
        self.free = list(cb.packed_basis[:((cb.C - 1) >> cb.m).bit_length()])

    def _col(self, packed, j):
        return (packed >> (int(j) * self.m)) & self.mask

    def options(self, j):
        """Reachable column-j values, the member offsets producing them, and the kernel."""
        pivots, kernel = [], []
        for f in self.free:
            v = self._col(f, j)
            for pv, pf in pivots:
                if v ^ pv < v:
                    v ^= pv
                    f ^= pf
            if v:
                pivots.append((v, f))
                pivots.sort(reverse=True)
            else:
                kernel.append(f)
        values, offsets = [self._col(self.base, j)], [0]
        for pv, pf in pivots:
            values += [v ^ pv for v in values]
            offsets += [o ^ pf for o in offsets]
        return values, offsets, kernel

    def choose(self, j, mags_j):
        values, offsets, kernel = self.options(j)
        vals = np.array(values)
        scores = mags_j[vals]
        best = np.flatnonzero(scores == scores.max())
        pick = best[np.argmin(vals[best])]
        self.base ^= offsets[pick]
        self.free = kernel
        return int(vals[pick])

    def matrix(self):
        return unpack_columns(self.base, self.m)


def recover_p_span(spectra, order, cb):
    """Like recover_p, but column j only ranges over values some codebook
    member can take given the columns already fixed."""
    mags = np.abs(spectra)
    tracker = SpanTracker(cb)
    for j in order:
        tracker.choose(j, mags[j])
    return tracker.matrix()


def _b_spectrum(y, P):
    m = P.shape[0]
    return transforms.fwht(np.asarray(y) * np.conj(rm_sequence(P, np.zeros(m, dtype=np.uint8))))


def recover_b(y, P):
    Y = _b_spectrum(y, P)
    mag = np.abs(Y)
    i = int(np.argmax(mag))
    return int_to_bits(i, P.shape[0]), float(mag[i])


def distance_score(P, spectra):
    """Sum over columns of the 1-based rank of P's column in its spectrum."""
    mags = np.abs(spectra)
    m, n = mags.shape
    idx = np.arange(n)
    total = 0
    for j, c in enumerate(columns_to_int(P)):
        row = mags[j]
        v = row[c]
        total += 1 + int(np.count_nonzero(row > v)) + int(np.count_nonzero((row == v) & (idx < c)))
    return total


def ls_channel_estimate(y, sequences):
    S = np.column_stack([np.asarray(s, dtype=complex) for s in sequences])
    if S.shape[1] > S.shape[0]:
        raise RankDeficientError("more sequences than samples")
    h, _, rank, sv = np.linalg.lstsq(S, y, rcond=None)
    if rank < S.shape[1] or sv[-1] < 1e-9 * sv[0]:
        raise RankDeficientError("detected sequences are linearly dependent")
    return h


def _residual_energy(y, sequences):
    h = ls_channel_estimate(y, sequences)
    S = np.column_stack(sequences)
    res = y - S @ h
    return float(np.vdot(res, res).real)


def residual_score(y, detected, cand):
    seqs = [rm_sequence(u.P, u.b) for u in detected] + [rm_sequence(cand.P, cand.b)]
    return _residual_energy(np.asarray(y, dtype=complex), seqs)


def validate_p(P, cb):
    if not is_symmetric(P):
        return False
    rank = gf2_rank(P)
    if 0 < rank < cb.m - 2 * cb.r:
        return False
    try:
        cb.matrix_index(P)
    except InvalidP:
        return False
    return True


class _Search:
    """Candidate generation and acceptance for one SIC iteration."""

    def __init__(self, y, residual, detected, cb, cfg, rng, banned=()):
        self.y = y
        self.residual = residual
        self.detected = detected
        self.cb = cb
        self.cfg = cfg
        self.rng = rng
        self.level1 = level1 = cb.C <= cb.N
        self.taken = {u.id for u in detected} | set(banned)
        self.spectra = None if level1 else column_spectra(residual)
        self._valid = {}

    def make(self, order):
        m = self.cb.m
        if self.level1:
            P = np.zeros((m, m), dtype=np.uint8)
        elif self.cfg.column_search == "span":
            P = recover_p_span(self.spectra, order, self.cb)
        else:
            P = recover_p(self.spectra, order)
        b, amp = recover_b(self.residual, P)
        cand = Candidate(P, b, amplitude=amp)
        cand.score = self.score(cand)
        return cand

    def score(self, cand):
        if self.level1:
            return -cand.amplitude
        if self.cfg.decision_rule == "distance":
            return distance_score(cand.P, self.spectra)
        try:
            return residual_score(self.y, self.detected, cand)
        except RankDeficientError:
            return np.inf

    def user_id(self, cand):
        """ID of an acceptable candidate, else None."""
        key = cand.P.tobytes()
        if key not in self._valid:
            self._valid[key] = validate_p(cand.P, self.cb)
        if not self._valid[key]:
            return None
        uid = self.cb.pb_to_id(cand.P, cand.b)
        if uid >= self.cb.C or uid in self.taken:
            return None
        return uid

    def orders(self, count):
        m = self.cb.m
        for p in range(count):
            yield np.arange(m) if p == 0 else self.rng.permutation(m)


def _next_user(search):
    cfg = search.cfg
    n_first = 1 if search.level1 else cfg.p_max
    pool = [search.make(order) for order in search.orders(n_first)]
    pool.sort(key=lambda c: c.score)
    for cand in pool:
        uid = search.user_id(cand)
        if uid is not None:
            return cand, uid

    if not search.level1:
        for _ in range(cfg.reshuffle_limit):
            cand = search.make(search.rng.permutation(search.cb.m))
            pool.append(cand)
            uid = search.user_id(cand)
            if uid is not None:
                return cand, uid
        pool.sort(key=lambda c: c.score)

    # fall back to the runner-up b peak of each candidate P
    m = search.cb.m
    seen = set()
    for cand in pool:
        key = cand.P.tobytes()
        if key in seen:
            continue
        seen.add(key)
        idx, mag = _walsh_peaks(_b_spectrum(search.residual, cand.P), 2)
        alt = Candidate(cand.P, int_to_bits(int(idx[1]), m), amplitude=float(mag[idx[1]]))
        alt.score = search.score(alt)
        uid = search.user_id(alt)
        if uid is not None:
            return alt, uid
    return None, None


def _fit(y, users):
    """Joint LS gains for users and the residual energy left in y."""
    if not users:
        return np.zeros(0, dtype=complex), float(np.vdot(y, y).real)
    S = np.column_stack([rm_sequence(u.P, u.b) for u in users])
    gains = ls_channel_estimate(y, list(S.T))
    res = y - S @ gains
    return gains, float(np.vdot(res, res).real)


def _greedy(y, cb, cfg, rng, floor, banned=()):
    """Plain SIC: one new user per iteration, joint LS cancellation."""
    report = DetectionReport(residual_energy=[float(np.vdot(y, y).real)])
    residual = y
    detected = []
    energy = report.residual_energy[0]
    for t in range(1, cfg.t_max + 1):
        if cfg.mode == "known-k" and len(detected) >= cfg.k:
            break
        if energy <= floor:
            break
        # banned IDs only bind the first pick; restarts use them to leave a bad first choice
        search = _Search(y, residual, detected, cb, cfg, rng, banned if t == 1 else ())
        cand, uid = _next_user(search)
        if cand is None:
            report.complete = False
            break
        detected.append(DetectedUser(uid, cand.P, cand.b, 0j, cand.score, t))
        try:
            gains, energy = _fit(y, detected)
        except RankDeficientError:
            detected.pop()
            report.complete = False
            break
        residual = y - np.column_stack([rm_sequence(u.P, u.b) for u in detected]) @ gains
        report.residual_energy.append(energy)
        for u, g in zip(detected, gains):
            u.gain = complex(g)
    report.users = detected
    return report


def _refine(y, cb, cfg, rng, report, floor):
    """Leave-one-out swaps: re-detect each user against the others' residual
    and keep the replacement whenever the total residual energy drops."""
    users = list(report.users)
    energy = report.residual_energy[-1]
    for _ in range(cfg.refine_rounds):
        improved = False
        for i in range(len(users)):
            if energy <= floor:
                break
            others = users[:i] + users[i + 1:]
            gains, _ = _fit(y, others)
            residual = y - (np.column_stack([rm_sequence(u.P, u.b) for u in others]) @ gains
                            if others else 0)
            cand, uid = _next_user(_Search(y, residual, others, cb, cfg, rng))
            if cand is None or uid == users[i].id:
                continue
            trial = others[:i] + [DetectedUser(uid, cand.P, cand.b, 0j, cand.score, users[i].iteration)] + others[i:]
            try:
                gains, e = _fit(y, trial)
            except RankDeficientError:
                continue
            if e < energy * (1 - 1e-9):
                users, energy, improved = trial, e, True
                for u, g in zip(users, gains):
                    u.gain = complex(g)
        if not improved:
            break
    if energy < report.residual_energy[-1]:
        report.residual_energy.append(energy)
    report.users = users
    return report


def sic_detect(y, cb, cfg, rng=None):
    """Detect users in y by SIC with shuffled column recovery.

    Returns a DetectionReport; ``complete`` is False when an iteration
    could not produce a new valid user and the loop stopped early.
    With ``cfg.refine_rounds`` > 0 the greedy result is polished by
    leave-one-out swaps; with ``cfg.restarts`` > 0 an unexplained residual
    triggers new greedy runs that exclude the earlier first picks, and the
    run with the lowest residual energy wins.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (cb.N,):
        raise ValueError(f"received signal must have length {cb.N}, got {y.shape}")
    if rng is None:
        rng = np.random.default_rng(0)
    floor = max(cfg.epsilon ** 2, 1e-24 * float(np.vdot(y, y).real))

    best = _greedy(y, cb, cfg, rng, floor)
    if cfg.refine_rounds:
        best = _refine(y, cb, cfg, rng, best, floor)
    banned = set()
    first = best.users[0].id if best.users else None
    for _ in range(cfg.restarts):
        if best.residual_energy[-1] <= floor or first is None:
            break
        banned.add(first)
        alt = _greedy(y, cb, cfg, rng, floor, banned)
        first = alt.users[0].id if alt.users else None
        if cfg.refine_rounds:
            alt = _refine(y, cb, cfg, rng, alt, floor)
        if alt.residual_energy[-1] < best.residual_energy[-1]:
            best = alt
    return best
