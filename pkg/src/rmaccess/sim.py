"""Monte Carlo link-level harness for grant-free access with RM preambles.

SNR convention: snr_db = 10 log10(E|h|^2 / 2^m / sigma^2), i.e. the average
per-sample power of one user's sequence over the per-complex-sample noise
variance.  Every trial draws from its own generator seeded by
(seed, trial index), so results do not depend on how trials are scheduled.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .codebook import RmParams, codebook
from .detector import DetectorConfig, sic_detect

CHANNELS = ("awgn", "flat-rayleigh")


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "flat-rayleigh"
    snr_db: float = 7.0

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ValueError(f"channel kind must be one of {CHANNELS}, got {self.kind!r}")
        # +inf is accepted and means noiseless
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db}")

    def noise_variance(self, m):
        if self.snr_db == math.inf:
            return 0.0
        return 1.0 / ((1 << m) * 10 ** (self.snr_db / 10))


@dataclass(frozen=True)
class TrialOutcome:
    collided_users: int = 0
    missed_users: int = 0
    false_alarms: int = 0

    @property
    def total_failures(self):
        return self.collided_users + self.missed_users


@dataclass
class ExperimentConfig:
    m: int
    C: int
    k: int
    r: int = None
    channel: ChannelModel = field(default_factory=ChannelModel)
    trials: int = 1000
    seed: int = 0
    detector: DetectorConfig = None

    def __post_init__(self):
        if self.r is None:
            self.r = RmParams.auto(self.m, self.C).r
        RmParams(self.m, self.r, self.C)
        if self.trials < 1 or self.k < 1:
            raise ValueError("trials and k must be >= 1")
        if self.detector is None:
            self.detector = DetectorConfig(k=self.k)
        elif self.detector.mode == "known-k" and self.detector.k != self.k:
            self.detector = replace(self.detector, k=self.k)


def collision_rate_formula(k, C):
    """Probability that a given user's sequence is also picked by another user.

    The binomial sum sum_{i>=2} i*binom(k,i) C^-i ((C-1)/C)^(k-i) * C/k
    collapses to 1 - (1 - 1/C)^(k-1); log1p/expm1 keep it accurate for
    huge C.
    """
    if k < 1 or C < 1:
        raise ValueError("k and C must be >= 1")
    if C == 1:
        return 0.0 if k == 1 else 1.0
    return float(-math.expm1((k - 1) * math.log1p(-1.0 / C)))


def draw_active_set(k, C, rng):
    return [int(i) for i in rng.integers(0, C, size=k)]


def draw_active_sets(trials, k, C, rng):
    """Batched draw: (trials, k) array of IDs, with replacement."""
    return rng.integers(0, C, size=(trials, k))


def count_collided(ids):
    """Per row, the number of users whose ID is shared with another user."""
    ids = np.sort(np.atleast_2d(ids), axis=1)
    same = ids[:, 1:] == ids[:, :-1]
    shared = np.zeros(ids.shape, dtype=bool)
    shared[:, 1:] |= same
    shared[:, :-1] |= same
    return shared.sum(axis=1)


def build_received_signal(ids, cb, channel, rng):
    """y = sum_l h_l phi_l + n for the given active IDs."""
    if channel.kind == "awgn":
        gains = np.ones(len(ids), dtype=complex)
    else:
        gains = (rng.standard_normal(len(ids)) + 1j * rng.standard_normal(len(ids))) / math.sqrt(2)
    y = np.zeros(cb.N, dtype=complex)
    for uid, h in zip(ids, gains):
        y += h * cb.sequence(uid)
    var = channel.noise_variance(cb.m)
    if var > 0:
        y += math.sqrt(var / 2) * (rng.standard_normal(cb.N) + 1j * rng.standard_normal(cb.N))
    return y, gains


def score_trial(active_ids, detected):
    """Collisions, misses and false alarms of one access attempt.

    Collided users count as failures even if their shared sequence is
    detected.  ``detected`` holds DetectedUser objects or plain IDs.
    """
    det = {getattr(u, "id", u) for u in detected}
    counts = {}
    for uid in active_ids:
        counts[uid] = counts.get(uid, 0) + 1
    collided = sum(c for c in counts.values() if c > 1)
    missed = sum(1 for uid, c in counts.items() if c == 1 and uid not in det)
    false_alarms = len(det - set(counts))
    return TrialOutcome(collided, missed, false_alarms)


def trial_generators(seed, index):
    ss = np.random.SeedSequence([seed, index])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_trial(cfg, index):
    traffic, chan, det = trial_generators(cfg.seed, index)
    cb = codebook(cfg.m, cfg.r, cfg.C)
    ids = draw_active_set(cfg.k, cfg.C, traffic)
    y, _ = build_received_signal(ids, cb, cfg.channel, chan)
    report = sic_detect(y, cb, cfg.detector, det)
    return score_trial(ids, report.users)


def _run_chunk(args):
    cfg, lo, hi = args
    out = []
    for i in range(lo, hi):
        o = run_trial(cfg, i)
        out.append((o.collided_users, o.missed_users, o.false_alarms))
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: int
    collision_rate: float
    collision_se: float
    miss_rate: float
    miss_se: float
    false_alarm_rate: float
    false_alarm_se: float
    failure_rate: float
    failure_se: float
    per_trial: np.ndarray = field(repr=False, default=None)

    def metrics(self):
        d = asdict(self)
        d.pop("config")
        d.pop("per_trial")
        return d

    def to_dict(self):
        cfg = self.config
        return {
            "config": {
                "m": cfg.m,
                "r": cfg.r,
                "C": cfg.C,
                "k": cfg.k,
                "trials": cfg.trials,
                "seed": cfg.seed,
                "channel": asdict(cfg.channel),
                "detector": asdict(cfg.detector),
            },
            "metrics": self.metrics(),
        }


def _mean_se(x):
    n = len(x)
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def run_experiment(cfg, threads=1):
    """Run cfg.trials seeded trials and aggregate per-user rates.

    Rates are per active-user slot, averaged over trials, with the
    standard error of the per-trial fractions.
    """
    if threads > 1:
        step = math.ceil(cfg.trials / (threads * 4))
        chunks = [(cfg, lo, min(lo + step, cfg.trials)) for lo in range(0, cfg.trials, step)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = [row for part in pool.map(_run_chunk, chunks) for row in part]
    else:
        rows = _run_chunk((cfg, 0, cfg.trials))
    counts = np.array(rows, dtype=float).reshape(-1, 3)
    frac = counts / cfg.k
    col, col_se = _mean_se(frac[:, 0])
    miss, miss_se = _mean_se(frac[:, 1])
    fa, fa_se = _mean_se(frac[:, 2])
    fail, fail_se = _mean_se(frac[:, 0] + frac[:, 1])
    return ExperimentResult(cfg, cfg.trials, col, col_se, miss, miss_se, fa, fa_se, fail, fail_se,
                            per_trial=counts)
