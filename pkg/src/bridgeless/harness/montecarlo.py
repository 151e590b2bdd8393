"""Monte Carlo estimate of the finalization-within-r-sessions probability.

Every trial is a full protocol simulation with a lone request pending at all
validators, a random proposer per session, ``t`` adversaries that accept
every proposal and then never approve signing, and an independent session
offset so the sid-seeded committee draws differ across trials.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Sequence

from ..model import ProtocolParams, encode_fields, sha256
from ..validator import Bridge, Flag, OutcomeKind
from .formula import pliveness_formula
from .world import ChainSpec, build_world, deposit

CONFIDENCE = 0.99
TOLERANCE = 0.01


@dataclass(frozen=True)
class LivenessPoint:
    r: int
    analytic: float
    empirical: float
    trials: int
    ci_half_width: float

    def within(self, tolerance: float = TOLERANCE) -> bool:
        return abs(self.empirical - self.analytic) <= self.ci_half_width + tolerance


def binomial_half_width(p: float, trials: int, confidence: float = CONFIDENCE) -> float:
    """Normal-approximation half width of a two-sided binomial interval at ``p``."""
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    return z * math.sqrt(max(p * (1 - p), 0.0) / trials)


def trial_seed(seed: int, n: int, t: int, index: int) -> int:
    return int.from_bytes(sha256(encode_fields("mc-trial", seed, n, t, index))[:8], "big")


def run_trial(n: int, t: int, index: int, max_sessions: int = 20, seed: int = 0) -> Optional[int]:
    """Sessions needed to finalize the request, or None if ``max_sessions`` did not suffice."""
    s = trial_seed(seed, n, t, index)
    rng = random.Random(s)
    src = ChainSpec("evm-sim", "evm", confirmations=1)
    dst = ChainSpec("zano-sim", "burnEmit", confirmations=1)
    src.balances = {src.user(0): 100}
    world = build_world([src, dst])
    dep = deposit(world, src.id, src.user(0), 50, dst.id, dst.user(0))
    world.advance_all()
    bad = set(rng.sample(range(n), t))
    flags = [[Flag.ACCEPT_THEN_ABORT] if i in bad else [] for i in range(n)]
    bridge = Bridge(
        ProtocolParams(n=n, t=t), world.chains, world.tokens, flags=flags, seed=s,
        mode="monteCarlo", first_sid=rng.getrandbits(40) + 1, confirmations=world.confirmations,
    )
    bridge.client_submit(dep, range(n))
    for r in range(1, max_sessions + 1):
        if bridge.run_session().kind is OutcomeKind.FINALIZED:
            return r
    return None


def _trial_block(args: tuple[int, int, int, int, int, int]) -> list[Optional[int]]:
    n, t, start, stop, max_sessions, seed = args
    return [run_trial(n, t, i, max_sessions, seed) for i in range(start, stop)]


def first_success_sessions(n: int, t: int, trials: int, max_sessions: int = 20, seed: int = 0,
                           workers: int = 1) -> list[Optional[int]]:
    """Per-trial results, indexed by trial number regardless of ``workers``."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if workers <= 1:
        return _trial_block((n, t, 0, trials, max_sessions, seed))
    step = max(1, math.ceil(trials / (workers * 8)))
    blocks = [(n, t, a, min(a + step, trials), max_sessions, seed) for a in range(0, trials, step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order, i.e. sorted by trial index.
        parts = list(pool.map(_trial_block, blocks))
    return [x for part in parts for x in part]


def liveness_points(n: int, t: int, results: Sequence[Optional[int]], max_sessions: int) -> list[LivenessPoint]:
    trials = len(results)
    points = []
    for r in range(1, max_sessions + 1):
        hits = sum(1 for x in results if x is not None and x <= r)
        analytic = pliveness_formula(n, t, r)
        points.append(LivenessPoint(r, analytic, hits / trials, trials, binomial_half_width(analytic, trials)))
    return points


def monte_carlo_liveness(n: int, t: int, trials: int, max_sessions: int = 20, seed: int = 0,
                         workers: int = 1) -> list[LivenessPoint]:
    results = first_success_sessions(n, t, trials, max_sessions, seed, workers)
    return liveness_points(n, t, results, max_sessions)
