"""Randomized adversarial scenarios and the observer self-test."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import permutations

from ..model import max_faults
from ..validator import Flag
from .scenario import ForgeSpec, ReorgSpec, RequestSpec, ScenarioConfig, ScenarioResult, run_scenario
from .world import default_chains

CHAIN_IDS = ("evm-sim", "btc-sim", "zano-sim")
CHAIN_PAIRS = tuple(permutations(CHAIN_IDS, 2))
ALL_FLAGS = tuple(f.value for f in Flag)


def random_scenario(seed: int) -> ScenarioConfig:
    """One draw from the adversarial safety suite (n in [4, 13], t = max_faults(n))."""
    rng = random.Random(seed)
    n = rng.randint(4, 13)
    t = max_faults(n)
    faulty = rng.sample(range(n), rng.randint(0, t))
    validators = [[] for _ in range(n)]
    for i in faulty:
        validators[i] = sorted(rng.sample(ALL_FLAGS, rng.randint(1, 2)))
    max_sessions = rng.randint(2, 4)
    chains = default_chains()
    specs = {c.id: c for c in chains}
    requests = []
    for _ in range(rng.randint(1, 3)):
        src, dst = rng.choice(CHAIN_PAIRS)
        requests.append(RequestSpec(
            src, dst, rng.randint(1, 500),
            sender=specs[src].user(rng.randint(0, 3)),
            submit_to=sorted(rng.sample(range(n), rng.randint(1, n))),
            session=rng.randrange(max_sessions),
            client_withdraw=dst == "evm-sim" and rng.random() < 0.3,
        ))
    reorgs = [ReorgSpec(rng.randrange(1, max_sessions), "btc-sim") for _ in range(rng.randint(0, 2))]
    forgeries = []
    if faulty and rng.random() < 0.3:
        forgeries.append(ForgeSpec(rng.randrange(max_sessions), rng.choice(CHAIN_IDS), rng.randint(1, 500)))
    return ScenarioConfig(
        seed=rng.getrandbits(63), n=n, t=t, mode=rng.choice(("protocol", "monteCarlo")),
        chains=chains, validators=validators, requests=requests, max_sessions=max_sessions,
        first_sid=rng.randint(1, 10**6), fillers=rng.randint(1, 3), reorgs=reorgs,
        forgeries=forgeries, log_events=False,
    )


@dataclass
class SelftestCase:
    name: str
    expect_violation: bool
    result: ScenarioResult = field(repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.result.violations) == self.expect_violation


def selftest_cases(seed: int = 7) -> list[SelftestCase]:
    """Observer suites: honest runs stay clean and each ablation is caught."""
    cases = []
    honest = ScenarioConfig(seed=seed, requests=[RequestSpec(s, d, 40 + i) for i, (s, d) in enumerate(CHAIN_PAIRS)],
                            max_sessions=7, fillers=1, reorgs=[ReorgSpec(2, "btc-sim")])
    cases.append(SelftestCase("honest six chain pairs", False, run_scenario(honest)))
    replay = ScenarioConfig(seed=seed, requests=[RequestSpec("btc-sim", "evm-sim", 60, double_submit=True)], max_sessions=2)
    cases.append(SelftestCase("double submit with replay protection", False, run_scenario(replay)))
    ablated = ScenarioConfig(seed=seed, requests=[RequestSpec("btc-sim", "evm-sim", 60, double_submit=True)], max_sessions=2)
    ablated.chains[0].replay_protection = False
    cases.append(SelftestCase("double submit without replay protection", True, run_scenario(ablated)))
    forge_t = ScenarioConfig(seed=seed, validators=[["arbitraryCommittee"]], forgeries=[ForgeSpec(0, "evm-sim", 500)],
                             max_sessions=1)
    cases.append(SelftestCase("forgery by t adversaries", False, run_scenario(forge_t)))
    forge_t1 = ScenarioConfig(seed=seed, validators=[["arbitraryCommittee"], ["arbitraryCommittee"]], unsafe=True,
                              forgeries=[ForgeSpec(0, "evm-sim", 500)], max_sessions=1)
    cases.append(SelftestCase("forgery by t+1 adversaries (unsafe)", True, run_scenario(forge_t1)))
    lying = ScenarioConfig(seed=seed, lying_provider=True, max_sessions=2)
    cases.append(SelftestCase("lying EVM provider", True, run_scenario(lying)))
    return cases
