import os

import pytest
from hypothesis import HealthCheck, settings

from bridgeless.harness.world import ChainSpec, build_world, deposit
from bridgeless.model import ProtocolParams
from bridgeless.tss import OracleTSS
from bridgeless.validator import Bridge

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

KIND = {"evm-sim": "evm", "btc-sim": "utxo", "zano-sim": "burnEmit"}


def make_world(*chain_ids, liquidity=100_000, balance=10_000, confirmations=None):
    specs = []
    for cid in chain_ids:
        spec = ChainSpec(cid, KIND[cid], confirmations=(confirmations or {}).get(cid))
        spec.balances = {spec.user(i): balance for i in range(4)}
        if spec.kind.value != "burnEmit":
            spec.bridge_liquidity = liquidity
        specs.append(spec)
    return build_world(specs)


def make_bridge(n=4, t=None, flags=(), source="evm-sim", target="zano-sim", amount=50,
                first_sid=1, mode="protocol", seed=0, submit=True, bury=True, committee_size=None):
    """A bridge with one deposit from ``source`` to ``target`` (already buried by default)."""
    world = make_world(source, target)
    dst = world.specs[target]
    dep = deposit(world, source, world.specs[source].user(0), amount, target, dst.user(0))
    if bury:
        world.advance_all(max(world.confirmations.values()))
    params = ProtocolParams(n=n, t=t, committee_size=committee_size)
    bridge = Bridge(params, world.chains, world.tokens, flags=flags, seed=seed, mode=mode,
                    first_sid=first_sid, confirmations=world.confirmations, log_events=True)
    if submit:
        bridge.client_submit(dep, range(n))
    return bridge, dep, world


@pytest.fixture
def engine():
    return OracleTSS(seed=1234, committee_size=2)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
