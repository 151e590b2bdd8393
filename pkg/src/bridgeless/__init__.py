"""Simulation of a validator-run cross-chain bridge (EVM, UTXO and burn/emit chains)."""

from .model import DepositData, DepositIdentifier, ProtocolParams, RequestStatus
from .validator import Bridge, Flag, SessionOutcome, Validator

__all__ = [
    "Bridge",
    "DepositData",
    "DepositIdentifier",
    "Flag",
    "ProtocolParams",
    "RequestStatus",
    "SessionOutcome",
    "Validator",
]
__version__ = "0.1.0"
