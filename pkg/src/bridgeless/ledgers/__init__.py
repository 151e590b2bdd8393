from .common import LedgerError, NotFound, decode_target, encode_target
from .burnemit import BurnEmitChain, EmitTx
from .evm import EvmChain
from .utxo import TxIn, TxOut, UtxoChain, UtxoTx

__all__ = [
    "BurnEmitChain",
    "EmitTx",
    "EvmChain",
    "LedgerError",
    "NotFound",
    "TxIn",
    "TxOut",
    "UtxoChain",
    "UtxoTx",
    "decode_target",
    "encode_target",
]
