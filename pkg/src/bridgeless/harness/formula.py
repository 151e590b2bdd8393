"""Closed-form probability that a lone request is finalized within ``r`` sessions."""

from __future__ import annotations

from fractions import Fraction


class DomainError(ValueError):
    pass


def p_honest_committee(n: int, t: int) -> Fraction:
    """Chance that one session elects an honest proposer and ``t`` honest co-signers.

    All ``n - 1`` non-proposers accept (adversaries included), and the ``t``
    co-signers are drawn without replacement from them.
    """
    if not 0 <= t < n:
        raise DomainError(f"need 0 <= t < n, got n={n}, t={t}")
    p = Fraction(n - t, n)
    for i in range(1, t + 1):
        p *= Fraction(n - i - t, n - i)
    return p


def pliveness_exact(n: int, t: int, r: int) -> Fraction:
    if r < 1:
        raise DomainError(f"need r >= 1, got {r}")
    return 1 - (1 - p_honest_committee(n, t)) ** r


def pliveness_formula(n: int, t: int, r: int) -> float:
    return float(pliveness_exact(n, t, r))
