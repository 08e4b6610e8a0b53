"""Closed-form random-access results: contention statistics, throughput
limits, per-attempt failure probabilities and access-delay expressions.

The exact binomial forms ``(1 - 1/R)^(x-1)`` are the primary implementation;
the classical exponential approximations are exposed separately with an
``_approx`` suffix and are never substituted silently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import RaConfig


# ---------------------------------------------------------------------------
# Contention in one RAO: x contenders over R orthogonal preambles
# ---------------------------------------------------------------------------

def new_arrivals_pmf(lam_rao: float, x: int) -> float:
    """Poisson pmf of the number of fresh contenders in one RAO.

    ``lam_rao`` is the expected number of new arrivals per RAO, i.e. the
    per-path rate times the RAO period.
    """
    if lam_rao < 0:
        raise ValueError("lam_rao must be >= 0")
    if x < 0:
        return 0.0
    if lam_rao == 0.0:
        return 1.0 if x == 0 else 0.0
    return math.exp(x * math.log(lam_rao) - lam_rao - math.lgamma(x + 1))


def expected_successes(x: int, preambles: int) -> float:
    """Expected number of contenders that pick a preamble nobody else picked."""
    if x <= 1:
        return float(max(x, 0))
    return x * (1.0 - 1.0 / preambles) ** (x - 1)


def expected_successes_approx(x: int, preambles: int) -> float:
    return x * math.exp(-x / preambles)


def expected_collided(x: int, preambles: int) -> float:
    """Expected number of contenders involved in a preamble collision."""
    return x - expected_successes(x, preambles)


def collision_prob(x: int, preambles: int) -> float:
    """Probability that a tagged contender collides, given x contenders total."""
    if x < 1:
        raise ValueError("needs at least the tagged contender")
    return 1.0 - (1.0 - 1.0 / preambles) ** (x - 1)


def collision_prob_approx(x: int, preambles: int) -> float:
    return 1.0 - math.exp(-x / preambles)


def success_prob(x: int, preambles: int) -> float:
    """Probability that a tagged contender picked a unique preamble."""
    if x < 1:
        raise ValueError("needs at least the tagged contender")
    return (1.0 - 1.0 / preambles) ** (x - 1)


def success_prob_approx(x: int, preambles: int) -> float:
    return math.exp(-x / preambles)


def max_throughput(preambles: int, rao_period_ms: float) -> float:
    """Peak successful accesses per second of R parallel slotted-ALOHA channels."""
    if rao_period_ms <= 0:
        raise ValueError("rao_period_ms must be > 0")
    per_rao = preambles * (1.0 - 1.0 / preambles) ** (preambles - 1)
    return per_rao * 1000.0 / rao_period_ms


def max_throughput_approx(preambles: int, rao_period_ms: float) -> float:
    return preambles * 1000.0 / (math.e * rao_period_ms)


def stability_margin(lam_rao: float, preambles: int) -> float:
    """Offered load per RAO over the R/e stability limit; > 1 means unstable."""
    if lam_rao < 0:
        raise ValueError("lam_rao must be >= 0")
    return lam_rao / (preambles / math.e)


# ---------------------------------------------------------------------------
# Erasures and per-attempt outcome probabilities
# ---------------------------------------------------------------------------

def power_ramping_erasure(attempt: int) -> float:
    """Erasure probability 1 - e^(-a) under power ramping.

    Provided for completeness; the evaluations use a fixed erasure
    probability (full power from the first attempt).
    """
    if attempt < 1:
        raise ValueError("attempt index starts at 1")
    return 1.0 - math.exp(-attempt)


def attempt_failure_prob(x: int, preambles: int, erasure: float) -> float:
    """Failure of one attempt: collision, or erasure of a collision-free preamble."""
    if not 0.0 <= erasure < 1.0:
        raise ValueError("erasure must be in [0, 1)")
    pc = collision_prob(x, preambles)
    return pc + (1.0 - pc) * erasure


def attempt_success_prob(x: int, preambles: int, erasure: float) -> float:
    if not 0.0 <= erasure < 1.0:
        raise ValueError("erasure must be in [0, 1)")
    return success_prob(x, preambles) * (1.0 - erasure)


# ---------------------------------------------------------------------------
# Access delay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessTiming:
    """Message timing for one path, all in milliseconds.

    ``t_preamble`` and ``t_rar`` already include repetitions and the
    extended prefix.  ``rar_window_ms`` is the full response window span.
    """

    t_preamble: float = 5.6
    t_rar: float = 0.5
    t_msg3: float = 1.0
    t_msg4: float = 1.0
    t_proc1: float = 2.0
    t_proc2: float = 5.0
    t_proc3: float = 4.0
    rar_window_ms: float = 12.0
    max_backoff: float = 320.0

    @staticmethod
    def from_config(cfg: RaConfig) -> "AccessTiming":
        return AccessTiming(
            t_preamble=cfg.preamble_duration,
            t_rar=cfg.rar_duration,
            t_msg3=cfg.t_msg3, t_msg4=cfg.t_msg4,
            t_proc1=cfg.t_proc1, t_proc2=cfg.t_proc2, t_proc3=cfg.t_proc3,
            rar_window_ms=cfg.rar_window_ms,
            max_backoff=cfg.max_backoff,
        )


def min_access_delay(t: AccessTiming) -> float:
    """Best-case four-message handshake duration.

    The default budget counts the grant processing time twice and the
    preamble processing time not at all; every term is a named config
    field, so an alternative accounting is a one-line config change.
    """
    return (t.t_preamble + t.t_proc2 + t.t_rar + t.t_proc2 + t.t_proc3
            + t.t_msg3 + t.t_msg4)


def access_delay(attempts: int, t: AccessTiming, backoffs, t_extra: float = 0.0) -> float:
    """Handshake latency when success comes at attempt ``attempts``.

    ``backoffs`` holds the realized backoff draws of the failed attempts
    (length ``attempts - 1``); ``t_extra`` is the grant-queueing offset
    inside the response window.
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    if len(backoffs) != attempts - 1:
        raise ValueError("need one backoff per failed attempt")
    for b in backoffs:
        if not 0.0 <= b <= t.max_backoff:
            raise ValueError(f"backoff {b} outside [0, {t.max_backoff}]")
    retry_overhead = t.t_preamble + t.t_proc1 + t.rar_window_ms
    return (min_access_delay(t) + t_extra
            + sum(backoffs) + (attempts - 1) * retry_overhead)
