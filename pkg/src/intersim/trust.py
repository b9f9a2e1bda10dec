"""Evidence-based trust scores and fake-vehicle detection.

Four behavioral checks produce positive / negative evidence each step:

  1. co-observation consistency (who should see the vehicle vs who reported
     an estimate of it),
  2. initial-condition consistency of the first report,
  3. dynamic-model consistency of consecutive reports,
  4. control-zone rule conformance of the reported states.

Cumulative evidence decays by a factor gamma per step; evidence from checks
that involve other vehicles is additionally discounted by the product of
those vehicles' trust at the start of the step.  Trust is the evidence ratio
tau = R / (R + P + h) with a non-informative prior weight h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

CHECKS = ("co_observation", "initial_condition", "dynamic_model", "cz_rules")


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one behavioral check for one vehicle and step."""
    positive: float = 0.0
    negative: float = 0.0
    involved: tuple = ()   # ids of other vehicles the check relied on

    def __post_init__(self):
        if self.positive < 0 or self.negative < 0:
            raise ValueError("evidence magnitudes must be >= 0")
        if self.positive > 0 and self.negative > 0:
            raise ValueError("a check yields positive or negative evidence, "
                             "not both")


@dataclass(frozen=True)
class EvidenceVector:
    co_observation: CheckResult = CheckResult()
    initial_condition: CheckResult = CheckResult()
    dynamic_model: CheckResult = CheckResult()
    cz_rules: CheckResult = CheckResult()

    def items(self):
        return [(name, getattr(self, name)) for name in CHECKS]


@dataclass(frozen=True)
class TrustParams:
    gamma: float = 0.9
    prior_h: float = 1.0
    delta: float = 0.1
    window_steps: int = 40      # eta: observation-window length
    r_magnitudes: tuple = (0.6, 0.6, 0.6, 0.6)
    p_magnitudes: tuple = (1000.0, 100.0, 50.0, 1.0)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")

    @property
    def r_max(self):
        return max(self.r_magnitudes)

    def evidence_cap(self):
        """Upper bound |B| * r_max / (1 - gamma) on cumulative R."""
        return len(CHECKS) * self.r_max / (1.0 - self.gamma)

    def trigger_threshold(self):
        """Negative evidence forcing tau below 1 - delta in one update."""
        return self.delta / (1.0 - self.delta) * self.evidence_cap()


@dataclass(frozen=True)
class TrustState:
    R: float = 0.0
    P: float = 0.0
    tau: float = 0.0
    prior_h: float = 1.0
    tau_prev: float = None
    window_len: int = 0   # consecutive steps of non-increasing sub-threshold tau


def update_trust(state, evidence, involved_taus, gamma):
    """One application of the discounted evidence recursion.

    involved_taus maps vehicle id -> trust value from the start-of-step
    snapshot; it must cover every id named by the evidence vector.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    r_sum = 0.0
    p_sum = 0.0
    for _, res in evidence.items():
        if res.involved:
            discount = math.prod(involved_taus[k] for k in res.involved)
        else:
            discount = 1.0
        r_sum += discount * res.positive
        p_sum += discount * res.negative
    R = gamma * state.R + r_sum
    P = gamma * state.P + p_sum
    tau = R / (R + P + state.prior_h)
    return replace(state, R=R, P=P, tau=tau, tau_prev=state.tau)


VERDICT_NONE = "none"
VERDICT_WINDOW = "window_open"
VERDICT_FAKE = "fake"


def detect_fake(state, delta, window_steps):
    """Observation-window verdict and the updated window counter.

    The window opens when tau <= 1 - delta and tau has not increased; it
    closes on any recovery or increase, except that tau at or below the hard
    distrust level delta always qualifies (evidence decay can let a
    near-zero tau creep upward without the vehicle earning anything).  After
    ``window_steps`` consecutive qualifying steps the vehicle is declared
    fake.

    Low tau alone is not enough: the cumulative penalty evidence must at
    least match the prior weight.  A vehicle that never misbehaved can sit
    below the threshold purely because its positive evidence is discounted
    by the (low) trust of the vehicles vouching for it, and that must not
    read as proof of fakery.
    """
    threshold = 1.0 - delta
    qualifying = (state.tau <= threshold and state.P >= state.prior_h and (
        state.tau_prev is None or state.tau <= state.tau_prev
        or state.tau <= delta))
    if not qualifying:
        return VERDICT_NONE, replace(state, window_len=0)
    window = state.window_len + 1
    verdict = VERDICT_FAKE if window >= window_steps else VERDICT_WINDOW
    return verdict, replace(state, window_len=window)
