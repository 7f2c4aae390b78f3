"""Closed-form and semi-numerical probability engine for coordinated HARQ.

Covers the two-user event algebra (decode-round probabilities, outage,
throughput, fairness), the hypoexponential CDF of the RTD accumulated SNR
via partial fractions, the INR accumulated mutual-information CDF via
iterated numerical convolution, and the diversity-gain formula. Everything
here is deterministic and serves as the simulator's cross-check (and vice
versa).

Conventions: rates in nats per channel use, natural logs, power linear.
Per-band closed forms require distinct fading parameters; the equal-lambda
case dispatches to the Erlang limit.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .rates import Scheme
from .special import gammainc_lower

# Relative lambda gap below which the hypoexponential partial fractions are
# numerically meaningless and the Erlang limit is used instead. Near the
# boundary the pole cancellation loses ~1/gap digits, while the Erlang
# substitute is only O(gap) wrong, so the switch sits where the two error
# curves cross.
_EQUAL_LAMBDA_RTOL = 1e-5

# Base grid resolution for the INR convolution (doubled once for Richardson
# extrapolation, giving an effective O(h^4) scheme).
_INR_GRID_N = 2048


class ConsistencyError(ValueError):
    """Probabilities that should form a distribution do not."""


# ---------------------------------------------------------------------------
# thresholds and first-round probabilities


@dataclass(frozen=True)
class ThresholdPair:
    """Gain-domain decoding thresholds C = (e^R - 1) / P for the two users."""

    c_a: float
    c_b: float

    def __post_init__(self):
        if self.c_a < 0 or self.c_b < 0:
            raise ValueError("thresholds must be nonnegative")

    @classmethod
    def from_rates(cls, rate_a: float, rate_b: float, power: float) -> "ThresholdPair":
        if power <= 0:
            raise ValueError("power must be positive")
        return cls(math.expm1(rate_a) / power, math.expm1(rate_b) / power)


def alpha_beta(thresholds: ThresholdPair, lambdas) -> tuple:
    """First-round failure probabilities (alpha for user A, beta for user B)."""
    lam1, lam2 = lambdas
    alpha = -math.expm1(-lam1 * thresholds.c_a)
    beta = -math.expm1(-lam2 * thresholds.c_b)
    return alpha, beta


def gamma_norm(alpha: float, beta: float) -> float:
    """Packet-start rate 1 / (1 + alpha + beta - alpha*beta).

    Equals packets per slot in the long run: a packet lasts one slot iff
    both users decode at round one, two slots otherwise (M = 2).
    """
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ValueError("alpha, beta must lie in [0, 1]")
    return 1.0 / (1.0 + alpha + beta - alpha * beta)


def phi_coordinated(thresholds: ThresholdPair, lambdas) -> float:
    """Pr(g2(t) + g2(t+1) + g1(t+1) < C_B): user B still failing after the
    coordinated slot in which it received both bands (two own-band copies
    plus one donated copy).
    """
    lam1, lam2 = lambdas
    c = thresholds.c_b
    if c == 0.0:
        return 0.0
    if abs(lam1 - lam2) <= _EQUAL_LAMBDA_RTOL * max(lam1, lam2):
        # Erlang(3) limit of the distinct-rate closed form.
        lam = 0.5 * (lam1 + lam2)
        x = lam * c
        return float(1.0 - math.exp(-x) * (1.0 + x + 0.5 * x * x))
    e1 = math.exp(-lam1 * c)
    e2 = math.exp(-lam2 * c)
    phi = (1.0 - e1
           + (e2 - e1) / (lam2 / lam1 - 1.0)
           + c * e2 / (1.0 / lam1 - 1.0 / lam2)
           + lam1 * lam2 / (lam1 - lam2) ** 2 * (e2 - e1))
    return float(min(max(phi, 0.0), 1.0))


# ---------------------------------------------------------------------------
# hypoexponential CDF (RTD accumulation)


@dataclass(frozen=True)
class PartialFractionExpansion:
    """Coefficients of (1 + Ps/l1)^-n (1 + Ps/l2)^-m as a sum of simple poles.

    a[k-1] multiplies (1 + Ps/l1)^-k for k = 1..n, b likewise for the second
    rate. Requires distinct rates.
    """

    n: int
    m: int
    lam1: float
    lam2: float
    a: tuple
    b: tuple

    def reconstruct(self, s: float, power: float) -> float:
        """Re-sum the expansion at Laplace variable s (for validation)."""
        val = 0.0
        for k, ak in enumerate(self.a, start=1):
            val += ak / (1.0 + power * s / self.lam1) ** k
        for k, bk in enumerate(self.b, start=1):
            val += bk / (1.0 + power * s / self.lam2) ** k
        return val

    def direct(self, s: float, power: float) -> float:
        return (1.0 + power * s / self.lam1) ** -self.n * (1.0 + power * s / self.lam2) ** -self.m


def partial_fraction_expansion(n: int, m: int, lambdas) -> PartialFractionExpansion:
    """Partial-fraction coefficients for the sum of n Exp(l1) and m Exp(l2)."""
    lam1, lam2 = lambdas
    if n < 1 or m < 1:
        raise ValueError("both copy counts must be >= 1 for the two-pole expansion")
    if abs(lam1 - lam2) <= _EQUAL_LAMBDA_RTOL * max(lam1, lam2):
        raise ValueError("partial fractions need distinct fading parameters")
    r1 = lam1 / lam2
    r2 = lam2 / lam1
    a = tuple((-r1) ** (n - k) * math.comb(n + m - k - 1, n - k) * (1.0 - r1) ** -(n + m - k)
              for k in range(1, n + 1))
    b = tuple((-r2) ** (m - k) * math.comb(n + m - k - 1, m - k) * (1.0 - r2) ** -(n + m - k)
              for k in range(1, m + 1))
    return PartialFractionExpansion(n=n, m=m, lam1=lam1, lam2=lam2, a=a, b=b)


def cdf_rtd_sum(n: int, m: int, lambdas, power: float, x: float) -> float:
    """CDF at x of log(1 + P * S), S the sum of n Exp(l1) and m Exp(l2) gains.

    Uses the partial-fraction expansion with regularized incomplete-gamma
    terms Gamma(k, lam * z / P), z = e^x - 1. Pure Erlang path when one copy
    count is zero or the fading parameters coincide.
    """
    if n < 0 or m < 0 or n + m < 1:
        raise ValueError(f"invalid copy counts ({n}, {m})")
    if x <= 0.0:
        return 0.0
    lam1, lam2 = lambdas
    z = math.expm1(x) / power
    if n == 0:
        return gammainc_lower(m, lam2 * z)
    if m == 0:
        return gammainc_lower(n, lam1 * z)
    if abs(lam1 - lam2) <= _EQUAL_LAMBDA_RTOL * max(lam1, lam2):
        return gammainc_lower(n + m, 0.5 * (lam1 + lam2) * z)
    pfe = partial_fraction_expansion(n, m, lambdas)
    total = sum(ak * gammainc_lower(k, lam1 * z) for k, ak in enumerate(pfe.a, start=1))
    total += sum(bk * gammainc_lower(k, lam2 * z) for k, bk in enumerate(pfe.b, start=1))
    return float(min(max(total, 0.0), 1.0))


# ---------------------------------------------------------------------------
# INR accumulated mutual-information CDF (numerical convolution)


def _mi_density(z: np.ndarray, lam: float, power: float) -> np.ndarray:
    # density of log(1 + g*P), g ~ Exp(lam): (lam/P) e^z exp(-lam (e^z - 1)/P)
    return (lam / power) * np.exp(z) * np.exp(-(lam / power) * np.expm1(z))


def _mi_cdf_single(lam: float, power: float, x: float) -> float:
    return -math.expm1(-(lam / power) * math.expm1(x)) if x > 0 else 0.0


def _inr_cdf_grid(rates, power: float, x: float, n_intervals: int) -> float:
    h = x / n_intervals
    z = np.linspace(0.0, x, n_intervals + 1)
    dens = [_mi_density(z, lam, power) for lam in rates]
    c = dens[0]
    for f in dens[1:]:
        full = fftconvolve(c, f)[: n_intervals + 1]
        # trapezoid-corrected discrete convolution on [0, x]
        c = h * (full - 0.5 * (c[0] * f + c * f[0]))
    return float(np.trapezoid(c, dx=h))


@lru_cache(maxsize=4096)
def _cdf_inr_cached(n: int, m: int, lam1: float, lam2: float, power: float, x: float) -> float:
    rates = (lam1,) * n + (lam2,) * m
    if len(rates) == 1:
        return _mi_cdf_single(rates[0], power, x)
    coarse = _inr_cdf_grid(rates, power, x, _INR_GRID_N)
    fine = _inr_cdf_grid(rates, power, x, 2 * _INR_GRID_N)
    val = (4.0 * fine - coarse) / 3.0
    return float(min(max(val, 0.0), 1.0))


def cdf_inr_sum(n: int, m: int, lambdas, power: float, x: float) -> float:
    """CDF at x of the sum of n + m independent per-copy mutual informations
    log(1 + g*P), with n copies at rate l1 and m at rate l2.

    Evaluated by iterated numerical convolution of the single-copy densities
    on [0, x] with Richardson extrapolation; absolute accuracy ~1e-6.
    """
    if n < 0 or m < 0 or n + m < 1:
        raise ValueError(f"invalid copy counts ({n}, {m})")
    if x <= 0.0:
        return 0.0
    lam1, lam2 = lambdas
    return _cdf_inr_cached(n, m, float(lam1), float(lam2), float(power), float(x))


def accumulation_cdf(scheme: Scheme, n_band1: int, n_band2: int, lambdas,
                     power: float, x: float) -> float:
    """CDF at x nats of the accumulated decodable rate from n_band1 copies on
    band 1 and n_band2 copies on band 2. With zero copies nothing has been
    received, so the user is undecoded at any nonnegative target."""
    if n_band1 == 0 and n_band2 == 0:
        return 1.0 if x >= 0 else 0.0
    if scheme is Scheme.RTD:
        return cdf_rtd_sum(n_band1, n_band2, lambdas, power, x)
    return cdf_inr_sum(n_band1, n_band2, lambdas, power, x)


# ---------------------------------------------------------------------------
# two-user event algebra


OUTAGE = "out"


def _band_cdfs(scheme, lambdas, power, rate, own_band):
    # CDF of the own-band-only accumulation at the user's rate, by copy count
    lam_pair = lambdas if own_band == 0 else (lambdas[1], lambdas[0])

    def f_own(copies):
        return accumulation_cdf(scheme, copies, 0, lam_pair, power, rate)

    def f_mix(own_copies, donated_copies):
        return accumulation_cdf(scheme, own_copies, donated_copies, lam_pair, power, rate)

    return f_own, f_mix


def event_probability_general(n, m, scheme: Scheme, max_rounds: int, lambdas,
                              power: float, rate_a: float, rate_b: float) -> float:
    """Per-packet probability that user A resolves at round n and user B at
    round m, either an integer round in 1..M or OUTAGE.

    The A-side stopping condition involves only band-1 gains up to A's stop
    round, and the B-side condition only band-2 gains plus band-1 gains from
    later slots (the donated copies), so the two conditions are independent
    and the joint probability factors.
    """
    M = max_rounds
    fa_own, fa_mix = _band_cdfs(scheme, lambdas, power, rate_a, own_band=0)
    fb_own, fb_mix = _band_cdfs(scheme, lambdas, power, rate_b, own_band=1)

    def stop_first(f_own, r):
        # user finishes at round r using only its own band (no help arrived)
        return f_own(r - 1) - f_own(r)

    def stop_helped(f_mix, r, helper_round):
        # user finishes at round r > helper_round with donated copies from
        # rounds helper_round+1 .. r
        lo = f_mix(r - 1, max(r - 1 - helper_round, 0))
        hi = f_mix(r, r - helper_round)
        return lo - hi

    if n == OUTAGE and m == OUTAGE:
        return fa_own(M) * fb_own(M)
    if n == OUTAGE:
        if not 1 <= m <= M:
            raise ValueError(f"round {m} out of range")
        return stop_first(fb_own, m) * fa_mix(M, max(M - m, 0))
    if m == OUTAGE:
        if not 1 <= n <= M:
            raise ValueError(f"round {n} out of range")
        return stop_first(fa_own, n) * fb_mix(M, max(M - n, 0))
    if not (1 <= n <= M and 1 <= m <= M):
        raise ValueError(f"rounds ({n}, {m}) out of range for M={M}")
    if n == m:
        return stop_first(fa_own, n) * stop_first(fb_own, m)
    if n < m:
        return stop_first(fa_own, n) * stop_helped(fb_mix, m, n)
    return stop_first(fb_own, m) * stop_helped(fa_mix, n, m)


@dataclass
class EventProbabilities:
    """Per-packet terminal-event distribution for the two-user system.

    `probs` maps labels like "A1B2" or "A2Bout" to probabilities summing to
    one. The long-run per-slot frequencies are these values times gamma
    (packets per slot).
    """

    probs: dict
    alpha: float
    beta: float
    gamma: float
    max_rounds: int

    def check(self, tol: float = 1e-10) -> None:
        total = sum(self.probs.values())
        if abs(total - 1.0) > tol:
            raise ConsistencyError(f"event probabilities sum to {total}, not 1")


def _event_label(n, m):
    a = "Aout" if n == OUTAGE else f"A{n}"
    b = "Bout" if m == OUTAGE else f"B{m}"
    return a + b


def event_table(scheme: Scheme, max_rounds: int, lambdas, power: float,
                rate_a: float, rate_b: float) -> EventProbabilities:
    """Full per-packet terminal-event distribution for K = 2 users."""
    M = max_rounds
    outcomes = list(range(1, M + 1)) + [OUTAGE]
    probs = {}
    expected_slots = 0.0
    for n in outcomes:
        for m in outcomes:
            q = event_probability_general(n, m, scheme, M, lambdas, power, rate_a, rate_b)
            probs[_event_label(n, m)] = q
            slots = max(M if n == OUTAGE else n, M if m == OUTAGE else m)
            expected_slots += slots * q
    thresholds = ThresholdPair.from_rates(rate_a, rate_b, power)
    alpha, beta = alpha_beta(thresholds, lambdas)
    return EventProbabilities(probs=probs, alpha=alpha, beta=beta,
                              gamma=1.0 / expected_slots, max_rounds=M)


def outage_probabilities(events: EventProbabilities) -> tuple:
    """Per-slot outage frequencies (gamma-weighted per-packet outage)."""
    out_a = sum(p for lbl, p in events.probs.items() if lbl.startswith("Aout"))
    out_b = sum(p for lbl, p in events.probs.items() if lbl.endswith("Bout"))
    return events.gamma * out_a, events.gamma * out_b


def per_packet_outage(events: EventProbabilities) -> tuple:
    out_a = sum(p for lbl, p in events.probs.items() if lbl.startswith("Aout"))
    out_b = sum(p for lbl, p in events.probs.items() if lbl.endswith("Bout"))
    return out_a, out_b


def throughput_closed(events: EventProbabilities, rate_a: float, rate_b: float) -> float:
    """Long-run throughput in npcu: gamma-weighted delivered nats per slot."""
    events.check(tol=1e-6)
    succ_a = sum(p for lbl, p in events.probs.items() if not lbl.startswith("Aout"))
    succ_b = sum(p for lbl, p in events.probs.items() if not lbl.endswith("Bout"))
    return events.gamma * (rate_a * succ_a + rate_b * succ_b)


def per_user_throughput(events: EventProbabilities, rate_a: float, rate_b: float) -> tuple:
    succ_a = sum(p for lbl, p in events.probs.items() if not lbl.startswith("Aout"))
    succ_b = sum(p for lbl, p in events.probs.items() if not lbl.endswith("Bout"))
    return events.gamma * rate_a * succ_a, events.gamma * rate_b * succ_b


def outage_b_rtd_closed(thresholds: ThresholdPair, lambdas, alpha: float) -> float:
    """Closed-form per-slot outage frequency of user B (RTD, M = K = 2).

    First branch: both users failed round one, B then fails on two own-band
    copies (two-stage Erlang tail). Second branch: A decoded round one, B
    fails on three combined copies (phi).
    """
    lam1, lam2 = lambdas
    c_b = thresholds.c_b
    beta = -math.expm1(-lam2 * c_b)
    gam = gamma_norm(alpha, beta)
    erlang2_tail = 1.0 - math.exp(-lam2 * c_b) - lam2 * c_b * math.exp(-lam2 * c_b)
    phi = phi_coordinated(thresholds, lambdas)
    return gam * alpha * erlang2_tail + gam * (1.0 - alpha) * phi


def diversity_gain(helpers: int, max_rounds: int) -> int:
    """High-SNR outage-curve slope d = (J+1)(M-1)+1 for a user whose
    coordination rule can hand it the free bands of J other users."""
    if helpers < 0 or max_rounds < 1:
        raise ValueError("need helpers >= 0 and max_rounds >= 1")
    return (helpers + 1) * (max_rounds - 1) + 1
