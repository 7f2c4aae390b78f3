"""Trial orchestration and statistics for the coordinated-HARQ simulator.

Runs many independent packets with the protocol vectorized over trials,
estimates outage / throughput / fairness / event probabilities with
confidence intervals, and fits diversity slopes. Results are bit-identical
for a given master seed regardless of chunking or worker count, because all
randomness is keyed by (master_seed, trial, slot, band).

Conventions: event frequencies are per packet (they sum to one exactly);
outage and throughput are additionally reported per slot (multiplied by the
empirical packets-per-slot rate gamma), which is the convention of the
closed-form expressions.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .fading import POLICY_BAND, gain_block, matrix_block, uniform_block
from .protocol import AllocationPolicy, PolicyKind, ProtocolConfig, ProtocolError
from .rates import Scheme

DEFAULT_CHUNK = 1_000_000


class FitWindowError(RuntimeError):
    """Not enough resolvable points to fit a slope; raise the trial count."""


class RangeError(RuntimeError):
    """Requested level is outside the simulated curve."""


# ---------------------------------------------------------------------------
# vectorized protocol engine


def _assignment_matrix(active: np.ndarray, policy: AllocationPolicy, slot: int,
                       master_seed: int, start_trial: int) -> np.ndarray:
    """Band -> user map per trial, shape (n, K); -1 marks an idle band.

    Mirrors protocol.policy_allocate exactly: active users always keep their
    own bands, free bands are donated per policy. `slot` is the slot being
    entered; the random K=3 split consumes the policy substream of the slot
    in which the ACK/NACKs were observed (slot - 1).
    """
    n, k = active.shape
    bands = np.arange(k, dtype=np.int64)
    assign = np.where(active, bands[None, :], -1)
    if policy.kind is PolicyKind.NON_COORDINATED or slot == 0:
        return assign
    n_active = active.sum(axis=1)
    if policy.kind is PolicyKind.FULL_COORDINATION_K2:
        if k != 2:
            raise ProtocolError("full-coordination policy is defined for exactly 2 users")
        solo = n_active == 1
        winner = np.argmax(active, axis=1)
        assign[solo, :] = winner[solo, None]
        return assign
    if policy.kind is PolicyKind.RANDOM_SPLIT_K3:
        if k != 3:
            raise ProtocolError("random-split policy is defined for exactly 3 users")
        solo = n_active == 1
        winner = np.argmax(active, axis=1)
        assign[solo, :] = winner[solo, None]
        pair = n_active == 2
        if pair.any():
            u = uniform_block(master_seed, slot - 1, POLICY_BAND, start_trial, n)[:, 0]
            lo = np.argmax(active, axis=1)                    # lowest-index active
            hi = k - 1 - np.argmax(active[:, ::-1], axis=1)   # highest-index active
            lucky = np.where(u < 0.5, lo, hi)
            free_band = np.argmin(active, axis=1)             # the single inactive user
            rows = np.flatnonzero(pair)
            assign[rows, free_band[rows]] = lucky[rows]
        return assign
    # round-robin general K: deal free bands cyclically over the active
    # users; patterns are few (2^K), so group trials by pattern
    from .protocol import policy_allocate
    codes = active @ (1 << bands)
    for code in np.unique(codes):
        failed = {u for u in range(k) if code & (1 << u)}
        if not failed:
            continue
        mapping = policy_allocate(failed, set(range(k)) - failed, policy, k)
        rows = codes == code
        for band, user in mapping.items():
            assign[rows, band] = user
    return assign


def simulate_rounds(config: ProtocolConfig, policy: AllocationPolicy,
                    n_trials: int, master_seed: int, start_trial: int = 0) -> np.ndarray:
    """Decode rounds for trials [start_trial, start_trial + n_trials).

    Returns shape (n_trials, K): round in 1..M, or 0 for outage. One trial is
    one packet; randomness is keyed so the same trial index always sees the
    same channel, under any policy or chunking.
    """
    profile = config.profile
    k, m_max, power = config.n_users, config.max_rounds, config.power
    rtd = config.scheme is Scheme.RTD
    siso = profile.is_siso
    u_tx = profile.tx_antennas
    rates = np.asarray(config.rates)

    rounds = np.zeros((n_trials, k), dtype=np.int16)
    if siso or not rtd:
        acc = np.zeros((n_trials, k))
    else:
        acc = np.zeros((n_trials, k, u_tx, u_tx), dtype=complex)

    for s in range(m_max):
        active = rounds == 0
        if not active.any():
            break
        assign = _assignment_matrix(active, policy, s, master_seed, start_trial)
        for b in range(k):
            tgt = assign[:, b]
            if (tgt < 0).all():
                continue
            if siso:
                g = gain_block(profile, b, s, master_seed, start_trial, n_trials)
                contrib = g * power if rtd else np.log1p(g * power)
            else:
                h = matrix_block(profile, b, s, master_seed, start_trial, n_trials)
                if rtd:
                    contrib = np.einsum("nvi,nvj->nij", h.conj(), h)
                else:
                    v_rx = profile.rx_antennas
                    hh = np.einsum("nvi,nwi->nvw", h, h.conj())
                    _, contrib = np.linalg.slogdet(np.eye(v_rx) + (power / u_tx) * hh)
            for u in range(k):
                mask = tgt == u
                if mask.any():
                    acc[mask, u] += contrib[mask]
        for u in range(k):
            act = np.flatnonzero(active[:, u])
            if act.size == 0:
                continue
            if siso:
                nats = np.log1p(acc[act, u]) if rtd else acc[act, u]
            elif rtd:
                _, nats = np.linalg.slogdet(np.eye(u_tx) + (power / u_tx) * acc[act, u])
            else:
                nats = acc[act, u]
            rounds[act[nats >= rates[u]], u] = s + 1
    return rounds


@dataclass
class BatchStats:
    """Sufficient statistics aggregated over simulated packets."""

    n_trials: int = 0
    total_slots: int = 0
    decoded: np.ndarray = None          # (K,) decode counts
    round_hist: np.ndarray = None       # (K, M+1): index 0 = outage
    joint_counts: np.ndarray = None     # (M+1, M+1) for K = 2, else None
    nats_sum: float = 0.0
    nats_sq_sum: float = 0.0
    slots_sq_sum: float = 0.0
    nats_slots_sum: float = 0.0

    def merge(self, other: "BatchStats") -> "BatchStats":
        if self.n_trials == 0:
            return other
        out = BatchStats(
            n_trials=self.n_trials + other.n_trials,
            total_slots=self.total_slots + other.total_slots,
            decoded=self.decoded + other.decoded,
            round_hist=self.round_hist + other.round_hist,
            joint_counts=(None if self.joint_counts is None
                          else self.joint_counts + other.joint_counts),
            nats_sum=self.nats_sum + other.nats_sum,
            nats_sq_sum=self.nats_sq_sum + other.nats_sq_sum,
            slots_sq_sum=self.slots_sq_sum + other.slots_sq_sum,
            nats_slots_sum=self.nats_slots_sum + other.nats_slots_sum,
        )
        return out


def _stats_from_rounds(rounds: np.ndarray, config: ProtocolConfig) -> BatchStats:
    n, k = rounds.shape
    m_max = config.max_rounds
    rates = np.asarray(config.rates)
    decoded = (rounds > 0).sum(axis=0)
    resolution = np.where(rounds > 0, rounds, m_max)
    slots = resolution.max(axis=1)
    nats = (rounds > 0) @ rates
    hist = np.stack([np.bincount(rounds[:, u], minlength=m_max + 1) for u in range(k)])
    joint = None
    if k == 2:
        joint = np.bincount(rounds[:, 0] * (m_max + 1) + rounds[:, 1],
                            minlength=(m_max + 1) ** 2).reshape(m_max + 1, m_max + 1)
    return BatchStats(
        n_trials=n,
        total_slots=int(slots.sum()),
        decoded=decoded.astype(np.int64),
        round_hist=hist.astype(np.int64),
        joint_counts=joint,
        nats_sum=float(nats.sum()),
        nats_sq_sum=float((nats * nats).sum()),
        slots_sq_sum=float((slots * slots).astype(np.float64).sum()),
        nats_slots_sum=float((nats * slots).sum()),
    )


def _chunk_ranges(n_trials: int, chunk: int):
    start = 0
    while start < n_trials:
        yield start, min(chunk, n_trials - start)
        start += chunk


def _batch_worker(args):
    config, policy, start, count, master_seed = args
    rounds = simulate_rounds(config, policy, count, master_seed, start_trial=start)
    return _stats_from_rounds(rounds, config)


def simulate_batch(config: ProtocolConfig, policy: AllocationPolicy, n_trials: int,
                   master_seed: int, chunk: int = DEFAULT_CHUNK, n_jobs: int = 1) -> BatchStats:
    """Run n_trials independent packets and aggregate sufficient statistics."""
    tasks = [(config, policy, start, count, master_seed)
             for start, count in _chunk_ranges(n_trials, chunk)]
    stats = BatchStats()
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for st in pool.map(_batch_worker, tasks):
                stats = stats.merge(st)
    else:
        for task in tasks:
            stats = stats.merge(_batch_worker(task))
    return stats


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    trials: int
    half_width_95: float
    target: str


def _bernoulli_ci(successes: int, trials: int) -> float:
    p = successes / trials
    if successes < 30 or trials - successes < 30:
        # Wilson interval half-width for small counts
        z = 1.96
        denom = 1.0 + z * z / trials
        center = (p + z * z / (2 * trials)) / denom
        half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
        return half
    return 1.96 * math.sqrt(p * (1.0 - p) / trials)


def _event_label(ra: int, rb: int) -> str:
    a = "Aout" if ra == 0 else f"A{ra}"
    b = "Bout" if rb == 0 else f"B{rb}"
    return a + b


def estimate(config: ProtocolConfig, policy: AllocationPolicy, n_trials: int,
             master_seed: int, chunk: int = DEFAULT_CHUNK, n_jobs: int = 1) -> dict:
    """Point estimates with 95% confidence half-widths.

    Targets: per-user outage (per-slot, i.e. gamma-weighted, plus a
    `_packet` variant), throughput in npcu, fairness (ratio of the two
    users' throughputs, K=2), gamma, and for K=2 all per-packet terminal
    event frequencies keyed `event_<label>`.
    """
    stats = simulate_batch(config, policy, n_trials, master_seed, chunk=chunk, n_jobs=n_jobs)
    return estimates_from_stats(stats, config)


def estimates_from_stats(stats: BatchStats, config: ProtocolConfig) -> dict:
    n = stats.n_trials
    k = config.n_users
    rates = config.rates
    gamma_hat = n / stats.total_slots
    out = {}
    out["gamma"] = EstimateWithCI(gamma_hat, n, 0.0, "gamma")
    for u in range(k):
        fails = n - int(stats.decoded[u])
        p_pkt = fails / n
        half = _bernoulli_ci(fails, n)
        out[f"outage_packet_user{u}"] = EstimateWithCI(p_pkt, n, half, f"outage_packet_user{u}")
        out[f"outage_user{u}"] = EstimateWithCI(gamma_hat * p_pkt, n, gamma_hat * half,
                                                f"outage_user{u}")
    # throughput: delivered nats per slot, CI via renewal-reward linearization
    eta = stats.nats_sum / stats.total_slots
    mean_slots = stats.total_slots / n
    resid_var = (stats.nats_sq_sum - 2 * eta * stats.nats_slots_sum
                 + eta * eta * stats.slots_sq_sum) / n
    eta_half = 1.96 * math.sqrt(max(resid_var, 0.0) / n) / mean_slots
    out["throughput"] = EstimateWithCI(eta, n, eta_half, "throughput")
    if k == 2:
        eta_u = [gamma_hat * rates[u] * (stats.decoded[u] / n) for u in range(2)]
        if stats.decoded[1] == 0:
            out["fairness"] = EstimateWithCI(float("nan"), n, float("inf"), "fairness")
        else:
            delta = eta_u[0] / eta_u[1]
            rel = 0.0
            for u in range(2):
                p = stats.decoded[u] / n
                rel += (1 - p) / (p * n)
            out["fairness"] = EstimateWithCI(delta, n, 1.96 * delta * math.sqrt(rel), "fairness")
        m_max = config.max_rounds
        for ra in range(m_max + 1):
            for rb in range(m_max + 1):
                c = int(stats.joint_counts[ra, rb])
                lbl = _event_label(ra, rb)
                out[f"event_{lbl}"] = EstimateWithCI(c / n, n, _bernoulli_ci(c, n),
                                                     f"event_{lbl}")
    return out


def analytic_counterparts(config: ProtocolConfig, policy: AllocationPolicy) -> dict:
    """Closed-form / semi-numerical values matching the estimate() targets.

    Available for K = 2 SISO with the full-coordination or non-coordinated
    policy; returns {} otherwise (those cases are Monte Carlo only).
    """
    if config.n_users != 2 or not config.profile.is_siso:
        return {}
    lambdas = config.profile.lambdas
    ra, rb = config.rates
    if policy.kind is PolicyKind.FULL_COORDINATION_K2:
        ev = analytic.event_table(config.scheme, config.max_rounds, lambdas,
                                  config.power, ra, rb)
    elif policy.kind is PolicyKind.NON_COORDINATED:
        ev = _non_coordinated_event_table(config)
    else:
        return {}
    out_a, out_b = analytic.per_packet_outage(ev)
    eta_a, eta_b = analytic.per_user_throughput(ev, ra, rb)
    vals = {
        "gamma": ev.gamma,
        "outage_packet_user0": out_a,
        "outage_packet_user1": out_b,
        "outage_user0": ev.gamma * out_a,
        "outage_user1": ev.gamma * out_b,
        "throughput": analytic.throughput_closed(ev, ra, rb),
    }
    if eta_b > 0:
        vals["fairness"] = eta_a / eta_b
    for lbl, p in ev.probs.items():
        vals[f"event_{lbl}"] = p
    return vals


def _non_coordinated_event_table(config: ProtocolConfig):
    # independent single-user HARQ per band: joint decode-round probabilities
    # factor across users
    lambdas = config.profile.lambdas
    m_max = config.max_rounds

    def marginal(lam, rate):
        def own(copies):
            return analytic.accumulation_cdf(config.scheme, copies, 0, (lam, lam),
                                             config.power, rate)
        probs = {r: own(r - 1) - own(r) for r in range(1, m_max + 1)}
        probs[analytic.OUTAGE] = own(m_max)
        return probs

    pa = marginal(lambdas[0], config.rates[0])
    pb = marginal(lambdas[1], config.rates[1])
    probs = {}
    expected_slots = 0.0
    for na, qa in pa.items():
        for nb, qb in pb.items():
            label_a = "Aout" if na == analytic.OUTAGE else f"A{na}"
            label_b = "Bout" if nb == analytic.OUTAGE else f"B{nb}"
            q = qa * qb
            probs[label_a + label_b] = q
            slots = max(m_max if na == analytic.OUTAGE else na,
                        m_max if nb == analytic.OUTAGE else nb)
            expected_slots += q * slots
    thresholds = analytic.ThresholdPair.from_rates(config.rates[0], config.rates[1],
                                                   config.power)
    alpha, beta = analytic.alpha_beta(thresholds, lambdas)
    return analytic.EventProbabilities(probs=probs, alpha=alpha, beta=beta,
                                       gamma=1.0 / expected_slots, max_rounds=m_max)


# ---------------------------------------------------------------------------
# sweeps, slopes, energy gain


@dataclass
class SweepResult:
    snr_db: list
    estimates: list         # one dict of EstimateWithCI per axis point
    analytic: list          # one dict of floats per axis point (may be empty)
    n_trials: list
    master_seed: int

    def outage_curve(self, user: int, per_packet: bool = False):
        key = f"outage_{'packet_' if per_packet else ''}user{user}"
        return np.array([pt[key].point for pt in self.estimates])


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def sweep(config_template: ProtocolConfig, policy: AllocationPolicy, snr_points_db,
          n_trials, master_seed: int, chunk: int = DEFAULT_CHUNK, n_jobs: int = 1) -> SweepResult:
    """Estimate bundle per SNR point. `n_trials` may be a scalar or one count
    per point; results are deterministic given the master seed."""
    snr_points_db = list(snr_points_db)
    if any(b <= a for a, b in zip(snr_points_db, snr_points_db[1:])):
        raise ValueError("SNR axis must be strictly increasing")
    if np.isscalar(n_trials):
        n_trials = [int(n_trials)] * len(snr_points_db)
    estimates, analytic_vals = [], []
    from dataclasses import replace
    for snr_db, trials in zip(snr_points_db, n_trials):
        cfg = replace(config_template, power=db_to_linear(snr_db))
        estimates.append(estimate(cfg, policy, trials, master_seed, chunk=chunk, n_jobs=n_jobs))
        analytic_vals.append(analytic_counterparts(cfg, policy))
    return SweepResult(snr_db=snr_points_db, estimates=estimates,
                       analytic=analytic_vals, n_trials=list(n_trials),
                       master_seed=master_seed)


def fit_diversity_slope(sweep_result: SweepResult, user: int,
                        top_decades: float = 2.0) -> float:
    """Least-squares slope of log10(outage) vs log10(P) over the deepest
    `top_decades` decades of resolvable outage.

    Points need at least 10 observed outages to enter the fit (below that
    the relative CI explodes); among the reliable points, the window keeps
    those within a factor 10^top_decades of the smallest outage, i.e. the
    highest-SNR region where the slope has converged."""
    snr_db = np.asarray(sweep_result.snr_db, dtype=float)
    outage = sweep_result.outage_curve(user)
    trials = np.asarray(sweep_result.n_trials, dtype=float)
    reliable = outage >= 10.0 / trials
    if reliable.sum() < 3:
        raise FitWindowError("fewer than 3 SNR points clear the 10-outage floor; "
                             "raise the trial count")
    log_p = snr_db / 10.0
    floor = outage[reliable].min()
    window = reliable & (outage <= floor * 10.0 ** top_decades)
    if window.sum() < 3:
        raise FitWindowError("fewer than 3 reliable points in the fit window; "
                             "raise the trial count or widen the window")
    slope = np.polyfit(log_p[window], np.log10(outage[window]), 1)[0]
    return float(slope)


def snr_at_outage(sweep_result: SweepResult, user: int, epsilon: float) -> float:
    """SNR (dB) at which the outage curve crosses epsilon, by log-linear
    interpolation. The curve must bracket epsilon."""
    snr_db = np.asarray(sweep_result.snr_db, dtype=float)
    outage = sweep_result.outage_curve(user)
    good = outage > 0
    log_out = np.log10(outage[good])
    x = snr_db[good]
    target = math.log10(epsilon)
    if target > log_out.max() or target < log_out.min():
        raise RangeError(f"outage level {epsilon} is outside the simulated curve")
    # outage decreases with SNR: interpolate SNR as a function of log-outage
    order = np.argsort(log_out)
    return float(np.interp(target, log_out[order], x[order]))


def energy_gain_at_outage(sweep_a: SweepResult, sweep_b: SweepResult,
                          epsilon: float, user: int = 0) -> float:
    """SNR_a(eps) - SNR_b(eps) in dB: how much less power curve b needs to
    reach the same outage level."""
    return snr_at_outage(sweep_a, user, epsilon) - snr_at_outage(sweep_b, user, epsilon)


def dominance_violations(config: ProtocolConfig, coordinated_policy: AllocationPolicy,
                         n_trials: int, master_seed: int,
                         chunk: int = DEFAULT_CHUNK) -> int:
    """Paired-seed check: count trials where a user decodes without
    coordination but not with it, on identical fading draws. Coordination
    only ever adds copies, so the count must be zero."""
    from .protocol import AllocationPolicy as AP
    noncoord = AP(PolicyKind.NON_COORDINATED)
    violations = 0
    for start, count in _chunk_ranges(n_trials, chunk):
        r_nc = simulate_rounds(config, noncoord, count, master_seed, start_trial=start)
        r_co = simulate_rounds(config, coordinated_policy, count, master_seed, start_trial=start)
        violations += int(((r_nc > 0) & (r_co == 0)).sum())
    return violations
