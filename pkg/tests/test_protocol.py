import math

import pytest

from coharq.fading import FadingProfile, GainDraw, Substream
from coharq.protocol import (OUTAGE_ROUND, AllocationPolicy, PacketOutcome,
                             PolicyKind, ProtocolConfig, ProtocolError,
                             SlotLedger, UserStatus, advance_slot,
                             format_trace, policy_allocate, run_packet)
from coharq.rates import Scheme
from coharq.fading import ConfigurationError

SEED = 20260826

COORD = AllocationPolicy(PolicyKind.FULL_COORDINATION_K2)
NONCOORD = AllocationPolicy(PolicyKind.NON_COORDINATED)
SPLIT = AllocationPolicy(PolicyKind.RANDOM_SPLIT_K3)
ROBIN = AllocationPolicy(PolicyKind.ROUND_ROBIN_GENERAL)


def make_config(rates=(1.0, 1.0), lambdas=(1.0, 1.0), power=1.0,
                scheme=Scheme.RTD, max_rounds=2):
    return ProtocolConfig(profile=FadingProfile(lambdas=lambdas),
                          rates=rates, power=power, scheme=scheme,
                          max_rounds=max_rounds)


# ---------------------------------------------------------------------------
# config validation


def test_config_validation():
    with pytest.raises(ConfigurationError):
        make_config(rates=(1.0,))          # band/rate count mismatch
    with pytest.raises(ConfigurationError):
        make_config(rates=(-1.0, 1.0))
    with pytest.raises(ConfigurationError):
        make_config(power=0.0)
    with pytest.raises(ConfigurationError):
        make_config(max_rounds=0)
    assert make_config().n_users == 2


# ---------------------------------------------------------------------------
# allocation policies


def test_allocate_no_failures_reverts_to_owners():
    for pol in (COORD, NONCOORD):
        assert policy_allocate([], {0, 1}, pol, 2) == {0: 0, 1: 1}


def test_allocate_noncoordinated_never_donates():
    assert policy_allocate([1], {0}, NONCOORD, 2) == {0: 0, 1: 1}


def test_allocate_full_coordination_k2():
    assert policy_allocate([1], {0}, COORD, 2) == {0: 1, 1: 1}
    assert policy_allocate([0], {1}, COORD, 2) == {0: 0, 1: 0}
    assert policy_allocate([0, 1], set(), COORD, 2) == {0: 0, 1: 1}
    with pytest.raises(ProtocolError):
        policy_allocate([1], {0}, COORD, 3)


def test_allocate_random_split_k3():
    # one failed user gets both free bands
    assert policy_allocate([2], {0, 1}, SPLIT, 3) == {0: 2, 1: 2, 2: 2}
    # two failed users: the uniform draw picks who gets the single free band
    lo = policy_allocate([0, 2], {1}, SPLIT, 3, uniform=0.2)
    hi = policy_allocate([0, 2], {1}, SPLIT, 3, uniform=0.8)
    assert lo == {0: 0, 2: 2, 1: 0}
    assert hi == {0: 0, 2: 2, 1: 2}
    with pytest.raises(ProtocolError):
        policy_allocate([0, 2], {1}, SPLIT, 3)  # missing uniform
    with pytest.raises(ProtocolError):
        policy_allocate([0], {1}, SPLIT, 2)


def test_allocate_round_robin():
    # free bands dealt cyclically starting at the lowest-index failed user
    assert policy_allocate([1, 3], {0, 2}, ROBIN, 4) == {1: 1, 3: 3, 0: 1, 2: 3}
    assert policy_allocate([2], {0, 1, 3}, ROBIN, 4) == {2: 2, 0: 2, 1: 2, 3: 2}
    got = policy_allocate([0, 1, 2], {3, 4}, ROBIN, 5)
    assert got == {0: 0, 1: 1, 2: 2, 3: 0, 4: 1}


def test_allocation_conservation():
    # every band maps to exactly one user; failed users keep their own band
    for failed, free in ([(1,), (0, 2)], [(0, 1), (2,)], [(0, 1, 2), ()]):
        a = policy_allocate(list(failed), set(free), ROBIN, 3)
        assert sorted(a) == [0, 1, 2]
        for u in failed:
            assert a[u] == u


# ---------------------------------------------------------------------------
# slot mechanics with forced draws


def draws_for(values, slot=0):
    return {b: GainDraw(band=b, slot=slot, value=v) for b, v in enumerate(values)}


def test_advance_slot_both_decode_first_round():
    cfg = make_config(rates=(1.0, 1.0), power=1.0)
    led = SlotLedger(config=cfg)
    big = math.e  # log(1 + e) > 1
    advance_slot(led, draws_for([big, big]), cfg, COORD)
    assert led.status == [UserStatus.DECODED, UserStatus.DECODED]
    assert led.decode_round == [1, 1]
    assert led.slot == 1


def test_advance_slot_donation_path():
    # slot 0: A decodes, B fails; slot 1: B gets copies on both bands
    cfg = make_config(rates=(1.0, 1.0), power=1.0, scheme=Scheme.RTD, max_rounds=2)
    led = SlotLedger(config=cfg)
    advance_slot(led, draws_for([math.e, 0.1]), cfg, COORD)
    assert led.status[0] is UserStatus.DECODED
    assert led.status[1] is UserStatus.ACTIVE
    assert led.assignment == {0: 1, 1: 1}
    advance_slot(led, draws_for([1.0, 1.0], slot=1), cfg, COORD)
    # B accumulated gains 0.1 + 1.0 + 1.0 -> log(3.1) > 1
    assert led.status[1] is UserStatus.DECODED
    assert led.decode_round == [1, 2]


def test_advance_slot_noncoordinated_no_donation():
    cfg = make_config(rates=(1.0, 1.0), power=1.0, max_rounds=2)
    led = SlotLedger(config=cfg)
    advance_slot(led, draws_for([math.e, 0.1]), cfg, NONCOORD)
    assert led.assignment == {0: 0, 1: 1}
    advance_slot(led, draws_for([math.e, 1.0], slot=1), cfg, NONCOORD)
    # band 0's second draw goes to the already-decoded owner and is discarded;
    # B has 0.1 + 1.0 -> log(2.1) < 1 -> outage
    assert led.status[1] is UserStatus.OUTAGE
    assert led.decode_round[1] == OUTAGE_ROUND


def test_advance_slot_boundary_is_success():
    cfg = make_config(rates=(1.0, 1.0), power=1.0)
    led = SlotLedger(config=cfg)
    advance_slot(led, draws_for([math.e - 1.0, math.e - 1.0]), cfg, COORD)
    assert led.status == [UserStatus.DECODED, UserStatus.DECODED]


def test_inr_accumulation_in_protocol():
    # RTD fails where INR succeeds on the same draws
    for scheme, want in ((Scheme.RTD, UserStatus.OUTAGE),
                         (Scheme.INR, UserStatus.DECODED)):
        cfg = make_config(rates=(10.0, 1.2), power=1.0, scheme=scheme, max_rounds=2)
        led = SlotLedger(config=cfg)
        advance_slot(led, draws_for([0.0, 0.9]), cfg, NONCOORD)
        advance_slot(led, draws_for([0.0, 0.9], slot=1), cfg, NONCOORD)
        # INR: 2 log(1.9) = 1.284 > 1.2; RTD: log(2.8) = 1.030 < 1.2
        assert led.status[1] is want


def test_advance_slot_rejects_terminated_packet():
    cfg = make_config(max_rounds=1, rates=(50.0, 50.0))
    led = SlotLedger(config=cfg)
    advance_slot(led, draws_for([0.1, 0.1]), cfg, COORD)
    assert led.status == [UserStatus.OUTAGE, UserStatus.OUTAGE]
    with pytest.raises(ProtocolError):
        advance_slot(led, draws_for([0.1, 0.1], slot=1), cfg, COORD)


def test_advance_slot_requires_all_bands():
    cfg = make_config()
    led = SlotLedger(config=cfg)
    with pytest.raises(ProtocolError):
        advance_slot(led, {0: GainDraw(0, 0, 1.0)}, cfg, COORD)


# ---------------------------------------------------------------------------
# whole packets


def test_run_packet_zero_rate_always_one_slot():
    cfg = make_config(rates=(0.0, 0.0))
    out = run_packet(cfg, COORD, Substream(SEED, trial=0))
    assert out == PacketOutcome(decode_round=(1, 1), nats_delivered=(0.0, 0.0),
                                slots_consumed=1)


def test_run_packet_m1_structure():
    cfg = make_config(max_rounds=1, rates=(1.0, 1.0))
    for trial in range(200):
        out = run_packet(cfg, COORD, Substream(SEED, trial=trial))
        assert out.slots_consumed == 1
        assert all(r in (1, OUTAGE_ROUND) for r in out.decode_round)


def test_run_packet_slots_equal_max_round_used():
    cfg = make_config(max_rounds=3)
    for trial in range(300):
        out = run_packet(cfg, COORD, Substream(SEED, trial=trial))
        rounds = [3 if r == OUTAGE_ROUND else r for r in out.decode_round]
        assert out.slots_consumed == max(rounds)
        for u, r in enumerate(out.decode_round):
            want = cfg.rates[u] if r != OUTAGE_ROUND else 0.0
            assert out.nats_delivered[u] == want


def test_run_packet_deterministic_in_trial():
    cfg = make_config(scheme=Scheme.INR, max_rounds=3)
    a = run_packet(cfg, COORD, Substream(SEED, trial=17))
    b = run_packet(cfg, COORD, Substream(SEED, trial=17))
    assert a == b
    c = run_packet(cfg, COORD, Substream(SEED, trial=18))
    assert a != c or True  # different trials may coincide, must not error


def test_noncoordinated_matches_single_user_oracle():
    """Each user under the non-coordinated policy behaves exactly like an
    isolated single-user chase protocol on its own band (same draws)."""
    cfg = make_config(rates=(0.7, 0.9), lambdas=(1.0, 2.0), power=2.0,
                      max_rounds=3)
    from coharq.fading import sample_gain
    for trial in range(200):
        out = run_packet(cfg, NONCOORD, Substream(SEED, trial=trial))
        for user in range(2):
            # brute-force single-user replay from the same substream draws
            acc = 0.0
            decided = 0
            for r in range(1, 4):
                s = Substream(SEED, trial=trial, slot=r - 1)
                acc += sample_gain(cfg.profile, user, s).value * cfg.power
                if math.log1p(acc) >= cfg.rates[user]:
                    decided = r
                    break
            expect = decided if decided else OUTAGE_ROUND
            assert out.decode_round[user] == expect


def test_run_packet_k3_random_split():
    profile = FadingProfile(lambdas=(1.0, 1.0, 1.0))
    cfg = ProtocolConfig(profile=profile, rates=(1.0, 1.0, 1.0), power=1.0,
                         scheme=Scheme.INR, max_rounds=2)
    for trial in range(300):
        out = run_packet(cfg, SPLIT, Substream(SEED, trial=trial))
        assert out.slots_consumed in (1, 2)
        assert all(r in (1, 2, OUTAGE_ROUND) for r in out.decode_round)


def test_mimo_packet_runs():
    profile = FadingProfile(lambdas=(1.0, 1.0), tx_antennas=2, rx_antennas=2)
    cfg = ProtocolConfig(profile=profile, rates=(2.0, 2.0), power=4.0,
                         scheme=Scheme.RTD, max_rounds=2)
    out = run_packet(cfg, COORD, Substream(SEED, trial=0))
    assert out.slots_consumed in (1, 2)


# ---------------------------------------------------------------------------
# tracing


def test_trace_format():
    cfg = make_config(rates=(0.0, 5.0), power=1e-6, max_rounds=2)
    trace = []
    run_packet(cfg, COORD, Substream(SEED, trial=3), trace=trace)
    text = format_trace(trace)
    lines = text.strip().split("\n")
    assert lines[0] == "trial,slot,band,user,scheme,decoded_users,failed_users"
    # 2 slots x 2 bands = 4 data lines
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[:4] == ["3", "0", "0", "0"]
    assert first[4] == "rtd"
    # slot 1: user 0 decoded (zero rate), both bands serve user 1
    slot1 = [ln.split(",") for ln in lines[3:]]
    assert [row[3] for row in slot1] == ["1", "1"]
    assert slot1[0][5] == "0"
    assert slot1[0][6] == "1"
