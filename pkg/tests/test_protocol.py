import math

import numpy as np
import pytest

from wcbsim.profiles import DEPT, HALL, make_epoch_config
from wcbsim.protocol import (A, CTRL, EV, S, T, WCB_E, WCB_P, ConfigError,
                             EpochConfig, SlotConfig, analytic_ton,
                             build_schedule, collection_success_prob,
                             event_phase, flood_outcome, quiet_trace,
                             run_epoch)
from wcbsim.rng import stream_rng


def lossless_config(variant=WCB_E, **kw):
    slots = {k: SlotConfig(n_tx=s.n_tx, duration_ms=s.duration_ms, pdr=1.0,
                           t_on_ms=s.t_on_ms) for k, s in HALL.slots.items()}
    cfg = make_epoch_config(HALL, variant=variant, **kw)
    return EpochConfig(**{**cfg.__dict__, "slots": slots,
                          "sdr_table": {1: {1: 1.0, 10: 1.0}, 2: {1: 1.0, 10: 1.0}}})


class ScriptedRng:
    """Deterministic stand-in for a Generator: pops scripted uniforms."""

    def __init__(self, uniforms, ints=()):
        self.uniforms = list(uniforms)
        self.ints = list(ints)

    def random(self, n=None):
        count = 1 if n is None else n
        vals = [self.uniforms.pop(0) if self.uniforms else 0.0
                for _ in range(count)]
        return np.array(vals)

    def integers(self, n):
        return self.ints.pop(0) if self.ints else 0


# ------------------------------------------------------------- schedules

def test_minimal_schedule_slot_count():
    cfg = make_epoch_config(HALL, variant=WCB_E, n_sensors=1, n_event_slots=1,
                            max_recovery_pairs=0, n_ctrl_slots=1)
    sched = build_schedule(cfg)
    assert [s.kind for s in sched.slots] == [S, EV, T, A, CTRL]


@pytest.mark.parametrize("profile,delta", [(HALL, 12.0), (DEPT, 16.0)])
def test_event_slots_shift_dissemination(profile, delta):
    e = build_schedule(make_epoch_config(profile, variant=WCB_E))
    p = build_schedule(make_epoch_config(profile, variant=WCB_P))
    first_ctrl_e = e.of_kind(CTRL)[0].end_ms
    first_ctrl_p = p.of_kind(CTRL)[0].end_ms
    assert first_ctrl_e - first_ctrl_p == pytest.approx(delta, abs=1e-9)


def test_schedule_monotone_and_recovery_reserved():
    sched = build_schedule(make_epoch_config(HALL, variant=WCB_P))
    ends = 0.0
    for slot in sched.slots:
        assert slot.start_ms >= ends
        ends = slot.end_ms
    # 10 dedicated + 3 reserved recovery T slots
    assert len(sched.of_kind(T)) == 13
    assert len(sched.of_kind(A)) == 4


def test_reference_latencies_from_schedule():
    # end of the first command slot, measured from the epoch start
    for profile, variant, expected in [
            (HALL, WCB_E, 192.023), (HALL, WCB_P, 180.023),
            (DEPT, WCB_E, 253.017), (DEPT, WCB_P, 237.017)]:
        sched = build_schedule(make_epoch_config(profile, variant=variant))
        assert sched.of_kind(CTRL)[0].end_ms == pytest.approx(expected, abs=1e-9)


def test_active_portion_must_fit():
    with pytest.raises(ConfigError):
        build_schedule(make_epoch_config(HALL, variant=WCB_P, t_epoch_s=0.15))


# ------------------------------------------------------------- floods

def test_flood_outcome_extremes():
    rng = stream_rng(0, "network", 0)
    assert flood_outcome(1.0, 50, rng).all()
    assert not flood_outcome(0.0, 50, rng).any()


def test_flood_outcome_binomial_rate():
    # 1e6 draws at the dedicated-slot delivery rate, within 3 sigma
    rng = stream_rng(123, "network", 0)
    n, p = 1_000_000, 0.9994
    hits = int(flood_outcome(p, n, rng).sum())
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(hits - n * p) < 3 * sigma


# ------------------------------------------------------------- event phase

def test_event_phase_quiet_without_false_positives():
    cfg = make_epoch_config(HALL, variant=WCB_E, fp_rate=0.0)
    detected = event_phase(set(), cfg, stream_rng(0, "falsepos", 0))
    assert not detected.any()


def test_event_phase_single_sender_detected_everywhere():
    cfg = make_epoch_config(DEPT, variant=WCB_E)
    assert cfg.sdr(1) == 1.0
    detected = event_phase({3}, cfg, stream_rng(0, "event", 0))
    assert detected.all()


def test_sdr_table_reference_points():
    cfg = make_epoch_config(DEPT, variant=WCB_E)
    assert cfg.sdr(10) == 0.998
    assert cfg.sdr(25) == 0.998          # clamped above the table
    assert cfg.sdr(2) == 0.999997
    assert 0.99998 < cfg.sdr(4) < 0.999993  # interpolated between 3 and 5
    hall = make_epoch_config(HALL, variant=WCB_E)
    assert hall.sdr(10) == 0.999


def test_event_phase_senders_always_self_detect():
    cfg = make_epoch_config(HALL, variant=WCB_E)
    low_sdr = EpochConfig(**{**cfg.__dict__,
                             "sdr_table": {2: {1: 0.0, 10: 0.0}}})
    detected = event_phase({1, 7}, low_sdr, stream_rng(0, "event", 0))
    assert detected[1] and detected[7]
    assert not detected[0]


# ------------------------------------------------------------- epochs

def test_lossless_epoch_accounting():
    cfg = lossless_config()
    sched = build_schedule(cfg)
    readings = {sid: (float(sid),) for sid in cfg.sensor_ids()}
    tr = run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                   stream_rng(0, "network", 0))
    assert tr.recovery_rounds_used == 0
    assert tr.unresolved == ()
    first_ctrl = sched.of_kind(CTRL)[0].end_ms
    assert np.all(tr.act_latency_ms == first_ctrl)
    slots = cfg.slots
    expected = (slots[S].t_on_ms + 2 * slots[EV].t_on_ms
                + 10 * slots[T].t_on_ms + slots[A].t_on_ms
                + 2 * slots[CTRL].t_on_ms)
    assert np.allclose(tr.radio_on_ms, expected)


def test_quiet_epoch_radio_formula():
    cfg = lossless_config()
    tr = quiet_trace(7, cfg)
    expected = cfg.slots[S].t_on_ms + 2 * cfg.slots[EV].t_on_ms
    assert np.allclose(tr.radio_on_ms, expected)
    assert tr.radio_on_ms.max() <= build_schedule(cfg).active_end_ms


def scripted_loss_config():
    # lossy T slots so reception draws are actually consumed; perfect A/CTRL
    base = lossless_config()
    slots = dict(base.slots)
    slots[T] = SlotConfig(n_tx=2, duration_ms=6.0, pdr=0.9,
                          t_on_ms=slots[T].t_on_ms)
    return EpochConfig(**{**base.__dict__, "slots": slots})


def test_scripted_single_loss_recovers_in_one_round():
    cfg = scripted_loss_config()
    sched = build_schedule(cfg)
    readings = {sid: (float(sid),) for sid in cfg.sensor_ids()}
    # collection draws: sensor 4's flood lost (draw above pdr); the single
    # recovery contention succeeds with the T-slot probability
    uniforms = [0.0] * 3 + [0.95] + [0.0] * 6 + [0.0]
    tr = run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                   ScriptedRng(uniforms))
    assert tr.recovery_rounds_used == 1
    assert tr.unresolved == ()
    assert 4 in tr.received
    # the recovering sensor paid for one extra T/A pair
    extra = cfg.slots[T].t_on_ms + cfg.slots[A].t_on_ms
    assert tr.radio_on_ms[4] == pytest.approx(tr.radio_on_ms[3] + extra)
    assert tr.radio_on_ms[0] == pytest.approx(tr.radio_on_ms[4])


def test_recovery_exhausts_after_r_rounds():
    cfg = scripted_loss_config()
    sched = build_schedule(cfg)
    readings = {sid: (float(sid),) for sid in cfg.sensor_ids()}
    # sensor 1's flood lost; every recovery contention also lost
    uniforms = [0.95] + [0.0] * 9 + [0.95, 0.95, 0.95]
    tr = run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                   ScriptedRng(uniforms))
    assert tr.recovery_rounds_used == cfg.max_recovery_pairs
    assert tr.unresolved == (1,)


def test_sleeping_controller_collects_nothing():
    cfg = lossless_config()
    sched = build_schedule(cfg)
    readings = {sid: (float(sid),) for sid in cfg.sensor_ids()}
    tr = run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                   stream_rng(0, "network", 0), controller_on=False)
    assert tr.received == {}
    assert tr.unresolved == tuple(cfg.sensor_ids())
    assert np.all(np.isnan(tr.act_latency_ms))
    assert tr.recovery_rounds_used == cfg.max_recovery_pairs


def test_epoch_determinism():
    cfg = make_epoch_config(HALL, variant=WCB_E)
    sched = build_schedule(cfg)
    readings = {sid: (float(sid),) for sid in cfg.sensor_ids()}

    def once():
        return run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                         stream_rng(99, "network", 5), epoch=5)

    a, b = once(), once()
    assert a.received == b.received
    assert a.recovery_rounds_used == b.recovery_rounds_used
    assert np.array_equal(a.act_latency_ms, b.act_latency_ms, equal_nan=True)
    assert np.array_equal(a.radio_on_ms, b.radio_on_ms)


def test_recovery_monotone_in_delivery_rate():
    # raising the T-slot pdr must not increase expected recovery rounds;
    # checked over 1e4 epochs with a 3-sigma guard band
    n_epochs = 10_000

    def rounds(pdr_t, seed):
        base = make_epoch_config(HALL, variant=WCB_P)
        slots = dict(base.slots)
        slots[T] = SlotConfig(n_tx=2, duration_ms=6.0, pdr=pdr_t,
                              t_on_ms=slots[T].t_on_ms)
        cfg = EpochConfig(**{**base.__dict__, "slots": slots})
        sched = build_schedule(cfg)
        readings = {sid: (0.0,) for sid in cfg.sensor_ids()}
        return np.array([
            run_epoch(sched, set(cfg.sensor_ids()), readings, cfg,
                      stream_rng(seed, "network", epoch),
                      epoch=epoch).recovery_rounds_used
            for epoch in range(n_epochs)])

    low = rounds(0.95, seed=11)
    high = rounds(0.995, seed=12)
    guard = 3.0 * math.sqrt((low.var() + high.var()) / n_epochs)
    assert high.mean() < low.mean() - guard
    assert low.mean() > 0.2


def test_recovery_rounds_never_exceed_r():
    cfg = make_epoch_config(HALL, variant=WCB_P)
    slots = dict(cfg.slots)
    slots[T] = SlotConfig(n_tx=2, duration_ms=6.0, pdr=0.5, t_on_ms=slots[T].t_on_ms)
    lossy = EpochConfig(**{**cfg.__dict__, "slots": slots})
    sched = build_schedule(lossy)
    readings = {sid: (0.0,) for sid in lossy.sensor_ids()}
    for epoch in range(300):
        tr = run_epoch(sched, set(lossy.sensor_ids()), readings, lossy,
                       stream_rng(5, "network", epoch), epoch=epoch)
        assert tr.recovery_rounds_used <= lossy.max_recovery_pairs
        if tr.unresolved:
            assert tr.recovery_rounds_used == lossy.max_recovery_pairs
        assert tr.radio_on_ms.max() <= build_schedule(lossy).active_end_ms


# ------------------------------------------------------------- analytics

def test_collection_success_prob_reference_values():
    assert collection_success_prob(1.0, 10, 3) == 1.0
    assert collection_success_prob(0.5, 2, 0) == pytest.approx(0.25)
    tail = 1.0 - collection_success_prob(0.9994, 10, 3)
    assert tail < 1e-7
    assert tail == pytest.approx(2.71e-11, rel=0.05)


def test_analytic_ton_boundaries_and_references():
    cfg = make_epoch_config(HALL, variant=WCB_E)
    t_e, t_p, dc_e, dc_p = analytic_ton(cfg, 1.0)
    assert t_e == pytest.approx(t_p + 2 * cfg.slots[EV].t_on_ms)
    # calibration anchors: periodic epoch budget and quiet-epoch budget
    assert t_p == pytest.approx(59.50, abs=1e-9)
    t_e0, _, _, _ = analytic_ton(cfg, 0.0)
    assert t_e0 == pytest.approx(13.81, abs=1e-9)
    # one-day duty cycles at the observed event-epoch frequency
    _, _, dc_e, dc_p = analytic_ton(cfg, 149.0 / 1440.0)
    assert dc_e == pytest.approx(0.0319, rel=0.02)
    assert dc_p == pytest.approx(0.0992, rel=0.001)

    dept = make_epoch_config(DEPT, variant=WCB_E)
    _, _, dc_e, dc_p = analytic_ton(dept, 148.0 / 1440.0)
    assert dc_e == pytest.approx(0.0413, rel=0.02)
    assert dc_p == pytest.approx(0.1166, rel=0.001)


def test_break_even_event_frequency():
    for profile in (HALL, DEPT):
        cfg = make_epoch_config(profile, variant=WCB_E)
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            t_e, t_p, _, _ = analytic_ton(cfg, mid)
            if t_e < t_p:
                lo = mid
            else:
                hi = mid
        assert 0.85 <= lo <= 0.95


def test_analytic_ton_rejects_bad_frequency():
    cfg = make_epoch_config(HALL, variant=WCB_E)
    with pytest.raises(ValueError):
        analytic_ton(cfg, 1.5)
