"""Discrete-event model of one bus epoch.

An epoch's active portion is a fixed slot plan: a synchronization flood S,
(event-triggered variant only) E shared event-notification slots EV, K
dedicated sensor collection slots T, a cumulative acknowledgment flood A,
R contention/acknowledgment pairs for recovery, and C repeated command
dissemination slots CTRL. Per-slot flood outcomes are i.i.d. Bernoulli
draws at empirically measured delivery rates; the PHY is abstracted away.

Node ids: 0 is the controller, 1..K the sensors, K+1..K+n_actuators the
actuators. All awake nodes relay every flood, so radio-on time is charged
per scheduled slot to every node participating in that phase; nodes sleep
as soon as the protocol permits (quiet epochs end after the EV phase,
acknowledged sensors skip recovery, everything sleeps after the last CTRL).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

S, EV, T, A, CTRL = "S", "EV", "T", "A", "CTRL"
SLOT_KINDS = (S, EV, T, A, CTRL)
SHARED = -1

WCB_E = "WCB-E"
WCB_P = "WCB-P"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SlotConfig:
    """One slot type: retransmissions, duration, network-mean delivery rate,
    and the per-node radio-on charge for taking part in the slot."""

    n_tx: int
    duration_ms: float
    pdr: float
    t_on_ms: float

    def __post_init__(self):
        if not (0.0 <= self.pdr <= 1.0):
            raise ConfigError(f"pdr must be a probability, got {self.pdr}")
        if self.duration_ms <= 0:
            raise ConfigError("slot duration must be positive")


@dataclass(frozen=True)
class EpochConfig:
    variant: str
    t_epoch_s: float
    n_sensors: int
    n_actuators: int
    slots: dict[str, SlotConfig]
    n_event_slots: int            # E
    max_recovery_pairs: int       # R
    n_ctrl_slots: int             # C
    gap_ms: float
    preamble_ms: float
    fp_rate: float = 0.0
    sdr_table: dict[int, dict[int, float]] = field(default_factory=dict)
    contention_pdr: float | None = None   # defaults to the T-slot pdr

    @property
    def n_nodes(self) -> int:
        return 1 + self.n_sensors + self.n_actuators

    def sensor_ids(self):
        return range(1, 1 + self.n_sensors)

    def actuator_ids(self):
        return range(1 + self.n_sensors, self.n_nodes)

    def validate(self) -> None:
        if self.variant not in (WCB_E, WCB_P):
            raise ConfigError(f"unknown variant {self.variant}")
        if self.n_sensors < 1 or self.n_ctrl_slots < 1 or self.max_recovery_pairs < 0:
            raise ConfigError("need K >= 1, C >= 1, R >= 0")
        if self.variant == WCB_E and self.n_event_slots < 1:
            raise ConfigError("event-triggered variant needs at least one EV slot")
        build_schedule(self)  # raises if the active portion does not fit

    def sdr(self, n_senders: int) -> float:
        """Signal detection probability for the whole EV phase, interpolated
        in the concurrent-sender count."""
        table = self.sdr_table.get(self.n_event_slots)
        if table is None:
            # no measurement for this EV-slot count; fall back to the pdr
            return self.slots[EV].pdr
        us = sorted(table)
        if n_senders <= us[0]:
            return table[us[0]]
        if n_senders >= us[-1]:
            return table[us[-1]]
        for lo, hi in zip(us, us[1:]):
            if lo <= n_senders <= hi:
                f = (n_senders - lo) / (hi - lo)
                return table[lo] + f * (table[hi] - table[lo])
        raise AssertionError


@dataclass(frozen=True)
class Slot:
    kind: str
    owner: int            # node id, or SHARED
    start_ms: float
    duration_ms: float

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.duration_ms


@dataclass(frozen=True)
class EpochSchedule:
    slots: tuple[Slot, ...]
    active_end_ms: float

    def of_kind(self, kind: str) -> list[Slot]:
        return [s for s in self.slots if s.kind == kind]


def build_schedule(cfg: EpochConfig) -> EpochSchedule:
    """Deterministic slot plan; recovery pairs sit at fixed offsets whether
    used or not, so dissemination timing never depends on losses."""
    slots: list[Slot] = []
    cursor = cfg.preamble_ms

    def push(kind: str, owner: int):
        nonlocal cursor
        w = cfg.slots[kind].duration_ms
        slots.append(Slot(kind=kind, owner=owner, start_ms=cursor, duration_ms=w))
        cursor += w + cfg.gap_ms

    push(S, 0)
    if cfg.variant == WCB_E:
        for _ in range(cfg.n_event_slots):
            push(EV, SHARED)
    for sid in cfg.sensor_ids():
        push(T, sid)
    push(A, 0)
    for _ in range(cfg.max_recovery_pairs):
        push(T, SHARED)
        push(A, 0)
    for _ in range(cfg.n_ctrl_slots):
        push(CTRL, 0)

    active_end = slots[-1].end_ms + cfg.gap_ms
    if active_end >= cfg.t_epoch_s * 1000.0:
        raise ConfigError(
            f"active portion {active_end:.1f} ms does not fit in the "
            f"{cfg.t_epoch_s * 1000.0:.0f} ms epoch")
    return EpochSchedule(slots=tuple(slots), active_end_ms=active_end)


def flood_outcome(pdr: float, n_receivers: int, rng: np.random.Generator) -> np.ndarray:
    """Independent per-receiver reception flags for one flood."""
    if pdr >= 1.0:
        return np.ones(n_receivers, dtype=bool)
    if pdr <= 0.0:
        return np.zeros(n_receivers, dtype=bool)
    return rng.random(n_receivers) < pdr


def event_phase(triggered: set[int], cfg: EpochConfig,
                rng: np.random.Generator) -> np.ndarray:
    """Per-node event detection after the EV slots.

    With U > 0 concurrent notifiers every node detects with the measured
    phase-aggregate probability (notifiers always self-detect); with U = 0
    each node may still falsely detect a corrupted frame.
    """
    detected = np.zeros(cfg.n_nodes, dtype=bool)
    u = len(triggered)
    if u > 0:
        p = cfg.sdr(u)
        detected = flood_outcome(p, cfg.n_nodes, rng)
        for sid in triggered:
            detected[sid] = True
    elif cfg.fp_rate > 0.0:
        detected = flood_outcome(cfg.fp_rate, cfg.n_nodes, rng)
    return detected


@dataclass
class EpochTrace:
    epoch: int
    variant: str
    event_flag: bool
    n_triggered: int
    participants: tuple[int, ...]
    controller_on: bool
    received: dict[int, object]
    recovery_rounds_used: int
    unresolved: tuple[int, ...]
    act_latency_ms: np.ndarray          # per actuator; nan = missed all CTRL floods
    radio_on_ms: np.ndarray             # per node id

    @property
    def last_latency_ms(self) -> float:
        lat = self.act_latency_ms[np.isfinite(self.act_latency_ms)]
        return float(lat.max()) if lat.size else math.nan


def quiet_trace(epoch: int, cfg: EpochConfig) -> EpochTrace:
    """Epoch in which nobody detected an event: sync plus EV listening only."""
    radio = np.zeros(cfg.n_nodes)
    radio += cfg.slots[S].t_on_ms
    if cfg.variant == WCB_E:
        radio += cfg.n_event_slots * cfg.slots[EV].t_on_ms
    return EpochTrace(
        epoch=epoch, variant=cfg.variant, event_flag=False, n_triggered=0,
        participants=(), controller_on=False, received={},
        recovery_rounds_used=0, unresolved=(),
        act_latency_ms=np.full(cfg.n_actuators, np.nan),
        radio_on_ms=radio)


def run_epoch(schedule: EpochSchedule, participants: set[int],
              readings: dict[int, object], cfg: EpochConfig,
              rng: np.random.Generator, epoch: int = 0,
              controller_on: bool = True, actuators_on: set[int] | None = None,
              n_triggered: int | None = None,
              event_flag: bool = True) -> EpochTrace:
    """Execute collection, recovery, and dissemination for one epoch.

    `participants` are the sensors awake for the collection phase;
    `controller_on`/`actuators_on` cover the rare case that a node missed
    the event notification and sleeps through the whole epoch (a sleeping
    controller never acknowledges or disseminates).
    """
    slots = cfg.slots
    if actuators_on is None:
        actuators_on = set(cfg.actuator_ids())
    radio = np.zeros(cfg.n_nodes)
    awake = np.zeros(cfg.n_nodes, dtype=bool)
    awake[0] = controller_on
    for sid in participants:
        awake[sid] = True
    for aid in actuators_on:
        awake[aid] = True

    # everyone sat through sync (and, in the event-triggered variant, EV)
    radio += slots[S].t_on_ms
    if cfg.variant == WCB_E:
        radio += cfg.n_event_slots * slots[EV].t_on_ms

    # collection: one dedicated flood per participating sensor
    received: dict[int, object] = {}
    for sid in cfg.sensor_ids():
        if sid in participants:
            got = flood_outcome(slots[T].pdr, 1, rng)[0]
            if got and controller_on:
                received[sid] = readings[sid]
    radio[awake] += cfg.n_sensors * slots[T].t_on_ms

    # cumulative acknowledgment; per-node Bernoulli reception of the bitmap
    ack_rx = flood_outcome(slots[A].pdr, cfg.n_sensors, rng) if controller_on \
        else np.zeros(cfg.n_sensors, dtype=bool)
    radio[awake] += slots[A].t_on_ms
    contenders = [sid for sid in sorted(participants)
                  if not (ack_rx[sid - 1] and sid in received)]

    # recovery: contenders compete in shared T slots until acknowledged;
    # the controller keeps listening while any of the K readings is missing
    contention_pdr = cfg.contention_pdr if cfg.contention_pdr is not None else slots[T].pdr
    rounds_used = 0
    for _ in range(cfg.max_recovery_pairs):
        controller_needs = controller_on and len(received) < cfg.n_sensors
        if not contenders and not controller_needs:
            break
        rounds_used += 1
        pair_cost = slots[T].t_on_ms + slots[A].t_on_ms
        if controller_on:
            radio[0] += pair_cost
        for sid in contenders:
            radio[sid] += pair_cost
        if contenders and controller_on:
            if flood_outcome(contention_pdr, 1, rng)[0]:
                winner = contenders[int(rng.integers(len(contenders)))]
                received.setdefault(winner, readings[winner])
        if controller_on:
            ack_rx = flood_outcome(slots[A].pdr, cfg.n_sensors, rng)
            contenders = [sid for sid in contenders
                          if not (ack_rx[sid - 1] and sid in received)]
        # without the controller no bitmap arrives; contenders keep trying

    unresolved = tuple(sid for sid in cfg.sensor_ids() if sid not in received)

    # dissemination: C repeated command floods; actuators log the first hit
    act_latency = np.full(cfg.n_actuators, np.nan)
    if controller_on:
        ctrl_slots = schedule.of_kind(CTRL)
        for slot in ctrl_slots:
            got = flood_outcome(slots[CTRL].pdr, cfg.n_actuators, rng)
            for a, aid in enumerate(cfg.actuator_ids()):
                if got[a] and aid in actuators_on and math.isnan(act_latency[a]):
                    act_latency[a] = slot.end_ms
        radio[awake] += cfg.n_ctrl_slots * slots[CTRL].t_on_ms

    return EpochTrace(
        epoch=epoch, variant=cfg.variant, event_flag=event_flag,
        n_triggered=len(participants) if n_triggered is None else n_triggered,
        participants=tuple(sorted(participants)), controller_on=controller_on,
        received=received, recovery_rounds_used=rounds_used,
        unresolved=unresolved, act_latency_ms=act_latency, radio_on_ms=radio)


def collection_success_prob(pdr: float, k: int, max_lost: int) -> float:
    """P(at most max_lost of k independent floods fail)."""
    if not (0.0 <= pdr <= 1.0) or k < 1:
        raise ValueError("need 0 <= pdr <= 1 and k >= 1")
    q = 1.0 - pdr
    return sum(math.comb(k, j) * q**j * pdr**(k - j)
               for j in range(min(max_lost, k) + 1))


def analytic_ton(cfg: EpochConfig, f_ev: float):
    """Closed-form per-epoch radio-on time and duty cycle for both variants.

    The periodic variant pays for every phase each epoch; the event-triggered
    one pays the full schedule plus the EV slots in event epochs and only
    sync + EV otherwise. Recovery is excluded (scheduled but rarely used).
    Returns (T_on_E, T_on_P, DC_E, DC_P); radio-on in ms, duty cycles in %.
    """
    if not (0.0 <= f_ev <= 1.0):
        raise ValueError("event-epoch frequency must lie in [0, 1]")
    slots = cfg.slots
    t_on_p = (slots[S].t_on_ms + cfg.n_sensors * slots[T].t_on_ms
              + slots[A].t_on_ms + cfg.n_ctrl_slots * slots[CTRL].t_on_ms)
    ev_cost = cfg.n_event_slots * slots[EV].t_on_ms
    t_on_e = f_ev * (t_on_p + ev_cost) + (1.0 - f_ev) * (slots[S].t_on_ms + ev_cost)
    epoch_ms = cfg.t_epoch_s * 1000.0
    return t_on_e, t_on_p, 100.0 * t_on_e / epoch_ms, 100.0 * t_on_p / epoch_ms
