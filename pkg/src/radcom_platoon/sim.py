"""One replication: wires the world, engine, channel, MAC, message generation
and metrics together and runs warm-up plus measurement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from . import facilities as fac
from .engine import NS_PER_S, Engine, EventKind, Purpose, RngStreams, to_ns
from .mac import ACK_BYTES, SIFS_NS, SLOT_NS, FrameDescriptor, Mac, MacConfig, airtime_ns
from .metrics import RX_DTYPE, NetStats, RecordLog, Tally, scbr_update
from .phy import CBR_WINDOW_NS, DELIVERED, LOST_LINK, LOST_QUEUE, Medium, PhyConfig, Transmission, ring_rx
from .radcom import RadComConfig, radcom_deliver
from .scenario import World

CAM_CHECK_NS = 100_000_000
EAST_HEADING, WEST_HEADING = 90.0, 270.0


@dataclass
class SimResult:
    stats: NetStats
    records: np.ndarray  # empty unless the run kept its records
    trace_hash: str
    scbr_series: list[tuple[float, float]]  # (t_s, node-mean S-CBR)
    counters: dict[str, int] = field(default_factory=dict)


class Simulation:
    def __init__(
        self,
        world: World,
        phy: PhyConfig | None = None,
        mac: MacConfig | None = None,
        radcom: RadComConfig | None = None,
        seed: int | None = None,
        record_range: float = 300.0,
        pdr_distance: float = 200.0,
        trace: TextIO | None = None,
        keep_records: bool = False,
    ) -> None:
        self.world = world
        self.cfg = world.config
        self.phy = phy or PhyConfig()
        self.mac_cfg = mac or MacConfig()
        self.radcom_cfg = radcom or RadComConfig()
        self.seed = self.cfg.seed if seed is None else seed
        self.record_range = record_range
        self.pdr_distance = pdr_distance
        n = world.n
        self.n = n
        self.engine = Engine(trace)
        self.rng = RngStreams(self.seed)
        self.medium = Medium(n, self.phy)
        self.mac = Mac(
            n, self.engine, self.mac_cfg, self.rng, self.medium.busy, self.medium.idle_since,
            self._transmit, self._on_drop,
        )
        self.plan = fac.apply_offload(world)
        self.tally = Tally(pdr_distance)
        self.log = RecordLog() if keep_records else None
        self.t_meas0 = to_ns(self.cfg.warmup)
        self.t_meas1 = self.t_meas0 + to_ns(self.cfg.measure)
        self._tx_id = 0
        self._cbr_prev = np.zeros(n)
        self.scbr = np.zeros(n)
        self._adaptive = self.mac_cfg.dcc.enabled and self.mac_cfg.dcc.mode == "adaptive"
        if self._adaptive:
            self.delta = np.full(n, self.mac_cfg.dcc.delta_max)
            self.mac.set_duty(self.delta)
        self._scbr_sum = 0.0
        self._scbr_n = 0
        self.scbr_series: list[tuple[float, float]] = []
        self._last_cam: list[fac.KinematicState | None] = [None] * n
        self.counters = {"cam_generated": 0, "pcm_generated": 0, "pcm_radcom": 0,
                         "g5_tx": 0, "queue_drops": 0}
        self._pending_acks: dict[int, tuple[int, int]] = {}
        self._x0 = world.x0
        self._v = np.ascontiguousarray(world.sign * world.speeds)
        self._y = np.ascontiguousarray(world.y)
        self._L = float(self.cfg.road_length)
        self._scale = self.phy.tx_power * 10.0 ** (-self.phy.reference_loss_db / 10.0)
        e = self.engine
        e.on(EventKind.PCM_TICK, self._on_pcm)
        e.on(EventKind.CAM_CHECK, self._on_cam_check)
        e.on(EventKind.TX_START, self._on_tx_start_deferred)
        e.on(EventKind.TX_END, self._on_tx_end)
        e.on(EventKind.CBR_SAMPLE, self._on_cbr)
        e.on(EventKind.ACK_TIMEOUT, self._on_ack_timeout)
        self._mac_on_busy = self.mac.on_busy
        self._mac_on_idle = self.mac.on_idle
        self._seed_events()

    # -- setup ---------------------------------------------------------------

    def _seed_events(self) -> None:
        period = to_ns(self.cfg.pcm_period)
        e = self.engine
        for v in range(self.n):
            jitter = self.rng.stream(v, Purpose.JITTER)
            pcm_phase = int(jitter.integers(0, period))
            cam_phase = int(jitter.integers(0, CAM_CHECK_NS))
            if self.plan.pcm_g5[v] or self.plan.pcm_radcom[v]:
                e.schedule(pcm_phase, EventKind.PCM_TICK, v)
            if self.plan.cam_g5[v]:
                e.schedule(cam_phase, EventKind.CAM_CHECK, v)
        e.schedule(CBR_WINDOW_NS, EventKind.CBR_SAMPLE)

    def kinematic_state(self, v: int, t_ns: int) -> fac.KinematicState:
        t = t_ns / NS_PER_S
        heading = EAST_HEADING if self._v[v] >= 0 else WEST_HEADING
        return fac.KinematicState(t_ns, float(self._x0[v] + self._v[v] * t),
                                  float(self.world.y[v]), heading, float(self.world.speeds[v]))

    # -- generation ----------------------------------------------------------

    def _on_pcm(self, ev) -> None:
        v, t = ev.node, ev.time
        self.engine.schedule(t + to_ns(self.cfg.pcm_period), EventKind.PCM_TICK, v)
        out = fac.pcm_tick(v, t, self.world, self.plan)
        self.counters["pcm_generated"] += 1
        if isinstance(out, fac.RadComSend):
            self.counters["pcm_radcom"] += 1
            self._radcom(out)
            return
        if self.mac_cfg.pcm_unicast:
            p = self.world.platoons[int(self.world.platoon_of[v])]
            out.dest = p.ordered_members[1] if v == p.leader else p.leader
        self.mac.enqueue(v, out)

    def _on_cam_check(self, ev) -> None:
        v, t = ev.node, ev.time
        self.engine.schedule(t + CAM_CHECK_NS, EventKind.CAM_CHECK, v)
        state = self.kinematic_state(v, t)
        if fac.cam_check(state, self._last_cam[v], self.cfg.cam_rules):
            self._last_cam[v] = state
            self.counters["cam_generated"] += 1
            self.mac.enqueue(v, fac.make_cam(v, t))

    def _radcom(self, send: fac.RadComSend) -> None:
        platoon = self.world.platoons[send.platoon_id]
        src = int(self.world.rank_in_platoon[send.sender])
        rng = self.rng.stream(send.sender, Purpose.RADCOM_LOSS)
        arrivals = radcom_deliver(platoon, src, send.payload_bytes, send.generated_at / NS_PER_S,
                                  rng, self.radcom_cfg)
        t = send.generated_at
        if not self.t_meas0 <= t < self.t_meas1:
            return
        members = np.array(platoon.ordered_members)
        keep = np.arange(platoon.size) != src
        dist = self.world.distances_from(send.sender, t / NS_PER_S)[members]
        received = np.array([to_ns(a) if a is not None else -1 for a in arrivals], dtype=np.int64)
        outcomes = np.where(received >= 0, DELIVERED, LOST_LINK).astype(np.int8)
        self._record(-1, send.sender, members[keep], dist[keep], t, received[keep],
                     outcomes[keep], "PCM", "RadCom")

    def _record(self, frame_id, sender, receivers, distances, generated_at, received_at,
                outcomes, service, path) -> None:
        self.tally.add(distances, outcomes, generated_at, received_at, service, path)
        if self.log is not None:
            self.log.add(frame_id, sender, receivers, distances, generated_at, received_at,
                         outcomes, service, path)

    # -- channel -------------------------------------------------------------

    def _transmit(self, node: int, frame: FrameDescriptor, start: int, duration: int) -> None:
        dist = np.empty(self.n)
        rx = np.empty(self.n)
        ring_rx(self._x0, self._v, self._y, self._L, start / NS_PER_S, node, self._scale,
                self.phy.pathloss_exponent, self.phy.max_range, dist, rx)
        tx = Transmission(self._tx_id, node, start, start + duration, rx, dist, frame=frame)
        self._tx_id += 1
        self.counters["g5_tx"] += 1
        up, down = self.medium.start(tx, self.mac.watch)
        if len(up):
            self._mac_on_busy(up, start)
        if len(down):
            self._mac_on_idle(down, start)
        self.engine.schedule(tx.end, EventKind.TX_END, node, tx)

    def _on_tx_start_deferred(self, ev) -> None:
        node, frame = ev.node, ev.data
        self._transmit(node, frame, ev.time, airtime_ns(frame.payload_bytes, self.mac_cfg.data_rate))

    def _on_tx_end(self, ev) -> None:
        tx: Transmission = ev.data
        t = ev.time
        up, down = self.medium.end(tx, self.mac.watch)
        frame: FrameDescriptor = tx.frame
        is_ack = frame.service == "ACK"
        if not is_ack:
            self.mac.tx_finished(tx.sender, t)
        if len(up):
            self._mac_on_busy(up, t)
        if len(down):
            self._mac_on_idle(down, t)
        outcomes = self.medium.outcomes(tx)
        if is_ack:
            orig = self._pending_acks.pop(frame.dest, None)
            if orig is not None:
                self.mac.ack_result(frame.dest, orig[1], bool(outcomes[frame.dest] == DELIVERED), t)
            return
        if not frame.broadcast:
            self._handle_unicast(tx, frame, outcomes, t)
        if self.t_meas0 <= tx.start < self.t_meas1:
            sel = np.flatnonzero((outcomes >= 0) & (tx.distance <= self.record_range))
            self._record(frame.id, tx.sender, sel, tx.distance[sel], frame.generated_at, t,
                         outcomes[sel], frame.service, "G5")

    def _handle_unicast(self, tx: Transmission, frame: FrameDescriptor, outcomes, t: int) -> None:
        self._pending_acks[tx.sender] = (frame.id, frame.traffic_class)
        if outcomes[frame.dest] == DELIVERED:
            ack = FrameDescriptor(sender=frame.dest, payload_bytes=ACK_BYTES, traffic_class=0,
                                  generated_at=t, service="ACK", dest=tx.sender)
            self.engine.schedule(t + SIFS_NS, EventKind.TX_START, frame.dest, ack)
        else:
            timeout = t + SIFS_NS + airtime_ns(ACK_BYTES, self.mac_cfg.data_rate) + SLOT_NS
            self.engine.schedule(timeout, EventKind.ACK_TIMEOUT, tx.sender, frame.id)

    def _on_ack_timeout(self, ev) -> None:
        pending = self._pending_acks.get(ev.node)
        if pending is None or pending[0] != ev.data:
            return
        del self._pending_acks[ev.node]
        self.mac.ack_result(ev.node, pending[1], False, ev.time)

    def _on_drop(self, frame: FrameDescriptor) -> None:
        """A frame pushed out of a full queue is lost for every receiver in range."""
        self.counters["queue_drops"] += 1
        t = self.engine.now
        if not self.t_meas0 <= t < self.t_meas1:
            return
        dist = self.world.distances_from(frame.sender, t / NS_PER_S)
        sel = np.flatnonzero(dist <= self.record_range)
        sel = sel[sel != frame.sender]
        self._record(frame.id, frame.sender, sel, dist[sel], frame.generated_at, -1,
                     np.full(len(sel), LOST_QUEUE, dtype=np.int8), frame.service, "G5")

    def _on_cbr(self, ev) -> None:
        t = ev.time
        cbr = self.medium.cbr_sample(t)
        self.scbr = scbr_update(self.scbr, cbr, self._cbr_prev)
        if self._adaptive:
            # Controller runs on every other window with the mean of the last two samples.
            if (t // CBR_WINDOW_NS) % 2 == 0:
                self.delta = self.mac_cfg.dcc.adaptive_step(self.delta, 0.5 * (cbr + self._cbr_prev))
                self.mac.set_duty(self.delta)
        elif self.mac_cfg.dcc.enabled:
            self.mac.set_toff(self.mac_cfg.dcc.toff_ns(self.scbr))
        self._cbr_prev = cbr
        if self.t_meas0 < t <= self.t_meas1:
            mean = float(self.scbr.mean())
            self._scbr_sum += float(self.scbr.sum())
            self._scbr_n += self.n
            self.scbr_series.append((t / NS_PER_S, mean))
        self.engine.schedule(t + CBR_WINDOW_NS, EventKind.CBR_SAMPLE)

    # -- driver --------------------------------------------------------------

    def run_until(self, t_s: float) -> None:
        self.engine.run_until(to_ns(t_s))

    def run(self) -> SimResult:
        self.engine.run_until(self.t_meas1)
        return self.result()

    def result(self) -> SimResult:
        records = self.log.records if self.log is not None else np.empty(0, dtype=RX_DTYPE)
        stats = self.tally.stats(self._scbr_sum, self._scbr_n)
        counters = dict(self.counters)
        counters["queue_drops"] = self.mac.queue_drops
        counters["retry_drops"] = self.mac.retry_drops
        counters["events"] = self.engine.processed
        return SimResult(stats, records, self.engine.trace_hash(), list(self.scbr_series), counters)
