"""Fixed-step opportunistic network around a bulletin-board node.

Every step, in this order:

1. all nodes move (random waypoint);
2. contacts are recomputed; transfers on broken links are aborted;
3. each live link moves at most one message one step forward;
4. mixers with something new to release shuffle and flush, then the board
   applies the requests that reached it and queues its answers;
5. writers and readers emit scheduled WRITE and READ messages.

Node 0 is the board. Mixers are drawn from the other nodes at setup; the
remaining "normal" nodes carry conversations, one writer and one reader per
pair, set up as if they had met before the run.
"""

from __future__ import annotations

import csv
import enum
import heapq
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path

from .. import crypto, metrics
from ..board import Board, ReadRequest, WireError, WriteRequest, WriteStatus, parse_request
from ..config import ScenarioConfig
from ..metrics import READ, RESPONSE, WRITE, MetricsLog
from ..mixnet import (
    MixerBuffer,
    MixPath,
    OnionPacket,
    build_path,
    build_reply_route,
    mixer_flush,
    mixer_ingest,
    onion_wrap,
    open_response,
    route_response,
)
from ..protocol import (
    DesyncError,
    SessionState,
    establish_session,
    handle_response,
    prepare_read,
    prepare_write,
)
from .contacts import ContactScript, ContactTracker
from .mobility import RandomWaypoint

BOARD_ID = 0

IN_FLIGHT = "in_flight"
DELIVERED = "delivered"
DROPPED = "dropped"


class Role(str, enum.Enum):
    BOARD = "board"
    MIXER = "mixer"
    NORMAL = "normal"


class TransferStatus(enum.Enum):
    IN_PROGRESS = "in_progress"
    DONE = "done"
    ABORTED = "aborted"


@dataclass(eq=False)
class SimMessage:
    uid: int
    kind: str
    size: int
    created_at: float
    mixers_used: int
    packet: OnionPacket
    origin: int
    destination: int
    pair: int | None = None
    seq: int = -1
    delivered_at: float | None = None
    status: str = IN_FLIGHT
    drop_reason: str | None = None
    reply_mixers: int | None = None


@dataclass(eq=False)
class Copy:
    """One physical instance of a message; its packet changes as layers come off."""

    msg: SimMessage
    packet: OnionPacket
    stage: int = 0

    @property
    def key(self) -> tuple[int, int]:
        return self.msg.uid, self.stage


@dataclass(eq=False)
class SimNode:
    id: int
    role: Role
    radio_range: float
    bitrate: float
    queues: dict[int, deque] = field(default_factory=dict)
    carried: list[Copy] = field(default_factory=list)
    seen: set[tuple[int, int]] = field(default_factory=set)
    mixer: MixerBuffer | None = None
    keypair: crypto.MixKeyPair | None = None
    credit_token: bytes | None = None
    mix_dirty: bool = False
    version: int = 0
    _mob: RandomWaypoint | None = field(default=None, repr=False)

    @property
    def position(self) -> tuple[float, float]:
        if self._mob is None:
            return 0.0, 0.0
        return self._mob.position(self.id)

    def buffered(self) -> int:
        n = sum(len(q) for q in self.queues.values()) + len(self.carried)
        return n + (len(self.mixer) if self.mixer is not None else 0)


@dataclass(eq=False)
class Pair:
    index: int
    writer: int
    reader: int
    w_state: SessionState
    r_state: SessionState
    sent: list[bytes] = field(default_factory=list)
    received: list[bytes] = field(default_factory=list)
    awaiting: int = 0
    poll_gen: int = 0
    reply_keys: dict[int, bytes] = field(default_factory=dict)


@dataclass(eq=False)
class Transfer:
    copy: Copy
    src: int
    dst: int
    remaining: int


@dataclass(eq=False)
class Link:
    a: int
    b: int
    started_at: float
    transfer: Transfer | None = None
    cursor: dict[int, int] = field(default_factory=dict)
    turn: int = 0
    idle_at: tuple[int, int] | None = None


@dataclass(frozen=True)
class BoardLogEntry:
    time: float
    op: str
    index: int
    status: str
    reply_first_hop: int | None = None


def transfer_steps(size: int, bitrate: float, dt: float) -> int:
    return max(1, math.ceil(size / (bitrate * dt)))


class World:
    def __init__(
        self,
        config: ScenarioConfig,
        *,
        script: ContactScript | None = None,
        roles: dict[int, Role] | None = None,
        pairs: list[tuple[int, int]] | None = None,
        auto_traffic: bool = True,
        trace: bool = False,
    ):
        self.config = cfg = config
        seed = cfg.world.seed
        self.dt = cfg.world.time_step
        self.n_steps = round(cfg.world.duration / self.dt)
        self.step_index = 0
        self.epidemic = cfg.routing.mode == "epidemic"
        self.strict = cfg.mix.strict_reply
        self.max_mixers = cfg.mix.max_mixers
        self.script = script
        self.auto_traffic = auto_traffic

        self.rng_setup = random.Random(f"{seed}/setup")
        self.rng_traffic = random.Random(f"{seed}/traffic")
        self.rng_paths = random.Random(f"{seed}/paths")
        self.rng_mix = random.Random(f"{seed}/mix")

        n = cfg.nodes.count
        self.mobility = None
        self.tracker = ContactTracker(cfg.nodes.range, cfg.nodes.v_max, self.dt)
        if n and script is None:
            self.mobility = RandomWaypoint(
                n, cfg.world.width, cfg.world.height, cfg.nodes.v_min, cfg.nodes.v_max,
                random.Random(f"{seed}/mobility"),
                fixed={BOARD_ID} if cfg.board.stationary else frozenset(),
            )
        if roles is None:
            mixers = set(self.rng_setup.sample(range(1, n), cfg.mix.count)) if n > 1 else set()
            roles = {i: (Role.BOARD if i == BOARD_ID else Role.MIXER if i in mixers else Role.NORMAL)
                     for i in range(n)}
        self.nodes = [
            SimNode(i, roles[i], cfg.nodes.range, cfg.nodes.bitrate, _mob=self.mobility)
            for i in range(n)
        ]
        self.mixer_ids = [x.id for x in self.nodes if x.role is Role.MIXER]
        self.normal_ids = [x.id for x in self.nodes if x.role is Role.NORMAL]
        self.keyring: dict[int, bytes] = {}
        for m in self.mixer_ids:
            node = self.nodes[m]
            node.keypair = crypto.MixKeyPair.generate(m, self.rng_setup)
            node.mixer = MixerBuffer(m, cfg.mix.batch_threshold)
            self.keyring[m] = node.keypair.public

        self.board = Board(cfg.board.cells)
        self.board_log: list[BoardLogEntry] = []
        self.board_observations: list[tuple[int, bytes]] = []
        self._inbox: list[tuple[Copy, int]] = []

        self.metrics = MetricsLog()
        self.messages: dict[int, SimMessage] = {}
        self.ledger: Counter = Counter()
        self.desyncs: list[str] = []
        self._uid = 0

        self.links: dict[tuple[int, int], Link] = {}
        self._link_order: list[tuple[int, int]] = []
        self._contacts: set[tuple[int, int]] = set()
        self._peers: dict[int, set[int]] = {}

        self.trace_rows: list[tuple] | None = [] if trace else None

        self.pairs: list[Pair] = []
        self._events: list[tuple[int, int, int, str, int]] = []
        self._event_seq = 0
        self._setup_pairs(pairs)

    # -- setup --------------------------------------------------------------

    def _setup_pairs(self, explicit):
        cfg = self.config
        if explicit is None:
            explicit = []
            normals = self.normal_ids
            for i in range(cfg.traffic.pairs):
                if i % len(normals) == 0:
                    writers = self.rng_setup.sample(normals, len(normals))
                w = writers[i % len(normals)]
                r = self.rng_setup.choice([x for x in normals if x != w])
                explicit.append((w, r))
        for w, r in explicit:
            node = self.nodes[w]
            if node.credit_token is None:
                node.credit_token = crypto.random_bytes(self.rng_setup, crypto.CREDIT_TOKEN_LEN)
                self.board.register(node.credit_token, cfg.board.credits)
            ws, rs = establish_session(w, r, cfg.board.cells, self.rng_setup, node.credit_token)
            self.pairs.append(Pair(len(self.pairs), w, r, ws, rs))
        if self.auto_traffic:
            for p in self.pairs:
                self._schedule(self._step_at(cfg.traffic.start), p.index, "w", 0)
                self._schedule_poll(p, self._step_at(self._epoch(0) + cfg.traffic.read_lag))

    def _epoch(self, j: int) -> float:
        return self.config.traffic.start + j * self.config.traffic.write_interval

    def _n_writes(self) -> int:
        t = self.config.traffic
        span = self.config.world.duration - t.start
        return max(0, math.ceil(span / t.write_interval - 1e-9))

    def _step_at(self, t: float) -> int:
        return max(1, math.ceil(t / self.dt - 1e-9))

    def _schedule(self, step: int, pair: int, what: str, gen: int):
        self._event_seq += 1
        heapq.heappush(self._events, (step, self._event_seq, pair, what, gen))

    def _schedule_poll(self, p: Pair, step: int):
        p.poll_gen += 1
        self._schedule(step, p.index, "r", p.poll_gen)

    # -- clock --------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.step_index * self.dt

    @property
    def done(self) -> bool:
        return self.step_index >= self.n_steps

    def run(self) -> metrics.Report:
        while self.step_index < self.n_steps:
            self.step()
        return self.report()

    def report(self) -> metrics.Report:
        return metrics.compute_report(
            self.metrics, self.config.scenario.name, self.config.world.seed, self.config.digest()
        )

    def step(self) -> None:
        self.step_index += 1
        if not self.nodes:
            return
        if self.mobility is not None:
            self.mobility.step(self.dt)
        self._update_contacts()
        for key in self._link_order:
            self._progress(self.links[key])
        self._flush_mixers()
        self._process_board()
        if self._events:
            self._traffic()

    # -- contacts and transfers ----------------------------------------------

    def current_contacts(self) -> set[tuple[int, int]]:
        if self.script is not None:
            return self.script.at(self.now, self.dt)
        return self.tracker.update(self.mobility.x, self.mobility.y)

    def _update_contacts(self):
        contacts = self.current_contacts()
        if contacts == self._contacts:
            return
        for key in self._contacts - contacts:
            link = self.links.pop(key)
            if link.transfer is not None:
                self._abort(link)
        for a, b in contacts - self._contacts:
            self.links[(a, b)] = Link(a, b, self.now, cursor={a: 0, b: 0})
            self._log("contact", a, None, str(b))
        self._contacts = contacts
        self._link_order = sorted(contacts)
        peers: dict[int, set[int]] = {}
        for a, b in contacts:
            peers.setdefault(a, set()).add(b)
            peers.setdefault(b, set()).add(a)
        for nid in set(self._peers) | set(peers):
            if self._peers.get(nid) != peers.get(nid):
                self.nodes[nid].mix_dirty = True
        self._peers = peers

    def _abort(self, link: Link):
        t = link.transfer
        link.transfer = None
        if not self.epidemic:
            src = self.nodes[t.src]
            src.queues.setdefault(t.copy.packet.next_hop, deque()).appendleft(t.copy)
            src.version += 1
        self._log("xfer_abort", t.src, t.copy.msg.uid, str(t.dst))

    def _next_offer(self, src: SimNode, dst: SimNode, link: Link) -> Copy | None:
        cap = self.config.nodes.buffer_capacity
        if self.epidemic:
            if cap and dst.buffered() >= cap:
                return None
            buf, i = src.carried, link.cursor[src.id]
            seen = dst.seen
            while i < len(buf):
                c = buf[i]
                i += 1
                if c.msg.status == IN_FLIGHT and (c.msg.uid, c.stage) not in seen:
                    link.cursor[src.id] = i
                    return c
            link.cursor[src.id] = i
            return None
        q = src.queues.get(dst.id)
        if not q:
            return None
        if cap and dst.mixer is not None and dst.buffered() >= cap:
            return None
        src.version += 1
        return q.popleft()

    def transfer(self, link: Link) -> TransferStatus:
        """Advance ``link``'s current transfer by one step."""
        t = link.transfer
        if t is None:
            return TransferStatus.ABORTED
        if (link.a, link.b) not in self._contacts:
            self._abort(link)
            return TransferStatus.ABORTED
        t.remaining -= 1
        if t.remaining > 0:
            return TransferStatus.IN_PROGRESS
        link.transfer = None
        self._log("xfer_done", t.dst, t.copy.msg.uid, str(t.src))
        self._arrive(t.copy, self.nodes[t.dst], t.src)
        return TransferStatus.DONE

    def _progress(self, link: Link):
        if link.transfer is None:
            nodes = self.nodes
            versions = (nodes[link.a].version, nodes[link.b].version)
            if link.idle_at == versions:
                return
            ends = (link.a, link.b) if link.turn == 0 else (link.b, link.a)
            for s, d in (ends, ends[::-1]):
                copy = self._next_offer(self.nodes[s], self.nodes[d], link)
                if copy is not None:
                    steps = transfer_steps(copy.packet.size, self.nodes[s].bitrate, self.dt)
                    link.transfer = Transfer(copy, s, d, steps)
                    link.turn ^= 1
                    self._log("xfer_start", s, copy.msg.uid, str(d))
                    break
            else:
                # nothing to send until either end's buffers change
                link.idle_at = versions
                return
        self.transfer(link)

    def forward_policy(self, node: SimNode, contacts) -> list[tuple[Copy, int]]:
        """Every (copy, peer) offer ``node`` would make to its current contacts."""
        peers = sorted({b if a == node.id else a for a, b in contacts if node.id in (a, b)})
        offers = []
        for p in peers:
            if self.epidemic:
                seen = self.nodes[p].seen
                offers += [(c, p) for c in node.carried
                           if c.msg.status == IN_FLIGHT and c.key not in seen]
            else:
                offers += [(c, p) for c in node.queues.get(p, ())]
        return offers

    # -- arrivals -------------------------------------------------------------

    def _place(self, node: SimNode, copy: Copy):
        node.version += 1
        if self.epidemic:
            node.seen.add(copy.key)
            node.carried.append(copy)
        else:
            node.queues.setdefault(copy.packet.next_hop, deque()).append(copy)

    def _arrive(self, copy: Copy, node: SimNode, link_peer: int):
        msg = copy.msg
        if self.epidemic:
            if copy.key in node.seen:
                return
            node.seen.add(copy.key)
        addressed = copy.packet.next_hop == node.id
        if addressed and node.id == msg.destination:
            if msg.status != IN_FLIGHT:
                return
            if node.id == BOARD_ID and msg.kind in (WRITE, READ):
                self._inbox.append((copy, link_peer))
            else:
                self._receive_response(copy, node)
        elif addressed and node.mixer is not None:
            if msg.status != IN_FLIGHT:
                return
            ok = mixer_ingest(node.mixer, copy.packet, node.keypair.private, self.now,
                              ref=(msg, copy.stage + 1))
            if ok:
                node.mix_dirty = True
                node.version += 1
                self._log("peel", node.id, msg.uid, str(copy.stage + 1))
            else:
                self._drop(msg, "peel_failure", node.id)
        elif self.epidemic:
            node.carried.append(copy)
            node.version += 1
        else:
            raise RuntimeError(f"message {msg.uid} reached node {node.id} off its path")

    def _flush_mixers(self):
        for m in self.mixer_ids:
            node = self.nodes[m]
            if not node.mix_dirty or not node.mixer.pending:
                continue
            peers = self._peers.get(m)
            if not peers:
                continue
            node.mix_dirty = False
            if self.epidemic:
                reachable = {p.next_hop for _, p in node.mixer.pending}
            else:
                reachable = peers
            node.version += 1
            for hop, pkt in mixer_flush(node.mixer, self.rng_mix, reachable):
                msg, stage = node.mixer.take_ref(pkt)
                self._place(node, Copy(msg, pkt, stage))
                self._log("flush", m, msg.uid, str(hop))

    def _receive_response(self, copy: Copy, node: SimNode):
        msg = copy.msg
        pair = self.pairs[msg.pair]
        self._deliver(msg)
        try:
            resp = open_response(copy.packet, pair.reply_keys.values())
        except (crypto.DecryptionError, WireError) as exc:
            self.desyncs.append(f"pair {pair.index} message {msg.seq}: {exc}")
            return
        if resp.is_null or msg.seq != pair.awaiting:
            return
        try:
            payload, pair.r_state = handle_response(pair.r_state, resp)
        except DesyncError as exc:
            self.desyncs.append(f"pair {pair.index} message {msg.seq}: {exc}")
            return
        if payload != pair.sent[msg.seq]:
            self.desyncs.append(f"pair {pair.index} message {msg.seq}: payload mismatch")
        pair.received.append(payload)
        pair.awaiting += 1
        pair.reply_keys.clear()
        self._log("received", node.id, msg.uid, f"pair={pair.index} seq={msg.seq}")
        if self.auto_traffic and pair.awaiting < self._n_writes():
            due = self._step_at(self._epoch(pair.awaiting) + self.config.traffic.read_lag)
            self._schedule_poll(pair, max(due, self.step_index))

    # -- board ----------------------------------------------------------------

    def _process_board(self):
        if not self._inbox:
            return
        inbox, self._inbox = self._inbox, []
        for copy, link_peer in inbox:
            msg = copy.msg
            if msg.status != IN_FLIGHT:
                continue
            data = copy.packet.body
            self.board_observations.append((link_peer, data))
            try:
                req = parse_request(data)
            except WireError:
                self._drop(msg, "malformed", BOARD_ID)
                continue
            if isinstance(req, WriteRequest):
                status = self.board.write(req)
                self.board_log.append(BoardLogEntry(self.now, "write", req.index, status.value))
                self._log("board_write", BOARD_ID, msg.uid, f"{req.index}:{status.value}")
                if status is WriteStatus.OK:
                    self._deliver(msg)
                else:
                    self._drop(msg, "board_" + status.value, BOARD_ID)
            else:
                self._deliver(msg)
                self._answer_read(msg, req)

    def _answer_read(self, msg: SimMessage, req: ReadRequest):
        resp = self.board.read(req)
        if resp.is_null:
            self.board_log.append(BoardLogEntry(self.now, "read", req.index, "null"))
            self._log("board_read", BOARD_ID, msg.uid, f"{req.index}:null")
            return
        if self.strict:
            pkt = route_response(req, resp, self.rng_paths, keyring=self.keyring, strict=True)
            mixers = msg.reply_mixers or 0
        else:
            # the simulator, not the request, tells the board where the reader is
            path = build_path(self.rng_paths, self.mixer_ids, msg.origin, self.max_mixers)
            pkt = route_response(req, resp, self.rng_paths, keyring=self.keyring, path=path)
            mixers = len(path)
        self.board_log.append(BoardLogEntry(
            self.now, "read", req.index, "value", None if pkt is None else pkt.next_hop))
        self._log("board_read", BOARD_ID, msg.uid, f"{req.index}:value")
        if pkt is None:
            dead = self._create(RESPONSE, OnionPacket(msg.origin, b""), BOARD_ID, msg.origin,
                                mixers, msg.pair, msg.seq, record_created_at=msg.created_at,
                                place=False)
            self._drop(dead, "no_return_route", BOARD_ID)
            return
        self._create(RESPONSE, pkt, BOARD_ID, msg.origin, mixers, msg.pair, msg.seq,
                     record_created_at=msg.created_at)

    # -- traffic ----------------------------------------------------------------

    def _traffic(self):
        ev = self._events
        while ev and ev[0][0] <= self.step_index:
            _, _, pi, what, gen = heapq.heappop(ev)
            pair = self.pairs[pi]
            if what == "w":
                seq = len(pair.sent)
                if seq >= self._n_writes():
                    continue
                self.emit_write(pair)
                if seq + 1 < self._n_writes():
                    self._schedule(self._step_at(self._epoch(seq + 1)), pi, "w", 0)
            elif gen == pair.poll_gen and pair.awaiting < self._n_writes():
                self.emit_read(pair)
                self._schedule_poll(pair, self.step_index + max(
                    1, round(self.config.traffic.poll_interval / self.dt)))

    def emit_write(self, pair: Pair, path: MixPath | None = None) -> SimMessage:
        payload = crypto.random_bytes(self.rng_traffic, self.config.traffic.payload_size)
        req, pair.w_state = prepare_write(pair.w_state, payload, self.rng_traffic)
        pair.sent.append(payload)
        if path is None:
            path = build_path(self.rng_paths, self.mixer_ids, BOARD_ID, self.max_mixers)
        pkt = onion_wrap(path, req.to_bytes(), self.keyring, self.rng_paths)
        return self._create(WRITE, pkt, pair.writer, BOARD_ID, len(path), pair.index,
                            len(pair.sent) - 1)

    def emit_read(self, pair: Pair, path: MixPath | None = None,
                  reply_path: MixPath | None = None) -> SimMessage:
        route, key, reply_mixers = b"", None, None
        if self.strict:
            route, key, rpath = build_reply_route(
                self.rng_paths, self.mixer_ids, pair.reader, self.keyring, self.max_mixers)
            reply_mixers = len(rpath)
        req = prepare_read(pair.r_state, route)
        if path is None:
            path = build_path(self.rng_paths, self.mixer_ids, BOARD_ID, self.max_mixers)
        pkt = onion_wrap(path, req.to_bytes(), self.keyring, self.rng_paths)
        msg = self._create(READ, pkt, pair.reader, BOARD_ID, len(path), pair.index, pair.awaiting)
        msg.reply_mixers = reply_mixers
        if key is not None:
            pair.reply_keys[msg.uid] = key
        return msg

    # -- bookkeeping ---------------------------------------------------------------

    def _create(self, kind, pkt, origin, destination, mixers, pair, seq,
                record_created_at=None, place=True) -> SimMessage:
        self._uid += 1
        msg = SimMessage(self._uid, kind, pkt.size, self.now, mixers, pkt, origin,
                         destination, pair, seq)
        self.messages[msg.uid] = msg
        self.ledger[(kind, "created")] += 1
        self.metrics.record_created(
            msg.uid, kind, mixers, self.now if record_created_at is None else record_created_at)
        self._log("create", origin, msg.uid, f"{kind}:{mixers}")
        if place:
            self._place(self.nodes[origin], Copy(msg, pkt, 0))
        return msg

    def _deliver(self, msg: SimMessage):
        msg.status = DELIVERED
        msg.delivered_at = self.now
        self.ledger[(msg.kind, DELIVERED)] += 1
        self.metrics.record_delivered(msg.uid, self.now)
        self._log("deliver", msg.destination, msg.uid, msg.kind)

    def _drop(self, msg: SimMessage, reason: str, where: int):
        msg.status = DROPPED
        msg.drop_reason = reason
        self.ledger[(msg.kind, DROPPED)] += 1
        self.ledger[("drop", reason)] += 1
        self._log("drop", where, msg.uid, reason)

    def _log(self, event: str, node: int, uid: int | None, detail: str = ""):
        if self.trace_rows is not None:
            self.trace_rows.append((f"{self.now:.1f}", event, node, "" if uid is None else uid, detail))

    def conservation(self) -> dict[str, dict[str, int]]:
        """Per kind: created, delivered, dropped and in-flight counts from message states."""
        out = {}
        for kind in metrics.KINDS:
            c = Counter(m.status for m in self.messages.values() if m.kind == kind)
            out[kind] = {
                "created": sum(c.values()),
                DELIVERED: c[DELIVERED],
                DROPPED: c[DROPPED],
                IN_FLIGHT: c[IN_FLIGHT],
            }
        return out

    def located_in_flight(self) -> set[int]:
        """Uids of in-flight messages found by walking every buffer and link."""
        found = set()
        for node in self.nodes:
            for q in node.queues.values():
                found.update(c.msg.uid for c in q)
            found.update(c.msg.uid for c in node.carried if c.msg.status == IN_FLIGHT)
            if node.mixer is not None:
                found.update(node.mixer.peek_ref(p)[0].uid for _, p in node.mixer.pending)
        for link in self.links.values():
            if link.transfer is not None:
                found.add(link.transfer.copy.msg.uid)
        return found

    def write_trace(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "event", "node", "msg_uid", "detail"])
            w.writerows(self.trace_rows or [])
        return path
