"""Mix paths, layered packets and mixer buffers.

A packet heading to the board through mixers ``m1, m2, m3`` is built inside
out: the board request is wrapped for ``m3`` together with the board's id,
that is wrapped for ``m2`` together with ``m3``'s id, and so on. Each mixer
peels exactly one layer and learns only the next hop.

Layer plaintext layout (big-endian): ``[4-byte next hop][4-byte body length][body]``.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import crypto
from .board import ReadRequest, Response

MAX_MIXERS = 3

_LAYER_HEAD = struct.Struct(">II")
_ROUTE_HEAD = struct.Struct(">I32s")


class RoutingError(Exception):
    pass


class MisaddressedPacket(RoutingError):
    pass


@dataclass(frozen=True)
class MixPath:
    mixers: tuple[int, ...]
    terminal: int

    def __post_init__(self):
        if len(self.mixers) > MAX_MIXERS:
            raise ValueError(f"at most {MAX_MIXERS} mixers per path")
        if len(set(self.mixers)) != len(self.mixers):
            raise ValueError("mixers on a path must be distinct")
        if self.terminal in self.mixers:
            raise ValueError("terminal cannot also be a mixer on the path")

    @property
    def hops(self) -> tuple[int, ...]:
        return self.mixers + (self.terminal,)

    def __len__(self) -> int:
        return len(self.mixers)


@dataclass(frozen=True)
class OnionPacket:
    """``next_hop`` is the only cleartext routing hint.

    ``payload`` is used by reply packets only: it rides along unchanged while
    mixers peel the routing header in ``body``.
    """

    next_hop: int
    body: bytes
    payload: bytes = b""

    def to_bytes(self) -> bytes:
        return (
            _LAYER_HEAD.pack(self.next_hop, len(self.body))
            + self.body
            + struct.pack(">I", len(self.payload))
            + self.payload
        )

    @property
    def size(self) -> int:
        return _LAYER_HEAD.size + len(self.body) + 4 + len(self.payload)


def encode_layer(next_hop: int, body: bytes) -> bytes:
    return _LAYER_HEAD.pack(next_hop, len(body)) + body


def decode_layer(data: bytes) -> tuple[int, bytes]:
    if len(data) < _LAYER_HEAD.size:
        raise RoutingError("layer header truncated")
    next_hop, n = _LAYER_HEAD.unpack_from(data)
    body = bytes(data[_LAYER_HEAD.size:])
    if len(body) != n:
        raise RoutingError("layer body length mismatch")
    return next_hop, body


def build_path(
    rng: random.Random,
    mixer_pool: Iterable[int],
    terminal: int,
    max_mixers: int = MAX_MIXERS,
    min_mixers: int = 0,
) -> MixPath:
    """Draw a mixer count uniformly from ``[min_mixers, max_mixers]``, then the mixers."""
    pool = sorted(m for m in set(mixer_pool) if m != terminal)
    hi = min(max_mixers, MAX_MIXERS, len(pool))
    if hi < min_mixers:
        raise RoutingError(f"need {min_mixers} mixers, pool has {len(pool)}")
    k = rng.randint(min_mixers, hi)
    return MixPath(tuple(rng.sample(pool, k)), terminal)


def onion_wrap(
    path: MixPath,
    inner: bytes,
    keyring: Mapping[int, bytes],
    rng: random.Random,
) -> OnionPacket:
    """Nest ``inner`` inside one public-key layer per mixer on ``path``."""
    body, next_hop = bytes(inner), path.terminal
    for mixer in reversed(path.mixers):
        try:
            pk = keyring[mixer]
        except KeyError:
            raise RoutingError(f"no public key for mixer {mixer}") from None
        body = crypto.layer_encrypt(pk, encode_layer(next_hop, body), rng)
        next_hop = mixer
    return OnionPacket(next_hop, body)


def peel(packet: OnionPacket, private: bytes) -> OnionPacket:
    """Remove one layer. Raises :class:`crypto.DecryptionError` on a wrong key."""
    next_hop, body = decode_layer(crypto.layer_decrypt(private, packet.body))
    return OnionPacket(next_hop, body, packet.payload)


@dataclass
class MixerBuffer:
    owner: int
    batch_threshold: int = 0
    pending: list[tuple[float, OnionPacket]] = field(default_factory=list)
    dropped: int = 0
    refs: dict[int, Any] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.pending)

    def take_ref(self, packet: OnionPacket) -> Any:
        return self.refs.pop(id(packet), None)

    def peek_ref(self, packet: OnionPacket) -> Any:
        return self.refs.get(id(packet))


def mixer_ingest(
    buf: MixerBuffer,
    pkt: OnionPacket,
    private: bytes,
    now: float = 0.0,
    ref: Any = None,
) -> bool:
    """Peel ``pkt`` and queue the result. Returns False when the peel fails.

    ``ref`` is an opaque handle (the simulator's message envelope) returned
    by :meth:`MixerBuffer.take_ref` once the packet is flushed.
    """
    if pkt.next_hop != buf.owner:
        raise MisaddressedPacket(f"packet for {pkt.next_hop} offered to mixer {buf.owner}")
    try:
        inner = peel(pkt, private)
    except (crypto.DecryptionError, RoutingError):
        buf.dropped += 1
        return False
    buf.pending.append((now, inner))
    if ref is not None:
        buf.refs[id(inner)] = ref
    return True


def mixer_flush(
    buf: MixerBuffer, rng: random.Random, reachable: Iterable[int]
) -> list[tuple[int, OnionPacket]]:
    """Shuffle the buffer and release every packet whose next hop is reachable."""
    if not buf.pending or len(buf.pending) < buf.batch_threshold:
        return []
    reachable = set(reachable)
    rng.shuffle(buf.pending)
    out, keep = [], []
    for entry in buf.pending:
        (out if entry[1].next_hop in reachable else keep).append(entry)
    buf.pending = keep
    return [(pkt.next_hop, pkt) for _, pkt in out]


# -- replies ---------------------------------------------------------------


def build_reply_route(
    rng: random.Random,
    mixer_pool: Iterable[int],
    reader: int,
    keyring: Mapping[int, bytes],
    max_mixers: int = MAX_MIXERS,
) -> tuple[bytes, bytes, MixPath]:
    """Reader-built return route so the board can answer without knowing who asked.

    Always at least one mixer: with zero the board would address the reader
    directly. Returns ``(route_bytes, reply_key, path)``; route layout is
    ``[4-byte first hop][32-byte reply key][layered header]``.
    """
    path = build_path(rng, mixer_pool, reader, max_mixers, min_mixers=1)
    header = onion_wrap(path, b"", keyring, rng)
    reply_key = crypto.new_key(rng)
    return _ROUTE_HEAD.pack(header.next_hop, reply_key) + header.body, reply_key, path


def reply_from_route(route: bytes, response: Response) -> OnionPacket:
    if len(route) < _ROUTE_HEAD.size:
        raise RoutingError("return route truncated")
    first_hop, reply_key = _ROUTE_HEAD.unpack_from(route)
    return OnionPacket(
        first_hop,
        bytes(route[_ROUTE_HEAD.size:]),
        crypto.sym_encrypt(reply_key, response.to_bytes()),
    )


def route_response(
    read_req: ReadRequest,
    response: Response,
    rng: random.Random,
    *,
    keyring: Mapping[int, bytes],
    mixer_pool: Iterable[int] = (),
    reader: int | None = None,
    strict: bool = False,
    path: MixPath | None = None,
) -> OnionPacket | None:
    """Package a board answer for the trip back to the reader.

    Default mode: the board draws a fresh path to ``reader`` (supplied by the
    simulator, not by the request) unless ``path`` is given. Strict mode: the
    answer is sealed into ``read_req.return_route`` and ``reader`` is ignored;
    an empty route yields ``None`` (the answer is dropped).
    """
    if strict:
        if not read_req.return_route:
            return None
        return reply_from_route(read_req.return_route, response)
    if path is None:
        if reader is None:
            raise RoutingError("default reply mode needs the reader id")
        path = build_path(rng, mixer_pool, reader)
    return onion_wrap(path, response.to_bytes(), keyring, rng)


def open_response(packet: OnionPacket, reply_keys: Iterable[bytes] = ()) -> Response:
    """Recover the board's answer from a packet that reached its reader."""
    if not packet.payload:
        return Response.from_bytes(packet.body)
    for key in reply_keys:
        try:
            return Response.from_bytes(crypto.sym_decrypt(key, packet.payload))
        except crypto.DecryptionError:
            continue
    raise crypto.DecryptionError("no reply key opens this response")
