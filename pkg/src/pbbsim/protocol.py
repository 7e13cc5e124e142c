"""Endpoint side of a one-way conversation through the board.

Two nodes meet once, agree on a key, a first cell index and a first tag
preimage, then part. From then on the writer drops each message into the
agreed cell; the sealed envelope also names the cell and preimage for the
following message. Both sides advance the key with :func:`crypto.kdf` once
per message and forget the previous key.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, replace

from . import crypto
from .board import Board, ReadRequest, Response, WriteRequest, WriteStatus

WRITER = "writer"
READER = "reader"


class ProtocolError(Exception):
    pass


class DesyncError(ProtocolError):
    """The reader could not authenticate a value with its current key."""


class SessionError(ProtocolError):
    pass


@dataclass(frozen=True)
class SessionState:
    peer: int
    key: bytes
    next_index: int
    next_preimage: bytes
    role: str
    board_size: int
    credit_token: bytes = bytes(crypto.CREDIT_TOKEN_LEN)

    def sync_view(self) -> tuple[bytes, int, bytes]:
        return self.key, self.next_index, self.next_preimage


@dataclass(frozen=True)
class PlainEnvelope:
    payload: bytes
    next_index: int
    next_preimage: bytes

    def to_bytes(self) -> bytes:
        return (
            struct.pack(">I", len(self.payload))
            + self.payload
            + struct.pack(">I", self.next_index)
            + self.next_preimage
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PlainEnvelope":
        if len(data) < 4:
            raise ValueError("envelope truncated")
        (n,) = struct.unpack_from(">I", data)
        if len(data) != 4 + n + 4 + crypto.TOKEN_LEN:
            raise ValueError("envelope length mismatch")
        payload = bytes(data[4:4 + n])
        (index,) = struct.unpack_from(">I", data, 4 + n)
        return cls(payload, index, bytes(data[8 + n:]))


def establish_session(
    a: int,
    b: int,
    board_size: int,
    rng: random.Random,
    credit_token: bytes | None = None,
) -> tuple[SessionState, SessionState]:
    """The in-person meeting: ``a`` will write, ``b`` will read."""
    if board_size < 1:
        raise ValueError("board_size must be >= 1")
    key = crypto.new_key(rng)
    index = rng.randrange(board_size)
    preimage = crypto.new_preimage(rng)
    token = credit_token if credit_token is not None else bytes(crypto.CREDIT_TOKEN_LEN)
    writer = SessionState(b, key, index, preimage, WRITER, board_size, token)
    reader = SessionState(a, key, index, preimage, READER, board_size, token)
    return writer, reader


def _seal(state: SessionState, index: int, payload: bytes, rng: random.Random):
    next_index = rng.randrange(state.board_size)
    next_preimage = crypto.new_preimage(rng)
    envelope = PlainEnvelope(bytes(payload), next_index, next_preimage)
    req = WriteRequest(
        index=index,
        tag=crypto.commit(state.next_preimage),
        value=crypto.sym_encrypt(state.key, envelope.to_bytes()),
        credit_token=state.credit_token,
    )
    after = replace(
        state,
        key=crypto.kdf(state.key),
        next_index=next_index,
        next_preimage=next_preimage,
    )
    return req, after


def prepare_write(
    state: SessionState, payload: bytes, rng: random.Random
) -> tuple[WriteRequest, SessionState]:
    if state.role != WRITER:
        raise ProtocolError("prepare_write on a reader session")
    return _seal(state, state.next_index, payload, rng)


def retry_write(
    state_before: SessionState,
    payload: bytes,
    rng: random.Random,
    index: int | None = None,
) -> tuple[WriteRequest, SessionState]:
    """Re-issue a rejected write at another cell (``index``, or a fresh random one).

    ``state_before`` is the state the rejected attempt was prepared from, so the
    retry is sealed under the same (not yet ratcheted) key. The reader only
    finds the new cell if it is told out of band (:func:`resync_reader`), which
    is why the simulator drops collided chained writes instead of retrying.
    """
    if state_before.role != WRITER:
        raise ProtocolError("retry_write on a reader session")
    if index is None:
        index = rng.randrange(state_before.board_size)
    return _seal(state_before, index, payload, rng)


def resync_reader(state: SessionState, index: int) -> SessionState:
    if state.role != READER:
        raise ProtocolError("resync_reader on a writer session")
    return replace(state, next_index=index)


def write_with_retry(
    board: Board,
    state: SessionState,
    payload: bytes,
    rng: random.Random,
) -> tuple[WriteRequest, SessionState]:
    """Write directly to an in-memory board, moving to another cell on collisions.

    Retries visit the remaining cells in a random order without repeats, so a
    board with any free cell is always reached and a full one fails with
    :class:`SessionError` after exactly ``board_size`` attempts.
    """
    req, after = prepare_write(state, payload, rng)
    status = board.write(req)
    if status is WriteStatus.OCCUPIED:
        others = [i for i in range(state.board_size) if i != req.index]
        rng.shuffle(others)
        for index in others:
            req, after = retry_write(state, payload, rng, index)
            status = board.write(req)
            if status is not WriteStatus.OCCUPIED:
                break
        else:
            raise SessionError(f"board full: {state.board_size} occupied rejections")
    if status is not WriteStatus.OK:
        raise SessionError(f"write rejected: {status.value}")
    return req, after


def prepare_read(state: SessionState, return_route: bytes = b"") -> ReadRequest:
    if state.role != READER:
        raise ProtocolError("prepare_read on a writer session")
    return ReadRequest(state.next_index, state.next_preimage, return_route)


def handle_response(
    state: SessionState, resp: Response
) -> tuple[bytes | None, SessionState]:
    if state.role != READER:
        raise ProtocolError("handle_response on a writer session")
    if resp.is_null:
        return None, state
    try:
        envelope = PlainEnvelope.from_bytes(crypto.sym_decrypt(state.key, resp.value))
    except crypto.DecryptionError as exc:
        raise DesyncError("value does not authenticate under the current key") from exc
    if not 0 <= envelope.next_index < state.board_size:
        raise DesyncError("next index outside the board")
    after = replace(
        state,
        key=crypto.kdf(state.key),
        next_index=envelope.next_index,
        next_preimage=envelope.next_preimage,
    )
    return envelope.payload, after
