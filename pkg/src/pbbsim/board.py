"""The dead-drop store held by node zero.

The board is an ``n``-cell array of (tag commitment, ciphertext) pairs. A
writer names the cell, a reader opens it by presenting the preimage of the
tag, and a successful read empties the cell. Requests never carry a node
identity; write quotas are tied to opaque credit tokens instead.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

from . import crypto

KIND_WRITE = 0x01
KIND_READ = 0x02
KIND_RESPONSE = 0x03

DEFAULT_CREDITS = 100

_WRITE_HEAD = struct.Struct(">BI32s16sI")
_READ_HEAD = struct.Struct(">BI32sH")
_RESP_HEAD = struct.Struct(">BBI")


class WireError(ValueError):
    """Malformed request or response bytes."""


class WriteStatus(enum.Enum):
    OK = "ok"
    OUT_OF_RANGE = "out_of_range"
    OCCUPIED = "occupied"
    NO_CREDIT = "no_credit"


@dataclass(frozen=True)
class WriteRequest:
    index: int
    tag: bytes
    value: bytes
    credit_token: bytes

    def to_bytes(self) -> bytes:
        return _WRITE_HEAD.pack(
            KIND_WRITE, self.index, self.tag, self.credit_token, len(self.value)
        ) + self.value

    @classmethod
    def from_bytes(cls, data: bytes) -> "WriteRequest":
        if len(data) < _WRITE_HEAD.size or data[0] != KIND_WRITE:
            raise WireError("not a write request")
        _, index, tag, token, n = _WRITE_HEAD.unpack_from(data)
        value = bytes(data[_WRITE_HEAD.size:])
        if len(value) != n:
            raise WireError(f"value length {len(value)} != declared {n}")
        return cls(index=index, tag=tag, value=value, credit_token=token)


@dataclass(frozen=True)
class ReadRequest:
    index: int
    preimage: bytes
    return_route: bytes = b""

    def to_bytes(self) -> bytes:
        if len(self.return_route) > 0xFFFF:
            raise WireError("return route too long")
        return _READ_HEAD.pack(
            KIND_READ, self.index, self.preimage, len(self.return_route)
        ) + self.return_route

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReadRequest":
        if len(data) < _READ_HEAD.size or data[0] != KIND_READ:
            raise WireError("not a read request")
        _, index, preimage, n = _READ_HEAD.unpack_from(data)
        route = bytes(data[_READ_HEAD.size:])
        if len(route) != n:
            raise WireError(f"route length {len(route)} != declared {n}")
        return cls(index=index, preimage=preimage, return_route=route)


@dataclass(frozen=True)
class Response:
    """Board answer to a read. ``value is None`` is the Null answer."""

    value: bytes | None = None

    @property
    def is_null(self) -> bool:
        return self.value is None

    def to_bytes(self) -> bytes:
        if self.value is None:
            return _RESP_HEAD.pack(KIND_RESPONSE, 0, 0)
        return _RESP_HEAD.pack(KIND_RESPONSE, 1, len(self.value)) + self.value

    @classmethod
    def from_bytes(cls, data: bytes) -> "Response":
        if len(data) < _RESP_HEAD.size or data[0] != KIND_RESPONSE:
            raise WireError("not a response")
        _, status, n = _RESP_HEAD.unpack_from(data)
        value = bytes(data[_RESP_HEAD.size:])
        if len(value) != n:
            raise WireError(f"value length {len(value)} != declared {n}")
        if status == 0:
            if n:
                raise WireError("null response with a body")
            return cls(None)
        if status != 1:
            raise WireError(f"unknown response status {status}")
        return cls(value)


NULL = Response(None)


def parse_request(data: bytes) -> WriteRequest | ReadRequest:
    if not data:
        raise WireError("empty request")
    if data[0] == KIND_WRITE:
        return WriteRequest.from_bytes(data)
    if data[0] == KIND_READ:
        return ReadRequest.from_bytes(data)
    raise WireError(f"unknown request kind 0x{data[0]:02x}")


@dataclass
class Cell:
    tag: bytes | None = None
    value: bytes | None = None

    @property
    def occupied(self) -> bool:
        return self.tag is not None


@dataclass
class Board:
    size: int
    cells: list[Cell] = field(init=False)
    registry: dict[bytes, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("board needs at least one cell")
        self.cells = [Cell() for _ in range(self.size)]

    def register(self, token: bytes, credits: int = DEFAULT_CREDITS) -> None:
        if credits < 0:
            raise ValueError("credits must be non-negative")
        token = bytes(token)
        if token in self.registry:
            raise ValueError("credit token already registered")
        self.registry[token] = credits

    def remaining(self, token: bytes) -> int:
        return self.registry.get(bytes(token), 0)

    def write(self, req: WriteRequest) -> WriteStatus:
        if not 0 <= req.index < self.size:
            return WriteStatus.OUT_OF_RANGE
        if self.registry.get(bytes(req.credit_token), 0) <= 0:
            return WriteStatus.NO_CREDIT
        cell = self.cells[req.index]
        if cell.occupied:
            return WriteStatus.OCCUPIED
        cell.tag, cell.value = bytes(req.tag), bytes(req.value)
        self.registry[bytes(req.credit_token)] -= 1
        return WriteStatus.OK

    def read(self, req: ReadRequest) -> Response:
        # Empty cell, wrong preimage and bad index all give the same Null.
        if not 0 <= req.index < self.size:
            return NULL
        cell = self.cells[req.index]
        if not cell.occupied or not crypto.verify(req.preimage, cell.tag):
            return NULL
        value = cell.value
        cell.tag = cell.value = None
        return Response(value)

    def occupancy(self) -> int:
        return sum(1 for c in self.cells if c.occupied)

    def state_digest(self) -> str:
        """Hash of every cell and credit balance, for side-effect checks."""
        h = hashlib.sha256()
        for i, c in enumerate(self.cells):
            if c.occupied:
                h.update(struct.pack(">I", i) + c.tag + struct.pack(">I", len(c.value)) + c.value)
        for token in sorted(self.registry):
            h.update(token + struct.pack(">q", self.registry[token]))
        return h.hexdigest()

    def render(self) -> str:
        """One-line occupancy map, ``#`` for a used cell and ``.`` for a free one."""
        return "".join("#" if c.occupied else "." for c in self.cells)
