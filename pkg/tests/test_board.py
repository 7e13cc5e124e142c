import dataclasses
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbbsim import crypto
from pbbsim.board import (
    NULL, Board, ReadRequest, Response, WireError, WriteRequest, WriteStatus, parse_request,
)

TOKEN = b"T" * 16


def fresh(size=100, credits=100):
    b = Board(size)
    b.register(TOKEN, credits)
    return b


def wreq(i, preimage, value=b"ct", token=TOKEN):
    return WriteRequest(i, crypto.commit(preimage), value, token)


P = bytes(range(32))
Q = bytes(range(1, 33))


def test_register_and_remaining():
    b = Board(100)
    b.register(TOKEN, 50)
    assert b.remaining(TOKEN) == 50
    assert b.remaining(b"x" * 16) == 0


def test_register_twice_errors():
    b = fresh()
    with pytest.raises(ValueError):
        b.register(TOKEN, 1)


def test_zero_credit_rejects_and_leaves_cells():
    b = fresh(credits=0)
    before = b.state_digest()
    assert b.write(wreq(3, P)) is WriteStatus.NO_CREDIT
    assert b.state_digest() == before
    assert b.occupancy() == 0


def test_unregistered_token_rejected():
    b = fresh()
    assert b.write(wreq(3, P, token=b"U" * 16)) is WriteStatus.NO_CREDIT


def test_write_cell_5_then_occupancy():
    b = fresh()
    assert b.write(wreq(5, P)) is WriteStatus.OK
    assert b.occupancy() == 1
    assert b.remaining(TOKEN) == 99


def test_write_index_100_out_of_range():
    b = fresh()
    assert b.write(wreq(100, P)) is WriteStatus.OUT_OF_RANGE
    assert b.remaining(TOKEN) == 100


def test_second_write_occupied():
    b = fresh()
    assert b.write(wreq(7, P, b"first")) is WriteStatus.OK
    assert b.write(wreq(7, Q, b"second")) is WriteStatus.OCCUPIED
    # the first value survives and the credit is not spent
    assert b.read(ReadRequest(7, P)) == Response(b"first")
    assert b.remaining(TOKEN) == 99


def test_read_never_written_is_null():
    assert fresh().read(ReadRequest(4, P)) is NULL


def test_read_roundtrip_deletes():
    b = fresh()
    b.write(wreq(9, P, b"cipher"))
    assert b.read(ReadRequest(9, P)) == Response(b"cipher")
    assert b.occupancy() == 0
    assert b.read(ReadRequest(9, P)).is_null


def test_wrong_preimage_null_and_side_effect_free():
    b = fresh()
    b.write(wreq(9, P))
    before = b.state_digest()
    assert b.read(ReadRequest(9, Q)) == NULL
    assert b.state_digest() == before
    assert b.occupancy() == 1


def test_null_uniformity():
    b = fresh()
    b.write(wreq(1, P))
    answers = [b.read(ReadRequest(1, Q)), b.read(ReadRequest(2, P)),
               b.read(ReadRequest(500, P))]
    assert {a.to_bytes() for a in answers} == {NULL.to_bytes()}


def test_occupancy_counting_oracle():
    r = random.Random(1)
    b = fresh()
    idx = r.sample(range(100), 37)
    for k, i in enumerate(idx, 1):
        assert b.write(wreq(i, P)) is WriteStatus.OK
        assert b.occupancy() == k
    b.read(ReadRequest(idx[0], P))
    assert b.occupancy() == 36


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 99), st.binary(min_size=32, max_size=32), st.binary(max_size=256))
def test_roundtrip_property(i, p, c):
    b = fresh()
    assert b.write(wreq(i, p, c)) is WriteStatus.OK
    assert b.read(ReadRequest(i, p)).value == c
    assert b.read(ReadRequest(i, p)).is_null


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 120), st.booleans()), max_size=60))
def test_credit_monotone_property(ops):
    b = fresh(size=100, credits=20)
    last = b.remaining(TOKEN)
    for i, is_write in ops:
        before = b.state_digest()
        if is_write:
            exhausted = b.remaining(TOKEN) == 0
            status = b.write(wreq(i, P))
            if exhausted:
                assert status is not WriteStatus.OK
                assert b.state_digest() == before
        else:
            b.read(ReadRequest(i % 100, P))
        assert b.remaining(TOKEN) <= last
        last = b.remaining(TOKEN)


# -- wire formats -----------------------------------------------------------------

def test_write_wire_layout():
    req = WriteRequest(258, b"\x11" * 32, b"VAL", TOKEN)
    data = req.to_bytes()
    assert data[0] == 0x01
    assert struct.unpack(">I", data[1:5])[0] == 258
    assert data[5:37] == b"\x11" * 32
    assert data[37:53] == TOKEN
    assert struct.unpack(">I", data[53:57])[0] == 3
    assert data[57:] == b"VAL"
    assert parse_request(data) == req


def test_read_wire_layout():
    req = ReadRequest(7, P, b"route")
    data = req.to_bytes()
    assert data[0] == 0x02
    assert struct.unpack(">I", data[1:5])[0] == 7
    assert data[5:37] == P
    assert struct.unpack(">H", data[37:39])[0] == 5
    assert parse_request(data) == req


def test_response_wire_roundtrip():
    for r in (NULL, Response(b""), Response(b"abc")):
        assert Response.from_bytes(r.to_bytes()) == r
    assert NULL.to_bytes() != Response(b"").to_bytes()


@pytest.mark.parametrize("data", [b"", b"\x09abc", b"\x01" + bytes(10),
                                  WriteRequest(1, P, b"abc", TOKEN).to_bytes()[:-1],
                                  ReadRequest(1, P, b"xy").to_bytes() + b"z"])
def test_malformed_requests(data):
    with pytest.raises(WireError):
        parse_request(data)


def test_request_types_have_no_node_identity_fields():
    for cls in (WriteRequest, ReadRequest, Response):
        names = {f.name for f in dataclasses.fields(cls)}
        assert not names & {"origin", "sender", "src", "source", "node", "node_id", "reader",
                            "writer", "destination", "dst"}
