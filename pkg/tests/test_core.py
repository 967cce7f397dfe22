import pytest
from hypothesis import given
from hypothesis import strategies as st

from bierte.core import (
    BitPosition,
    BitString,
    BitStringError,
    MplsHeader,
    Packet,
    bs_and,
    bs_andnot,
    bs_clear,
    bs_iter_set,
    bs_or,
    bs_test,
)

B = BitString.parse


def test_and_example():
    assert bs_and(B("11111000"), B("11010101")) == B("11010000")


def test_and_identity_and_annihilator():
    x = B("10110010")
    assert x & BitString.ones(8) == x
    assert x & BitString.zeros(8) == BitString.zeros(8)


def test_clear_andnot_test_examples():
    assert bs_clear(B("00100000"), 6) == B("00000000")
    assert bs_andnot(B("11111011"), B("00000001")) == B("11111010")
    assert bs_test(B("00001000"), 4)
    assert not bs_test(B("00001000"), 3)


def test_positions_ascending_and_one_based():
    assert list(bs_iter_set(B("10100110"))) == [2, 3, 6, 8]
    assert BitString.from_positions(8, [1]).binary() == "00000001"


def test_width_mismatch_rejected():
    with pytest.raises(BitStringError):
        bs_or(B("0101"), B("01010101"))


@pytest.mark.parametrize("p", [0, 9, -1])
def test_out_of_range_index(p):
    with pytest.raises(BitStringError):
        B("00000000").test(p)


def test_width_bounds():
    with pytest.raises(BitStringError):
        BitString(0)
    with pytest.raises(BitStringError):
        BitString(257)
    with pytest.raises(BitStringError):
        BitString(4, 16)
    assert BitString.ones(256).count() == 256


def test_parse_rejects_garbage():
    with pytest.raises(BitStringError):
        B("01x1")
    with pytest.raises(BitStringError):
        B("")


def test_render_switches_to_hex_over_32_bits():
    assert BitString.from_positions(8, [8]).render() == "10000000"
    assert BitString.from_positions(40, [1, 40]).render() == "0x8000000001"


def test_bytes_roundtrip():
    x = BitString.from_positions(12, [1, 12])
    assert x.to_bytes() == b"\x08\x01"
    assert BitString.from_bytes(12, x.to_bytes()) == x
    with pytest.raises(BitStringError):
        BitString.from_bytes(12, b"\x00")


def test_header_types():
    assert BitPosition(0, 1).index == 1
    with pytest.raises(BitStringError):
        BitPosition(0, 0)
    with pytest.raises(ValueError):
        MplsHeader(1 << 20)
    p = Packet("G", 100)
    assert p.recirculated(2).recirc_count == 2
    with pytest.raises(ValueError):
        p.recirculated(-1)


widths = st.integers(min_value=1, max_value=256)


@st.composite
def pairs(draw):
    w = draw(widths)
    a = draw(st.integers(min_value=0, max_value=(1 << w) - 1))
    b = draw(st.integers(min_value=0, max_value=(1 << w) - 1))
    return BitString(w, a), BitString(w, b)


@given(pairs())
def test_ops_match_python_ints(ab):
    a, b = ab
    mask = (1 << a.width) - 1
    assert (a & b).value == a.value & b.value
    assert (a | b).value == a.value | b.value
    assert (a ^ b).value == a.value ^ b.value
    assert (~a).value == ~a.value & mask
    assert a.andnot(b) == a & ~b


@given(pairs())
def test_positions_roundtrip(ab):
    a, _ = ab
    ps = list(a.positions())
    assert ps == sorted(ps)
    assert BitString.from_positions(a.width, ps) == a
    assert len(ps) == a.count()
    assert all(a.test(p) for p in ps)


@given(pairs())
def test_binary_text_roundtrip(ab):
    a, _ = ab
    assert B(a.binary()) == a
    assert BitString.from_bytes(a.width, a.to_bytes()) == a
