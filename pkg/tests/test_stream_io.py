import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from empipe import memory
from empipe.errors import EndOfStream, StreamError, StreamFormatError
from empipe.stream_io import (
    HEADER_SIZE,
    BlockConfig,
    IoCounters,
    open_stream,
    reset_counters,
    scan_io_bound,
    snapshot_counters,
)

B = 4


def cfg(item=8, block=B):
    return BlockConfig(block, 1 << 20, item)


@pytest.fixture(autouse=True)
def _fresh():
    reset_counters()
    yield


def write(path, items, fmt="<q", block=B):
    with open_stream(path, "write", cfg(8, block), fmt) as s:
        s.write_items(items)


def test_new_stream_is_empty(tmp_path):
    with open_stream(tmp_path / "s", "write", cfg(), "<q") as s:
        assert s.length_items == 0 and s.cursor == 0


def test_roundtrip_and_length(tmp_path):
    write(tmp_path / "s", [1, 2, 3])
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        assert s.length_items == 3
        assert [s.read_item(), s.read_item(), s.read_item()] == [1, 2, 3]
        with pytest.raises(EndOfStream):
            s.read_item()


def test_header_layout_is_bit_exact(tmp_path):
    write(tmp_path / "s", [7, 8, 9])
    raw = (tmp_path / "s").read_bytes()
    assert raw[:8] == b"EMSTREAM"
    assert struct.unpack("<IIQ", raw[8:24]) == (8, 0, 3)
    assert len(raw) == HEADER_SIZE + 3 * 8
    assert struct.unpack("<3q", raw[24:]) == (7, 8, 9)


def test_wrong_item_size_rejected(tmp_path):
    write(tmp_path / "s", [1, 2])
    with pytest.raises(StreamFormatError):
        open_stream(tmp_path / "s", "read", cfg(4), "<i")


def test_corrupt_headers(tmp_path):
    p = tmp_path / "s"
    write(p, [1, 2, 3])
    raw = bytearray(p.read_bytes())
    bad_magic = bytes(b"XXSTREAM" + raw[8:])
    p.write_bytes(bad_magic)
    with pytest.raises(StreamFormatError):
        open_stream(p, "read", cfg(), "<q")
    raw[12] = 1  # reserved field
    p.write_bytes(bytes(raw))
    with pytest.raises(StreamFormatError):
        open_stream(p, "read", cfg(), "<q")
    raw[12] = 0
    p.write_bytes(bytes(raw[:-8]))  # one item short
    with pytest.raises(StreamFormatError):
        open_stream(p, "read", cfg(), "<q")
    p.write_bytes(b"EMS")
    with pytest.raises(StreamFormatError):
        open_stream(p, "read", cfg(), "<q")


def test_missing_file_is_stream_error(tmp_path):
    with pytest.raises(StreamError):
        open_stream(tmp_path / "nope", "read", cfg(), "<q")


def test_block_counts_on_write(tmp_path):
    s = open_stream(tmp_path / "s", "write", cfg(), "<q")
    s.write_items(range(B))
    assert snapshot_counters().blocks_written == 1
    s.write_item(0)
    s.close()
    c = snapshot_counters()
    assert c.blocks_written == 2 and c.items_written == B + 1


def test_items_written_counter(tmp_path):
    write(tmp_path / "s", range(1000))
    assert snapshot_counters().items_written == 1000


def test_forward_block_reads(tmp_path):
    write(tmp_path / "s", range(10 * B))
    reset_counters()
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        out = [s.read_item() for _ in range(10 * B)]
    assert out == list(range(10 * B))
    c = snapshot_counters()
    assert c.blocks_read == 10 and c.items_read == 10 * B


def test_backward_reads(tmp_path):
    write(tmp_path / "s", range(4 * B))
    reset_counters()
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        out = [s.read_item_back() for _ in range(4 * B)]
        with pytest.raises(EndOfStream):
            s.read_item_back()
    assert out == list(range(4 * B))[::-1]
    assert snapshot_counters().blocks_read == 4


def test_backward_on_empty(tmp_path):
    write(tmp_path / "s", [])
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        assert not s.can_read_back()
        with pytest.raises(EndOfStream):
            s.read_item_back()


def test_iteration_counts_and_cursor(tmp_path):
    write(tmp_path / "s", range(11))
    reset_counters()
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        assert list(s) == list(range(11))
        assert s.cursor == 11
    c = snapshot_counters()
    assert c.items_read == 11 and c.blocks_read == 3


def test_partial_iteration_counts_handed_out_items(tmp_path):
    write(tmp_path / "s", range(11))
    reset_counters()
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        it = iter(s)
        got = [next(it) for _ in range(6)]
    del it
    assert got == list(range(6))
    assert snapshot_counters().items_read == 6


def test_read_write_appends(tmp_path):
    p = tmp_path / "s"
    write(p, range(6))
    with open_stream(p, "read-write", cfg(), "<q") as s:
        assert s.read_item() == 0
        s.write_items([100, 101, 102])
        assert s.length_items == 9
        s.seek(5)
        assert [s.read_item() for _ in range(4)] == [5, 100, 101, 102]
    with open_stream(p, "read", cfg(), "<q") as s:
        assert list(s) == [0, 1, 2, 3, 4, 5, 100, 101, 102]


def test_mode_errors(tmp_path):
    p = tmp_path / "s"
    write(p, [1])
    with open_stream(p, "read", cfg(), "<q") as s:
        with pytest.raises(StreamError):
            s.write_item(2)
    with open_stream(tmp_path / "w", "write", cfg(), "<q") as s:
        with pytest.raises(StreamError):
            s.read_item()
    with pytest.raises(ValueError):
        open_stream(p, "append", cfg(), "<q")
    s = open_stream(p, "read", cfg(), "<q")
    s.close()
    with pytest.raises(StreamError):
        s.read_item()


def test_unencodable_item(tmp_path):
    s = open_stream(tmp_path / "s", "write", cfg(4, 2), "<i")
    s.write_item("x")
    with pytest.raises(StreamError):
        s.write_item(2)
    with pytest.raises(StreamError):
        s.close()
    assert s.closed


def test_raw_bytes_items(tmp_path):
    items = [bytes([i]) * 3 for i in range(7)]
    c = BlockConfig(2, 1 << 20, 3)
    with open_stream(tmp_path / "s", "write", c) as s:
        s.write_items(items)
    with open_stream(tmp_path / "s", "read", c) as s:
        assert list(s) == items


def test_tuple_items(tmp_path):
    c = BlockConfig(3, 1 << 20, 12)
    items = [(i, -i, i * 2) for i in range(8)]
    with open_stream(tmp_path / "s", "write", c, "<IiI") as s:
        s.write_items(items)
    with open_stream(tmp_path / "s", "read", c, "<IiI") as s:
        assert list(s) == items


def test_buffer_is_registered_with_ledger(tmp_path):
    before = memory.default_ledger().used_bytes
    s = open_stream(tmp_path / "s", "write", cfg(), "<q")
    assert memory.default_ledger().used_bytes == before + B * 8
    s.close()
    assert memory.default_ledger().used_bytes == before


def test_config_validation():
    with pytest.raises(ValueError):
        BlockConfig(0)
    with pytest.raises(ValueError):
        BlockConfig(4, 63, 8)
    assert BlockConfig(4, 64, 8).block_bytes == 32


@pytest.mark.parametrize("n,b,expected", [(1000, 100, 10), (0, 7, 0), (101, 100, 2)])
def test_scan_bound_examples(n, b, expected):
    assert scan_io_bound(n, b) == expected


@settings(max_examples=200)
@given(st.integers(0, 10**9), st.integers(1, 10**6))
def test_scan_bound_matches_integer_ceiling(n, b):
    q, r = divmod(n, b)
    assert scan_io_bound(n, b) == q + (r > 0)


def test_snapshot_reset_and_stability(tmp_path):
    write(tmp_path / "s", range(9))
    with open_stream(tmp_path / "s", "read", cfg(), "<q") as s:
        list(s)
    a, b = snapshot_counters(), snapshot_counters()
    assert a == b
    assert a.items_read == a.items_written == 9
    reset_counters()
    assert snapshot_counters() == IoCounters()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-2**63, 2**63 - 1), max_size=60), st.integers(1, 9))
def test_roundtrip_property(tmp_path_factory, items, block):
    p = tmp_path_factory.mktemp("rt") / "s"
    c = BlockConfig(block, 1 << 20, 8)
    reset_counters()
    with open_stream(p, "write", c, "<q") as s:
        s.write_items(items)
    with open_stream(p, "read", c, "<q") as s:
        assert list(s) == items
    with open_stream(p, "read", c, "<q") as s:
        back = [s.read_item_back() for _ in range(len(items))]
    assert back == items[::-1]
    cnt = snapshot_counters()
    blocks = scan_io_bound(len(items), block)
    assert cnt.items_written == len(items) and cnt.blocks_written == blocks
    assert cnt.items_read == 2 * len(items) and cnt.blocks_read == 2 * blocks
