from __future__ import annotations

import math
import re
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from netdesign.tntp import (RawTntpNetwork, RawTripTable, TntpFormatError, TntpLink, parse_network,
                            parse_trips, read_network, read_trips, write_network, write_trips)

FIXTURES = Path(__file__).parent / "data" / "fixtures"

ONE_LINK = """<NUMBER OF NODES> 2
<NUMBER OF LINKS> 1
<FIRST THRU NODE> 1
<END OF METADATA>
1 2 100.0 1.0 1.0 0.15 4.0 0 0 1 ;
"""


def tokens(text: str) -> list[str]:
    return text.split()


def regex_total(text: str) -> float:
    body = text.split("<END OF METADATA>", 1)[1]
    return math.fsum(float(v) for v in re.findall(r"\d+\s*:\s*([0-9.eE+-]+)", body))


def test_single_link_file():
    net = parse_network(ONE_LINK)
    assert net.node_count == 2 and net.first_thru_node == 1
    (link,) = net.links
    assert (link.init_node, link.term_node) == (1, 2)
    assert link.capacity == 100.0 and link.b == 0.15 and link.power == 4.0


def test_link_count_mismatch_names_both_counts():
    text = ONE_LINK.replace("<NUMBER OF LINKS> 1", "<NUMBER OF LINKS> 3")
    with pytest.raises(TntpFormatError, match=r"3 links but 1"):
        parse_network(text)


@pytest.mark.parametrize("row, message", [
    ("1 2 100.0 1.0 1.0 0.15 ;", "fields"),
    ("1 7 100.0 1.0 1.0 0.15 4.0 0 0 1 ;", "outside"),
    ("1 2 0 1.0 1.0 0.15 4.0 0 0 1 ;", "capacity"),
    ("1 2 abc 1.0 1.0 0.15 4.0 0 0 1 ;", "number"),
])
def test_bad_rows_report_line_number(row, message):
    text = ONE_LINK.replace("1 2 100.0 1.0 1.0 0.15 4.0 0 0 1 ;", row)
    with pytest.raises(TntpFormatError, match=message) as err:
        parse_network(text)
    assert err.value.line == 5


def test_missing_end_of_metadata():
    with pytest.raises(TntpFormatError, match="END OF METADATA"):
        parse_network("<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 0\n")


def test_missing_required_header():
    text = ONE_LINK.replace("<FIRST THRU NODE> 1\n", "")
    with pytest.raises(TntpFormatError, match="FIRST THRU NODE"):
        parse_network(text)


def test_fixture_network_quirks():
    net = read_network(FIXTURES / "tiny_net.tntp")
    assert net.node_count == 4 and net.zone_count == 3 and net.link_count == 6
    # last row has no terminating semicolon
    assert net.links[-1].init_node == 4 and net.links[-1].b == 0
    assert net.links[3].toll == 0.5


def test_fixture_round_trip_modulo_whitespace():
    text = (FIXTURES / "tiny_net.tntp").read_text()
    net = parse_network(text)
    written = write_network(net)
    assert tokens(written) == tokens(text)
    assert parse_network(written) == net


def test_trips_example():
    t = parse_trips("<NUMBER OF ZONES> 2\n<TOTAL OD FLOW> 3.5\n<END OF METADATA>\nOrigin 1\n 2 : 3.5;\n")
    assert t.demands == {(1, 2): 3.5}


def test_empty_origin_block_has_no_entries():
    t = read_trips(FIXTURES / "tiny_trips.tntp")
    assert not any(o == 2 for o, _ in t.demands)
    assert t.demands[(3, 2)] == 0.75


def test_trips_total_matches_regex_oracle():
    text = (FIXTURES / "tiny_trips.tntp").read_text()
    t = parse_trips(text)
    assert t.total == pytest.approx(regex_total(text), rel=1e-12)
    assert abs(t.total - t.declared_total) <= 1e-6 * t.declared_total


def test_trips_total_mismatch():
    with pytest.raises(TntpFormatError, match="TOTAL OD FLOW"):
        parse_trips("<NUMBER OF ZONES> 2\n<TOTAL OD FLOW> 4.0\n<END OF METADATA>\nOrigin 1\n 2 : 3.5;\n")


def test_destination_beyond_zone_count():
    with pytest.raises(TntpFormatError, match="exceeds zone count"):
        parse_trips("<NUMBER OF ZONES> 2\n<TOTAL OD FLOW> 1\n<END OF METADATA>\nOrigin 1\n 3 : 1;\n")


def test_trips_round_trip():
    t = read_trips(FIXTURES / "tiny_trips.tntp")
    again = parse_trips(write_trips(t))
    assert again == t


finite = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def networks(draw):
    n = draw(st.integers(2, 12))
    k = draw(st.integers(0, 15))
    node = st.integers(1, n)
    links = [TntpLink(draw(node), draw(node), draw(st.floats(1e-3, 1e6)), draw(finite), draw(finite),
                      draw(finite), draw(st.floats(0, 8)), draw(finite), draw(finite), draw(st.integers(0, 9)))
             for _ in range(k)]
    return RawTntpNetwork(n, draw(st.integers(1, n)), links, draw(st.none() | st.integers(1, n)))


@given(networks())
def test_network_round_trip_property(net):
    again = parse_network(write_network(net))
    assert again == net
    assert write_network(again) == write_network(net)


@given(st.integers(1, 8).flatmap(lambda z: st.tuples(
    st.just(z), st.dictionaries(st.tuples(st.integers(1, z), st.integers(1, z)), finite, max_size=20))))
def test_trips_round_trip_property(args):
    zones, demands = args
    t = RawTripTable(zones, demands)
    text = write_trips(t)
    again = parse_trips(text)
    assert again.demands == demands
    assert again.total == pytest.approx(regex_total(text), rel=1e-12, abs=1e-12)
