import math

import pytest

from rsmu_sim.topology import (RoadPosition, Route, TopologyError, advance, build_network, path_length,
                               position_at, radio_distance, route_station_span)


def test_minimal_network_has_both_carriageways():
    net = build_network({"mainline_length": 6000})
    assert net.carriageways == ("east", "west")
    assert net.junctions == ()


def test_exit_junction_is_stored():
    net = build_network({"mainline_length": 6000, "junctions": [{"id": "x", "kind": "exit", "station": 5000}]})
    assert len(net.junctions) == 1
    assert net.junction("x").station == 5000


def test_junction_beyond_road_rejected():
    with pytest.raises(TopologyError, match="station out of range"):
        build_network({"mainline_length": 6000, "junctions": [{"id": "x", "kind": "exit", "station": 7000}]})


def test_duplicate_junction_ids_rejected():
    j = {"id": "a", "kind": "exit", "station": 100}
    with pytest.raises(TopologyError, match="duplicate junction id"):
        build_network({"mainline_length": 6000, "junctions": [j, dict(j, station=200)]})


def test_nonpositive_length_rejected():
    with pytest.raises(TopologyError):
        build_network({"mainline_length": 0})


@pytest.mark.parametrize("start, ds, expected", [(100, 50, 150), (100, 0, 100)])
def test_advance_linear(start, ds, expected):
    net = build_network({"mainline_length": 6000})
    pos = advance(RoadPosition("east", start), ds, net)
    assert pos.station == expected
    assert not pos.arrived


def test_advance_clamps_at_road_end():
    net = build_network({"mainline_length": 6000})
    pos = advance(RoadPosition("east", 6000), 10, net)
    assert pos.arrived
    assert pos.station == 6000


def test_advance_rejects_negative_step():
    net = build_network({"mainline_length": 6000})
    with pytest.raises(TopologyError):
        advance(RoadPosition("east", 0), -1, net)


def test_radio_distance_cases():
    net = build_network({"mainline_length": 6000, "carriageway_separation": 20})
    a = RoadPosition("east", 1000)
    assert radio_distance(a, a, net) == 0
    assert radio_distance(a, RoadPosition("east", 1600), net) == pytest.approx(600)
    # hand computed: east centerline y=-10, west y=+10, same x when stations mirror
    assert radio_distance(RoadPosition("east", 3000), RoadPosition("west", 3000), net) == pytest.approx(20)
    assert radio_distance(RoadPosition("east", 1000), RoadPosition("west", 5000), net) == pytest.approx(20)


def test_west_stations_run_against_x():
    net = build_network({"mainline_length": 6000})
    assert net.xy(RoadPosition("west", 0))[0] == 6000
    assert net.xy(RoadPosition("west", 6000))[0] == 0


def test_ramp_route_geometry():
    net = build_network({"mainline_length": 6000, "junctions": [
        {"id": "in", "kind": "entrance", "station": 1000, "ramp_length": 300},
        {"id": "out", "kind": "exit", "station": 5000, "ramp_length": 300}]})
    route = Route("east", "in", "out")
    assert path_length(route, net) == pytest.approx(300 + 4000 + 300)
    start = position_at(0, route, net)
    assert start.on_ramp == ("in", 0)
    # the entrance ramp meets the mainline at its junction station
    assert net.xy(position_at(300, route, net)) == pytest.approx(net.mainline_point("east", 1000))
    end_xy = net.xy(position_at(4600, route, net))
    jx, jy = net.mainline_point("east", 5000)
    assert math.hypot(end_xy[0] - jx, end_xy[1] - jy) == pytest.approx(300)
    lo, hi = route_station_span(route, net)
    assert lo == pytest.approx(1000 - 300 * math.cos(math.radians(15)))
    assert hi == pytest.approx(5000 + 300 * math.cos(math.radians(15)))


def test_route_with_wrong_junction_kind_rejected():
    net = build_network({"mainline_length": 6000, "junctions": [{"id": "x", "kind": "exit", "station": 5000}]})
    with pytest.raises(TopologyError):
        path_length(Route("east", entry="x"), net)
