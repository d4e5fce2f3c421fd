import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adtvlc.geometry import (
    Orientation,
    RoomConfig,
    Surface,
    az_el_from_direction,
    build_room,
    direction_from_az_el,
    mesh_surface,
    room_surfaces,
    vec,
)

azimuths = st.floats(-720.0, 720.0, allow_nan=False)
elevations = st.floats(-90.0, 90.0, allow_nan=False)


def test_pole_and_axis_directions():
    np.testing.assert_array_equal(direction_from_az_el(Orientation(0, 90)), [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(direction_from_az_el(Orientation(90, 0)), [0.0, 1.0, 0.0])


def test_down_tilted_branch_direction():
    d = Orientation(45, -70).direction
    np.testing.assert_allclose(d, [0.24184, 0.24184, -0.93969], atol=5e-6)


def test_elevation_out_of_range_rejected():
    with pytest.raises(ValueError):
        Orientation(0, 91)


@given(azimuths, elevations)
def test_direction_is_unit(az, el):
    assert abs(np.linalg.norm(Orientation(az, el).direction) - 1.0) <= 1e-12


@given(st.floats(0.0, 359.0), st.floats(-89.0, 89.0))
def test_az_el_round_trip(az, el):
    back = az_el_from_direction(Orientation(az, el).direction)
    assert back.elevation_deg == pytest.approx(el, abs=1e-9)
    assert min(abs(back.azimuth_deg - az), 360.0 - abs(back.azimuth_deg - az)) <= 1e-9


@pytest.mark.parametrize("side,count", [(0.05, 12_800), (0.20, 800)])
def test_ceiling_element_counts(side, count):
    ceiling = room_surfaces(RoomConfig())[0]
    assert ceiling.id == "ceiling"
    assert len(mesh_surface(ceiling, side)) == count


def test_room_counts_and_normals():
    room = build_room()
    assert len(room.mesh_second) == 3_400
    assert len(room.mesh_first) == 54_400
    by_id = {s.id: s for s in room.surfaces}
    np.testing.assert_array_equal(by_id["ceiling"].normal, [0, 0, -1])
    np.testing.assert_array_equal(by_id["floor"].normal, [0, 0, 1])
    assert sum(s.area for s in room.surfaces) == pytest.approx(136.0, rel=1e-12)
    assert by_id["floor"].rho == 0.3 and by_id["ceiling"].rho == 0.8 and by_id["wall3"].rho == 0.8
    assert all(s.lambertian_order == 1.0 for s in room.surfaces)


def test_unit_cube_has_24_elements():
    room = build_room(RoomConfig(1.0, 1.0, 1.0, first_order_side=0.5, second_order_side=0.5))
    assert len(room.mesh_first) == 24 and len(room.mesh_second) == 24


def test_normals_point_inward():
    room = build_room(RoomConfig(first_order_side=0.5, second_order_side=0.5))
    center = np.array([2.0, 4.0, 1.5])
    for e in room.mesh_second:
        assert (center - e.center) @ e.normal > 0.0


def test_non_dividing_side_rejected():
    ceiling = room_surfaces(RoomConfig())[0]
    with pytest.raises(ValueError, match="does not divide"):
        mesh_surface(ceiling, 0.07)
    with pytest.raises(ValueError):
        mesh_surface(ceiling, 0.0)


def test_surface_validation():
    with pytest.raises(ValueError):
        Surface("bad", vec(0, 0, 0), vec(1, 0, 0), vec(0, 1, 0), vec(0, 0, 1), 1.3)
    with pytest.raises(ValueError):
        Surface("skew", vec(0, 0, 0), vec(1, 0, 0), vec(0, 1, 0), vec(1, 0, 0), 0.5)


@given(st.floats(0.3, 5.0), st.floats(0.3, 5.0), st.floats(0.07, 0.9))
def test_truncated_mesh_preserves_area_and_stays_inside(lu, lv, side):
    s = Surface("s", vec(0, 0, 0), vec(lu, 0, 0), vec(0, lv, 0), vec(0, 0, 1), 0.5)
    m = mesh_surface(s, side, strict=False)
    assert abs(m.areas.sum() - lu * lv) <= 1e-9 * lu * lv
    assert np.all(m.centers[:, 0] > 0) and np.all(m.centers[:, 0] < lu)
    assert np.all(m.centers[:, 1] > 0) and np.all(m.centers[:, 1] < lv)
    assert np.all(m.centers[:, 2] == 0.0)
    assert len(np.unique(m.centers, axis=0)) == len(m)


def test_mesh_sums_and_determinism():
    cfg = RoomConfig()
    for s in room_surfaces(cfg):
        a = mesh_surface(s, 0.2)
        b = mesh_surface(s, 0.2)
        assert abs(a.areas.sum() - s.area) <= 1e-9 * s.area
        np.testing.assert_array_equal(a.centers, b.centers)
        np.testing.assert_array_equal(a.areas, b.areas)
        # Every center lies on the parent plane.
        assert np.allclose((a.centers - s.origin) @ s.normal, 0.0, atol=1e-12)


def test_room_contains():
    room = build_room(RoomConfig(first_order_side=0.5, second_order_side=0.5))
    assert room.contains(np.array([2.0, 4.0, 1.0]))
    assert not room.contains(np.array([9.0, 1.0, 1.0]))
    assert math.isclose(room.width * room.length * room.height, 96.0)
