import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adtvlc.sources import (
    Beam,
    UnitKind,
    build_adt_units,
    build_illum_units,
    lambertian_order_from_half_angle,
    luminous_intensity,
    radiant_intensity,
)

DOWN = np.array([0.0, 0.0, -1.0])


def _beam(order, power=1.0, flux=0.0):
    return Beam(np.zeros(3), DOWN, order, power, flux)


def _toward(phi_deg):
    """Unit vector at angle phi from straight down."""
    p = math.radians(phi_deg)
    return np.array([math.sin(p), 0.0, -math.cos(p)])


def test_order_examples():
    assert lambertian_order_from_half_angle(60.0) == pytest.approx(1.0, abs=1e-12)
    # -ln2 / ln(cos 21 deg) evaluated by hand: 0.693147 / 0.068730
    assert lambertian_order_from_half_angle(21.0) == pytest.approx(10.084, abs=0.01)
    # -ln2 / ln(cos 70 deg) = 0.693147 / 1.072895
    assert lambertian_order_from_half_angle(70.0) == pytest.approx(0.6463, abs=0.001)


@pytest.mark.parametrize("bad", [0.0, 90.0, -5.0])
def test_order_rejects_bad_angles(bad):
    with pytest.raises(ValueError):
        lambertian_order_from_half_angle(bad)


def test_intensity_examples():
    assert radiant_intensity(_beam(1.0), DOWN) == pytest.approx(1.0 / math.pi, rel=1e-12)
    assert radiant_intensity(_beam(3.0), np.array([1.0, 0.0, 0.0])) == 0.0
    assert radiant_intensity(_beam(10.084), _toward(21.0)) == pytest.approx(0.8819, abs=1e-3)


def test_luminous_intensity_uses_flux():
    b = _beam(1.0, power=2.0, flux=100.0)
    assert luminous_intensity(b, DOWN) == pytest.approx(100.0 / math.pi)


def test_beam_validation():
    with pytest.raises(ValueError):
        _beam(0.0)
    with pytest.raises(ValueError):
        _beam(1.0, power=-1.0)


@pytest.mark.parametrize("n", [0.65, 1.0, 10.08])
def test_hemisphere_normalisation(n):
    # 100 x 100 Gauss-Legendre points over (phi, psi).
    x, w = np.polynomial.legendre.leggauss(100)
    phi = (x + 1.0) * math.pi / 4.0
    wphi = w * math.pi / 4.0
    psi = (x + 1.0) * math.pi
    wpsi = w * math.pi
    P, S = np.meshgrid(phi, psi, indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(S), np.sin(P) * np.sin(S), -np.cos(P)], axis=-1).reshape(-1, 3)
    vals = radiant_intensity(_beam(n, power=2.5), dirs).reshape(P.shape)
    total = float(np.einsum("i,j,ij->", wphi, wpsi, vals * np.sin(P)))
    assert total == pytest.approx(2.5, rel=1e-3)


@given(st.floats(0.5, 89.0))
def test_half_power_exact(half):
    b = _beam(lambertian_order_from_half_angle(half))
    ratio = radiant_intensity(b, _toward(half)) / radiant_intensity(b, DOWN)
    assert abs(ratio - 0.5) <= 0.5e-9


@given(st.floats(0.1, 2000.0), st.floats(0.0, 90.0), st.floats(0.0, 90.0))
def test_intensity_non_increasing(n, a, b):
    lo, hi = sorted((a, b))
    beam = _beam(n)
    assert radiant_intensity(beam, _toward(lo)) >= radiant_intensity(beam, _toward(hi))


def test_adt_units_layout():
    units = build_adt_units()
    branches = [br for u in units for br in u.branches]
    assert len(units) == 8 and len(branches) == 32
    for u in units:
        assert u.kind is UnitKind.ADT
        assert [br.orientation.azimuth_deg for br in u.branches] == [45.0, 135.0, 225.0, 315.0]
        assert u.position[2] == 3.0
    for br in branches:
        assert br.orientation.elevation_deg == -70.0
        assert len(br.beams) == 3
        assert br.pointing[2] == pytest.approx(-0.93969, abs=5e-6)
        assert br.power == pytest.approx(1.5)
        assert all(np.array_equal(b.position, br.position) and np.array_equal(b.pointing, br.pointing)
                   for b in br.beams)
        assert br.order == pytest.approx(10.084, abs=0.01)
    np.testing.assert_array_equal(units[5].position, [3.0, 3.0, 3.0])


def test_branch_as_beam_sums_power():
    br = build_adt_units(ld_power=0.25, ld_flux=7.0)[0].branches[2]
    b = br.as_beam()
    assert b.power == pytest.approx(0.75) and b.flux == pytest.approx(21.0)
    np.testing.assert_array_equal(b.pointing, br.pointing)


def test_illum_units_layout():
    units = build_illum_units(ld_flux=10.0)
    assert len(units) == 5
    assert sum(len(u.all_beams()) for u in units) == 45
    np.testing.assert_array_equal(units[2].position, [2.0, 4.0, 3.0])
    for u in units:
        assert u.kind is UnitKind.ILLUM
        for b in u.beams:
            assert b.order == pytest.approx(0.6463, abs=0.001)
            np.testing.assert_array_equal(b.pointing, DOWN)
        (agg,) = u.aggregate_beams()
        assert agg.flux == pytest.approx(90.0)
