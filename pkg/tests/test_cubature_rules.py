"""Point/weight construction: moment exactness, counts, symmetry, diagnostics."""

import math

import numpy as np
import pytest

from dualcnf import rules
from dualcnf.rules import (
    DimensionOutOfRange,
    RuleConstructionError,
    compose_spherical_radial,
    genz_spherical,
    make_rule,
    moller_lower_bound,
    mysovskikh_spherical,
    radial_moment_match,
    stability_factor,
    stroud_5th,
    surface_area,
    ukf_sigma_set,
)

from _oracles import worst_moment_error

ALL_KINDS = ["CNF-I", "CNF-II", "CNF-III", "CNF-IV", "CNF-V", "CNF-VI", "UKF"]


def supported_dims(kind):
    return range(2, 8) if kind == "CNF-VI" else range(2, 9)


# ---------------------------------------------------------------------------
# spherical rules
# ---------------------------------------------------------------------------

def test_genz_3rd_n2_is_the_axis_cross():
    s = genz_spherical(2, 3)
    assert s.points.shape == (4, 2)
    expected = {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}
    assert {tuple(p) for p in s.points} == expected
    # surface measure 2*pi split equally
    np.testing.assert_allclose(s.weights, math.pi / 2.0, rtol=1e-14)


def test_genz_rejects_even_degree():
    with pytest.raises(RuleConstructionError):
        genz_spherical(3, 4)


def test_spherical_weights_sum_to_surface_area():
    for n in (2, 4, 7):
        for d in (3, 5):
            for ctor in (genz_spherical, mysovskikh_spherical):
                s = ctor(n, d)
                assert abs(s.weights.sum() - surface_area(n)) < 1e-10 * surface_area(n)
                norms = np.linalg.norm(s.points, axis=1)
                assert np.max(np.abs(norms - 1.0)) < 1e-12


def test_mysovskikh_3rd_n2_is_the_hexagon():
    s = mysovskikh_spherical(2, 3)
    assert s.points.shape == (6, 2)
    # vertices of an equilateral triangle and their negatives: angles 60 deg apart
    ang = np.sort(np.mod(np.arctan2(s.points[:, 1], s.points[:, 0]), 2 * np.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    np.testing.assert_allclose(gaps, np.pi / 3.0, atol=1e-12)


def test_mysovskikh_rejects_bad_degree():
    with pytest.raises(RuleConstructionError):
        mysovskikh_spherical(3, 7)


def test_simplex_vertices_centroid_and_norm():
    for n in (2, 5, 8):
        a = rules._simplex_vertices(n)
        np.testing.assert_allclose(a.sum(axis=0), 0.0, atol=1e-13)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-13)


# ---------------------------------------------------------------------------
# radial rules
# ---------------------------------------------------------------------------

def test_radial_3rd_n1():
    r = radial_moment_match(1, 3)
    np.testing.assert_allclose(r.radii, [math.sqrt(0.5)], rtol=1e-15)
    np.testing.assert_allclose(r.weights, [math.sqrt(math.pi) / 2.0], rtol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 8])
@pytest.mark.parametrize("d", [3, 5])
def test_radial_moment_equations(n, d):
    r = radial_moment_match(n, d)
    for ell in range(0, d, 2):
        lhs = float(r.weights @ r.radii ** ell)
        rhs = 0.5 * math.gamma((n + ell) / 2.0)
        assert abs(lhs - rhs) < 1e-10 * abs(rhs)


def test_radial_5th_includes_origin():
    r = radial_moment_match(7, 5)
    assert r.radii[0] == 0.0
    # transformed abscissa radius sqrt(2)*r equals sqrt(n+2) = 3
    assert abs(math.sqrt(2.0) * r.radii[1] - 3.0) < 1e-14


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def test_cnf1_n7_is_scaled_axis_cross():
    r = make_rule("CNF-I", 7)
    assert r.size == 14
    np.testing.assert_allclose(np.linalg.norm(r.points, axis=1), math.sqrt(7.0),
                               rtol=1e-13)
    np.testing.assert_allclose(r.weights, 1.0 / 14.0, rtol=1e-13)


def test_cnf5_n7_weights_match_catalog():
    r = make_rule("CNF-V", 7)
    assert r.size == 17
    np.testing.assert_allclose(r.weights[0], 2.0 / 9.0, rtol=1e-13)   # center
    np.testing.assert_allclose(r.weights[1:], 7.0 / 144.0, rtol=1e-13)
    # non-center points on the sqrt(n+2) shell
    np.testing.assert_allclose(np.linalg.norm(r.points[1:], axis=1), 3.0, rtol=1e-13)


def test_cnf2_n7_weight_classes():
    r = make_rule("CNF-II", 7)
    assert r.size == 99
    w = np.sort(np.unique(np.round(r.weights, 14)))
    # axis pairs, diagonal pairs, center: (4-n)/(2(n+2)^2), 1/(n+2)^2, 2/(n+2)
    np.testing.assert_allclose(w, [-3.0 / 162.0, 1.0 / 81.0, 2.0 / 9.0], rtol=1e-12)


def test_compose_dimension_mismatch():
    s = genz_spherical(3, 3)
    r = radial_moment_match(4, 3)
    with pytest.raises(RuleConstructionError):
        compose_spherical_radial(s, r, 4)


def test_zero_radius_shell_collapses_to_one_center():
    s = mysovskikh_spherical(4, 3)
    r = radial_moment_match(4, 5)
    c = compose_spherical_radial(s, r, 4)
    n_zero = np.sum(~np.any(c.points, axis=1))
    assert n_zero == 1
    assert c.size == (len(r.radii) - 1) * len(s.points) + 1


# ---------------------------------------------------------------------------
# whole-space 5th-degree rule
# ---------------------------------------------------------------------------

def test_stroud_counts_and_positivity():
    for n in range(2, 8):
        r = stroud_5th(n)
        assert r.size == n * n + n + 2
        assert np.all(r.weights > 0)
        assert stability_factor(r) == 1.0


def test_stroud_rejects_out_of_range():
    for n in (1, 8, 20):
        with pytest.raises(DimensionOutOfRange):
            stroud_5th(n)


def test_stroud_n3_full_monomial_exactness():
    r = stroud_5th(3)
    assert worst_moment_error(r.points, r.weights, 5) < 1e-12


def test_stroud_exceeds_node_bound_by_one():
    for n in range(2, 8):
        assert stroud_5th(n).size == moller_lower_bound(n, 5) + 1


# ---------------------------------------------------------------------------
# sigma sets
# ---------------------------------------------------------------------------

def test_ukf_1d_kappa2_matches_gauss_hermite():
    r = ukf_sigma_set(1, 2.0)
    np.testing.assert_allclose(np.sort(r.points.ravel()),
                               [-math.sqrt(3), 0.0, math.sqrt(3)], rtol=1e-14)
    np.testing.assert_allclose(np.sort(r.weights), [1 / 6, 1 / 6, 2 / 3], rtol=1e-14)
    # integrates x^4 for N(0,1) exactly
    assert abs(r.weights @ r.points.ravel() ** 4 - 3.0) < 1e-12


def test_ukf_rejects_degenerate_kappa():
    with pytest.raises(RuleConstructionError):
        ukf_sigma_set(3, -3.0)


def test_ukf_stability_factors():
    assert abs(stability_factor(ukf_sigma_set(7)) - 11.0 / 3.0) < 1e-12
    assert abs(stability_factor(ukf_sigma_set(8)) - 13.0 / 3.0) < 1e-12


# ---------------------------------------------------------------------------
# catalog-wide properties
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_moment_exactness_all_kinds(kind):
    for n in supported_dims(kind):
        r = make_rule(kind, n)
        assert worst_moment_error(r.points, r.weights, r.degree) < 1e-8, (kind, n)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_point_counts_match_closed_forms(kind):
    for n in supported_dims(kind):
        r = make_rule(kind, n)
        assert r.size == rules.expected_point_count(kind, n)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_full_symmetry_under_negation(kind):
    for n in (2, 5, 7):
        r = make_rule(kind, n)
        pos = sorted(map(tuple, np.round(r.points, 12)))
        neg = sorted(map(tuple, np.round(-r.points, 12)))
        assert pos == neg


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_sf_one_iff_no_negative_weight(kind):
    for n in supported_dims(kind):
        r = make_rule(kind, n)
        sf = stability_factor(r)
        if r.weights.min() >= 0:
            assert abs(sf - 1.0) < 1e-12
        else:
            assert sf > 1.0


def test_determinism_bitwise():
    for kind in ALL_KINDS:
        a = make_rule(kind, 7 if kind == "CNF-VI" else 8)
        b = make_rule(kind, 7 if kind == "CNF-VI" else 8)
        assert a.points.tobytes() == b.points.tobytes()
        assert a.weights.tobytes() == b.weights.tobytes()


def test_cnf5_degree3_only_with_degree5_residual_reported():
    # mixture rule: degree-3 exactness asserted; the degree-5 residual is
    # informational (it is genuinely inexact at degree 5)
    r = make_rule("CNF-V", 7)
    assert r.degree == 3
    res5 = worst_moment_error(r.points, r.weights, 5)
    print(f"CNF-V n=7 degree-5 residual (informational): {res5:.3e}")
    assert res5 > 1e-3  # genuinely a mixture rule, not accidentally degree 5


# ---------------------------------------------------------------------------
# node-count lower bound
# ---------------------------------------------------------------------------

def test_moller_closed_forms():
    for n in range(1, 12):
        assert moller_lower_bound(n, 3) == 2 * n
        assert moller_lower_bound(n, 5) == n * n + n + 1


def test_moller_rejects_even_degree():
    with pytest.raises(ValueError):
        moller_lower_bound(4, 4)


# ---------------------------------------------------------------------------
# table reproduction (cost/stability survey)
# ---------------------------------------------------------------------------

def test_state_dimension_point_counts():
    assert make_rule("CNF-I", 7).size == 14
    assert make_rule("CNF-II", 7).size == 99
    assert make_rule("CNF-III", 7).size == 16
    assert make_rule("CNF-IV", 7).size == 73
    assert make_rule("CNF-VI", 7).size == 58
    assert make_rule("UKF", 7).size == 15


def test_parameter_dimension_point_counts():
    assert make_rule("CNF-I", 8).size == 16
    assert make_rule("CNF-III", 8).size == 18
    assert make_rule("UKF", 8).size == 17


def test_cnf2_state_stability_factor_value():
    # exact value forced by the composed weight catalog at n=7:
    # |2/9| + 84*(1/81) + 14*(3/162) = 123/81
    sf = stability_factor(make_rule("CNF-II", 7))
    assert abs(sf - 123.0 / 81.0) < 1e-12


def test_make_rule_unknown_kind():
    with pytest.raises(RuleConstructionError):
        make_rule("CNF-IX", 4)
