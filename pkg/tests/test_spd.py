import json

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import oracle_distance, random_spd, random_sym
from manipulant.errors import ConvergenceError, DimensionError, NotSpdError
from manipulant.spd import (
    SpdCovariance,
    covariance_from_json,
    covariance_to_json,
    frechet_mean,
    geodesic,
    spd_covariance,
    spd_distance,
    spd_exp,
    spd_from_json,
    spd_log,
    spd_to_json,
    sym_unvec,
    sym_vec,
    tangent_norm,
    whitened_exp,
    whitened_log,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3, 6])


# --- distance ---------------------------------------------------------------

def test_distance_to_self_is_zero(rng):
    S = random_spd(rng, 3)
    assert spd_distance(S, S) == pytest.approx(0.0, abs=1e-12)


def test_distance_identity_to_scaled_identity():
    assert spd_distance(np.eye(2), np.e * np.eye(2)) == pytest.approx(np.sqrt(2.0), abs=1e-14)


def test_distance_swapped_diagonals():
    expected = np.sqrt(2.0) * np.log(4.0)
    got = spd_distance(np.diag([1.0, 4.0]), np.diag([4.0, 1.0]))
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(1.9605, abs=5e-5)


def test_distance_matches_general_matrix_function_oracle(rng):
    for _ in range(20):
        a, b = random_spd(rng, 4), random_spd(rng, 4)
        assert spd_distance(a, b) == pytest.approx(oracle_distance(a, b), rel=1e-9)


def test_distance_rejects_bad_input():
    with pytest.raises(DimensionError):
        spd_distance(np.eye(2), np.eye(3))
    with pytest.raises(NotSpdError):
        spd_distance(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(NotSpdError):
        spd_distance(np.eye(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(DimensionError):
        spd_distance(np.eye(2), np.ones((2, 3)))


def test_broadcasts_over_stacks(rng):
    A = np.stack([random_spd(rng, 3) for _ in range(5)])
    B = np.stack([random_spd(rng, 3) for _ in range(5)])
    d = spd_distance(A, B)
    assert d.shape == (5,)
    np.testing.assert_allclose(d, [spd_distance(a, b) for a, b in zip(A, B)], rtol=1e-13)


# --- exp / log ----------------------------------------------------------------

def test_exp_of_zero_is_base(rng):
    S = random_spd(rng, 3)
    np.testing.assert_allclose(spd_exp(S, np.zeros((3, 3))), S, atol=1e-14)


def test_exp_at_identity_is_matrix_exp():
    np.testing.assert_allclose(spd_exp(np.eye(2), np.eye(2)), np.e * np.eye(2), atol=1e-14)


def test_log_of_base_is_zero(rng):
    S = random_spd(rng, 3)
    np.testing.assert_allclose(spd_log(S, S), 0.0, atol=1e-13)


def test_log_at_identity():
    np.testing.assert_allclose(spd_log(np.eye(2), np.e * np.eye(2)), np.eye(2), atol=1e-14)


def test_exp_log_match_scipy_oracle(rng):
    S, L = random_spd(rng, 3), random_sym(rng, 3)
    sq = np.real(sla.sqrtm(S))
    isq = np.linalg.inv(sq)
    np.testing.assert_allclose(spd_exp(S, L), sq @ sla.expm(isq @ L @ isq) @ sq, rtol=1e-10, atol=1e-12)
    T = random_spd(rng, 3)
    np.testing.assert_allclose(spd_log(S, T), sq @ np.real(sla.logm(isq @ T @ isq)) @ sq,
                               rtol=1e-9, atol=1e-11)


def test_log_then_exp_round_trip_on_random_pairs(rng):
    for _ in range(100):
        S, T = random_spd(rng, 3), random_spd(rng, 3)
        assert np.linalg.norm(spd_exp(S, spd_log(S, T)) - T) < 1e-8


def test_exp_distance_equals_tangent_norm(rng):
    S, L = random_spd(rng, 3), random_sym(rng, 3, 0.3)
    assert spd_distance(S, spd_exp(S, L)) == pytest.approx(tangent_norm(S, L), rel=1e-10)


def test_whitened_maps_are_inverse(rng):
    S, T = random_spd(rng, 3), random_spd(rng, 3)
    W = whitened_log(S, T)
    assert np.linalg.norm(W) == pytest.approx(spd_distance(S, T), rel=1e-12)
    np.testing.assert_allclose(whitened_exp(S, W), T, rtol=1e-10, atol=1e-12)


# --- geodesic ------------------------------------------------------------------

def test_geodesic_endpoints(rng):
    a, b = random_spd(rng, 3), random_spd(rng, 3)
    np.testing.assert_allclose(geodesic(a, b, 0.0), a, atol=1e-12)
    np.testing.assert_allclose(geodesic(a, b, 1.0), b, rtol=1e-10, atol=1e-12)


def test_geodesic_commuting_midpoint():
    np.testing.assert_allclose(geodesic(np.eye(2), 4 * np.eye(2), 0.5), 2 * np.eye(2), atol=1e-14)


def test_geodesic_constant_speed(rng):
    a, b = random_spd(rng, 3), random_spd(rng, 3)
    d = spd_distance(a, b)
    for t in (0.25, 0.5, 0.75):
        assert spd_distance(a, geodesic(a, b, t)) == pytest.approx(t * d, rel=1e-10)


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_geodesic_rejects_parameter_outside_unit_interval(t):
    with pytest.raises(ValueError):
        geodesic(np.eye(2), 2 * np.eye(2), t)


# --- Frechet mean -----------------------------------------------------------------

def test_mean_of_repeated_point(rng):
    S = random_spd(rng, 3)
    np.testing.assert_allclose(frechet_mean([S, S, S]), S, atol=1e-14)


def test_mean_of_commuting_pair_is_geometric_mean():
    np.testing.assert_allclose(frechet_mean([np.eye(2), 4 * np.eye(2)]), 2 * np.eye(2), atol=1e-10)


def test_mean_of_noncommuting_pair_is_geodesic_midpoint():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([[1.0, -0.3], [-0.3, 3.0]])
    m = frechet_mean([a, b])
    half = spd_distance(a, b) / 2
    assert spd_distance(m, a) == pytest.approx(half, rel=1e-9)
    assert spd_distance(m, b) == pytest.approx(half, rel=1e-9)


def test_weighted_mean_follows_geodesic(rng):
    a, b = random_spd(rng, 3), random_spd(rng, 3)
    m = frechet_mean([a, b], weights=[0.75, 0.25])
    np.testing.assert_allclose(m, geodesic(a, b, 0.25), rtol=1e-8, atol=1e-10)


def test_mean_reports_non_convergence(rng):
    pts = np.stack([random_spd(rng, 3, 2.0) for _ in range(5)])
    with pytest.raises(ConvergenceError) as info:
        frechet_mean(pts, max_iter=1)
    assert info.value.last.shape == (3, 3)
    assert info.value.residual > 1e-10


def test_mean_rejects_empty_input():
    with pytest.raises(DimensionError):
        frechet_mean(np.zeros((0, 2, 2)))


# --- covariance ---------------------------------------------------------------------

def test_covariance_of_identical_points_is_zero(rng):
    S = random_spd(rng, 3)
    cov = spd_covariance([S, S, S], S)
    np.testing.assert_allclose(cov.tensor, 0.0, atol=1e-24)


def test_covariance_of_two_points_is_rank_one(rng):
    a, b = random_spd(rng, 3), random_spd(rng, 3)
    cov = spd_covariance([a, b], geodesic(a, b, 0.5))
    w = np.linalg.eigvalsh(cov.matricized)
    assert w[-1] > 1e-3
    assert np.all(np.abs(w[:-1]) < 1e-10 * w[-1])


def test_covariance_of_single_varying_entry():
    pts = [np.diag([v, 2.0]) for v in (1.0, 2.0, 5.0)]
    cov = spd_covariance(pts, frechet_mean(pts))
    nonzero = np.argwhere(np.abs(cov.tensor) > 1e-12)
    np.testing.assert_array_equal(nonzero, [[0, 0, 0, 0]])


def test_covariance_matches_direct_expansion(rng):
    pts = np.stack([random_spd(rng, 3) for _ in range(4)])
    mean = frechet_mean(pts)
    logs = [np.real(sla.logm(np.linalg.inv(sla.sqrtm(mean)) @ p @ np.linalg.inv(sla.sqrtm(mean))))
            for p in pts]
    sq = np.real(sla.sqrtm(mean))
    logs = [sq @ L @ sq for L in logs]
    direct = sum(np.multiply.outer(L, L) for L in logs) / 3
    np.testing.assert_allclose(spd_covariance(pts, mean).tensor, direct, rtol=1e-8, atol=1e-10)


def test_covariance_symmetries_and_psd(rng):
    pts = np.stack([random_spd(rng, 3) for _ in range(6)])
    S = spd_covariance(pts, frechet_mean(pts)).tensor
    np.testing.assert_array_equal(S, S.transpose(1, 0, 2, 3))
    np.testing.assert_array_equal(S, S.transpose(0, 1, 3, 2))
    np.testing.assert_allclose(S, S.transpose(2, 3, 0, 1), atol=1e-15)
    cov = spd_covariance(pts, frechet_mean(pts))
    assert np.linalg.eigvalsh(cov.matricized)[0] > -1e-12


def test_covariance_needs_two_points(rng):
    S = random_spd(rng, 2)
    with pytest.raises(ValueError):
        spd_covariance([S], S)


def test_axis_std_is_root_of_diagonal_entries(rng):
    pts = np.stack([random_spd(rng, 3) for _ in range(5)])
    cov = spd_covariance(pts, frechet_mean(pts))
    for i in range(3):
        assert cov.axis_std[i] == np.sqrt(cov.tensor[i, i, i, i])


# --- vectorization ------------------------------------------------------------------

def test_sym_vec_of_diagonal():
    np.testing.assert_array_equal(sym_vec(np.diag([1.0, 2.0])), [1.0, 2.0, 0.0])


def test_sym_vec_definition():
    np.testing.assert_allclose(sym_vec(np.array([[1.0, 3.0], [3.0, 2.0]])), [1, 2, 3 * np.sqrt(2)],
                               rtol=0, atol=1e-15)


def test_sym_vec_ordering_in_three_dimensions():
    A = np.array([[1.0, 4.0, 5.0], [4.0, 2.0, 6.0], [5.0, 6.0, 3.0]])
    np.testing.assert_allclose(sym_vec(A), [1, 2, 3, 4 * np.sqrt(2), 5 * np.sqrt(2), 6 * np.sqrt(2)])


def test_sym_vec_preserves_norm_on_random_matrices(rng):
    for _ in range(100):
        A = random_sym(rng, 4)
        assert np.linalg.norm(sym_vec(A)) == pytest.approx(np.linalg.norm(A), rel=1e-14)


def test_sym_vec_rejects_asymmetric_input():
    with pytest.raises(NotSpdError):
        sym_vec(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_unvec_rejects_non_triangular_length():
    with pytest.raises(DimensionError):
        sym_unvec(np.ones(4))


# --- serialization ------------------------------------------------------------------

def test_spd_json_round_trip_is_exact(rng):
    S = random_spd(rng, 3)
    doc = json.loads(json.dumps(spd_to_json(S)))
    assert doc["dim"] == 3 and len(doc["upper_triangular_row_major"]) == 6
    np.testing.assert_array_equal(spd_from_json(doc), S)


def test_spd_json_rejects_bad_entry_count():
    with pytest.raises(DimensionError):
        spd_from_json({"dim": 2, "upper_triangular_row_major": [1.0, 0.0]})


def test_covariance_json_round_trip(rng):
    pts = np.stack([random_spd(rng, 3) for _ in range(5)])
    cov = spd_covariance(pts, frechet_mean(pts))
    back = covariance_from_json(json.loads(json.dumps(covariance_to_json(cov))))
    assert isinstance(back, SpdCovariance) and back.n_samples == 5
    np.testing.assert_allclose(back.tensor, cov.tensor, rtol=1e-14, atol=1e-16)
    np.testing.assert_array_equal(back.base, cov.base)


# --- properties ---------------------------------------------------------------------

@settings(max_examples=100)
@given(seeds, dims)
def test_affine_invariance(seed, dim):
    rng = np.random.default_rng(seed)
    S, L = random_spd(rng, dim), random_spd(rng, dim)
    A = rng.normal(size=(dim, dim)) + 2 * np.eye(dim)
    d0 = spd_distance(S, L)
    d1 = spd_distance(A @ S @ A.T, A @ L @ A.T)
    assert abs(d1 - d0) <= 1e-8


@settings(max_examples=100)
@given(seeds, dims)
def test_distance_symmetry(seed, dim):
    rng = np.random.default_rng(seed)
    a, b = random_spd(rng, dim), random_spd(rng, dim)
    assert abs(spd_distance(a, b) - spd_distance(b, a)) <= 1e-12


@settings(max_examples=100)
@given(seeds, dims)
def test_triangle_inequality(seed, dim):
    rng = np.random.default_rng(seed)
    a, b, c = (random_spd(rng, dim, 1.5) for _ in range(3))
    assert spd_distance(a, c) <= spd_distance(a, b) + spd_distance(b, c) + 1e-10


@settings(max_examples=100)
@given(seeds, dims)
def test_exp_log_round_trip(seed, dim):
    rng = np.random.default_rng(seed)
    S, T = random_spd(rng, dim), random_spd(rng, dim)
    assert np.linalg.norm(spd_exp(S, spd_log(S, T)) - T) <= 1e-8
    L = random_sym(rng, dim, 0.5)
    assert np.linalg.norm(spd_log(S, spd_exp(S, L)) - L) <= 1e-8


@settings(max_examples=100)
@given(seeds, dims, st.integers(2, 8))
def test_mean_permutation_invariance(seed, dim, n):
    rng = np.random.default_rng(seed)
    pts = np.stack([random_spd(rng, dim) for _ in range(n)])
    m1 = frechet_mean(pts)
    m2 = frechet_mean(pts[rng.permutation(n)])
    assert np.max(np.abs(m1 - m2)) <= 1e-9


@settings(max_examples=100)
@given(seeds, dims, st.integers(2, 8))
def test_mean_inside_distance_hull(seed, dim, n):
    rng = np.random.default_rng(seed)
    pts = np.stack([random_spd(rng, dim) for _ in range(n)])
    m = frechet_mean(pts)
    spread = max(spd_distance(p, q) for p in pts for q in pts)
    assert np.max(spd_distance(np.broadcast_to(m, pts.shape), pts)) <= spread + 1e-12
    assert np.linalg.eigvalsh(m)[0] > 0


@settings(max_examples=100)
@given(seeds, dims)
def test_sym_vec_inner_product_and_inverse(seed, dim):
    rng = np.random.default_rng(seed)
    A, B = random_sym(rng, dim), random_sym(rng, dim)
    assert sym_vec(A) @ sym_vec(B) == pytest.approx(np.trace(A @ B), rel=1e-12, abs=1e-12)
    # Scaling by sqrt(2) and back can move an off-diagonal entry by one ulp.
    np.testing.assert_array_max_ulp(sym_unvec(sym_vec(A)), A, maxulp=1)
    v = sym_vec(A)
    np.testing.assert_array_max_ulp(sym_vec(sym_unvec(v)), v, maxulp=1)
