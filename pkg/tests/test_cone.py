import json
import math

import numpy as np
import pytest

from waistlab.cone import (
    EmptyFiberError,
    EmptySetError,
    MeasureEstimate,
    RankDeficientError,
    batch_to_csv,
    best_fiber,
    estimate_to_json,
    fiber_points,
    min_norm_distance,
    neighborhood_measure,
    sample_conical,
    sample_in_ball,
    set_measure,
    tube_measure,
)
from waistlab.norms import euclidean_norm, lp_norm, norm_eval, smooth_norm

E3 = euclidean_norm(3)
LAST_COORD = np.array([[0.0, 0.0, 1.0]])


def _band_measure(eps: float) -> float:
    # chordal eps-neighborhood of the equator on the round 2-sphere
    return eps * math.sqrt(1.0 - eps**2 / 4.0)


def test_sample_batch_determinism_bit_for_bit():
    a = sample_conical(E3, 50_000, seed=5)
    b = sample_conical(E3, 50_000, seed=5)
    assert np.array_equal(a.points, b.points)
    c = sample_conical(lp_norm(1.5, 3), 20_000, seed=5)
    d = sample_conical(lp_norm(1.5, 3), 20_000, seed=5)
    assert np.array_equal(c.points, d.points)


def test_samples_lie_on_the_sphere():
    for norm in (E3, lp_norm(4, 3), lp_norm(1.5, 4)):
        batch = sample_conical(norm, 10_000, seed=2)
        assert np.abs(np.asarray(norm_eval(norm, batch.points)) - 1.0).max() <= 1e-10


def test_regularized_norm_falls_back_to_rejection():
    norm = smooth_norm(lp_norm(4, 2), 0.05, 0.01)
    batch = sample_conical(norm, 4_000, seed=6)
    assert np.abs(np.asarray(norm_eval(norm, batch.points)) - 1.0).max() <= 1e-10
    # sign symmetry of the norm carries over to the cone measure
    est = set_measure(batch, lambda pts: pts[:, 0] > 0)
    assert abs(est.mean - 0.5) <= 3.5 * est.std_error


def test_hemisphere_symmetry():
    batch = sample_conical(E3, 400_000, seed=11)
    est = set_measure(batch, lambda pts: pts[:, 2] > 0)
    assert abs(est.mean - 0.5) <= 3.0 * est.std_error


def test_lp_positive_orthant():
    batch = sample_conical(lp_norm(4, 3), 400_000, seed=12)
    est = set_measure(batch, lambda pts: np.all(pts > 0, axis=1))
    assert abs(est.mean - 0.125) <= 3.0 * est.std_error


def test_euclidean_cap_matches_riemannian_area():
    batch = sample_conical(E3, 400_000, seed=13)
    est = set_measure(batch, lambda pts: pts[:, 2] >= math.cos(math.pi / 3.0))
    cap = (1.0 - math.cos(math.pi / 3.0)) / 2.0
    assert cap == pytest.approx(0.25, abs=1e-12)
    assert abs(est.mean - cap) <= 3.0 * est.std_error


def test_lp_sampler_matches_sector_area_definition():
    # Cone measure of an angular arc on the l_p circle equals the normalized
    # sector area integral (1/2) r(theta)^2 dtheta; checks the sampler
    # against the defining formula, not just symmetry.
    p = 1.5
    norm = lp_norm(p, 2)
    theta = np.linspace(0.0, 2.0 * math.pi, 200_001)
    r = 1.0 / np.asarray(norm_eval(norm, np.column_stack([np.cos(theta),
                                                          np.sin(theta)])))
    sector = 0.5 * r**2
    total = np.trapezoid(sector, theta)
    batch = sample_conical(norm, 400_000, seed=17)
    angles = np.mod(np.arctan2(batch.points[:, 1], batch.points[:, 0]),
                    2.0 * math.pi)
    for lo, hi in ((0.2, 1.0), (2.5, 4.0), (5.0, 6.0)):
        mask = (theta >= lo) & (theta <= hi)
        expected = np.trapezoid(sector[mask], theta[mask]) / total
        est = MeasureEstimate.from_hits(int(((angles >= lo) & (angles <= hi)).sum()),
                                        batch.count)
        assert abs(est.mean - expected) <= 3.5 * max(est.std_error, 1e-4)


def test_tube_measure_codimension_two_oracle():
    # fiber of the last-two-coordinate projection at z = 0 on the round
    # 3-sphere is an equatorial circle; chordal distance to it is
    # sqrt(2 - 2|a|) with a the first two coordinates, and |a|^2 is uniform
    # on [0, 1], so the eps-tube has measure 1 - (1 - eps^2/2)^2.
    f = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    eps = 0.5
    est = tube_measure(euclidean_norm(4), f, [0.0, 0.0], eps,
                       200_000, 20_000, seed=23)
    expected = 1.0 - (1.0 - eps**2 / 2.0) ** 2
    assert abs(est.mean - expected) <= 3.0 * est.std_error + 1e-3


def test_random_caps_match_analytic_areas():
    batch = sample_conical(E3, 300_000, seed=14)
    rng = np.random.Generator(np.random.Philox(3))
    for _ in range(10):
        c = rng.standard_normal(3)
        c /= np.linalg.norm(c)
        angle = rng.uniform(0.3, 2.5)
        est = set_measure(batch, lambda pts: pts @ c >= math.cos(angle))
        assert abs(est.mean - (1.0 - math.cos(angle)) / 2.0) <= \
            3.5 * max(est.std_error, 1e-4)


def test_set_measure_trivial_indicators():
    batch = sample_conical(E3, 1000, seed=1)
    ones = set_measure(batch, lambda pts: np.ones(len(pts), dtype=bool))
    assert ones.mean == 1.0 and ones.std_error == 0.0
    zeros = set_measure(batch, lambda pts: np.zeros(len(pts), dtype=bool))
    assert zeros.mean == 0.0


def test_measure_estimate_contract():
    est = MeasureEstimate.from_hits(250, 1000, seed=9)
    assert est.mean == 0.25
    assert est.std_error == pytest.approx(math.sqrt(0.25 * 0.75 / 1000))
    record = json.loads(estimate_to_json(est))
    assert set(record) == {"mean", "std_error", "count", "seed"}
    with pytest.raises(ValueError):
        MeasureEstimate(mean=1.2, std_error=0.0, count=10)


def test_cone_measure_homogeneity_under_scaling():
    # Cone volume of t * co(A) scales as t^(n+1); checked with uniform-in-ball
    # samples before projection, on a cap set A.
    for norm, seed in ((E3, 21), (lp_norm(4, 3), 22)):
        pts = sample_in_ball(norm, 400_000, seed)
        r = np.asarray(norm_eval(norm, pts))
        ok = r > 0
        direction_in_cap = pts[ok, 2] / r[ok] >= 0.4
        base = direction_in_cap.mean()
        for t in (0.5, 0.8):
            obs = (direction_in_cap & (r[ok] <= t)).mean()
            expected = t**norm.dim * base
            sigma = math.sqrt(max(expected * (1 - expected), 1e-12) / ok.sum())
            assert abs(obs - expected) <= 3.5 * sigma


# ---------------------------------------------------------------------------
# Fibers
# ---------------------------------------------------------------------------

def test_fiber_points_equator():
    pts = fiber_points(E3, LAST_COORD, [0.0], 500, seed=3)
    assert np.abs(pts[:, 2]).max() == 0.0
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() <= 1e-10


def test_fiber_points_lp_exactness():
    norm = lp_norm(4, 3)
    pts = fiber_points(norm, LAST_COORD, [0.0], 500, seed=4)
    assert np.abs(pts[:, 2]).max() == 0.0
    assert np.abs(np.asarray(norm_eval(norm, pts)) - 1.0).max() <= 1e-10


def test_fiber_points_offset_slice_geometry():
    pts = fiber_points(E3, LAST_COORD, [0.5], 500, seed=5)
    assert np.abs(pts[:, 2] - 0.5).max() <= 1e-12
    assert np.abs(np.hypot(pts[:, 0], pts[:, 1]) - math.sqrt(0.75)).max() <= 1e-10


def test_fiber_errors():
    with pytest.raises(EmptyFiberError):
        fiber_points(E3, LAST_COORD, [1.2], 10, seed=1)
    with pytest.raises(RankDeficientError):
        fiber_points(E3, np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]),
                     [0.0, 0.0], 10, seed=1)


def test_min_norm_distance_generic_path_matches_brute_force():
    norm = smooth_norm(lp_norm(1.5, 2), 0.05, 0.01)
    rng = np.random.Generator(np.random.Philox(8))
    cloud = rng.standard_normal((200, 2))
    pts = rng.standard_normal((100, 2))
    fast = min_norm_distance(norm, pts, cloud)
    brute = np.array([
        float(np.min(np.asarray(norm_eval(norm, p[None, :] - cloud))))
        for p in pts
    ])
    assert np.allclose(fast, brute, atol=1e-10)


# ---------------------------------------------------------------------------
# Tube and neighborhood measures
# ---------------------------------------------------------------------------

def test_tube_measure_equator_band_oracle():
    est = tube_measure(E3, LAST_COORD, [0.0], 0.5, 200_000, 10_000, seed=31)
    # conservative estimator: allow a small negative bias below 3 sigma
    assert abs(est.mean - _band_measure(0.5)) <= 3.0 * est.std_error + 5e-4


def test_tube_measure_whole_sphere_at_diameter():
    est = tube_measure(E3, LAST_COORD, [0.0], 2.0, 20_000, 2_000, seed=32)
    assert est.mean == 1.0


def test_tube_measure_boundary_slice_is_positive():
    est = tube_measure(E3, LAST_COORD, [0.999], 0.3, 50_000, 2_000, seed=33)
    assert est.mean > 0.0


def test_tube_measure_monotone_in_eps():
    vals = [tube_measure(E3, LAST_COORD, [0.0], eps, 50_000, 3_000, seed=34).mean
            for eps in (0.2, 0.4, 0.6, 0.8)]
    assert np.all(np.diff(vals) >= 0.0)


def test_best_fiber_prefers_equator():
    z_grid = [np.array([z]) for z in np.arange(-0.6, 0.61, 0.3)]
    z_star, est, all_est = best_fiber(E3, LAST_COORD, 0.5, z_grid,
                                      100_000, 5_000, seed=35)
    assert z_star[0] == pytest.approx(0.0)
    assert len(all_est) == len(z_grid)
    assert est.mean == max(e.mean for e in all_est)


def test_best_fiber_single_point_grid():
    z_star, est, _ = best_fiber(E3, LAST_COORD, 0.4, [np.array([0.3])],
                                20_000, 2_000, seed=36)
    assert z_star[0] == 0.3
    assert 0.0 < est.mean < 1.0


def test_best_fiber_symmetric_grid_symmetric_estimates():
    z_grid = [np.array([z]) for z in (-0.4, 0.4)]
    _, _, ests = best_fiber(E3, LAST_COORD, 0.5, z_grid, 200_000, 8_000, seed=37)
    sigma = math.sqrt(ests[0].std_error**2 + ests[1].std_error**2)
    assert abs(ests[0].mean - ests[1].mean) <= 3.0 * sigma


def test_best_fiber_skips_empty_fibers():
    z_grid = [np.array([1.5]), np.array([0.0])]
    z_star, _, ests = best_fiber(E3, LAST_COORD, 0.5, z_grid, 20_000, 2_000,
                                 seed=38)
    assert z_star[0] == 0.0
    assert len(ests) == 1
    with pytest.raises(EmptyFiberError):
        best_fiber(E3, LAST_COORD, 0.5, [np.array([1.5])], 1_000, 100, seed=39)


def test_neighborhood_measure_whole_sphere():
    est = neighborhood_measure(E3, lambda pts: np.ones(len(pts), dtype=bool),
                               0.3, 20_000, 2_000, seed=41)
    assert est.mean == 1.0


def test_neighborhood_measure_hemisphere_band_oracle():
    est = neighborhood_measure(E3, lambda pts: pts[:, 2] >= 0.0, 0.5,
                               200_000, 20_000, seed=42)
    expected = (1.0 + _band_measure(0.5)) / 2.0
    assert abs(est.mean - expected) <= 3.0 * est.std_error + 5e-4


def test_neighborhood_contains_the_set_itself():
    ind = lambda pts: pts[:, 2] >= 0.6
    est = neighborhood_measure(E3, ind, 0.2, 100_000, 5_000, seed=43)
    base = set_measure(sample_conical(E3, 100_000, seed=44), ind)
    assert est.mean >= base.mean - 3.0 * math.hypot(est.std_error, base.std_error)


def test_neighborhood_empty_set_error():
    with pytest.raises(EmptySetError):
        neighborhood_measure(E3, lambda pts: np.zeros(len(pts), dtype=bool),
                             0.3, 5_000, 500, seed=45)


def test_neighborhood_measure_deterministic():
    ind = lambda pts: pts[:, 2] >= 0.0
    a = neighborhood_measure(E3, ind, 0.4, 30_000, 3_000, seed=46)
    b = neighborhood_measure(E3, ind, 0.4, 30_000, 3_000, seed=46)
    assert a == b


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def test_batch_csv_round_trip():
    batch = sample_conical(E3, 50, seed=51)
    text = batch_to_csv(batch)
    lines = text.strip().split("\n")
    assert lines[0] == "x0,x1,x2"
    parsed = np.array([[float(tok) for tok in line.split(",")]
                       for line in lines[1:]])
    assert np.array_equal(parsed, batch.points)
