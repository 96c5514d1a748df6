import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guide.core import ResponseCurve, TargetSpec
from guide.errors import InfeasibleDesign, InvalidInput, RangesInfeasible
from guide.oracle import (OracleConfig, ParameterRanges, blended_law, check_feasible, default_grid,
                          feasible_batch, generate_dataset, peak_tolerance_target, sample_designs,
                          toy_response, toy_response_batch)


def design(n=(150.0, 40.0, 0.002, 0.004, 0.006), s=(90.0, 20.0, 0.003, 0.002, 0.01)):
    return np.array(list(n) + list(s))


def test_default_grid():
    g = default_grid()
    assert g.size == 100 and g[0] == 0.0 and g[-1] == pytest.approx(0.04)


def test_origin_anchored(small_data):
    assert np.all(small_data.responses[:, 0] == 0.0)


def test_yield_point_exact():
    # strain grid containing the blended yield strain exactly
    x = design()
    law = blended_law(x, 0.7)[0]
    s1 = law[2]
    cfg = OracleConfig(grid=np.array([0.0, s1, 2 * s1]))
    y = toy_response(x, cfg).values
    assert y[1] == pytest.approx(0.7 * 150.0 + 0.3 * 90.0, rel=1e-12)


def test_stress_zero_after_failure():
    x = design()
    law = blended_law(x, 0.7)[0]
    s3 = law[2] + law[3] + law[4]
    cfg = OracleConfig(grid=np.linspace(0.0, 2 * s3, 50))
    y = toy_response(x, cfg).values
    assert np.all(y[cfg.grid > s3] == 0.0)


def test_peak_is_hardened_stress():
    x = design()
    law = blended_law(x, 0.7)[0]
    s2 = law[2] + law[3]
    cfg = OracleConfig(grid=np.array([0.0, s2]))
    assert toy_response(x, cfg).values[1] == pytest.approx(law[0] + law[1], rel=1e-12)


def test_geom_scale_stretches_strain():
    x = design()
    base = toy_response(x, OracleConfig(grid=np.linspace(0, 0.02, 41))).values
    wide = toy_response(x, OracleConfig(geom_scale=2.0, grid=np.linspace(0, 0.04, 41))).values
    np.testing.assert_allclose(base, wide, rtol=1e-12, atol=1e-9)


def test_invalid_design_raises():
    x = design()
    x[0] = -1.0
    with pytest.raises(InfeasibleDesign):
        toy_response(x)


@pytest.mark.parametrize("n", [1, 1669])
def test_generate_sizes(n):
    ds = generate_dataset(n, seed=4)
    assert len(ds) == n and ds.k == 100


def test_holdout_pool_size():
    ds = generate_dataset(5667, seed=9)
    val, test = ds.split(0.5)
    assert len(val) + len(test) == 5667


def test_generation_deterministic():
    a = generate_dataset(50, seed=7)
    b = generate_dataset(50, seed=7)
    assert a.designs.tobytes() == b.designs.tobytes()
    assert a.responses.tobytes() == b.responses.tobytes()
    assert not np.array_equal(a.designs, generate_dataset(50, seed=8).designs)


def test_prefix_stable():
    a, _ = sample_designs(20, ParameterRanges(), 3)
    b, _ = sample_designs(40, ParameterRanges(), 3)
    np.testing.assert_array_equal(a, b[:20])


def test_samples_inside_ranges():
    r = ParameterRanges()
    X, draws = sample_designs(300, r, 5)
    assert draws >= 300
    assert np.all(X >= r.low) and np.all(X <= r.high)


def test_infeasible_ranges():
    # hardening stress much larger than yield over tiny hardening strain: slope never below elastic
    low = np.tile([50.0, 1000.0, 0.004, 1e-6, 1e-3], 2)
    high = np.tile([51.0, 1001.0, 0.005, 2e-6, 2e-3], 2)
    with pytest.raises(RangesInfeasible):
        sample_designs(1, ParameterRanges(low, high), 0)


def test_bad_ranges():
    with pytest.raises(InvalidInput):
        ParameterRanges(np.ones(10), np.ones(10))


class TestFeasibility:
    def test_exact_curve_feasible_for_zero_tolerance(self):
        x = design()
        y = toy_response(x)
        t = TargetSpec(y, np.zeros(100))
        assert check_feasible(x, t)

    def test_infinite_tolerance_accepts_all(self, small_data):
        t = TargetSpec(ResponseCurve(small_data.grid, np.full(100, 1e6)), np.full(100, np.inf))
        assert np.all(feasible_batch(small_data.designs, t))

    def test_zero_tolerance_generic(self, small_data):
        t = TargetSpec(ResponseCurve(small_data.grid, small_data.responses[0]), np.zeros(100))
        assert not np.any(feasible_batch(small_data.designs[1:], t))

    def test_held_out_row_round_trip(self, test_split):
        for i in range(20):
            t = peak_tolerance_target(test_split.responses[i], test_split.grid, 0.1)
            assert check_feasible(test_split.designs[i], t)

    def test_mask_excludes_points(self):
        x = design()
        y = toy_response(x).values.copy()
        y[50] += 1e3
        t = TargetSpec(ResponseCurve(default_grid(), y), np.full(100, 1.0))
        assert not check_feasible(x, t)
        mask = np.zeros(100, bool)
        mask[50] = True
        assert check_feasible(x, TargetSpec(t.target, t.tolerance, mask))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 50), st.floats(1.0, 4.0), st.integers(0, 299))
    def test_monotone_in_tolerance(self, eps, factor, row):
        data = generate_dataset(300, seed=11)
        t = peak_tolerance_target(data.responses[0], data.grid, 0.0).with_tolerance(np.full(100, eps))
        wide = t.with_tolerance(t.tolerance * factor)
        x = data.designs[row]
        if check_feasible(x, t):
            assert check_feasible(x, wide)


def test_batch_matches_single(small_data):
    X = small_data.designs[:30]
    np.testing.assert_array_equal(toy_response_batch(X, OracleConfig()), small_data.responses[:30])


def test_config_dict_round_trip():
    cfg = OracleConfig(blend_normal=0.6, geom_scale=2.0, grid=np.linspace(0.001, 0.05, 30))
    back = OracleConfig.from_dict(cfg.to_dict())
    assert back.blend_normal == 0.6 and back.geom_scale == 2.0
    np.testing.assert_allclose(back.grid, cfg.grid)
