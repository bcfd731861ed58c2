import numpy as np
import pytest

from fidbo.errors import ConfigError
from fidbo.objectives import (
    LazyGPDraw,
    branin,
    get_cost,
    get_objective,
    hartmann3,
    hartmann6,
)


def test_branin_known_minima():
    # Classical minimum locations; all three attain the same value.
    assert branin(np.array([-np.pi, 12.275])) == pytest.approx(0.397887, abs=1e-5)
    assert branin(np.array([np.pi, 2.275])) == pytest.approx(0.397887, abs=1e-5)
    assert branin(np.array([9.42478, 2.475])) == pytest.approx(0.397887, abs=1e-5)


def test_hartmann_minima():
    obj3 = get_objective("hartmann3")
    assert hartmann3(obj3.x_star) == pytest.approx(obj3.f_star, abs=1e-5)
    obj6 = get_objective("hartmann6")
    assert hartmann6(obj6.x_star) == pytest.approx(obj6.f_star, abs=1e-4)
    # The stored optimum really is a local minimum: random nearby probes are worse.
    rng = np.random.default_rng(0)
    for _ in range(20):
        pert = obj6.x_star + 1e-3 * rng.standard_normal(6)
        assert hartmann6(pert) > obj6.f_star


def test_estimate_f_star_recovers_branin():
    obj = get_objective("branin")
    val, x = obj.estimate_f_star(n_grid=512, seed=3)
    assert val == pytest.approx(obj.f_star, abs=1e-5)


def test_evaluate_rejects_bad_inputs():
    obj = get_objective("branin")
    with pytest.raises(ConfigError):
        obj.evaluate(np.array([100.0, 0.0]), 0.0)
    with pytest.raises(ConfigError):
        obj.evaluate(np.array([0.0, 1.0]), 1.5)
    with pytest.raises(ConfigError):
        obj.evaluate(np.array([0.0]), 0.0)
    with pytest.raises(ConfigError):
        get_objective("rosenbrock")


def test_linear_shift_identity_at_full_fidelity():
    obj = get_objective("branin", transform="linear-shift", seed=7)
    x = np.array([2.0, 3.0])
    assert obj.evaluate(x, 0.0) == branin(x)
    # At s > 0 the value moves.
    assert obj.evaluate(x, 1.0) != pytest.approx(branin(x), abs=1e-9)


def test_linear_shift_scales_linearly_in_s():
    obj = get_objective("branin", transform="linear-shift", seed=7)
    x = np.array([-1.0, 8.0])
    d_half = obj.evaluate(x, 0.5) - branin(x)
    d_full = obj.evaluate(x, 1.0) - branin(x)
    assert d_full == pytest.approx(2.0 * d_half, rel=1e-9)


def test_linear_shift_magnitude_matches_range_fraction():
    obj = get_objective("branin", transform="linear-shift", seed=11)
    rng = np.random.default_rng(5)
    lo, hi = obj.domain[:, 0], obj.domain[:, 1]
    X = lo + (hi - lo) * rng.random((200, 2))
    shifts = np.array([obj.evaluate(x, 1.0) - branin(x) for x in X])
    rms = np.sqrt(np.mean(shifts**2))
    # Unit-RMS direction field times the default 10%-of-range scale.
    assert 0.3 * obj.shift_scale < rms < 3.0 * obj.shift_scale
    assert 10.0 < obj.shift_scale < 60.0  # branin's range is around 300


def test_linear_shift_deterministic_per_seed():
    a = get_objective("branin", transform="linear-shift", seed=3)
    b = get_objective("branin", transform="linear-shift", seed=3)
    c = get_objective("branin", transform="linear-shift", seed=4)
    x = np.array([1.0, 1.0])
    assert a.evaluate(x, 0.7) == b.evaluate(x, 0.7)
    assert a.evaluate(x, 0.7) != c.evaluate(x, 0.7)


def test_gp_draw_repeat_query_is_cached():
    draw = LazyGPDraw(2, [0.3, 0.3], seed=0)
    u = np.array([[0.1, 0.2]])
    v1 = draw(u)[0]
    v2 = draw(u)[0]
    assert v1 == v2
    assert draw.X.shape[0] == 1


def test_gp_draw_batch_order_consistency():
    # Revealing in one batch or two gives identical values.
    pts = np.random.default_rng(1).uniform(-1, 1, size=(6, 2))
    a = LazyGPDraw(2, 0.4, seed=9)
    va = a(pts)
    b = LazyGPDraw(2, 0.4, seed=9)
    vb = np.concatenate([b(pts[:3]), b(pts[3:])])
    # Identical up to block-Cholesky rounding-order differences.
    np.testing.assert_allclose(va, vb, rtol=1e-9)


def test_gp_draw_smoothness():
    draw = LazyGPDraw(1, 0.5, seed=2)
    x = np.linspace(-1, 1, 41)[:, None]
    y = draw(x)
    # A Matérn 5/2 draw with lengthscale 0.5 moves slowly over steps of 0.05.
    assert np.max(np.abs(np.diff(y))) < 0.5
    assert np.std(y) > 0.05  # and it is not constant


def test_gp_draw_save_load_continuation(tmp_path):
    pts1 = np.random.default_rng(3).uniform(-1, 1, size=(5, 3))
    pts2 = np.random.default_rng(4).uniform(-1, 1, size=(4, 3))
    a = LazyGPDraw(3, 0.3, seed=21)
    va1 = a(pts1)
    path = tmp_path / "draw.npz"
    a.save(path)
    va2 = a(pts2)

    b = LazyGPDraw.load(path)
    np.testing.assert_array_equal(b(pts1), va1)  # cached, bit-exact
    # Continuations agree up to the rounding difference between the
    # incremental and the rebuilt Cholesky factor.
    np.testing.assert_allclose(b(pts2), va2, rtol=1e-9, atol=1e-12)


def test_gp_draw_objective_uses_fidelity_axis():
    obj = get_objective("gp-draw", dim=2, lengthscale=0.3, l_ev=0.5, seed=5)
    x = np.array([0.2, -0.4])
    y0 = obj.evaluate(x, 0.0)
    y1 = obj.evaluate(x, 1.0)
    assert y0 != y1
    # Small moves along s change the value only slightly (lengthscale 0.5).
    y_eps = obj.evaluate(x, 0.02)
    assert abs(y_eps - y0) < 0.25 * abs(y1 - y0) + 0.05


def test_cost_curves():
    quad = get_cost("quadratic", min_cost=120.0, max_cost=1800.0)
    assert quad(0.0) == pytest.approx(1800.0)
    assert quad(1.0) == pytest.approx(120.0)
    assert quad(0.5) == pytest.approx(120.0 + 1680.0 * 0.25)

    expo = get_cost("exponential", l_c=3.0)
    assert expo(0.0) == pytest.approx(1.0)
    assert expo(1.0) == pytest.approx(np.exp(-3.0))

    with pytest.raises(ConfigError):
        get_cost("cubic")
