import numpy as np
import pytest

from fidbo.costs import (
    CostGP,
    FixedCostModel,
    OverheadModel,
    acquisition_divisor,
    fit_cost_gp,
    fit_overhead_map,
    remaining_steps,
)
from fidbo.errors import InvalidRecordError


def test_constant_cost_recovered():
    rng = np.random.default_rng(0)
    U = rng.uniform(0, 1, size=(12, 2))
    records = [(u, 7.5) for u in U]
    model = fit_cost_gp(records, seed=1)
    q = rng.uniform(0, 1, size=(20, 2))
    pred = model.predict(q)
    np.testing.assert_allclose(pred, 7.5, rtol=0.02)


def test_exponential_fidelity_cost_recovered():
    rng = np.random.default_rng(1)
    xs = rng.uniform(0, 1, size=20)
    ss = np.linspace(0, 1, 20)
    records = [((x, s), np.exp(-3 * s)) for x, s in zip(xs, ss)]
    model = fit_cost_gp(records, seed=2)
    at0 = model.predict_one([0.5, 0.0])
    at1 = model.predict_one([0.5, 1.0])
    assert at0 == pytest.approx(1.0, rel=0.1)
    assert at1 == pytest.approx(np.exp(-3), rel=0.1)


def test_cost_predictions_strictly_positive():
    records = [((float(i), 0.0), 1e-8) for i in range(6)]
    model = fit_cost_gp(records, seed=3)
    assert np.all(model.predict([[2.5, 0.0], [100.0, 0.0]]) > 0)


def test_invalid_cost_records():
    with pytest.raises(InvalidRecordError):
        fit_cost_gp([((0.0, 0.0), 1.0)])
    with pytest.raises(InvalidRecordError):
        fit_cost_gp([((0.0, 0.0), 1.0), ((1.0, 0.0), -2.0)])
    with pytest.raises(InvalidRecordError):
        fit_cost_gp([((0.0, 0.0), 1.0), ((1.0, 0.0), 0.0)])


def test_overhead_constant_series():
    model = fit_overhead_map([5.0] * 10, seed=0)
    t0, t1, _, _ = model.theta
    assert t0 == pytest.approx(5.0, rel=0.1)
    assert t1 < 0.1  # pulled toward its prior mode near zero
    assert not model.prior_only


def test_overhead_synthetic_recovery():
    n = np.arange(30, dtype=float)
    history = 1.0 + 0.1 * n**1.5
    model = fit_overhead_map(history, seed=1)
    t0, t1, t2, _ = model.theta
    assert t0 == pytest.approx(1.0, rel=0.05)
    assert t1 == pytest.approx(0.1, rel=0.05)
    assert t2 == pytest.approx(1.5, rel=0.05)


def test_overhead_short_history_prior_only():
    model = fit_overhead_map([2.0, 2.1], seed=2)
    assert model.prior_only
    t0, t1, t2, t3 = model.theta
    # Prior modes: theta0 at half the median, theta1 at 1/20, theta2 at 1.
    assert t0 == pytest.approx(np.median([2.0, 2.1]) / 2)
    assert t1 == pytest.approx(0.05)
    assert t2 == pytest.approx(1.0)
    assert t3 > 0


def test_overhead_negative_entry_rejected():
    with pytest.raises(InvalidRecordError):
        fit_overhead_map([1.0, -0.5, 2.0])


def test_remaining_steps_constant_case():
    model = OverheadModel((1.0, 0.0, 1.0, 0.1))
    assert remaining_steps(model, budget=10.0, c_eval=1.0) == 4


def test_remaining_steps_zero_budget():
    model = OverheadModel((1.0, 0.0, 1.0, 0.1))
    assert remaining_steps(model, budget=0.0, c_eval=1.0) == 0


def test_remaining_steps_budget_doubling():
    model = OverheadModel((0.5, 0.0, 1.0, 0.1))
    n1 = remaining_steps(model, budget=30.0, c_eval=1.0)
    n2 = remaining_steps(model, budget=60.0, c_eval=1.0)
    assert abs((n2 + 1) - 2 * (n1 + 1)) <= 1


def test_remaining_steps_monotone():
    model = OverheadModel((0.3, 0.05, 1.2, 0.1))
    prev = None
    for b in [0.0, 5.0, 10.0, 50.0]:
        n = remaining_steps(model, budget=b, c_eval=0.5)
        if prev is not None:
            assert n >= prev
        prev = n
    assert remaining_steps(model, 20.0, c_eval=2.0) <= remaining_steps(
        model, 20.0, c_eval=0.5
    )


def test_divisor_zero_overhead():
    cost = FixedCostModel(lambda u: 3.0)
    overhead = OverheadModel((0.0, 0.0, 1.0, 0.1))
    div = acquisition_divisor(cost, overhead, [0.2, 0.5], budget=100.0, c_eval=3.0)
    assert div == pytest.approx(3.0)


def test_divisor_constant_overhead():
    cost = FixedCostModel(lambda u: 2.0)
    overhead = OverheadModel((0.7, 0.0, 1.0, 0.1))
    div = acquisition_divisor(cost, overhead, [0.1, 0.3], budget=50.0, c_eval=2.0)
    assert div == pytest.approx(2.7)


def test_divisor_growth_exceeds_current_overhead():
    cost = FixedCostModel(lambda u: 1.0)
    growing = OverheadModel((0.5, 0.2, 1.3, 0.1))
    div = acquisition_divisor(cost, growing, [0.0, 0.0], budget=200.0, c_eval=1.0)
    assert div > 1.0 + growing.mean(0)


def test_divisor_floor_at_cheap_fidelity():
    cost = FixedCostModel(lambda u: 1.0 if u[-1] < 0.5 else 1e-9)
    overhead = OverheadModel((0.0, 0.0, 1.0, 0.1))
    div = acquisition_divisor(cost, overhead, [0.4, 0.9], budget=10.0, c_eval=1.0)
    assert div == pytest.approx(1e-3 * 1.0)


def test_fixed_cost_model_shapes():
    m = FixedCostModel(lambda u: float(u[0] + 1.0))
    np.testing.assert_allclose(m.predict([[1.0, 0.0], [2.0, 0.5]]), [2.0, 3.0])
    assert m.predict_one([4.0, 0.2]) == 5.0
