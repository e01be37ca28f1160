import numpy as np
import pytest

from price_mfg.calibration import (DemandSeries, align, calibrate, ingest_demand,
                                   price_forecast, read_series_csv, synthetic_day_demand,
                                   synthetic_reference, write_calibration_csv,
                                   write_calibration_json)
from price_mfg.errors import DomainError
from price_mfg.model import TimeGrid


@pytest.fixture
def demand():
    return synthetic_day_demand(n=48, agent_count=1.0, base=3.0, swing=1.0)


def test_supply_has_zero_time_mean(demand):
    from scipy.integrate import trapezoid
    assert trapezoid(demand.supply, demand.times) == pytest.approx(0.0, abs=1e-12)
    scaled = DemandSeries(demand.times, demand.demand * 1e6, 1e6)
    np.testing.assert_allclose(scaled.supply, demand.supply, atol=1e-12)
    np.testing.assert_allclose(demand.normalized().supply, demand.supply, atol=1e-14)


def test_ols_matches_lstsq(demand):
    rng = np.random.default_rng(1)
    t, p = synthetic_reference(demand, 1.3, 4.0, noise=0.1, rng=rng)
    res = calibrate(demand, t, p)
    A = np.column_stack([np.ones_like(t), -demand.supply])
    (Theta, c), *_ = np.linalg.lstsq(A, p, rcond=None)
    assert res.c_hat == pytest.approx(c, rel=1e-12)
    assert res.Theta_hat == pytest.approx(Theta, rel=1e-12)
    # normal equations: residuals orthogonal to the regressors
    assert abs(res.residuals.sum()) < 1e-10
    assert abs(res.residuals @ res.supply) < 1e-10
    assert res.rms_error == pytest.approx(np.sqrt(np.mean(res.residuals**2)))


def test_idempotent_on_fitted_values(demand):
    t, p = synthetic_reference(demand, 0.7, -2.0, noise=0.2, rng=5)
    first = calibrate(demand, t, p)
    second = calibrate(demand, first.times, first.fit)
    assert second.c_hat == pytest.approx(first.c_hat, rel=1e-12)
    assert second.Theta_hat == pytest.approx(first.Theta_hat, rel=1e-12)
    assert second.rms_error < 1e-12


def test_scale_covariance(demand):
    t, p = synthetic_reference(demand, 0.7, 1.0, noise=0.05, rng=9)
    a = calibrate(demand, t, p)
    b = calibrate(demand, t, 3.0 * p)
    assert b.c_hat == pytest.approx(3 * a.c_hat, rel=1e-12)
    assert b.Theta_hat == pytest.approx(3 * a.Theta_hat, rel=1e-12)


def test_negative_slope_is_projected(demand):
    t, p = synthetic_reference(demand, -0.5, 1.0)
    res = calibrate(demand, t, p)
    assert res.projected and res.c_hat == 0.0
    assert res.Theta_hat == pytest.approx(np.mean(p))


def test_constant_supply_not_identifiable():
    d = DemandSeries(np.linspace(0, 24, 25), np.full(25, 5.0))
    with pytest.raises(DomainError, match="identifiable"):
        calibrate(d, d.times, np.ones(25))


def test_alignment_interpolates_shorter_series(demand):
    t, p = synthetic_reference(demand, 1.0, 2.0)
    coarse_t, coarse_p = t[::2], p[::2]
    tt, a, b = align(demand.times, demand.supply, coarse_t, coarse_p)
    assert tt.size == demand.times.size
    np.testing.assert_allclose(b[::2], coarse_p)


def test_forecast_amplitude(demand):
    t, p = synthetic_reference(demand, 2.0, 1.0)
    res = calibrate(demand, t, p)
    path, ptp = price_forecast(res, demand.to_schedule(), TimeGrid(24.0, 48))
    assert ptp == pytest.approx(2.0 * np.ptp(demand.supply), rel=1e-9)
    assert path.values.shape == (49,)


def test_csv_reading(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("time_hours;value\n0;1.5\n1;2.5\n2;2\n")
    t, v = read_series_csv(f)
    np.testing.assert_array_equal(t, [0, 1, 2])
    np.testing.assert_array_equal(v, [1.5, 2.5, 2])
    t2, v2 = read_series_csv("time_hours,value\n0,1\n1,2\n")
    assert t2.size == 2
    d = ingest_demand({"time_hours": [0, 1, 2], "value": [1, 2, 3]}, agent_count=2)
    assert d.agent_count == 2.0
    assert ingest_demand([(0, 1), (1, 2)]).times.size == 2


@pytest.mark.parametrize("text,msg", [
    ("", "empty"),
    ("t,v\n0,1\n1,2\n", "header"),
    ("time_hours,value\n", "no data"),
    ("time_hours,value\n0,a\n1,2\n", "non-numeric"),
    ("time_hours,value\n0,1\n0,2\n", "increasing"),
    ("time_hours,value\n0,1\n", "at least 2"),
    ("time_hours,value\n0,nan\n1,2\n", "NaN"),
])
def test_csv_errors(text, msg):
    with pytest.raises(DomainError, match=msg):
        read_series_csv(text)


def test_bad_inputs():
    with pytest.raises(DomainError):
        DemandSeries([0, 1], [1, 2], agent_count=0.5)
    with pytest.raises(DomainError):
        ingest_demand({"time_hours": [0, 1]})
    with pytest.raises(DomainError):
        ingest_demand(np.zeros((3, 3)))


def test_writers(demand, tmp_path):
    t, p = synthetic_reference(demand, 1.0, 2.0, noise=0.01, rng=0)
    res = calibrate(demand, t, p)
    write_calibration_csv(res, tmp_path / "c.csv")
    write_calibration_json(res, tmp_path / "c.json")
    import json
    out = json.loads((tmp_path / "c.json").read_text())
    assert out["c"] == pytest.approx(res.c_hat) and out["n"] == 49
    assert (tmp_path / "c.csv").read_text().startswith("t,Q,price_fit,residual")
