import numpy as np
import pytest

import tvcov


def test_kernel_and_rates():
    assert tvcov.epanechnikov(0.0) == 0.75
    assert tvcov.interior_region(200, 0.1) == (20, 180)
    weights, flag = tvcov.boundary_weights(100, 1, 0.2)
    assert flag == "left-boundary"
    assert 0.99 <= weights.mean() <= 1.01
    assert round(tvcov.rate_delta(100, 200, 0.1), 4) == 0.8567
    assert round(tvcov.rate_omega(100, 200, 0.1, 4, 2.0), 4) == 0.9192
    assert tvcov.soft_threshold(-0.5, 0.2) == pytest.approx(-0.3)


def test_estimate_identities():
    data = tvcov.simulate(N=30, T=60, seed=2)
    Y = data["panel"]
    assert Y.shape == (30, 60)
    est = tvcov.estimate(Y, 30, h=0.2)
    L, Sf, Su = est["loadings"], est["factor_cov"], est["sigma_u"]
    np.testing.assert_allclose(est["sigma_y"], L @ Sf @ L.T + Su, rtol=0, atol=1e-10)
    np.testing.assert_allclose(est["sigma_y"] @ est["sigma_y_inv"], np.eye(30), atol=1e-8)
    assert est["boundary_flag"] == "interior"

    ppca = tvcov.estimate(Y, 30, method="local-ppca", h=0.2, chars=data["chars"])
    assert ppca["sigma_y_inv"].shape == (30, 30)
    with pytest.raises(tvcov.ParameterError):
        tvcov.estimate(Y, 30, method="local-ppca")
    with pytest.raises(tvcov.ParameterError):
        tvcov.estimate(Y, 0)


def test_simulation_is_seeded():
    a = tvcov.simulate(N=20, T=51, seed=5)
    b = tvcov.simulate(N=20, T=51, seed=5)
    np.testing.assert_array_equal(a["panel"], b["panel"])
    assert a["char_names"] == ["size", "momentum"]
    assert len(a["sigma_y_inv"]) == 51


def test_monte_carlo_summary():
    res = tvcov.monte_carlo(N=20, T=60, replications=2, h_grid=[0.2], C_grid=[0.5], anchors=[20, 40], threads=1)
    assert res["anchor"] == [20, 40]
    assert res["completed"] == 2
    assert all(e > 0 for e in res["pca_inv_error"])


def test_gmv_and_backtest():
    np.testing.assert_allclose(tvcov.gmv_weights(np.diag([1.0, 0.5])), [2 / 3, 1 / 3])
    data = tvcov.simulate(N=20, T=90, seed=3)
    res = tvcov.backtest(data["panel"], "sample", training=60, holding=15)
    assert len(res["weights"]) == 2
    assert res["periods"][0] == 61
    assert res["ex_post_std_annualized_pct"] > 0
    flat = data["panel"].copy()
    flat[:, 60:] = 0.01
    assert tvcov.backtest(flat, "sample", training=60, holding=30)["ex_post_std_annualized_pct"] < 1e-10


def test_cli_entry_point(tmp_path):
    code, out, _ = tvcov.run_cli(["--help"])
    assert code == 0 and "simulate" in out
    code, _, err = tvcov.run_cli(["simulate", "--regime", "wiggly", "--out", str(tmp_path / "o")])
    assert code == 2 and "--regime" in err
