"""Energy harvesting model: frozen reference values and properties.

Reference numbers were computed from the closed-form expressions with
50-digit arithmetic (mpmath) and frozen here.
"""

import math

import numpy as np
import pytest

from tilebeam.eh import (
    EhParams,
    c_req,
    harvested_power,
    linear_harvested_power,
    min_rf_power,
)

PARAMS = EhParams(a=0.02, c=0.003, rho=6400.0, e_req=1e-4)

# 50-digit reference evaluations of the closed forms
XI_REF = 4.5871817256052847e-9
Y_AT_C_REF = 9.9999999541281825e-3
C_REQ_REF = 9.1284833010261722e-7
MIN_RF_REF = 2.1729212644861619e-3


def test_zero_input_zero_output_exact():
    assert harvested_power(0.0, PARAMS) == 0.0


def test_saturation_limit():
    assert harvested_power(1e3, PARAMS) == pytest.approx(PARAMS.a, rel=1e-12)
    # strictly below a wherever the gap is representable in doubles
    # (beyond c + 36/rho the sigmoid rounds to 1.0);
    # never above a anywhere
    for p in [1e-6, 1e-3, PARAMS.c + 30.0 / PARAMS.rho]:
        assert harvested_power(p, PARAMS) < PARAMS.a
    for p in [1e-2, 1.0, 1e2]:
        assert harvested_power(p, PARAMS) <= PARAMS.a


def test_value_at_sigmoid_center():
    got = harvested_power(PARAMS.c, PARAMS)
    assert got == pytest.approx(Y_AT_C_REF, rel=1e-12)
    # the zero-input correction is tiny here, so this is close to a/2
    assert got == pytest.approx(PARAMS.a / 2, rel=1e-7)


def test_c_req_frozen_value():
    assert c_req(PARAMS) == pytest.approx(C_REQ_REF, rel=1e-12)


def test_c_req_zero_requirement():
    p = EhParams(a=0.02, c=0.003, rho=6400.0, e_req=0.0)
    assert c_req(p) == pytest.approx(1.0, rel=1e-9)
    assert min_rf_power(p) == 0.0


def test_c_req_infeasible_requirement():
    with pytest.raises(ValueError):
        c_req(EhParams(a=0.02, c=0.003, rho=6400.0, e_req=0.02))
    with pytest.raises(ValueError):
        c_req(EhParams(a=0.02, c=0.003, rho=6400.0, e_req=0.05))


def test_min_rf_power_frozen_value():
    assert min_rf_power(PARAMS) == pytest.approx(MIN_RF_REF, rel=1e-12)


def test_min_rf_round_trip():
    for e in [1e-6, 1e-5, 1e-4, 1e-3, 0.019]:
        p = EhParams(a=0.02, c=0.003, rho=6400.0, e_req=e)
        got = harvested_power(min_rf_power(p), p)
        assert got == pytest.approx(e, rel=1e-12)


def test_monotone_increasing_and_bounded():
    # grid spans zero input up to the onset of double-precision
    # saturation (sigmoid argument 30; past that, per-step increments
    # drop below one ulp of a)
    grid = np.linspace(0.0, PARAMS.c + 30.0 / PARAMS.rho, 1000)
    vals = np.array([harvested_power(p, PARAMS) for p in grid])
    assert np.all(np.diff(vals) > 0.0)
    assert vals[0] == 0.0
    assert np.all(vals < PARAMS.a)


def test_constraint_equivalence_random_grid():
    # harvested_power(p) >= E  <=>  exp(-rho p) <= c_req, checked on
    # random (p, E) pairs including near-threshold points
    rng = np.random.default_rng(7)
    for _ in range(1000):
        e = float(rng.uniform(1e-6, 0.9 * PARAMS.a))
        params = EhParams(a=PARAMS.a, c=PARAMS.c, rho=PARAMS.rho, e_req=e)
        thresh = min_rf_power(params)
        p = float(thresh * rng.uniform(0.5, 1.5))
        lhs = harvested_power(p, params) >= e * (1 - 1e-10)
        rhs = math.exp(-params.rho * p) <= c_req(params) * (1 + 1e-10)
        if abs(p - thresh) > 1e-10 * thresh:
            assert lhs == rhs


def test_c_req_strictly_decreasing_in_requirement():
    es = np.linspace(1e-6, 0.019, 200)
    vals = [c_req(EhParams(a=0.02, c=0.003, rho=6400.0, e_req=float(e))) for e in es]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_linear_model_basics():
    assert linear_harvested_power(0.0) == 0.0
    assert linear_harvested_power(0.002, efficiency=0.5) == pytest.approx(0.001)
    with pytest.raises(ValueError):
        linear_harvested_power(1.0, efficiency=0.0)
    with pytest.raises(ValueError):
        linear_harvested_power(1.0, efficiency=1.5)


def test_linear_model_overestimates_beyond_saturation():
    # beyond a/eta the linear model exceeds the saturation level of the
    # true circuit, so it always overestimates there
    eta = 0.5
    for p in [2.1 * PARAMS.a, 0.1, 1.0]:
        lin = linear_harvested_power(p, eta)
        assert lin > PARAMS.a
        assert lin > harvested_power(p, PARAMS)


def test_params_validation():
    with pytest.raises(ValueError):
        EhParams(a=-1.0)
    with pytest.raises(ValueError):
        EhParams(rho=0.0)
    with pytest.raises(ValueError):
        EhParams(c=-0.1)


def test_scaled_circuit_preserves_shape():
    k = 2e-6
    small = PARAMS.scaled(k)
    assert min_rf_power(small) == pytest.approx(k * min_rf_power(PARAMS), rel=1e-12)
    p = 0.5 * min_rf_power(PARAMS)
    assert harvested_power(k * p, small) == pytest.approx(
        k * harvested_power(p, PARAMS), rel=1e-9
    )
