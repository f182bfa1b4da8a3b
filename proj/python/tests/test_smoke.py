import math

import pytest

import hybridstc as hs

INLINE = {
    "parameter_sets": {
        "source": "inline",
        "sets": [
            {"epsilon": 0.01, "gamma": 19.4, "L": 0.052},
            {"epsilon": -2.0, "gamma": 10.2, "L": 0.052},
        ],
    },
    "experiment": {"runs": 4, "horizons": [2.0], "seed": 3},
}


def test_t_max_branches():
    # gamma > ell: atan branch
    g, l = 2.0, 1.0
    r = math.sqrt(g * g / (l * l) - 1.0)
    assert hs.t_max(g, l) == pytest.approx(math.atan(r) / (l * r), rel=1e-12)
    assert hs.t_max(1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    # gamma < ell: atanh branch
    g, l = 0.5, 1.0
    r = math.sqrt(1.0 - g * g / (l * l))
    assert hs.t_max(g, l) == pytest.approx(math.atanh(r) / (l * r), rel=1e-12)
    with pytest.raises(ValueError):
        hs.t_max(-1.0, 1.0)


def test_phi_zero_matches_t_max():
    _, phi, zero = hs.phi_solve(2.0, 1.0, 1e-6, 4.0, stop_at_zero=True)
    assert zero == pytest.approx(hs.t_max(2.0, 1.0), rel=1e-4)
    assert phi[0] == pytest.approx(1e6)


def test_engine_roundtrip():
    sets = [hs.ParameterSet(0.01, 19.4, 0.052), hs.ParameterSet(-2.0, 10.2, 0.052)]
    eng = hs.StcEngine(sets)
    assert eng.t_min == pytest.approx(hs.scaled_interval(sets[0], 0.999))
    eta = [2.0] * 15
    choice = eng.next_interval(1.0, eta)
    assert choice["interval"] >= eng.t_min
    assert choice["c"] == pytest.approx(hs.c_value(1.0, eta, 16))
    assert len(eng.eta_update(eta, 1.0, choice["interval"])) == 15
    gated = eng.next_interval(1e7, [1e6] * 15)
    assert gated["fallback"] and gated["reason"] == "gate"
    assert gated["interval"] == eng.t_min


def test_robot_arm():
    p = hs.robot_arm.Params()
    rhs = hs.robot_arm.plant_rhs([0.5, 1.0], 0.25, p)
    assert rhs[0] == pytest.approx(1.0)
    assert rhs[1] == pytest.approx(-p.a * math.sin(0.5) + p.b * 0.25)
    assert hs.robot_arm.certify_observer(p)["pass"]
    assert not hs.robot_arm.certify_observer(hs.robot_arm.Params(theta2=4.0))["pass"]


def test_simulate_and_config_errors():
    run = hs.simulate([1.0, -1.0, 0.0, 0.0], horizon=2.0, config=INLINE)
    assert run["status"] == "ok"
    assert run["events"][0]["t"] == 0.0
    assert run["min_interval"] >= hs.scaled_interval(hs.ParameterSet(0.01, 19.4, 0.052), 0.999) - 1e-12
    assert len(run["t"]) == len(run["x"])
    with pytest.raises(hs.ConfigError):
        hs.config_hash({"experiment": {"runs": 0}})
    with pytest.raises(ValueError):
        hs.config_hash("{not json")
    assert hs.config_hash(INLINE) == hs.config_hash(dict(INLINE))


def test_monte_carlo_deterministic():
    a = hs.monte_carlo(INLINE)
    b = hs.monte_carlo(INLINE)
    assert a == b
    assert a["divergences"] == 0 and not a["failed"]
    assert a["runs"] == 4
    assert a["min_interval"] >= a["t_min"] * (1 - 1e-12)
