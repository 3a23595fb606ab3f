import math

import numpy as np
import pytest

import cavscat


def test_special_functions():
    x = 2.5
    assert abs(cavscat.spherical_jn(0, x) - math.sin(x) / x) < 1e-14
    assert abs(cavscat.spherical_yn(0, x) + math.cos(x) / x) < 1e-14
    h2 = cavscat.spherical_h2(1, x)
    assert abs(h2 - (cavscat.spherical_jn(1, x) - 1j * cavscat.spherical_yn(1, x))) < 1e-14
    assert abs(cavscat.legendre_p(2, 0, 0.3) - 0.5 * (3 * 0.09 - 1)) < 1e-14


def test_ricker_peak_and_cfl():
    t0 = 6.0 / (math.pi * 20.0)
    w = cavscat.ricker(np.array([t0, t0 + 1.0]), f_peak=20.0)
    assert w[0] == pytest.approx(1.0, abs=1e-14)
    assert abs(w[1]) < 1e-12
    assert cavscat.cfl_dt(4.74, 4000.0) == pytest.approx(4.1475e-5, rel=1e-12)


def test_fields_far_from_sphere():
    x = (0.0, 0.0, 300.0)
    u = cavscat.total_field(5.0, x)
    s = cavscat.scattered_field(5.0, x)
    assert u.shape == (3,)
    incident = u - s
    assert abs(abs(incident[2]) - 1.0) < 1e-10
    assert np.abs(incident[:2]).max() < 1e-12
    assert np.abs(s[:2]).max() < 1e-12


def test_config_round_trip():
    cfg = cavscat.preset("desk")
    cfg["ricker.f_peak"] = "25"
    back = cavscat.parse_config(cfg.serialize())
    assert back == cfg
    assert back["ricker.f_peak"] == "25"
    assert "sphere.radius" in cavscat.config_keys()
    with pytest.raises(cavscat.ConfigError):
        cfg["no.such.key"] = "1"


def test_profiles():
    a = cavscat.make_profile("A")
    assert len(a) == 101
    assert a[0]["id"] == "A_z-100"
    assert sum(r["interior"] for r in a) == 29
    assert len(cavscat.make_profile("C")) == 61


def test_trace_metrics():
    dt = 1e-3
    t = np.arange(400) * dt
    ref = np.exp(-(((t - 0.1) / 0.01) ** 2))
    shifted = np.exp(-(((t - 0.105) / 0.01) ** 2))
    same = cavscat.compare_traces(ref, ref, dt)
    assert same["misfit"] == 0.0 and same["amplitude_ratio"] == 1.0 and same["lag"] == 0.0
    assert cavscat.compare_traces(ref, shifted, dt)["lag"] == pytest.approx(0.005, abs=1e-12)
    assert cavscat.arrival_time(ref, dt) == pytest.approx(0.1 - 0.01 * math.sqrt(math.log(20)), abs=dt)
