"""Seismic scattering by a fluid-filled spherical cavity."""

from ._core import (
    ConfigError,
    Error,
    NumericalError,
    RunConfig,
    arrival_time,
    cfl_dt,
    compare_traces,
    config_keys,
    legendre_p,
    load_config,
    make_profile,
    parse_config,
    preset,
    reverberation_period,
    ricker,
    ricker_spectrum,
    run_analytic,
    run_mesh,
    run_ricker,
    scattered_field,
    spherical_h2,
    spherical_jn,
    spherical_yn,
    total_field,
)

__all__ = [
    "ConfigError",
    "Error",
    "NumericalError",
    "RunConfig",
    "arrival_time",
    "cfl_dt",
    "compare_traces",
    "config_keys",
    "legendre_p",
    "load_config",
    "make_profile",
    "parse_config",
    "preset",
    "reverberation_period",
    "ricker",
    "ricker_spectrum",
    "run_analytic",
    "run_mesh",
    "run_ricker",
    "scattered_field",
    "spherical_h2",
    "spherical_jn",
    "spherical_yn",
    "total_field",
]
