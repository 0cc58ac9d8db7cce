"""Figure presets: run-config layers that regenerate each figure's synthetic analogue.

Each preset is a plain mapping with the same shape as a YAML config file
and a pipeline of subcommands to run in order.
"""

from __future__ import annotations

import copy

# fig1e: fast pump and emission so >= 1e6 detected photons take well under a
# second of simulated time; the antibunching and bunching shapes set g2(0)
# through rho alone. rho = 0.938 gives g2(0) = 1 - rho^2 = 0.12.
_FIG1E_EMITTER = {"k12": 1e8, "k21": 1e8, "k23": 5e6, "k31": 2e7, "sigma": 1e7, "eta_det": 0.10}

# fig4a: tau = 30.8 ns; sigma puts P_sat at 2 uW and eta_det the plateau at 6 kcps
_K21_SAT = 1e9 / 30.8
_FIG4A_EMITTER = {"k12": 0.0, "k21": _K21_SAT, "k23": 0.0, "k31": 0.0,
                  "sigma": _K21_SAT / 2.0, "eta_det": 6000.0 / _K21_SAT}
_FIG4A_POWERS = [0.1, 0.2, 0.35, 0.6, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0]

PRESETS: dict[str, dict] = {
    "fig1a": {
        "pipeline": ["scan"],
        "config": {"scan": {"layouts": ["implanted", "dozen"]}},
    },
    "fig1e": {
        "pipeline": ["simulate", "g2"],
        "config": {
            "simulate": {
                "emitter": _FIG1E_EMITTER, "signal_fraction": 0.938,
                "target_photons": 2_000_000, "output": "tags.wttag",
            },
            "g2": {"input": "tags.wttag", "bin_width": 1000, "tau_range": 250_000},
        },
    },
    "fig2": {
        "pipeline": ["polarization"],
        "config": {"polarization": {"n_emitters": 47, "angle_step": 10.0, "i_max": 1000.0,
                                    "visibility": 0.97, "axes": ["[111]", "[-111]"]}},
    },
    "fig3": {
        "pipeline": ["spectrum"],
        "config": {"spectrum": {"n_emitters": 27, "inhomogeneous_spread": 1.0,
                                "temperatures": [8.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]}},
    },
    "fig4a": {
        "pipeline": ["saturation"],
        "config": {"saturation": {
            "emitter": _FIG4A_EMITTER, "powers": _FIG4A_POWERS, "dwell": 10.0,
            "dark_rate_per_uw": 200.0, "dark_recovery": 1e4,
            "trace_power": 30.0, "trace_duration": 60.0, "trace_bin": 0.1,
        }},
    },
    "fig4b": {
        "pipeline": ["lifetime"],
        "config": {"lifetime": {"lifetimes": [30.8, 12.7, 7.1], "photons": 1_000_000,
                                "pulse_period": 500.0, "bin_width": 50.0}},
    },
}


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
