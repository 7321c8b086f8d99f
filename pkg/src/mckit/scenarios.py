"""Built-in scenario configurations, one per reproduced figure plus the dumbbell."""

from __future__ import annotations

import copy
import math

A_RX = 50e-9
D0_DUCT = 1.15e-6
A_RX_DUCT = 0.15e-6
V_RX_DUCT = 4.0 / 3.0 * math.pi * A_RX_DUCT**3
D_DUCT = 1e-10


def _duct_models():
    models = [{
        "label": "unbounded",
        "model": "passive_uca",
        "params": {"d0": D0_DUCT, "D": D_DUCT, "V_rx": V_RX_DUCT},
    }]
    for k in (5, 6, 9, 12):
        models.append({
            "label": f"a_c={k}a_rx",
            "model": "circ_duct",
            "params": {
                "a_c": k * A_RX_DUCT,
                "tx": [0.0, 0.0, 0.0],
                "rx": [0.0, 0.0, D0_DUCT],
                "D": D_DUCT,
                "V_rx": V_RX_DUCT,
            },
        })
    return models


def _dispersion_models():
    models = []
    for v0 in (1e-2, 1e-3, 1e-4):
        models.append({
            "label": f"v0={v0:g}",
            "model": "dispersion",
            "params": {
                "a_c": 10e-6, "v_eff": v0 / 2.0, "D": 1e-11, "d_z": 50e-6,
                "l_rho": 10e-6, "l_phi": 2.0 * math.pi, "l_z": 1e-6, "uca": False,
            },
        })
    return models


BUILTINS = {
    "fig-diffusion": {
        "kind": "concentration",
        "params": {"N": 1e4, "D": 4.5e-10, "d": [300e-9, 400e-9, 500e-9], "v": 0.0, "kappa": 0.0},
        "time": {"t_start": 1e-6, "t_end": 300e-6, "points": 300, "spacing": "linear"},
    },
    "fig-advection": {
        "kind": "concentration",
        "params": {"N": 1e4, "D": 4.5e-10, "d": 400e-9, "v": [0.0, 2e-3, 5e-3], "kappa": 0.0},
        "time": {"t_start": 1e-6, "t_end": 300e-6, "points": 300, "spacing": "linear"},
    },
    "fig-reaction": {
        "kind": "concentration",
        "params": {"N": 1e4, "D": 4.5e-10, "d": 400e-9, "v": 1e-3, "kappa": [0.0, 1e4, 2e4]},
        "time": {"t_start": 1e-6, "t_end": 300e-6, "points": 300, "spacing": "linear"},
    },
    "fig-dispersion": {
        "kind": "cir",
        "params": {"models": _dispersion_models()},
        "time": {"t_start": 1e-3, "t_end": 100.0, "points": 120, "spacing": "log"},
    },
    "fig-rmse": {
        "kind": "rmse",
        "params": {"N_tx": [1e2, 1e3, 1e4, 1e5], "h_start": 1e-3, "h_end": 0.5, "points": 40},
    },
    "fig-duct-vs-unbounded": {
        "kind": "cir",
        "params": {"models": _duct_models()},
        "time": {"t_start": 1e-4, "t_end": 2e-2, "points": 60, "spacing": "log"},
    },
    "fig-rho-t": {
        "kind": "correlation",
        "params": {"N_tx": 2000, "d": 200e-9, "a_rx": A_RX, "D": [1e-11, 5e-11, 1e-10]},
        "time": {"t_start": 0.0, "t_end": 500e-6, "points": 26, "spacing": "linear"},
        "realizations": 1000,
        "seed": 11,
    },
    "fig-rho-tau": {
        "kind": "mobile",
        "params": {
            "D": 1e-11, "factors": [0.01, 0.05, 0.1], "d0": 200e-9, "a_rx": A_RX,
            "N_tx": 2000, "tau1": 1e-3, "quantity": "rho_tau",
        },
        "time": {"t_start": 0.0, "t_end": 10e-3, "points": 41, "spacing": "linear"},
        "realizations": 20000,
        "seed": 12,
    },
    "dumbbell": {
        "kind": "simulate-micro",
        "params": {
            "scenario": "dumbbell", "pipe_length": [60e-6, 120e-6, 180e-6], "N": 500,
            "D": 1e-10, "dt": 1e-3, "T_end": 1000.0, "record_every": 1000,
        },
        "realizations": 1,
        "seed": 1,
    },
}


def builtin(name: str) -> dict:
    return copy.deepcopy(BUILTINS[name])


def list_scenarios() -> list:
    return sorted(BUILTINS)
