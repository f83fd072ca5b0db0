"""Named parameter studies, sized to run on a desktop.

Each preset is an ExperimentConfig; the header of every table (``description``)
states the pair counts, cutoffs and grids used.
"""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig, SolverOptions


def _grid(a, b, n):
    return tuple(float(x) for x in np.round(np.linspace(a, b, n), 10))


def _cfg(name, description, spec, axes, task="steady", **solver):
    return ExperimentConfig(
        spec=spec,
        task=task,
        axes=tuple(axes),
        out_dir=f"results/{name}",
        solver=SolverOptions(**solver),
        name=name,
        description=description,
    )


PRESETS = {
    "fig2b": lambda: _cfg(
        "fig2b",
        "Concurrences C_ij of the two-pair state vs r for Delta = 0 and Delta = 20 gamma "
        "(reversed pattern). Numerical steady states of the effective model.",
        {"N": 2, "pattern": "reversed"},
        [("Delta", (0.0, 20.0)), ("r", _grid(0.0, 2.5, 26))],
    ),
    "fig2c": lambda: _cfg(
        "fig2c",
        "Concurrences C_ij of the two-pair state vs Delta at r = 1 (reversed pattern).",
        {"N": 2, "r": 1.0, "pattern": "reversed"},
        [("Delta", _grid(0.0, 10.0, 41))],
    ),
    "fig2e": lambda: _cfg(
        "fig2e",
        "Block entropies S_n (nats) for N = 5, reversed pattern, r = 1. Blocks are the rungs "
        "{A_1..A_n, B_1..B_n}. States from the closed-form construction, which the test suite "
        "checks against numerical steady states up to N = 4.",
        {"N": 5, "r": 1.0, "pattern": "reversed"},
        [("Delta", (0.2, 1.0, 5.0, 50.0))],
        steady_method="analytic",
    ),
    "fig3": lambda: _cfg(
        "fig3",
        "Preparation time T_prep vs N for the parallel pattern, Delta in {0, 0.5, 1} gamma, r = 1. "
        "Desk scale: N <= 4 (N = 5 takes several minutes per point).",
        {"r": 1.0, "pattern": "parallel"},
        [("Delta", (0.0, 0.5, 1.0)), ("N", (1, 2, 3, 4))],
        task="evolve",
        t_end=300.0,
        record=3001,
        entropies=False,
    ),
    "fig4a": lambda: _cfg(
        "fig4a",
        "Steady-state C_ii of the full model (finite amplifier bandwidth) for delta_A = 0 and "
        "several beta = kappa/gamma. Desk scale: N = 3 pairs with n_max = 4, a coarse cutoff "
        "(percent-level shifts in C_ii relative to n_max = 8); a few minutes per point.",
        {"model": "full", "N": 3, "r": 1.0, "n_max": 4},
        [("beta", (5.0, 10.0, 20.0, 40.0))],
        entropies=False,
    ),
    "fig4b": lambda: _cfg(
        "fig4b",
        "N_ent = C11/(C11 - C22) vs beta for several dephasing rates, extrapolated from N = 2 "
        "pairs of the full model with n_max = 8 (desk-scale stand-in for longer chains).",
        {"model": "full", "N": 2, "r": 1.0, "n_max": 8},
        [("gamma_phi", (0.0, 0.01, 0.05)), ("beta", (5.0, 10.0, 20.0, 40.0))],
        entropies=False,
    ),
    "fig4c": lambda: _cfg(
        "fig4c",
        "C_11 of a single pair in the full model vs Delta/kappa, delta_A,1 = -delta_B,1 = Delta, "
        "for beta in {5, 10, 40}; n_max = 8.",
        {"model": "full", "N": 1, "r": 1.0, "n_max": 8},
        [("beta", (5.0, 10.0, 40.0)), ("delta_A_over_kappa", _grid(0.0, 3.0, 13))],
        entropies=False,
    ),
    "fig4d": lambda: _cfg(
        "fig4d",
        "Concurrence of the last pair vs Delta for delta_A,i = (i-1) Delta = -delta_B,i with "
        "dephasing gamma_phi = 0.05 and beta = 10. Desk scale: N = 2 pairs (C_22 instead of C_44), "
        "n_max = 6.",
        {"model": "full", "N": 2, "r": 1.0, "n_max": 6, "beta": 10.0, "gamma_phi": 0.05},
        [("Delta", _grid(0.0, 10.0, 11))],
        entropies=False,
    ),
    "figS1": lambda: _cfg(
        "figS1",
        "N_ent vs beta at r = 0.2 for several dephasing rates (N = 2 pairs, full model, n_max = 4).",
        {"model": "full", "N": 2, "r": 0.2, "n_max": 4},
        [("gamma_phi", (0.0, 0.01, 0.05)), ("beta", (5.0, 10.0, 20.0, 40.0))],
        entropies=False,
    ),
    "figS2": lambda: _cfg(
        "figS2",
        "Effect of chain losses epsilon_ij = epsilon |i - j| on C_ii for N = 4 in the broadband "
        "limit (lossy effective model): (r, Delta) in {(1, 0), (1, 2), (0.5, 0)}, parallel pattern.",
        {"model": "lossy_effective", "N": 4, "pattern": "parallel"},
        [("r", (1.0, 0.5)), ("Delta", (0.0, 2.0)), ("epsilon", (0.0, 0.01, 0.02, 0.05, 0.1))],
        entropies=False,
    ),
    "figS3": lambda: _cfg(
        "figS3",
        "Concurrences under partial bidirectional emission, r = 1, N = 2 pairs (desk scale), "
        "parallel and reversed patterns, Delta in {0, 2} gamma.",
        {"model": "bidirectional", "N": 2, "r": 1.0},
        [
            ("pattern", ("parallel", "reversed")),
            ("Delta", (0.0, 2.0)),
            ("gamma_L_over_gamma_R", _grid(0.0, 1.0, 6)),
        ],
        entropies=False,
    ),
    "microwave": lambda: _cfg(
        "microwave",
        "Microwave parameter set: gamma_R = 1, gamma_phi = 0.05, gamma_L = 0.01, r = 1, N = 2 "
        "pairs of the bidirectional model; off-guide decay gamma' in {0, 0.364} and Delta in {0, 1}.",
        {"model": "bidirectional", "N": 2, "r": 1.0, "gamma_R": 1.0, "gamma_phi": 0.05,
         "gamma_L_over_gamma_R": 0.01},
        [("gamma_prime", (0.0, 0.364)), ("Delta", (0.0, 1.0))],
        entropies=False,
    ),
}

PRESET_NOTES = {
    "fig2b": "C_ij vs r",
    "fig2c": "C_ij vs Delta",
    "fig2e": "S_n vs n, reversed pattern",
    "fig3": "T_prep vs N",
    "fig4a": "C_ii vs beta (full model)",
    "fig4b": "N_ent vs beta and gamma_phi",
    "fig4c": "C_11 vs Delta/kappa",
    "fig4d": "last-pair concurrence vs Delta",
    "figS1": "N_ent at weak squeezing",
    "figS2": "chain losses",
    "figS3": "bidirectional emission",
    "microwave": "microwave parameter set",
}


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        from ..errors import ConfigError

        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
