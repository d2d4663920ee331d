"""Published parameter sets used as starting points and reference values."""

from __future__ import annotations

# iSWAP fluxonium pair: device energies in GHz, t_ramp / t_plateau in ns, phi_p in rad
ISWAP_INITIAL = {
    "E_C1": 1.483, "E_J1": 2.082, "E_L1": 0.626,
    "E_C2": 1.381, "E_J2": 2.103, "E_L2": 0.620,
    "J_C": 0.143, "t_ramp": 2.31, "t_plateau": 32.00, "phi_p": 0.254,
}
ISWAP_NORMAL = {
    "E_C1": 1.492, "E_J1": 2.074, "E_L1": 0.634,
    "E_C2": 1.412, "E_J2": 2.050, "E_L2": 0.612,
    "J_C": 0.139, "t_ramp": 2.21, "t_plateau": 31.14, "phi_p": 0.245,
}
ISWAP_ROBUST = {
    "E_C1": 1.604, "E_J1": 2.101, "E_L1": 0.714,
    "E_C2": 1.870, "E_J2": 2.095, "E_L2": 0.532,
    "J_C": 0.207, "t_ramp": 1.88, "t_plateau": 20.66, "phi_p": 0.293,
}
ISWAP_TABLES = {"initial": ISWAP_INITIAL, "normal": ISWAP_NORMAL, "robust": ISWAP_ROBUST}

# fluxonium bounds (GHz); None means unbounded
FLUXONIUM_BOUNDS = {"E_C": (0.5, 2.0), "E_J": (2.0, None), "E_L": (0.5, 1.5)}

# transmon (E_C, E_J) in GHz before / after the chip optimization
TRANSMON_BEFORE = {"H": (0.3, 21.5), "M": (0.28, 16.5), "L": (0.24, 14.5)}
TRANSMON_AFTER = {"H": (0.437, 21.87), "M": (0.285, 16.51), "L": (0.257, 14.15)}

# |E00 + E11 - E01 - E10| in GHz
E_ZZ_BEFORE = {("HM", "idle"): 8.71e-4, ("ML", "idle"): 1.62e-3, ("HM", "gate"): 1.94e-2, ("ML", "gate"): 2.19e-2}
E_ZZ_AFTER = {("HM", "idle"): 3.70e-4, ("ML", "idle"): 1.02e-4, ("HM", "gate"): 2.14e-2, ("ML", "gate"): 5.37e-3}

# gradient-to-value time ratios for the diagonalization chain, n_fm = 3..6
CHAIN_RATIOS = {3: 2.77, 4: 3.06, 5: 2.39, 6: 2.37}

# three-transmon chip as a flat parameter dict; both couplings at the value
# that reproduces the printed idle E_ZZ of the "before" pairs (0.0200 GHz)
CALIBRATED_J = 0.0200
CHIP_BEFORE = {
    "E_CH": 0.3, "E_JH": 21.5, "E_CM": 0.28, "E_JM": 16.5, "E_CL": 0.24, "E_JL": 14.5,
    "J_HM": CALIBRATED_J, "J_ML": CALIBRATED_J,
}
CHIP_AFTER = {
    "E_CH": 0.437, "E_JH": 21.87, "E_CM": 0.285, "E_JM": 16.51, "E_CL": 0.257, "E_JL": 14.15,
    "J_HM": CALIBRATED_J, "J_ML": CALIBRATED_J,
}
CHIP_TABLES = {"before": CHIP_BEFORE, "after": CHIP_AFTER}
