"""Physical constants and documented device values."""

# h / k_B in s*K; every frequency <-> temperature conversion goes through this.
H_OVER_KB = 4.799243e-11

# fluxonium device (no spectrum is computed from these)
CAPACITANCE_F = 6.9e-15
SUPERINDUCTANCE_H = 231e-9
EJ_EFF_HZ = 5.6e9
LOOP_AREA_RATIO = 50.0
PHI_EXT_OPERATING = 21.48

# reference operating point
F01_HZ = 1.2e9
T_EFF_K = 28.3e-3
T_REP_S = 2e-6
WAIT_S = 50e-3
