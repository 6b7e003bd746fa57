"""Reference values computed without the package's propagator or estimators.

Every number printed here is frozen into the test suite. The computations
use plain-Python sums, scipy.linalg.expm and scipy.integrate.solve_ivp so
that they share no code path with tlsszilard.dynamics.

Usage: python scripts/oracles.py
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.stats import norm

H_OVER_KB = 4.799243e-11
A, B, C, N, GT, GQ = 5.0e3, 0.48, 0.0, 51, 20.0, 10.9e3
F01, T_EFF = 1.2e9, 28.3e-3


def ladder(a=A, b=B, c=C, n=N):
    h = (n - 1) // 2
    return [a / (b * b + (k - c) ** 2) for k in range(-h, h + 1)]


def p_thermal(f, T):
    return 1.0 / (1.0 + math.exp(H_OVER_KB * f / T))


def full_generator(G, gq, gt, pth):
    """Affine generator on (p_q, p_t..., 1) so expm handles the drive."""
    n = len(G)
    M = np.zeros((n + 2, n + 2))
    M[0, 0] = -gq - sum(G)
    for k, g in enumerate(G):
        M[0, k + 1] = g
        M[k + 1, 0] = g
        M[k + 1, k + 1] = -gt - g
        M[k + 1, -1] = gt * pth
    M[0, -1] = gq * pth
    return M


def clamp_generator(G, gt, pth, q):
    n = len(G)
    M = np.zeros((n + 1, n + 1))
    for k, g in enumerate(G):
        M[k, k] = -gt - g
        M[k, -1] = g * q + gt * pth
    return M


def main():
    G = ladder()
    pth = p_thermal(F01, T_EFF)
    print("ladder k=0, k=1:", G[25], G[26])
    print("ladder n=3 sum:", sum(ladder(n=3)))
    print("total coupling n=51:", sum(G))
    print("gamma_1:", GQ + sum(G), "T1 [us]:", 1e6 / (GQ + sum(G)))
    print("count >= gamma_t:", sum(g >= GT for g in G))
    print("p_th(1.2 GHz, 28.3 mK):", pth)
    print("clamp-0 time constant k=0 [s]:", 1 / (GT + G[25]))

    # stabilization as a clamp for 10^4 x 2 us, then the equilibrium population
    for q, label in ((1, "e"), (0, "g")):
        x = np.append(np.full(N, pth), 1.0)
        x = expm(clamp_generator(G, GT, pth, q) * 2e-2) @ x
        p_eq = (np.dot(G, x[:-1]) + GQ * pth) / (GQ + sum(G))
        f = H_OVER_KB * F01 / math.log((1 - p_eq) / p_eq)
        p_eq = float(p_eq)
        print(f"stabilize {label} 1e4: p_eq(0+) = {p_eq!r}, T = {f * 1e3!r} mK")
        if label == "g":
            # then initialize e and decay for 1/gamma_1
            y = np.concatenate(([1.0], x[:-1], [1.0]))
            y = expm(full_generator(G, GQ, GT, pth) * (1 / (GQ + sum(G)))) @ y
            print("  after Initialize(e), p_q(1/gamma_1) =", y[0])

    # heat extraction from equilibrium after resetting the qubit to g
    be = H_OVER_KB * F01 / T_EFF
    M = full_generator(G, GQ, GT, pth)
    y0 = np.concatenate(([0.0], np.full(N, pth), [1.0]))
    ts = np.linspace(0, 1e-3, 20001)
    sol = solve_ivp(lambda t, y: M @ y, (0, 1e-3), y0, t_eval=ts, method="Radau", rtol=1e-11, atol=1e-13)
    heat = be * (pth - sol.y[1:-1]).sum(axis=0)
    i = int(np.argmax(heat))
    print("heat peak [k_B T]:", heat[i], "at [us]:", ts[i] * 1e6, "delta_u:", be * pth,
          "ratio:", heat[i] / (be * pth))

    # two-state readout and Markov chains
    print("misassignment at 5.6 sigma separation:", norm.cdf(-2.8))
    g1 = 3.0e3
    print("single-TLS exchange mean q after 100 us, G=3 kHz:", 0.5 * (1 + math.exp(-2 * g1 * 1e-4)))
    Q = np.array([[-5e3, 5e3], [41.5e3, -41.5e3]])
    P = expm(Q * 2e-6)
    print("two-state P_gg over 2 us:", P[0, 0], "implied rate:", -math.log(P[0, 0]) / 2e-6,
          "e^{-up t}:", math.exp(-5e3 * 2e-6))

    # three-level Boltzmann weights
    E = np.array([0.0, 1.2e9, 7.8e9])
    w = np.exp(-H_OVER_KB * E / 75e-3)
    print("three-level weights [%]:", 100 * w / w.sum())

    # thermodynamics at p = 0.12
    be = math.log(1 / 0.12 - 1)
    print("beta U:", be * 0.12, "S:", -(0.12 * math.log(0.12) + 0.88 * math.log(0.88)))

    # flux partition
    f = 1 / (2 * 50 + 1)
    print("flux partition:", 2 * f * 21.48, (1 - f) * 21.48, (1 + f) * 21.48)


if __name__ == "__main__":
    main()
