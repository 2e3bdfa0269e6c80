"""
Carleman-weighted layer coefficients A1, A2, A3

On layer n the q-equation is integrated over s in [s_n, s_{n-1}] against
e^{-Lambda sigma}, sigma = s_{n-1} - s, assuming q = q_n on the layer and
int_s^{s_bar} grad q = grad qbar_{n-1} + sigma grad q_n. With
M_k = int_0^h sigma^k e^{-Lambda sigma} d sigma and a = s_{n-1}:

    A1 = [2(a^2 M0 - 2a M1 + M2) - 4(a M1 - M2)] / M0
    A2 = [2(a^2 M1 - 2a M2 + M3) - 2(a M2 - M3)] / M0
    A3 = -2(a M0 - M1) / M0

so that Lap q_n - A2 |grad q_n|^2 + A1 D . grad q_n = A3 |D|^2 with
D = grad V - grad qbar_{n-1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from ..transforms.laplace import PseudoFreqAxis

# Below this Lambda*h the moments use their Taylor expansion
SMALL_ARGUMENT = 1e-6


@dataclass(frozen=True)
class CarlemanCoeffs:
    n: int
    Lambda: float
    A1: float
    A2: float
    A3: float
    moments: tuple


def carleman_moments(h: float, Lambda: float, order: int = 3) -> np.ndarray:
    """
    M_k = k! / Lambda^{k+1} * P(k+1, Lambda h) for k = 0..order, in log form.
    """
    k = np.arange(order + 1, dtype=float)
    x = Lambda * h
    if Lambda < 0:
        raise ValueError(f"Carleman parameter must be nonnegative, got {Lambda}")
    if x < SMALL_ARGUMENT:
        # int_0^h s^k (1 - Lambda s) ds
        return h ** (k + 1) / (k + 1) - Lambda * h ** (k + 2) / (k + 2)
    log_m = gammaln(k + 1) - (k + 1) * np.log(Lambda) + np.log(gammainc(k + 1, x))
    return np.exp(log_m)


def carleman_coefficients(n: int, paxis: PseudoFreqAxis, Lambda: float) -> CarlemanCoeffs:
    """Closed-form A1, A2, A3 of layer n (1 <= n <= N)"""
    if not 1 <= n <= paxis.N:
        raise ValueError(f"Layer index {n} outside 1..{paxis.N}")
    if Lambda <= 0:
        raise ValueError(f"Carleman parameter must be positive, got {Lambda}")
    a = paxis.samples[n - 1]
    M = carleman_moments(paxis.h, Lambda)
    m1, m2, m3 = M[1] / M[0], M[2] / M[0], M[3] / M[0]
    A1 = 2.0 * (a * a - 2.0 * a * m1 + m2) - 4.0 * (a * m1 - m2)
    A2 = 2.0 * (a * a * m1 - 2.0 * a * m2 + m3) - 2.0 * (a * m2 - m3)
    A3 = -2.0 * (a - m1)
    return CarlemanCoeffs(n=n, Lambda=float(Lambda), A1=float(A1), A2=float(A2), A3=float(A3),
                          moments=tuple(float(v) for v in M))
