"""Independent reference solutions and frozen values used across the tests.

The Riccati reference integrates dP/dt = P^2 - c0 backwards with an
adaptive Runge-Kutta method, sharing no code with the package solvers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp


def riccati_P(c0: float, gamma: float, T: float, times) -> np.ndarray:
    """P(t) with dP/dt = P^2 - c0 and P(T) = gamma, from a tight RK45 run."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sol = solve_ivp(lambda t, p: p * p - c0, (T, 0.0), [gamma], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    return sol.sol(times)[0]


# Frozen Riccati values, c0 = 1, gamma = 2, T = 4 (closed form coth(T - t + atanh(1/2))).
FROZEN_P = {0.0: 1.0002236667625484, 2.0: 1.0122854310990235, 3.0: 1.0944859497480877}


def riccati_closed_form(c0: float, gamma: float, T: float, t):
    """coth / tanh closed form for gamma != sqrt(c0); used only to freeze values."""
    r = math.sqrt(c0)
    s = T - np.asarray(t, dtype=float)
    if gamma > r:
        return r / np.tanh(r * s + math.atanh(r / gamma))
    return r * np.tanh(r * s + math.atanh(gamma / r))


def translation_value(x):
    """Quadratic part of the explicit solution in the translation-invariant example."""
    return (math.sqrt(2.0) / 2.0) * np.asarray(x, dtype=float) ** 2


TRANSLATION_LAMBDA = lambda beta: beta * math.sqrt(2.0)  # noqa: E731
