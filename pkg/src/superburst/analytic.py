"""Initial second-order coherence of a uniformly rotated product state.

Every atom starts in ``cos(A/2)|g> - i sin(A/2)|e>``; the detected field is
proportional to the collective lowering operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NonPositive, SuperburstError


class DegenerateState(SuperburstError, ValueError):
    """Nothing is emitted (A = 0 mod 2 pi), so g2 is undefined."""


@dataclass(frozen=True)
class ProductStateMoments:
    d: float  # imaginary part of the single-atom dipole
    p: float  # single-atom excitation probability


def moments(A: float) -> ProductStateMoments:
    c, s = math.cos(A / 2), math.sin(A / 2)
    return ProductStateMoments(d=-2.0 * c * s, p=s * s)


def _is_pi_mod_2pi(A: float) -> bool:
    return math.remainder(A - math.pi, 2 * math.pi) == 0.0


def g2_initial_largeN(N: int, A: float) -> float:
    """``2 - (1 + 1/(N cos^2(A/2)))^-2``, the large-ensemble limit."""
    if N < 1:
        raise NonPositive(f"N must be >= 1, got {N}")
    if _is_pi_mod_2pi(A):
        return 2.0
    x = N * math.cos(A / 2) ** 2
    # x / (x + 1) instead of 1 / (1 + 1/x): finite as x -> 0
    return 2.0 - (x / (x + 1.0)) ** 2


def g2_initial_exact(N: int, A: float) -> float:
    """Exact finite-N ratio <S+S+SS> / <S+S>^2 for the product state."""
    if N < 2:
        raise NonPositive(f"need N >= 2 for a two-photon moment, got {N}")
    m = moments(A)
    d2, p = m.d * m.d, m.p
    if _is_pi_mod_2pi(A):
        d2, p = 0.0, 1.0
    n1 = N * (p + (N - 1) * d2 / 4)
    if math.remainder(A, 2 * math.pi) == 0.0 or n1 <= 0.0:
        raise DegenerateState(f"no emission for A = {A}")
    n2 = N * (N - 1) * ((N - 2) * (N - 3) * d2 * d2 / 16 + (N - 2) * p * d2 + 2 * p * p)
    return n2 / (n1 * n1)


def peak_fwhm(N: int) -> float:
    """Width in A of the g2(0,0) peak around A = pi, ``sqrt(16/((sqrt2-1) N))``.

    Derived from the small-angle expansion near the peak, so it is meant for
    N >> 1 (N >= 16 accepted). The true half-maximum width of
    :func:`g2_initial_largeN` is ``4 asin(1/sqrt((sqrt2-1) N))``; the two
    differ at relative order 1/N.
    """
    if N < 16:
        raise ValueError(f"peak width formula requires N >= 16, got {N}")
    return math.sqrt(16.0 / ((math.sqrt(2.0) - 1.0) * N))


def g2_initial_table(N: int, A_values: np.ndarray) -> np.ndarray:
    """Rows of (A/pi, large-N g2, exact g2); exact is NaN where undefined."""
    rows = []
    for A in np.asarray(A_values, dtype=float):
        try:
            exact = g2_initial_exact(N, A) if N >= 2 else math.nan
        except DegenerateState:
            exact = math.nan
        rows.append((A / math.pi, g2_initial_largeN(N, A), exact))
    return np.array(rows).reshape(-1, 3)
