"""Entropy conventions shared by the rate functionals.

0·log 0 = 0 and q·log(q/0) = +inf for q > 0, as implemented by
scipy.special.rel_entr / entr.
"""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import entr, rel_entr


def relative_entropy(p: ArrayLike, q: ArrayLike) -> float:
    """Σ p log(p/q); +inf when p charges a zero of q."""
    return float(np.sum(rel_entr(np.asarray(p, dtype=float), np.asarray(q, dtype=float))))


def binary_entropy(x: ArrayLike) -> NDArray[np.float64]:
    """H(x) = x log x + (1−x) log(1−x), with H(0) = H(1) = 0.

    This is minus the Shannon entropy, so it is convex and non-positive.
    """
    arr = np.asarray(x, dtype=float)
    return np.asarray(-(entr(arr) + entr(1.0 - arr)), dtype=float)


def binary_entropy_derivative(x: ArrayLike, floor: float = 1e-15) -> NDArray[np.float64]:
    """H'(x) = log(x/(1−x)), evaluated on [floor, 1−floor]."""
    arr = np.clip(np.asarray(x, dtype=float), floor, 1.0 - floor)
    return np.asarray(np.log(arr) - np.log1p(-arr), dtype=float)


def is_probability(p: ArrayLike, tol: float = 1e-9) -> bool:
    arr = np.asarray(p, dtype=float)
    return bool(np.all(np.isfinite(arr)) and np.all(arr >= -tol) and abs(arr.sum() - 1.0) <= tol)
