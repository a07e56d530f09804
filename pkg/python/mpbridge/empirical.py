"""
Empirical measures of words.

Algebraic order-k measures count cyclically wrapped k-blocks. Spatial
measures place mass η_i/N at i/N and bin it into ((j−1)/L, j/L]. The
generalized spatial measure does the same with whole k-blocks.
"""

from dataclasses import dataclass
from itertools import product
from typing import Iterator

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mpbridge.exceptions import ValidationError
from mpbridge.rational import Word, as_word

MAX_ORDER = 8


@dataclass(frozen=True, eq=False)
class KWordMeasure:
    """Weights over A^k stored as a k-dimensional |A|×…×|A| array.

    counts and length are set when the measure comes from a word; then
    weights == counts / length exactly in rational arithmetic.
    """

    weights: NDArray[np.float64]
    counts: NDArray[np.int64] | None = None
    length: int | None = None

    def __post_init__(self) -> None:
        arr = np.array(self.weights, dtype=float)
        if arr.ndim < 1 or len(set(arr.shape)) != 1:
            raise ValidationError(f"weights must be an |A|^k cube, got shape {arr.shape}")
        if arr.ndim > MAX_ORDER:
            raise ValidationError(f"order {arr.ndim} exceeds the maximum {MAX_ORDER}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("weights must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    @property
    def order(self) -> int:
        return int(self.weights.ndim)

    @property
    def alphabet_size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def flat(self) -> NDArray[np.float64]:
        return np.asarray(self.weights.ravel())

    def mass(self, word: tuple[int, ...]) -> float:
        return float(self.weights[tuple(word)])

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        for word in product(range(self.alphabet_size), repeat=self.order):
            yield word, float(self.weights[word])

    def __repr__(self) -> str:
        return f"<KWordMeasure k={self.order} |A|={self.alphabet_size}>"


@dataclass(frozen=True, eq=False)
class SpatialMeasure:
    """Mass of π̂ in each bin ((j−1)/L, j/L]."""

    bins: int
    masses: NDArray[np.float64]

    def edges(self) -> NDArray[np.float64]:
        return np.linspace(0.0, 1.0, self.bins + 1)


@dataclass(frozen=True, eq=False)
class GeneralizedSpatialMeasure:
    """Masses on a bins × |A|^k grid; words flattened row-major."""

    bins: int
    order: int
    alphabet_size: int
    masses: NDArray[np.float64]

    def edges(self) -> NDArray[np.float64]:
        return np.linspace(0.0, 1.0, self.bins + 1)

    def word_measure(self) -> KWordMeasure:
        """Marginal over [0, 1]."""
        shape = (self.alphabet_size,) * self.order
        return KWordMeasure(self.masses.sum(axis=0).reshape(shape))

    def bin_law(self, j: int) -> NDArray[np.float64]:
        """Bin j (0-based) as an |A|^k cube of masses."""
        return np.asarray(self.masses[j].reshape((self.alphabet_size,) * self.order))


def _blocks(symbols: NDArray[np.int64], k: int) -> NDArray[np.int64]:
    """Row i holds η_i … η_{i+k−1} with indices wrapped mod N."""
    n = symbols.size
    idx = (np.arange(n)[:, None] + np.arange(k)[None, :]) % n
    return symbols[idx]


def _check_order(k: int) -> None:
    if not 1 <= k <= MAX_ORDER:
        raise ValidationError(f"order k must lie in 1..{MAX_ORDER}, got {k}")


def _bin_index(n: int, bins: int) -> NDArray[np.int64]:
    """0-based bin of i/N for i = 1..N under ((j−1)/L, j/L]."""
    if bins < 1:
        raise ValidationError(f"bins must be at least 1, got {bins}")
    i = np.arange(1, n + 1)
    return (i * bins - 1) // n


def empirical_k(
    eta: Word | ArrayLike | str, k: int, alphabet_size: int = 2
) -> KWordMeasure:
    """ν̂^k = (1/N) Σ_i δ_{η_i … η_{i+k−1}}, indices mod N."""
    _check_order(k)
    word = as_word(eta, eta.alphabet_size if isinstance(eta, Word) else alphabet_size)
    size = word.alphabet_size
    blocks = _blocks(word.symbols, k)
    counts = np.zeros((size,) * k, dtype=np.int64)
    np.add.at(counts, tuple(blocks.T), 1)
    return KWordMeasure(counts / len(word), counts=counts, length=len(word))


def spatial_empirical(
    eta: Word | ArrayLike | str, bins: int, alphabet_size: int = 2
) -> SpatialMeasure:
    word = as_word(eta, eta.alphabet_size if isinstance(eta, Word) else alphabet_size)
    n = len(word)
    masses = np.bincount(
        _bin_index(n, bins), weights=word.symbols.astype(float), minlength=bins
    ) / n
    return SpatialMeasure(bins, masses)


def generalized_spatial(
    eta: Word | ArrayLike | str, k: int, bins: int, alphabet_size: int = 2
) -> GeneralizedSpatialMeasure:
    """Π̂^k: mass 1/N for the block starting at i, placed in the bin of i/N."""
    _check_order(k)
    word = as_word(eta, eta.alphabet_size if isinstance(eta, Word) else alphabet_size)
    n = len(word)
    size = word.alphabet_size
    blocks = _blocks(word.symbols, k)
    word_index = blocks @ (size ** np.arange(k - 1, -1, -1))
    masses = np.zeros((bins, size**k))
    np.add.at(masses, (_bin_index(n, bins), word_index), 1.0 / n)
    return GeneralizedSpatialMeasure(bins, k, size, masses)


def check_stationary(nu: KWordMeasure, tol: float = 1e-12) -> bool:
    """Σ_a ν(ξa) == Σ_a ν(aξ) for every ξ ∈ A^{k−1}."""
    if nu.order == 1:
        return True
    left = nu.weights.sum(axis=-1)
    right = nu.weights.sum(axis=0)
    return bool(np.max(np.abs(left - right)) <= tol)


def marginal_lower(nu: KWordMeasure) -> KWordMeasure:
    """Order-(k−1) prefix marginal Σ_a ν(ξa)."""
    if nu.order == 1:
        raise ValidationError("order-1 measure has no lower marginal")
    return KWordMeasure(nu.weights.sum(axis=-1))


def coarsen(
    measure: SpatialMeasure | GeneralizedSpatialMeasure, factor: int
) -> SpatialMeasure | GeneralizedSpatialMeasure:
    """Merge groups of `factor` adjacent bins."""
    if factor < 1 or measure.bins % factor:
        raise ValidationError(f"factor {factor} does not divide {measure.bins} bins")
    merged_bins = measure.bins // factor
    if isinstance(measure, SpatialMeasure):
        return SpatialMeasure(merged_bins, measure.masses.reshape(merged_bins, factor).sum(axis=1))
    masses = measure.masses.reshape(merged_bins, factor, -1).sum(axis=1)
    return GeneralizedSpatialMeasure(merged_bins, measure.order, measure.alphabet_size, masses)
