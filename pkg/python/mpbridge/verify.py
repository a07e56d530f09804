"""
Desk-scale verification harness.

Exact enumeration of μ_N, finite-N large-deviation estimates for ℓ¹ balls
of empirical measures, and the pointwise sandwich between the enlarged
bridge and the stationary enlarged Markov measure.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.special import logsumexp

from mpbridge.empirical import KWordMeasure
from mpbridge.exceptions import BoundViolation, EmptyEvent, SizeLimit, ValidationError
from mpbridge.rational import EnlargedChain, RationalModel, build_enlarged, sample_bridges
from mpbridge.tasep import TasepParams, TruncatedTasepModel, build_tasep, sample_tasep_bridges

log = logging.getLogger(__name__)

MAX_ENUMERATION_BITS = 20
MAX_PATH_ENUMERATION = 2**22
PREFIX_UNITS = 8

Source = RationalModel | TasepParams | TruncatedTasepModel


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """μ_N over all words, in itertools.product order."""

    words: NDArray[np.int64]
    probs: NDArray[np.float64]
    alphabet_size: int

    @property
    def N(self) -> int:
        return int(self.words.shape[1])


@dataclass(frozen=True, eq=False)
class WordBall:
    """ℓ¹ ball around an order-k word measure."""

    center: KWordMeasure
    radius: float

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "word_ball",
            "order": self.center.order,
            "center": self.center.flat.tolist(),
            "radius": self.radius,
            "metric": "l1",
        }

    def contains(self, words: NDArray[np.int64]) -> NDArray[np.bool_]:
        k = self.center.order
        size = self.center.alphabet_size
        n_words, N = words.shape
        idx = (np.arange(N)[:, None] + np.arange(k)[None, :]) % N
        codes = words[:, idx] @ (size ** np.arange(k - 1, -1, -1))
        offsets = np.arange(n_words)[:, None] * size**k
        counts = np.bincount((codes + offsets).ravel(), minlength=n_words * size**k)
        weights = counts.reshape(n_words, size**k) / N
        distance = np.abs(weights - self.center.flat[None, :]).sum(axis=1)
        return np.asarray(distance < self.radius)


@dataclass(frozen=True, eq=False)
class ProfileBall:
    """ℓ¹ ball on bin masses of the spatial empirical measure around ρ dx."""

    rho: NDArray[np.float64]
    radius: float

    def describe(self) -> dict[str, Any]:
        return {
            "kind": "profile_ball",
            "bins": int(np.asarray(self.rho).size),
            "center": np.asarray(self.rho, dtype=float).tolist(),
            "radius": self.radius,
            "metric": "binned_l1",
        }

    def contains(self, words: NDArray[np.int64]) -> NDArray[np.bool_]:
        rho = np.asarray(self.rho, dtype=float)
        bins = rho.size
        n_words, N = words.shape
        bin_of = (np.arange(1, N + 1) * bins - 1) // N
        masses = np.zeros((n_words, bins))
        for j in range(bins):
            masses[:, j] = words[:, bin_of == j].sum(axis=1) / N
        distance = np.abs(masses - rho[None, :] / bins).sum(axis=1)
        return np.asarray(distance < self.radius)


Event = WordBall | ProfileBall


@dataclass(eq=False)
class LDEstimate:
    """−(1/N) log P(event) per N, with the method and interval used."""

    event: dict[str, Any]
    Ns: list[int] = field(default_factory=list)
    probabilities: list[float] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    methods: list[str] = field(default_factory=list)
    intervals: list[tuple[float, float]] = field(default_factory=list)
    empty: list[int] = field(default_factory=list)

    def check_nonempty(self) -> None:
        """Raise EmptyEvent when no N produced a single hit."""
        if self.Ns and len(self.empty) == len(self.Ns):
            raise EmptyEvent(f"event {self.event['kind']} is empty for every N in {self.Ns}")

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "N": N,
                "event": self.event,
                "probability": p,
                "rate": r,
                "method": method,
                "interval": list(interval),
                "empty": N in self.empty,
            }
            for N, p, r, method, interval in zip(
                self.Ns, self.probabilities, self.rates, self.methods, self.intervals
            )
        ]


@dataclass(frozen=True)
class SandwichReport:
    N: int
    k: float
    K: float
    min_ratio: float
    max_ratio: float

    @property
    def log_k_rate(self) -> float:
        return abs(math.log(self.k)) / self.N

    @property
    def log_K_rate(self) -> float:
        return abs(math.log(self.K)) / self.N


def wilson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValidationError("need 0 ≤ successes ≤ trials and trials ≥ 1")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    phat = successes / trials
    denom = 1.0 + z**2 / trials
    centre = (phat + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _resolve(source: Source, N: int) -> RationalModel:
    if isinstance(source, RationalModel):
        return source
    if isinstance(source, TruncatedTasepModel):
        if source.params.N != N:
            return build_tasep(source.params.with_size(N)).model
        return source.model
    return build_tasep(source.with_size(N)).model


def _all_words(size: int, N: int, start: int = 0, stop: int | None = None) -> NDArray[np.int64]:
    stop = size**N if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    powers = size ** np.arange(N - 1, -1, -1, dtype=np.int64)
    return np.asarray((codes[:, None] // powers[None, :]) % size)


def _log_weights(model: RationalModel, words: NDArray[np.int64]) -> NDArray[np.float64]:
    """log ⟨y| Π M^(η_i) |x⟩ per row, rescaling rows after every factor."""
    v = np.broadcast_to(model.y, (words.shape[0], model.dim)).copy()
    log_scale = np.zeros(words.shape[0])
    for i in range(words.shape[1]):
        for a in range(model.alphabet_size):
            rows = words[:, i] == a
            v[rows] = v[rows] @ model.matrices[a]
        peak = v.max(axis=1)
        alive = peak > 0
        v[alive] /= peak[alive, None]
        log_scale[alive] += np.log(peak[alive])
        log_scale[~alive] = -np.inf
    tail = v @ model.x
    with np.errstate(divide="ignore"):
        return np.asarray(log_scale + np.log(tail))


def enumerate_exact(source: Source, N: int, workers: int = PREFIX_UNITS) -> ExactDistribution:
    """Exact μ_N for every word of length N.

    The word list is split into PREFIX_UNITS contiguous prefix blocks that
    are weighed concurrently and concatenated in order.

    Raises:
        SizeLimit: If |A|^N exceeds 2^MAX_ENUMERATION_BITS.
    """
    model = _resolve(source, N)
    size = model.alphabet_size
    if N < 1 or N * math.log2(size) > MAX_ENUMERATION_BITS:
        raise SizeLimit(f"|A|^N = {size}^{N} exceeds 2^{MAX_ENUMERATION_BITS}")
    total = size**N
    bounds = np.linspace(0, total, min(PREFIX_UNITS, total) + 1).astype(np.int64)
    units = list(zip(bounds[:-1], bounds[1:]))

    def weigh(unit: tuple[int, int]) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        words = _all_words(size, N, int(unit[0]), int(unit[1]))
        return words, _log_weights(model, words)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(weigh, units))
    words = np.concatenate([w for w, _ in parts])
    log_w = np.concatenate([lw for _, lw in parts])
    probs = np.exp(log_w - logsumexp(log_w))
    log.debug("[verify] enumerated %d words of length %d", total, N)
    return ExactDistribution(words, probs, size)


def _sample_words(source: Source, N: int, n_samples: int, seed: int) -> NDArray[np.int64]:
    if isinstance(source, RationalModel):
        chain = build_enlarged(source)
        paths = sample_bridges(chain.bridge(N), n_samples, seed)
        return np.asarray(paths[:, :N] // chain.dim)
    params = source.params if isinstance(source, TruncatedTasepModel) else source
    eta, _ = sample_tasep_bridges(params.with_size(N), n_samples, seed)
    return np.asarray(eta[:, :N])


def ld_curve(
    source: Source,
    Ns: Sequence[int],
    event: Event,
    n_samples: int = 100_000,
    seed: int = 0,
    enumerate_cap: int = MAX_ENUMERATION_BITS,
    workers: int = PREFIX_UNITS,
) -> LDEstimate:
    """−(1/N) log μ_N(event) for each N.

    Exact by enumeration while |A|^N ≤ 2^enumerate_cap, Monte Carlo with a
    Wilson interval beyond. Monte Carlo sizes run concurrently on `workers`
    threads, each with its own seed + N stream. An empty event is recorded
    with probability 0 and rate inf.
    """
    estimate = LDEstimate(event=event.describe())
    size = source.alphabet_size if isinstance(source, RationalModel) else 2
    bits = min(enumerate_cap, MAX_ENUMERATION_BITS)
    sampled = [N for N in dict.fromkeys(Ns) if N * math.log2(size) > bits]

    def count_hits(N: int) -> int:
        words = _sample_words(source, N, n_samples, seed + N)
        return int(event.contains(words).sum())

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        hits = dict(zip(sampled, pool.map(count_hits, sampled)))

    for N in Ns:
        if N in hits:
            probability = hits[N] / n_samples
            method, interval = "monte_carlo", wilson_interval(hits[N], n_samples)
        else:
            dist = enumerate_exact(source, N, workers=workers)
            probability = float(dist.probs[event.contains(dist.words)].sum())
            method, interval = "exact", (probability, probability)
        if probability <= 0:
            log.info("[verify] event empty at N=%d", N)
            estimate.empty.append(N)
            rate = math.inf
        else:
            rate = -math.log(probability) / N
        estimate.Ns.append(N)
        estimate.probabilities.append(probability)
        estimate.rates.append(rate)
        estimate.methods.append(method)
        estimate.intervals.append(interval)
    return estimate


def sandwich_check(
    lawA: ArrayLike,
    lawB: ArrayLike,
    kN: float,
    KN: float,
    N: int = 1,
    labels: Sequence[Any] | None = None,
    rtol: float = 1e-10,
) -> SandwichReport:
    """Check kN·lawB ≤ lawA ≤ KN·lawB pointwise.

    Raises:
        BoundViolation: With the first offending outcome (its label if given).
    """
    a = np.asarray(lawA, dtype=float).ravel()
    b = np.asarray(lawB, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValidationError("laws must live on the same finite set")
    slack = rtol * np.maximum(a, b)
    below = a < kN * b - slack
    above = a > KN * b + slack
    bad = np.flatnonzero(below | above)
    if bad.size:
        i = int(bad[0])
        witness = labels[i] if labels is not None else i
        raise BoundViolation(
            f"outcome {witness!r}: lawA={a[i]:.6g} outside [{kN * b[i]:.6g}, {KN * b[i]:.6g}]",
            witness=witness,
        )
    ratios = np.divide(a, b, out=np.ones_like(a), where=b > 0)
    charged = b > 0
    return SandwichReport(
        N=N,
        k=kN,
        K=KN,
        min_ratio=float(ratios[charged].min()) if charged.any() else 1.0,
        max_ratio=float(ratios[charged].max()) if charged.any() else 1.0,
    )


def sandwich_constants(
    chain: EnlargedChain, Theta: ArrayLike, N: int
) -> tuple[float, float]:
    """k_N, K_N bounding the bridge against Θ(ξ₁) Π 𝔖.

    The ratio of the two laws is f(ξ₁) g(ξ_{N+1}) / (Z_N Θ(ξ₁)).
    """
    stationary = np.asarray(Theta, dtype=float)
    law = chain.bridge(N)
    ratio_start = chain.f / stationary
    return (
        float(ratio_start.min() * chain.g.min() / law.Z),
        float(ratio_start.max() * chain.g.max() / law.Z),
    )


def enlarged_path_laws(
    chain: EnlargedChain, Theta: ArrayLike, N: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Bridge and stationary probabilities of every enlarged path of N+1 states."""
    n = chain.epsilon.size
    if n ** (N + 1) > MAX_PATH_ENUMERATION:
        raise SizeLimit(f"{n}^{N + 1} paths exceed {MAX_PATH_ENUMERATION}")
    paths = _all_words(n, N + 1)
    S = chain.S_frak.entries
    stationary = np.asarray(Theta, dtype=float)[paths[:, 0]] * np.prod(
        S[paths[:, :-1], paths[:, 1:]], axis=1
    )
    law = chain.bridge(N)
    bridge = chain.f[paths[:, 0]] * np.prod(S[paths[:, :-1], paths[:, 1:]], axis=1)
    bridge = bridge * chain.g[paths[:, -1]] / law.Z
    return bridge, stationary
