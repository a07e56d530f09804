"""
Rational-model measures and their enlarged Markov-bridge representation.

A rational model assigns the word η = η_1…η_N the weight
⟨y| M^(η_1)⋯M^(η_N) |x⟩. Conjugating the enlarged matrix
𝔐_{(a,b),(a',b')} = M^(a)_{b,b'} by its Perron data gives a stochastic matrix
𝔖 on A×B, and the model becomes the first-coordinate marginal of a Markov
bridge for 𝔖 with endpoint weights f, g.

Enlarged states (a, b) are indexed a·|B| + b throughout.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mpbridge.exceptions import (
    DegenerateLaw,
    InconsistentEigendata,
    InvalidWord,
    NotPrimitive,
    NotStationaryInput,
    NumericUnderflow,
    ValidationError,
)
from mpbridge.perron import (
    DEFAULT_TOL,
    EIGENDATA_TOL,
    PerronData,
    StochasticMatrix,
    check_primitive,
    doob_transform,
    perron_finite,
)

log = logging.getLogger(__name__)

# Weights below this are reported through NumericUnderflow with their log.
UNDERFLOW_THRESHOLD = 1e-300
_LOG_UNDERFLOW = math.log(UNDERFLOW_THRESHOLD)


@dataclass(frozen=True, eq=False)
class RationalModel:
    """Per-symbol B×B matrices M^(a) with boundary vectors ⟨y| and |x⟩.

    Boundary vectors must be non-negative and non-zero; strict positivity
    is only required where the enlarged chain is built.
    """

    matrices: NDArray[np.float64]
    x: NDArray[np.float64]
    y: NDArray[np.float64]

    def __post_init__(self) -> None:
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or 0 in mats.shape:
            raise ValidationError(
                f"matrices must have shape (|A|, |B|, |B|), got {mats.shape}"
            )
        if not np.all(np.isfinite(mats)) or np.any(mats < 0):
            raise ValidationError("matrix entries must be finite and non-negative")
        dim = mats.shape[1]
        vectors = {}
        for name in ("x", "y"):
            vec = np.array(getattr(self, name), dtype=float)
            if vec.shape != (dim,):
                raise ValidationError(f"{name} must have length {dim}, got shape {vec.shape}")
            if np.any(vec < 0) or not np.any(vec > 0):
                raise ValidationError(f"{name} must be non-negative and non-zero")
            vec.setflags(write=False)
            vectors[name] = vec
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "x", vectors["x"])
        object.__setattr__(self, "y", vectors["y"])

    @classmethod
    def from_lists(
        cls,
        matrices: Sequence[ArrayLike],
        x: ArrayLike | None = None,
        y: ArrayLike | None = None,
    ) -> "RationalModel":
        """Build from nested lists; missing boundary vectors default to all-ones."""
        mats = np.array([np.asarray(m, dtype=float) for m in matrices])
        dim = mats.shape[-1] if mats.ndim == 3 else 0
        return cls(
            mats,
            np.ones(dim) if x is None else np.asarray(x, dtype=float),
            np.ones(dim) if y is None else np.asarray(y, dtype=float),
        )

    @property
    def alphabet_size(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrices.shape[1])

    @cached_property
    def total(self) -> NDArray[np.float64]:
        """M = Σ_a M^(a)."""
        return np.asarray(self.matrices.sum(axis=0))

    def scaled(self, factor: float) -> "RationalModel":
        return RationalModel(self.matrices * factor, self.x, self.y)

    def __repr__(self) -> str:
        return f"<RationalModel |A|={self.alphabet_size} |B|={self.dim}>"


@dataclass(frozen=True, eq=False)
class Word:
    """Non-empty word over {0, …, alphabet_size−1}."""

    symbols: NDArray[np.int64]
    alphabet_size: int

    def __post_init__(self) -> None:
        arr = np.array(self.symbols, dtype=np.int64).ravel()
        if arr.size == 0:
            raise InvalidWord("word must be non-empty")
        if np.any(arr < 0) or np.any(arr >= self.alphabet_size):
            bad = int(arr[(arr < 0) | (arr >= self.alphabet_size)][0])
            raise InvalidWord(f"symbol {bad} outside alphabet of size {self.alphabet_size}")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @classmethod
    def parse(cls, text: str, alphabet_size: int = 2) -> "Word":
        """Parse a compact digit string such as "0110"."""
        text = text.strip()
        if not text.isdigit():
            raise InvalidWord(f"word {text!r} must be a string of digits")
        return cls(np.array([int(c) for c in text]), alphabet_size)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __str__(self) -> str:
        return "".join(str(int(s)) for s in self.symbols)


def as_word(eta: Word | ArrayLike | str, alphabet_size: int) -> Word:
    if isinstance(eta, Word):
        if eta.alphabet_size != alphabet_size:
            raise InvalidWord(
                f"word alphabet {eta.alphabet_size} does not match model alphabet {alphabet_size}"
            )
        return eta
    if isinstance(eta, str):
        return Word.parse(eta, alphabet_size)
    return Word(np.asarray(eta), alphabet_size)


def _log_chain(
    start: NDArray[np.float64],
    steps: Sequence[NDArray[np.float64]] | NDArray[np.float64],
    end: NDArray[np.float64],
) -> float:
    """log(start · Π steps · end), renormalizing after every factor."""
    v = np.array(start, dtype=float)
    log_scale = 0.0
    for step in steps:
        v = v @ step
        peak = float(np.max(v))
        if peak <= 0:
            return -math.inf
        v /= peak
        log_scale += math.log(peak)
    tail = float(v @ end)
    if tail <= 0:
        return -math.inf
    return log_scale + math.log(tail)


def log_measure_weight(model: RationalModel, eta: Word | ArrayLike | str) -> float:
    """log ⟨y| Π M^(η_i) |x⟩ (−inf for a zero weight)."""
    word = as_word(eta, model.alphabet_size)
    return _log_chain(model.y, model.matrices[word.symbols], model.x)


def measure_weight(model: RationalModel, eta: Word | ArrayLike | str) -> float:
    """⟨y| Π M^(η_i) |x⟩.

    Raises:
        NumericUnderflow: When the weight is positive but below 1e-300; the
            exception carries the log-weight.
    """
    value = log_measure_weight(model, eta)
    if value == -math.inf:
        return 0.0
    if value < _LOG_UNDERFLOW:
        raise NumericUnderflow(
            f"weight underflows (log-weight {value:.6g}); use log_measure_weight",
            log_weight=value,
        )
    return math.exp(value)


def log_partition_function(model: RationalModel, N: int) -> float:
    """log ⟨y| M^N |x⟩."""
    if N < 1:
        raise ValidationError(f"N must be at least 1, got {N}")
    total = model.total
    return _log_chain(model.y, (total for _ in range(N)), model.x)  # type: ignore[arg-type]


def partition_function(model: RationalModel, N: int) -> float:
    value = log_partition_function(model, N)
    if value == -math.inf:
        return 0.0
    if value < _LOG_UNDERFLOW:
        raise NumericUnderflow(
            f"partition function underflows (log {value:.6g})", log_weight=value
        )
    return math.exp(value)


def measure_probability(model: RationalModel, eta: Word | ArrayLike | str) -> float:
    """μ_N(η) = weight / Z_N, computed from log-weights."""
    word = as_word(eta, model.alphabet_size)
    log_w = log_measure_weight(model, word)
    if log_w == -math.inf:
        return 0.0
    return math.exp(log_w - log_partition_function(model, len(word)))


def coupling_weight(
    model: RationalModel, eta: Word | ArrayLike | str, zeta: ArrayLike
) -> float:
    """y(ζ₁) Π M^(η_i)_{ζ_i, ζ_{i+1}} x(ζ_{N+1})."""
    word = as_word(eta, model.alphabet_size)
    path = np.asarray(zeta, dtype=np.int64)
    if path.shape != (len(word) + 1,):
        raise ValidationError(
            f"zeta must have length {len(word) + 1}, got {path.size}"
        )
    if np.any(path < 0) or np.any(path >= model.dim):
        raise ValidationError(f"zeta entries must lie in 0..{model.dim - 1}")
    factors = model.matrices[word.symbols, path[:-1], path[1:]]
    return float(model.y[path[0]] * np.prod(factors) * model.x[path[-1]])


def enlarged_matrix(model: RationalModel) -> NDArray[np.float64]:
    """𝔐_{(a,b),(a',b')} = M^(a)_{b,b'}."""
    n_symbols = model.alphabet_size
    return np.vstack([np.tile(model.matrices[a], (1, n_symbols)) for a in range(n_symbols)])


@dataclass(frozen=True, eq=False)
class BridgeLaw:
    """Markov bridge f(ξ₁) Π P_{ξ_i,ξ_{i+1}} g(ξ_{N+1}) / Z over N steps.

    P only needs to be non-negative, so truncations of infinite chains
    (sub-stochastic in their last rows) are accepted.
    """

    P: NDArray[np.float64]
    f: NDArray[np.float64]
    g: NDArray[np.float64]
    N: int

    def __post_init__(self) -> None:
        raw = self.P.entries if isinstance(self.P, StochasticMatrix) else self.P
        P = np.array(raw, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or np.any(P < 0):
            raise ValidationError("bridge kernel must be a square non-negative matrix")
        n = P.shape[0]
        arrays = {}
        for name in ("f", "g"):
            vec = np.array(getattr(self, name), dtype=float)
            if vec.shape != (n,) or np.any(vec < 0):
                raise ValidationError(f"{name} must be a non-negative vector of length {n}")
            vec.setflags(write=False)
            arrays[name] = vec
        if self.N < 1:
            raise ValidationError(f"bridge horizon must be at least 1, got {self.N}")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "f", arrays["f"])
        object.__setattr__(self, "g", arrays["g"])

    @property
    def n_states(self) -> int:
        return int(self.P.shape[0])

    @cached_property
    def _filters(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Backward filters P^{N−k} g stored as (normalized vectors, log scales)."""
        vectors = np.zeros((self.N + 1, self.n_states))
        scales = np.zeros(self.N + 1)
        h = self.g.copy()
        for k in range(self.N, -1, -1):
            if k < self.N:
                h = self.P @ h
            peak = float(np.max(h))
            if peak <= 0:
                scales[: k + 1] = -math.inf
                break
            h = h / peak
            vectors[k] = h
            scales[k] = (scales[k + 1] if k < self.N else 0.0) + math.log(peak)
        return vectors, scales

    @cached_property
    def log_Z(self) -> float:
        vectors, scales = self._filters
        head = float(self.f @ vectors[0])
        if head <= 0 or scales[0] == -math.inf:
            return -math.inf
        return math.log(head) + float(scales[0])

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z) if self.log_Z > -math.inf else 0.0

    def __repr__(self) -> str:
        return f"<BridgeLaw states={self.n_states} N={self.N} logZ={self.log_Z:.6g}>"


@dataclass(frozen=True, eq=False)
class EnlargedChain:
    """Perron data of M, ε over A×B, the stochastic conjugate 𝔖 and f, g."""

    model: RationalModel
    lam: float
    e: NDArray[np.float64]
    epsilon: NDArray[np.float64]
    S_frak: StochasticMatrix
    f: NDArray[np.float64]
    g: NDArray[np.float64]

    @property
    def alphabet_size(self) -> int:
        return self.model.alphabet_size

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def epsilon_grid(self) -> NDArray[np.float64]:
        """ε reshaped to (|A|, |B|)."""
        return self.epsilon.reshape(self.alphabet_size, self.dim)

    def index(self, a: int, b: int) -> int:
        return a * self.dim + b

    def state(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.dim)

    def bridge(self, N: int) -> BridgeLaw:
        return BridgeLaw(self.S_frak.entries, self.f, self.g, N)

    def __repr__(self) -> str:
        return f"<EnlargedChain |A|={self.alphabet_size} |B|={self.dim} lambda={self.lam:.6g}>"


def assemble_enlarged(
    model: RationalModel, lam: float, e: ArrayLike
) -> EnlargedChain:
    """Build the enlarged chain from Perron data (λ, e) of M.

    ε(a,b) = λ⁻¹ Σ_{b'} M^(a)_{b,b'} e(b') and 𝔖 = λ⁻¹ ε(a,b)⁻¹ 𝔐 ε(a',b').

    Raises:
        InconsistentEigendata: If Σ_a ε(a,·) misses e or 𝔖 misses stochasticity.
    """
    vec = np.asarray(e, dtype=float)
    if vec.shape != (model.dim,) or np.any(vec <= 0) or lam <= 0:
        raise InconsistentEigendata("Perron data does not match the model")
    if np.any(model.x <= 0) or np.any(model.y <= 0):
        raise ValidationError("enlarged chain needs strictly positive x and y")

    eps_grid = np.einsum("abc,c->ab", model.matrices, vec) / lam
    drift = float(np.max(np.abs(eps_grid.sum(axis=0) - vec)) / np.max(vec))
    if drift > EIGENDATA_TOL:
        raise InconsistentEigendata(f"Σ_a ε(a,b) differs from e(b) by {drift:.3g}")
    epsilon = eps_grid.ravel()
    if np.any(epsilon <= 0):
        raise InconsistentEigendata("ε has a non-positive entry")

    big = enlarged_matrix(model)
    S = big * epsilon[None, :] / (lam * epsilon[:, None])
    row_sums = S.sum(axis=1)
    deviation = float(np.max(np.abs(row_sums - 1.0)))
    if deviation > EIGENDATA_TOL:
        raise InconsistentEigendata(f"𝔖 row sums deviate by {deviation:.3g}")

    f = (model.y[None, :] * eps_grid).ravel()
    g = (model.x[None, :] / eps_grid).ravel()
    return EnlargedChain(
        model=model,
        lam=float(lam),
        e=vec,
        epsilon=epsilon,
        S_frak=StochasticMatrix(S / row_sums[:, None]),
        f=f,
        g=g,
    )


def build_enlarged(model: RationalModel, tol: float = DEFAULT_TOL) -> EnlargedChain:
    """Enlarged chain of a model whose matrices M^(a) are all primitive.

    Raises:
        NotPrimitive: If some M^(a) is reducible or periodic.
    """
    for a in range(model.alphabet_size):
        report = check_primitive(model.matrices[a])
        if not report.primitive:
            raise NotPrimitive(
                f"M^({a}) is not primitive (irreducible={report.irreducible}, "
                f"period={report.period})"
            )
    pd = perron_finite(model.total, tol=tol)
    chain = assemble_enlarged(model, pd.value, pd.right_vector)
    log.info(
        "[rational] enlarged chain built: lambda=%.12g, %d states", pd.value, chain.epsilon.size
    )
    return chain


def perron_of(chain: EnlargedChain) -> PerronData:
    return PerronData(chain.lam, chain.e, 0.0)


def theta_invariant(
    chain: EnlargedChain, theta: ArrayLike, tol: float = 1e-10
) -> NDArray[np.float64]:
    """Θ(a,b) = θ(b) ε(a,b) / e(b), invariant for 𝔖.

    Raises:
        NotStationaryInput: If θ is not a stationary law of the Doob transform of M.
    """
    vec = np.asarray(theta, dtype=float)
    if vec.shape != (chain.dim,) or np.any(vec < 0) or abs(vec.sum() - 1.0) > tol:
        raise NotStationaryInput("theta must be a probability vector over B")
    S = doob_transform(chain.model.total, perron_of(chain))
    residual = float(np.max(np.abs(vec @ S.entries - vec)))
    if residual > tol:
        raise NotStationaryInput(f"theta is not stationary for S (residual {residual:.3g})")
    return np.asarray((vec[None, :] * chain.epsilon_grid / chain.e[None, :]).ravel())


def bridge_probability(law: BridgeLaw, xi: ArrayLike) -> float:
    path = _validate_path(law, xi)
    if law.log_Z == -math.inf:
        raise DegenerateLaw("bridge normalization is zero")
    weights = np.concatenate(
        ([law.f[path[0]]], law.P[path[:-1], path[1:]], [law.g[path[-1]]])
    )
    if np.any(weights <= 0):
        return 0.0
    return math.exp(float(np.sum(np.log(weights))) - law.log_Z)


def bridge_endpoint_law(law: BridgeLaw) -> NDArray[np.float64]:
    """m(s,t) = f(s) (P^N)_{s,t} g(t) / Z."""
    if law.log_Z == -math.inf:
        raise DegenerateLaw("bridge normalization is zero")
    power = np.linalg.matrix_power(law.P, law.N)
    joint = law.f[:, None] * power * law.g[None, :]
    return np.asarray(joint / joint.sum())


def bridge_kernel(law: BridgeLaw, k: int) -> NDArray[np.float64]:
    """Transition matrix from time k to k+1 (1 ≤ k ≤ N) of the conditioned chain.

    Rows of states that cannot carry bridge mass at time k are left zero.
    """
    if not 1 <= k <= law.N:
        raise ValidationError(f"step must lie in 1..{law.N}, got {k}")
    vectors, _ = law._filters
    ahead = vectors[k]
    weights = law.P * ahead[None, :]
    totals = weights.sum(axis=1, keepdims=True)
    return np.asarray(np.divide(weights, totals, out=np.zeros_like(weights), where=totals > 0))


def _draw(rng: np.random.Generator, weights: NDArray[np.float64]) -> NDArray[np.int64]:
    """One categorical draw per row of a non-negative weight matrix."""
    cdf = np.cumsum(weights, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(weights.shape[0])
    return np.asarray((cdf < u[:, None]).sum(axis=1), dtype=np.int64)


def sample_bridges(law: BridgeLaw, n_samples: int, seed: int) -> NDArray[np.int64]:
    """n_samples exact bridge trajectories, shape (n_samples, N+1).

    Backward filters h_k = P h_{k+1} are precomputed; ξ₁ is drawn with
    weights f·h_1 and each next state with weights P_{ξ_k,·}·h_{k+1}.
    """
    if law.log_Z == -math.inf:
        raise DegenerateLaw("bridge normalization is zero")
    rng = np.random.default_rng(seed)
    vectors, _ = law._filters
    paths = np.empty((n_samples, law.N + 1), dtype=np.int64)
    start = law.f * vectors[0]
    paths[:, 0] = _draw(rng, np.broadcast_to(start, (n_samples, law.n_states)))
    for k in range(1, law.N + 1):
        weights = law.P[paths[:, k - 1]] * vectors[k][None, :]
        paths[:, k] = _draw(rng, weights)
    return paths


def sample_bridge(law: BridgeLaw, seed: int) -> NDArray[np.int64]:
    return sample_bridges(law, 1, seed)[0]


def markov_path_probability(
    P: ArrayLike, initial: ArrayLike, xi: ArrayLike
) -> float:
    """initial(ξ₁) Π P_{ξ_i,ξ_{i+1}}."""
    kernel = np.asarray(P, dtype=float)
    path = np.asarray(xi, dtype=np.int64)
    return float(np.asarray(initial, dtype=float)[path[0]] * np.prod(kernel[path[:-1], path[1:]]))


def parallel_model(
    m: ArrayLike,
    stochastic: Sequence[ArrayLike],
    phi: ArrayLike,
    x: ArrayLike | None = None,
    y: ArrayLike | None = None,
) -> RationalModel:
    """M^(a)_{b,b'} = m(a) S^(a)_{b,b'} φ(b)/φ(b'): every M^(a) has Perron vector φ.

    The Perron value of M is then Σ_a m(a), again with right vector φ.
    """
    weights = np.asarray(m, dtype=float)
    phis = np.asarray(phi, dtype=float)
    if np.any(weights <= 0) or np.any(phis <= 0):
        raise ValidationError("parallel model needs positive m and phi")
    if len(stochastic) != weights.size:
        raise ValidationError("need one stochastic matrix per symbol")
    mats = []
    for a, S in enumerate(stochastic):
        kernel = StochasticMatrix(np.asarray(S, dtype=float)).entries
        mats.append(weights[a] * kernel * phis[:, None] / phis[None, :])
    return RationalModel.from_lists(mats, x, y)


def _validate_path(law: BridgeLaw, xi: ArrayLike) -> NDArray[np.int64]:
    path = np.asarray(xi, dtype=np.int64)
    if path.shape != (law.N + 1,):
        raise ValidationError(f"trajectory must have length {law.N + 1}, got {path.size}")
    if np.any(path < 0) or np.any(path >= law.n_states):
        raise ValidationError(f"trajectory states must lie in 0..{law.n_states - 1}")
    return path
