"""
Boundary-driven TASEP as a rational model.

The invariant measure of the open TASEP on N sites (bulk hops at rate 1,
injection α at site 1, extraction β at site N) is ⟨y| Π M^(η_i) |x⟩ / Z_N
with the bidiagonal representation

    E = M^(0):  E[b,b] = E[b,b−1] = 1
    D = M^(1):  D[b,b] = D[b,b+1] = 1

on B = N0, ⟨y| = k̂ (a^b)_b and |x⟩ = k̂ (r^b)_b, where a = (1−α)/α,
r = (1−β)/β and k̂ = √(1 − a·r). The Perron data of M = D + E is λ = 4 and
e(b) = b + 1, so the enlarged chain 𝔖 and the effective walk 𝒮 are known in
closed form with h(a,b) = 2a + 2b + 1 = 4ε(a,b).

Trajectories are stored as two arrays (eta, zeta) of length N+1; the word is
eta[:N] and eta[N] is the extra uniform symbol of the last enlarged state.
Step laws are (2, 3) arrays indexed [η, step+1] for step ∈ {−1, 0, +1}.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from mpbridge.exceptions import (
    PhaseAmbiguous,
    RegionViolation,
    SizeLimit,
    SupportViolation,
    TruncationFailure,
    ValidationError,
)
from mpbridge.rational import (
    BridgeLaw,
    RationalModel,
    Word,
    as_word,
    log_partition_function,
    measure_probability,
    sample_bridges,
)

log = logging.getLogger(__name__)

# Exact 2^N generator solves are limited to this many sites.
MAX_GENERATOR_SITES = 12
MAX_BMAX = 4096
PHASE_TOL = 1e-9


@dataclass(frozen=True)
class TasepParams:
    """Boundary rates α, β in (0, 1] with α + β > 1 (equivalently a·r < 1)."""

    alpha: float
    beta: float
    N: int = 1

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0 < value <= 1):
                raise RegionViolation(f"{name} must lie in (0, 1], got {value}")
        if self.alpha + self.beta <= 1:
            raise RegionViolation(
                f"representation needs a·b < 1, i.e. alpha + beta > 1 "
                f"(got {self.alpha} + {self.beta})"
            )
        if self.N < 1:
            raise ValidationError(f"N must be at least 1, got {self.N}")

    @property
    def a(self) -> float:
        return (1.0 - self.alpha) / self.alpha

    @property
    def b(self) -> float:
        return (1.0 - self.beta) / self.beta

    @property
    def k_hat(self) -> float:
        return math.sqrt((self.alpha + self.beta - 1.0) / (self.alpha * self.beta))

    def with_size(self, N: int) -> "TasepParams":
        return replace(self, N=N)


@dataclass(frozen=True, eq=False)
class TruncatedTasepModel:
    """Rational model restricted to B = {0, …, bmax}."""

    params: TasepParams
    model: RationalModel
    bmax: int
    truncation_error_bound: float

    def __repr__(self) -> str:
        return (
            f"<TruncatedTasepModel alpha={self.params.alpha} beta={self.params.beta} "
            f"N={self.params.N} bmax={self.bmax}>"
        )


@dataclass(frozen=True, eq=False)
class StepLaw:
    """Law of (η_i, ζ_{i+1} − ζ_i) as a (2, 3) array indexed [η, step+1]."""

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=float)
        if arr.shape != (2, 3):
            raise ValidationError(f"step law must have shape (2, 3), got {arr.shape}")
        if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
            raise ValidationError("step law must be a probability")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def from_dict(cls, weights: dict[tuple[int, int], float]) -> "StepLaw":
        arr = np.zeros((2, 3))
        for (eta, step), value in weights.items():
            arr[eta, step + 1] = value
        return cls(arr)

    def __getitem__(self, key: tuple[int, int]) -> float:
        eta, step = key
        return float(self.probs[eta, step + 1])


MU_I = StepLaw.from_dict({(0, 0): 0.25, (0, -1): 0.25, (1, 0): 0.25, (1, 1): 0.25})
MU_B = StepLaw.from_dict({(0, 0): 0.5, (1, 0): 0.25, (1, 1): 0.25})


@dataclass(frozen=True, eq=False)
class TripleEmpirical:
    """ẑ_N on the grid i/N, the split Π̂^B / Π̂^I per bin and π̂^B.

    Pi_B and Pi_I have shape (bins, 2, 3) and index [bin, η, step+1].
    """

    N: int
    bins: int
    z_grid: NDArray[np.float64]
    Pi_B: NDArray[np.float64]
    Pi_I: NDArray[np.float64]

    @property
    def pi_B(self) -> NDArray[np.float64]:
        return np.asarray(self.Pi_B.sum(axis=(1, 2)))

    @property
    def Pi(self) -> NDArray[np.float64]:
        return np.asarray(self.Pi_B + self.Pi_I)

    def z_path(self, x: ArrayLike) -> NDArray[np.float64]:
        """Piecewise-linear interpolation of ẑ_N, exact at x = i/N."""
        grid = np.arange(self.N + 1) / self.N
        return np.asarray(np.interp(np.asarray(x, dtype=float), grid, self.z_grid))


@dataclass(frozen=True)
class LDConstants:
    C: float
    C_prime: float


@dataclass(frozen=True, eq=False)
class FluidPath:
    """ODE solution on x_k = k/grid; m is constant on each step."""

    x: NDArray[np.float64]
    z: NDArray[np.float64]
    m: NDArray[np.float64]
    extra: dict[str, float] = field(default_factory=dict)


def tasep_matrices(bmax: int) -> NDArray[np.float64]:
    """(E, D) truncated to {0, …, bmax}, stacked as shape (2, bmax+1, bmax+1)."""
    if bmax < 0:
        raise ValidationError(f"bmax must be non-negative, got {bmax}")
    dim = bmax + 1
    E = np.eye(dim) + np.eye(dim, k=-1)
    D = np.eye(dim) + np.eye(dim, k=1)
    return np.stack([E, D])


def tasep_vectors(
    params: TasepParams, bmax: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(x, y) with x(b) = k̂ r^b and y(b) = k̂ a^b."""
    b = np.arange(bmax + 1, dtype=float)
    x = params.k_hat * np.power(params.b, b)
    y = params.k_hat * np.power(params.a, b)
    return x, y


def _truncated_model(params: TasepParams, bmax: int) -> RationalModel:
    x, y = tasep_vectors(params, bmax)
    return RationalModel(tasep_matrices(bmax), x, y)


def build_tasep(
    params: TasepParams,
    rel_tol: float = 1e-12,
    bmax: int | None = None,
) -> TruncatedTasepModel:
    """Truncate B adaptively: double bmax from N+2 until Z_N settles.

    With an explicit bmax the truncation is taken as given and the error
    bound is reported as nan.

    Raises:
        TruncationFailure: If Z_N still moves by more than rel_tol at MAX_BMAX.
    """
    N = params.N
    if bmax is not None:
        return TruncatedTasepModel(params, _truncated_model(params, bmax), bmax, math.nan)

    current = N + 2
    log_z = log_partition_function(_truncated_model(params, current), N)
    while True:
        doubled = 2 * current
        if doubled > MAX_BMAX:
            raise TruncationFailure(
                f"Z_{N} did not settle below bmax={MAX_BMAX} (alpha={params.alpha}, "
                f"beta={params.beta})"
            )
        log_z_doubled = log_partition_function(_truncated_model(params, doubled), N)
        change = abs(math.expm1(log_z_doubled - log_z))
        log.debug("[tasep] bmax %d -> %d, relative change %.3g", current, doubled, change)
        if change < rel_tol:
            log.info("[tasep] truncated at bmax=%d (relative change %.3g)", current, change)
            return TruncatedTasepModel(
                params, _truncated_model(params, current), current, change
            )
        current, log_z = doubled, log_z_doubled


def tasep_probability(model: TruncatedTasepModel, eta: Word | ArrayLike | str) -> float:
    """μ_N(η) from the truncated matrix products."""
    word = as_word(eta, 2)
    if len(word) != model.params.N:
        raise ValidationError(f"word must have length {model.params.N}, got {len(word)}")
    return measure_probability(model.model, word)


def tasep_epsilon(bmax: int) -> NDArray[np.float64]:
    """ε(a,b) = (2a + 2b + 1)/4 as a (2, bmax+1) grid."""
    a = np.arange(2)[:, None]
    b = np.arange(bmax + 1)[None, :]
    return np.asarray((2 * a + 2 * b + 1) / 4.0)


def _check_state(state: tuple[int, int]) -> tuple[int, int]:
    a, b = (int(v) for v in state)
    if a not in (0, 1) or b < 0:
        raise ValidationError(f"state must lie in {{0,1}}×N0, got {state}")
    return a, b


def _matrix_entry(a: int, b: int, b_next: int) -> int:
    step = b_next - b
    return int(step == 0 or step == (1 if a == 1 else -1))


def _h(a: int, b: int) -> int:
    return 2 * a + 2 * b + 1


def frak_S_entry(state: tuple[int, int], next_state: tuple[int, int]) -> float:
    """𝔖((a,b),(a',b')) = h(a',b') M^(a)_{b,b'} / (4 h(a,b))."""
    a, b = _check_state(state)
    a2, b2 = _check_state(next_state)
    return _matrix_entry(a, b, b2) * _h(a2, b2) / (4.0 * _h(a, b))


def effective_S_entry(state: tuple[int, int], next_state: tuple[int, int]) -> float:
    """𝒮((a,b),(a',b')) = M^(a)_{b,b'}/4, doubled out of (0,0)."""
    a, b = _check_state(state)
    _, b2 = _check_state(next_state)
    boost = 2.0 if (a, b) == (0, 0) else 1.0
    return boost * _matrix_entry(a, b, b2) / 4.0


def _enlarged_tasep(bmax: int) -> NDArray[np.float64]:
    E, D = tasep_matrices(bmax)
    return np.vstack([np.tile(E, (1, 2)), np.tile(D, (1, 2))])


def frak_S_matrix(bmax: int) -> NDArray[np.float64]:
    """𝔖 on {0,1}×{0..bmax}, index a·(bmax+1)+b; rows at b = bmax are sub-stochastic."""
    h = 4.0 * tasep_epsilon(bmax).ravel()
    return np.asarray(_enlarged_tasep(bmax) * h[None, :] / (4.0 * h[:, None]))


def effective_S_matrix(bmax: int) -> NDArray[np.float64]:
    S = _enlarged_tasep(bmax) / 4.0
    S[0] *= 2.0
    return np.asarray(S)


def tasep_bridge_law(model: TruncatedTasepModel) -> BridgeLaw:
    """Bridge of 𝔖 with f = y·ε and g = x/ε on the truncated state space."""
    eps = tasep_epsilon(model.bmax)
    f = (model.model.y[None, :] * eps).ravel()
    g = (model.model.x[None, :] / eps).ravel()
    return BridgeLaw(frak_S_matrix(model.bmax), f, g, model.params.N)


def sample_tasep_bridges(
    params: TasepParams,
    n_samples: int,
    seed: int,
    rel_tol: float = 1e-12,
    bmax: int | None = None,
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Exact bridge samples of 𝔖 as (eta, zeta), each of shape (n_samples, N+1).

    eta[:, :N] is distributed as the truncated μ_N.
    """
    model = build_tasep(params, rel_tol=rel_tol, bmax=bmax)
    paths = sample_bridges(tasep_bridge_law(model), n_samples, seed)
    eta, zeta = np.divmod(paths, model.bmax + 1)
    return eta, zeta


def sample_tasep_bridge(
    params: TasepParams, seed: int, rel_tol: float = 1e-12, bmax: int | None = None
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    eta, zeta = sample_tasep_bridges(params, 1, seed, rel_tol=rel_tol, bmax=bmax)
    return eta[0], zeta[0]


def reweighting_weights(
    params: TasepParams, eta: ArrayLike, zeta: ArrayLike
) -> tuple[float, float]:
    """Both unnormalized sides of the 𝔖-to-𝒮 bridge reweighting.

    Left: f(ξ₁) Π 𝔖(ξ_i, ξ_{i+1}) g(ξ_{N+1}).
    Right: (f/h)(ξ₁) Π 𝒮(ξ_i, ξ_{i+1}) (g·h)(ξ_{N+1}) · 2^{−#{i ≤ N: ξ_i = (0,0)}}.
    """
    etas, zetas = _check_path(eta, zeta)
    k_hat = params.k_hat
    y1 = k_hat * params.a ** zetas[0]
    x_end = k_hat * params.b ** zetas[-1]
    h_first = _h(etas[0], zetas[0])
    h_last = _h(etas[-1], zetas[-1])
    states = list(zip(etas.tolist(), zetas.tolist()))

    lhs = y1 * h_first / 4.0 * x_end * 4.0 / h_last
    rhs = y1 / 4.0 * x_end * 4.0
    visits = 0
    for i in range(len(states) - 1):
        lhs *= frak_S_entry(states[i], states[i + 1])
        rhs *= effective_S_entry(states[i], states[i + 1])
        visits += states[i] == (0, 0)
    return lhs, rhs * 2.0 ** (-visits)


def _check_path(eta: ArrayLike, zeta: ArrayLike) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    etas = np.asarray(eta, dtype=np.int64).ravel()
    zetas = np.asarray(zeta, dtype=np.int64).ravel()
    if etas.shape != zetas.shape or etas.size < 2:
        raise ValidationError("eta and zeta must have the same length N+1 ≥ 2")
    if np.any((etas != 0) & (etas != 1)) or np.any(zetas < 0):
        raise ValidationError("eta must be 0/1 and zeta non-negative")
    return etas, zetas


def _law_grid(gamma: StepLaw | ArrayLike | Sequence[StepLaw]) -> NDArray[np.float64]:
    """Bin-wise step laws as an (L, 2, 3) array."""
    if isinstance(gamma, StepLaw):
        return gamma.probs[None, :, :]
    if isinstance(gamma, (list, tuple)) and gamma and isinstance(gamma[0], StepLaw):
        return np.stack([law.probs for law in gamma])
    arr = np.asarray(gamma, dtype=float)
    if arr.shape == (2, 3):
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (2, 3) or arr.shape[0] < 1:
        raise ValidationError(f"step laws must have shape (L, 2, 3), got {arr.shape}")
    for law in arr:
        StepLaw(law)
    return arr


def _check_support(grid: NDArray[np.float64], reference: StepLaw, name: str) -> None:
    outside = (grid > 0) & (reference.probs[None] == 0)
    if np.any(outside):
        j, eta, col = (int(v) for v in np.argwhere(outside)[0])
        raise SupportViolation(
            f"{name} in bin {j} charges (eta={eta}, step={col - 1}) outside its reference support"
        )


def _step_bins(N: int, bins: int) -> NDArray[np.int64]:
    """Bin of i/N for i = 1..N under ((j−1)/L, j/L]."""
    i = np.arange(1, N + 1)
    return (i * bins - 1) // N


def sample_tilted_batch(
    gammaI: StepLaw | ArrayLike | Sequence[StepLaw],
    gammaB: StepLaw | ArrayLike | Sequence[StepLaw],
    N: int,
    z0_index: int,
    n_runs: int,
    seed: int,
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """n_runs independent tilted walks as (eta, zeta) of shape (n_runs, N+1).

    Step i draws (η_i, ζ_{i+1} − ζ_i) from γ^I(i/N) when ζ_i > 0 and from
    γ^B(i/N) when ζ_i = 0; η_{N+1} is a fair coin.

    Raises:
        SupportViolation: If a law charges outside the matching μ support.
    """
    if N < 1 or z0_index < 0 or n_runs < 1:
        raise ValidationError("need N ≥ 1, z0_index ≥ 0 and n_runs ≥ 1")
    interior = _law_grid(gammaI)
    boundary = _law_grid(gammaB)
    _check_support(interior, MU_I, "gammaI")
    _check_support(boundary, MU_B, "gammaB")
    cdf_I = np.cumsum(interior.reshape(interior.shape[0], 6), axis=1)
    cdf_B = np.cumsum(boundary.reshape(boundary.shape[0], 6), axis=1)
    bins_I = _step_bins(N, interior.shape[0])
    bins_B = _step_bins(N, boundary.shape[0])

    rng = np.random.default_rng(seed)
    eta = np.empty((n_runs, N + 1), dtype=np.int64)
    zeta = np.empty((n_runs, N + 1), dtype=np.int64)
    zeta[:, 0] = z0_index
    for i in range(N):
        cdf = np.where(
            (zeta[:, i] > 0)[:, None], cdf_I[bins_I[i]][None, :], cdf_B[bins_B[i]][None, :]
        )
        u = rng.random(n_runs) * cdf[:, -1]
        cell = np.minimum((cdf <= u[:, None]).sum(axis=1), 5)
        eta[:, i], col = np.divmod(cell, 3)
        zeta[:, i + 1] = zeta[:, i] + col - 1
    eta[:, N] = rng.integers(0, 2, size=n_runs)
    return eta, zeta


def sample_tilted(
    gammaI: StepLaw | ArrayLike | Sequence[StepLaw],
    gammaB: StepLaw | ArrayLike | Sequence[StepLaw],
    N: int,
    z0_index: int,
    seed: int,
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    eta, zeta = sample_tilted_batch(gammaI, gammaB, N, z0_index, 1, seed)
    return eta[0], zeta[0]


def sample_effective(
    params: TasepParams | None, N: int, z0_index: int, seed: int
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Exact sample of the effective walk 𝒮 from ℬ_{1/2}(η₁)·δ_{ζ₁}.

    The walk does not depend on the boundary rates, so params may be None.
    """
    return sample_tilted(MU_I, MU_B, N, z0_index, seed)


def _path_steps(
    eta: ArrayLike, zeta: ArrayLike
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    etas, zetas = _check_path(eta, zeta)
    steps = np.diff(zetas)
    if np.any(np.abs(steps) > 1):
        raise ValidationError("zeta must move by −1, 0 or +1 per step")
    return etas, zetas, steps


def _step_probabilities(
    etas: NDArray[np.int64],
    zetas: NDArray[np.int64],
    steps: NDArray[np.int64],
    interior: NDArray[np.float64],
    boundary: NDArray[np.float64],
) -> NDArray[np.float64]:
    N = steps.size
    at_boundary = zetas[:-1] == 0
    pI = interior[_step_bins(N, interior.shape[0]), etas[:-1], steps + 1]
    pB = boundary[_step_bins(N, boundary.shape[0]), etas[:-1], steps + 1]
    return np.asarray(np.where(at_boundary, pB, pI))


def tilted_path_probability(
    eta: ArrayLike,
    zeta: ArrayLike,
    gammaI: StepLaw | ArrayLike | Sequence[StepLaw],
    gammaB: StepLaw | ArrayLike | Sequence[StepLaw],
) -> float:
    """Probability of (eta, zeta) under the tilted walk started at zeta[0]."""
    etas, zetas, steps = _path_steps(eta, zeta)
    probs = _step_probabilities(etas, zetas, steps, _law_grid(gammaI), _law_grid(gammaB))
    return 0.5 * float(np.prod(probs))


def effective_path_probability(eta: ArrayLike, zeta: ArrayLike) -> float:
    return tilted_path_probability(eta, zeta, MU_I, MU_B)


def effective_log_rn(
    eta: ArrayLike,
    zeta: ArrayLike,
    gammaI: StepLaw | ArrayLike | Sequence[StepLaw],
    gammaB: StepLaw | ArrayLike | Sequence[StepLaw],
) -> float:
    """log dℙ^γ/dℙ^𝒮 along a path: Σ_i log(γ(i/N)/μ) at (η_i, ζ_{i+1} − ζ_i).

    Returns −inf when the tilted law gives the path probability zero.

    Raises:
        ValidationError: If the path is impossible for the effective walk.
    """
    etas, zetas, steps = _path_steps(eta, zeta)
    tilted = _step_probabilities(etas, zetas, steps, _law_grid(gammaI), _law_grid(gammaB))
    reference = _step_probabilities(
        etas, zetas, steps, MU_I.probs[None], MU_B.probs[None]
    )
    if np.any(reference == 0):
        raise ValidationError("path has zero probability under the effective walk")
    if np.any(tilted == 0):
        return -math.inf
    return float(np.sum(np.log(tilted) - np.log(reference)))


def triple_empirical(eta: ArrayLike, zeta: ArrayLike, bins: int) -> TripleEmpirical:
    """ẑ_N(i/N) = ζ_{i+1}/N and Π̂ with mass 1/N at (η_i, ζ_{i+1} − ζ_i), i = 1..N.

    Step i goes to Π̂^B when ζ_i = 0 and to Π̂^I otherwise.
    """
    if bins < 1:
        raise ValidationError(f"bins must be at least 1, got {bins}")
    etas, zetas, steps = _path_steps(eta, zeta)
    N = steps.size
    bin_of = _step_bins(N, bins)
    boundary = zetas[:-1] == 0
    Pi_B = np.zeros((bins, 2, 3))
    Pi_I = np.zeros((bins, 2, 3))
    np.add.at(Pi_B, (bin_of[boundary], etas[:-1][boundary], steps[boundary] + 1), 1.0 / N)
    np.add.at(Pi_I, (bin_of[~boundary], etas[:-1][~boundary], steps[~boundary] + 1), 1.0 / N)
    return TripleEmpirical(N, bins, zetas / N, Pi_B, Pi_I)


def nu_hat_00(triple: TripleEmpirical) -> float:
    """Fraction of steps i ≤ N with ξ_i = (0,0), read off Π̂^B."""
    return float(triple.Pi_B[:, 0, 1].sum())


def _configurations(N: int) -> NDArray[np.int64]:
    """occupations[s, i] of site i+1 in configuration s = Σ η_i 2^{N−i}."""
    states = np.arange(2**N)
    shifts = np.arange(N - 1, -1, -1)
    return np.asarray((states[:, None] >> shifts[None, :]) & 1)


def generator_stationary(params: TasepParams) -> NDArray[np.float64]:
    """Stationary law of the TASEP generator on {0,1}^N.

    Configuration η is indexed by the binary number η_1 η_2 … η_N, so the
    order matches itertools.product over {0,1}.

    Raises:
        SizeLimit: If N > MAX_GENERATOR_SITES.
    """
    N = params.N
    if N > MAX_GENERATOR_SITES:
        raise SizeLimit(f"generator solve limited to N ≤ {MAX_GENERATOR_SITES}, got {N}")
    n_states = 2**N
    occ = _configurations(N)
    states = np.arange(n_states)
    rows, cols, rates = [], [], []

    empty_first = occ[:, 0] == 0
    rows.append(states[empty_first])
    cols.append(states[empty_first] | (1 << (N - 1)))
    rates.append(np.full(int(empty_first.sum()), params.alpha))

    full_last = occ[:, N - 1] == 1
    rows.append(states[full_last])
    cols.append(states[full_last] ^ 1)
    rates.append(np.full(int(full_last.sum()), params.beta))

    for i in range(N - 1):
        hop = (occ[:, i] == 1) & (occ[:, i + 1] == 0)
        flip = (1 << (N - 1 - i)) | (1 << (N - 2 - i))
        rows.append(states[hop])
        cols.append(states[hop] ^ flip)
        rates.append(np.ones(int(hop.sum())))

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    q = np.concatenate(rates)
    Q = sparse.coo_matrix((q, (r, c)), shape=(n_states, n_states)).tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())

    # πQ = 0 has rank n−1; the last balance equation is swapped for Σπ = 1.
    system = Q.T.tolil()
    system[n_states - 1, :] = np.ones(n_states)
    rhs = np.zeros(n_states)
    rhs[-1] = 1.0
    pi = sparse_linalg.spsolve(system.tocsc(), rhs)
    log.debug("[tasep] generator solve N=%d, %d transitions", N, q.size)
    return np.asarray(pi)


def mid_density(params: TasepParams) -> float:
    """Mean occupation of the middle site(s) under the generator oracle."""
    pi = generator_stationary(params)
    occ = _configurations(params.N)
    N = params.N
    middle = [(N - 1) // 2, N // 2]
    return float(np.mean([pi @ occ[:, j] for j in sorted(set(middle))]))


def rho_bar(params: TasepParams) -> float:
    """Bulk density: α in the low-density phase, 1−β in the high-density
    phase, 1/2 in the maximal-current phase.

    A PhaseAmbiguous warning is issued within PHASE_TOL of a phase boundary.
    """
    alpha, beta = params.alpha, params.beta
    on_low_edge = abs(alpha - 0.5) < PHASE_TOL and beta >= 0.5 - PHASE_TOL
    on_high_edge = abs(beta - 0.5) < PHASE_TOL and alpha >= 0.5 - PHASE_TOL
    if on_low_edge or on_high_edge:
        message = f"(alpha={alpha}, beta={beta}) lies on a phase boundary"
        log.warning("[tasep] %s", message)
        warnings.warn(message, PhaseAmbiguous, stacklevel=2)
    if alpha < 0.5 and alpha < beta:
        return alpha
    if beta < 0.5 and beta < alpha:
        return 1.0 - beta
    return 0.5


def ld_constants(params: TasepParams) -> LDConstants:
    """C = −log 4 − log(ρ̄(1−ρ̄)) and C' = C + log 4."""
    rho = rho_bar(params)
    C = -math.log(4.0) - math.log(rho * (1.0 - rho))
    return LDConstants(C=C, C_prime=C + math.log(4.0))


def fluid_limit_ode(
    gammaI: StepLaw | ArrayLike | Sequence[StepLaw],
    gammaB: StepLaw | ArrayLike | Sequence[StepLaw],
    z0: float,
    grid: int,
) -> FluidPath:
    """Forward Euler for ż = m γ^B_{1,+1} + (1−m)(γ^I_{1,+1} − γ^I_{0,−1}).

    m = 0 while z > 0. At z = 0 with negative interior drift v, m solves
    ż = 0, i.e. m = −v / (γ^B_{1,+1} − v), and the path sticks. Bin-wise
    laws are read at the midpoint of each Euler step.
    """
    if z0 < 0 or grid < 1:
        raise ValidationError("need z0 ≥ 0 and grid ≥ 1")
    interior = _law_grid(gammaI)
    boundary = _law_grid(gammaB)
    x = np.arange(grid + 1) / grid
    mid = (np.arange(grid) + 0.5) / grid
    drift = (interior[:, 1, 2] - interior[:, 0, 0])[
        np.minimum((mid * interior.shape[0]).astype(int), interior.shape[0] - 1)
    ]
    up_boundary = boundary[:, 1, 2][
        np.minimum((mid * boundary.shape[0]).astype(int), boundary.shape[0] - 1)
    ]

    z = np.empty(grid + 1)
    m = np.zeros(grid)
    z[0] = z0
    dt = 1.0 / grid
    for k in range(grid):
        v = drift[k]
        if z[k] <= 0.0 and v < 0.0:
            m[k] = -v / (up_boundary[k] - v)
            slope = m[k] * up_boundary[k] + (1.0 - m[k]) * v
        else:
            slope = v
        z[k + 1] = max(z[k] + dt * slope, 0.0)
    return FluidPath(x=x, z=z, m=m)
