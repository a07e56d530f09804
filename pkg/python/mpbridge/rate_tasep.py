"""
Large-deviation functionals of the TASEP bridge representation.

All functionals are discretized on L cells of [0, 1]. Paths z live on the
L+1 grid points j/L with ż_j = L (z_{j+1} − z_j); per-cell step laws are
(L, 2, 3) arrays indexed [cell, η, step+1] as in mpbridge.tasep.

The boundary terms z(0) log(α/(1−α)) + z(1) log(β/(1−β)) appear in every
functional; α = 1 or β = 1 make the matching log-odds +inf, and 0·inf = 0.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.typing import ArrayLike, NDArray

from mpbridge.exceptions import NoConvergence, RegionViolation, ValidationError
from mpbridge.internal.entropy import (
    binary_entropy,
    binary_entropy_derivative,
    relative_entropy,
)
from mpbridge.rate_finite import RateReport
from mpbridge.tasep import MU_B, MU_I, StepLaw, TasepParams, ld_constants, rho_bar

log = logging.getLogger(__name__)

_STEPS = np.array([-1.0, 0.0, 1.0])
REGION_TOL = 1e-12
DRIFT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Profile:
    """Cell averages ρ_j of a density profile on L cells."""

    rho: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.rho, dtype=float).ravel()
        if arr.size < 1:
            raise ValidationError("profile needs at least one cell")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            raise ValidationError("profile densities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "rho", arr)

    @property
    def L(self) -> int:
        return int(self.rho.size)

    @property
    def F(self) -> NDArray[np.float64]:
        """F(j/L) = ∫_0^{j/L} ρ for j = 0..L."""
        return np.concatenate(([0.0], np.cumsum(self.rho) / self.L))


@dataclass(frozen=True, eq=False)
class MacroTriple:
    z: NDArray[np.float64]
    m: NDArray[np.float64]
    nuB: NDArray[np.float64]
    nuI: NDArray[np.float64]

    def __post_init__(self) -> None:
        z = np.array(self.z, dtype=float).ravel()
        L = z.size - 1
        if L < 1:
            raise ValidationError("z needs at least two grid points")
        m = np.broadcast_to(np.asarray(self.m, dtype=float), (L,)).copy()
        laws = {}
        for name in ("nuB", "nuI"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape == (2, 3):
                arr = np.broadcast_to(arr, (L, 2, 3))
            if arr.shape != (L, 2, 3):
                raise ValidationError(f"{name} must have shape ({L}, 2, 3), got {arr.shape}")
            laws[name] = np.array(arr)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "nuB", laws["nuB"])
        object.__setattr__(self, "nuI", laws["nuI"])

    @property
    def L(self) -> int:
        return int(self.m.size)

    @property
    def z_dot(self) -> NDArray[np.float64]:
        return np.asarray(np.diff(self.z) * self.L)


@dataclass(frozen=True, eq=False)
class GPath:
    """Ġ on L cells with G(0) = 0."""

    Gdot: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = np.array(self.Gdot, dtype=float).ravel()
        if np.any(arr < -REGION_TOL) or np.any(arr > 1 + REGION_TOL):
            raise ValidationError("Gdot must lie in [0, 1]")
        object.__setattr__(self, "Gdot", np.clip(arr, 0.0, 1.0))

    @property
    def G(self) -> NDArray[np.float64]:
        return np.concatenate(([0.0], np.cumsum(self.Gdot) / self.Gdot.size))


@dataclass(frozen=True)
class ProfileOptions:
    """Projected subgradient settings for the profile functional."""

    max_iter: int = 20_000
    clip: float = 1e-12
    # Lower bound of H'' on (0, 1), in the cell-averaged inner product.
    strong_convexity: float = 4.0
    gap_tol: float = 1e-6
    # Iterations between gap evaluations; the solver stops once gap ≤ gap_tol.
    check_every: int = 100


@dataclass(frozen=True, eq=False)
class ProfileValue:
    value: float
    subgradient: NDArray[np.float64]
    argmin_index: int
    extra: dict[str, float] = field(default_factory=dict)


def step_entropy(nu: StepLaw | ArrayLike, mu: StepLaw | ArrayLike) -> float:
    """h(ν|μ) = Σ ν log(ν/μ); +inf when ν charges outside the support of μ."""
    p = nu.probs if isinstance(nu, StepLaw) else np.asarray(nu, dtype=float)
    q = mu.probs if isinstance(mu, StepLaw) else np.asarray(mu, dtype=float)
    return relative_entropy(p, q)


def _log_odds(value: float) -> float:
    return math.inf if value >= 1.0 else math.log(value / (1.0 - value))


def _times(weight: float, log_odds: float) -> float:
    return 0.0 if weight == 0 else weight * log_odds


def boundary_terms(z0: float, z1: float, params: TasepParams) -> float:
    """z(0) log(α/(1−α)) + z(1) log(β/(1−β))."""
    return _times(z0, _log_odds(params.alpha)) + _times(z1, _log_odds(params.beta))


def _mean_step(laws: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.asarray(laws.sum(axis=1) @ _STEPS)


def _support_ok(laws: NDArray[np.float64], reference: StepLaw) -> bool:
    return not np.any((laws > REGION_TOL) & (reference.probs[None] == 0))


def _laws_ok(laws: NDArray[np.float64]) -> bool:
    return bool(
        np.all(laws >= -REGION_TOL)
        and np.all(np.abs(laws.sum(axis=(1, 2)) - 1.0) <= DRIFT_TOL)
    )


def triple_violations(triple: MacroTriple) -> list[str]:
    """Constraints a finite-rate triple must satisfy; empty when admissible."""
    problems = []
    if np.any(triple.z < -REGION_TOL):
        problems.append("z must be non-negative")
    if np.any(triple.m < -REGION_TOL) or np.any(triple.m > 1 + REGION_TOL):
        problems.append("m must lie in [0, 1]")
    if not (_laws_ok(triple.nuB) and _laws_ok(triple.nuI)):
        problems.append("nuB and nuI must be probabilities in every cell")
    if not _support_ok(triple.nuB, MU_B):
        problems.append("nuB charges outside the support of mu^B")
    if not _support_ok(triple.nuI, MU_I):
        problems.append("nuI charges outside the support of mu^I")
    drift = triple.m * _mean_step(triple.nuB) + (1 - triple.m) * _mean_step(triple.nuI)
    if np.max(np.abs(triple.z_dot - drift)) > DRIFT_TOL:
        problems.append("z_dot does not match the mean step of m nuB + (1-m) nuI")
    positive = np.minimum(triple.z[:-1], triple.z[1:]) > REGION_TOL
    if np.any(triple.m[positive] > REGION_TOL):
        problems.append("m must vanish on cells where z > 0")
    return problems


def _cell_entropies(laws: NDArray[np.float64], reference: StepLaw) -> NDArray[np.float64]:
    return np.array([step_entropy(law, reference) for law in laws])


def rate_star(triple: MacroTriple) -> float:
    """(1/L) Σ_j [m_j h(ν^B_j|μ^B) + (1−m_j) h(ν^I_j|μ^I)]; +inf if inadmissible."""
    problems = triple_violations(triple)
    if problems:
        log.debug("[rate_tasep] inadmissible triple: %s", "; ".join(problems))
        return math.inf
    boundary = _cell_entropies(triple.nuB, MU_B)
    interior = _cell_entropies(triple.nuI, MU_I)
    # 0·inf = 0 for the branch a cell does not use.
    weighted = triple.m * np.where(triple.m > 0, boundary, 0.0) + (1 - triple.m) * np.where(
        triple.m < 1, interior, 0.0
    )
    return float(np.mean(weighted))


def rate_S_bridge(triple: MacroTriple, params: TasepParams, c: float | None = None) -> float:
    """Boundary terms + ℐ* + c for the effective-walk bridge.

    c defaults to −log 4 − log(ρ̄(1−ρ̄)), the value calibrate_constant finds.
    """
    star = rate_star(triple)
    if math.isinf(star):
        return math.inf
    constant = ld_constants(params).C if c is None else c
    return boundary_terms(triple.z[0], triple.z[-1], params) + star + constant


def rate_frakS(triple: MacroTriple, params: TasepParams) -> float:
    """Boundary terms + ℐ* + log 2·(1/L) Σ m_j ν^B_j(0,0) + C."""
    star = rate_star(triple)
    if math.isinf(star):
        return math.inf
    visits = float(np.mean(triple.m * triple.nuB[:, 0, 1]))
    return (
        boundary_terms(triple.z[0], triple.z[-1], params)
        + star
        + math.log(2.0) * visits
        + ld_constants(params).C
    )


def rate_pair_contracted(z: ArrayLike, Pi: ArrayLike, params: TasepParams) -> float:
    """Boundary terms + (1/L) Σ h(Π_j|μ^I) + C, the minimum of rate_frakS over splits of Π."""
    path = np.asarray(z, dtype=float).ravel()
    laws = np.asarray(Pi, dtype=float)
    L = path.size - 1
    if laws.shape == (2, 3):
        laws = np.broadcast_to(laws, (L, 2, 3))
    if L < 1 or laws.shape != (L, 2, 3):
        raise ValidationError("Pi must hold one (2, 3) law per cell of z")
    if np.any(path < -REGION_TOL) or not _laws_ok(laws) or not _support_ok(laws, MU_I):
        return math.inf
    if np.max(np.abs(np.diff(path) * L - _mean_step(laws))) > DRIFT_TOL:
        return math.inf
    entropies = _cell_entropies(laws, MU_I)
    return (
        boundary_terms(path[0], path[-1], params)
        + float(np.mean(entropies))
        + ld_constants(params).C
    )


def rate_z_rho(z: ArrayLike, rho: Profile | ArrayLike, params: TasepParams) -> float:
    """Boundary terms + (1/L) Σ [H(ρ_j) + H(ρ_j − ż_j)] + C'.

    +inf unless z ≥ 0, 0 ≤ ρ ≤ 1 and 0 ≤ ρ − ż ≤ 1 in every cell.
    """
    path = np.asarray(z, dtype=float).ravel()
    density = rho.rho if isinstance(rho, Profile) else np.asarray(rho, dtype=float).ravel()
    L = density.size
    if path.size != L + 1:
        raise ValidationError(f"z needs {L + 1} grid points for {L} cells, got {path.size}")
    g = density - np.diff(path) * L
    inside = (
        np.all(path >= -REGION_TOL)
        and np.all((density >= -REGION_TOL) & (density <= 1 + REGION_TOL))
        and np.all((g >= -REGION_TOL) & (g <= 1 + REGION_TOL))
    )
    if not inside:
        return math.inf
    g = np.clip(g, 0.0, 1.0)
    bulk = float(np.mean(binary_entropy(np.clip(density, 0.0, 1.0)) + binary_entropy(g)))
    return boundary_terms(path[0], path[-1], params) + bulk + ld_constants(params).C_prime


def _profile_logs(params: TasepParams) -> tuple[float, float]:
    if params.alpha >= 1.0 or params.beta >= 1.0:
        raise RegionViolation("profile functional needs alpha < 1 and beta < 1")
    return math.log(params.a * params.b), math.log(params.b)


def _objective_batch(
    gdot: NDArray[np.float64],
    rho: NDArray[np.float64],
    log_ab: float,
    log_b: float,
    c_prime: float,
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Objective values and attaining indices for rows of gdot, shape (n, L)."""
    L = rho.size
    F = np.concatenate(([0.0], np.cumsum(rho) / L))
    G = np.concatenate((np.zeros((gdot.shape[0], 1)), np.cumsum(gdot, axis=1) / L), axis=1)
    gap = F[None, :] - G
    argmin = np.argmin(gap, axis=1)
    lowest = gap[np.arange(gap.shape[0]), argmin]
    bulk = np.mean(binary_entropy(rho)[None, :] + binary_entropy(gdot), axis=1)
    value = bulk + log_ab * lowest - log_b * gap[:, -1] + c_prime
    return np.asarray(value), np.asarray(argmin)


def profile_objective(
    gdot: GPath | ArrayLike, rho: Profile | ArrayLike, params: TasepParams
) -> ProfileValue:
    """Discretized profile objective, an L-scaled subgradient and the attaining index.

    (1/L) Σ [H(ρ_j) + H(Ġ_j)] + log(ab)·min_{k=0..L}(F_k − G_k)
        − log(b)·(F_L − G_L) + C'.
    Ties in the minimum go to the lowest index.
    """
    g = gdot.Gdot if isinstance(gdot, GPath) else np.asarray(gdot, dtype=float).ravel()
    profile = rho if isinstance(rho, Profile) else Profile(np.asarray(rho))
    if g.size != profile.L:
        raise ValidationError(f"Gdot has {g.size} cells, profile has {profile.L}")
    log_ab, log_b = _profile_logs(params)
    c_prime = ld_constants(params).C_prime
    values, argmin = _objective_batch(g[None, :], profile.rho, log_ab, log_b, c_prime)
    k = int(argmin[0])
    cells = np.arange(1, profile.L + 1)
    subgradient = binary_entropy_derivative(g) - log_ab * (cells <= k) + log_b
    return ProfileValue(float(values[0]), np.asarray(subgradient), k)


def _gap_bound(best: ProfileValue, best_g: NDArray[np.float64], mu: float) -> float:
    step = np.clip(best_g - best.subgradient / mu, 0.0, 1.0) - best_g
    return -float(np.mean(best.subgradient * step + 0.5 * mu * step**2))


def rate_profile(
    rho: Profile | ArrayLike, params: TasepParams, opts: ProfileOptions | None = None
) -> RateReport:
    """Minimize the profile objective over Ġ ∈ [0, 1]^L.

    Projected subgradient with steps 2/(μ(k+1)) for the strong-convexity
    modulus μ of the entropy part, k-weighted iterate averaging and
    best-iterate tracking. The gap field is the distance to the lower bound
    f(x) + ⟨d, y−x⟩ + (μ/2)|y−x|² minimized over the box, at the best point.
    The gap is evaluated every check_every iterations and the loop stops
    once it falls to gap_tol.

    Raises:
        RegionViolation: If alpha or beta equals 1.
        NoConvergence: If no finite objective value was reached.
    """
    opts = opts or ProfileOptions()
    profile = rho if isinstance(rho, Profile) else Profile(np.asarray(rho))
    _profile_logs(params)
    lo, hi = opts.clip, 1.0 - opts.clip
    mu = opts.strong_convexity

    g = np.clip(profile.rho.copy(), lo, hi)
    average = g.copy()
    weight_total = 0.0
    best = profile_objective(g, profile, params)
    best_g = g.copy()
    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        current = profile_objective(g, profile, params)
        if current.value < best.value:
            best, best_g = current, g.copy()
        g = np.clip(g - 2.0 / (mu * (iteration + 1)) * current.subgradient, lo, hi)
        weight_total += iteration
        average += (g - average) * (iteration / weight_total)
        averaged = profile_objective(average, profile, params)
        if averaged.value < best.value:
            best, best_g = averaged, average.copy()
        if iteration % opts.check_every == 0:
            gap = _gap_bound(best, best_g, mu)
            if gap <= opts.gap_tol:
                break

    if not math.isfinite(best.value):
        raise NoConvergence(
            "profile objective never became finite", iterations=iteration, residual=math.inf
        )
    gap = _gap_bound(best, best_g, mu)
    log.info(
        "[rate_tasep] profile value %.9g after %d iterations (gap bound %.3g)",
        best.value,
        iteration,
        gap,
    )
    return RateReport(
        value=best.value,
        minimizer=best_g,
        gap=gap,
        iterations=iteration,
        converged=gap <= opts.gap_tol,
        boundary=float(min(np.min(best_g), 1.0 - np.max(best_g))),
        extra={"argmin_index": best.argmin_index, "argmin_x": best.argmin_index / profile.L},
    )


def brute_force_profile(
    rho: Profile | ArrayLike,
    params: TasepParams,
    step: float = 0.05,
    refinements: int = 2,
) -> tuple[float, NDArray[np.float64]]:
    """Exhaustive search over the Ġ grid {0, step, …, 1}^L, then local grids.

    Each refinement searches ±step around the incumbent with a ten times
    finer step. Only sensible for L ≤ 4.
    """
    profile = rho if isinstance(rho, Profile) else Profile(np.asarray(rho))
    if profile.L > 4:
        raise ValidationError(f"brute force limited to L ≤ 4, got {profile.L}")
    log_ab, log_b = _profile_logs(params)
    c_prime = ld_constants(params).C_prime
    axis = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    candidates = np.array(list(product(axis, repeat=profile.L)))
    values, _ = _objective_batch(candidates, profile.rho, log_ab, log_b, c_prime)
    best = int(np.argmin(values))
    best_value, best_g = float(values[best]), candidates[best]

    width = step
    for _ in range(refinements):
        fine = width / 10.0
        offsets = np.arange(-10, 11) * fine
        local = [np.clip(center + offsets, 0.0, 1.0) for center in best_g]
        candidates = np.array(list(product(*local)))
        values, _ = _objective_batch(candidates, profile.rho, log_ab, log_b, c_prime)
        best = int(np.argmin(values))
        if values[best] < best_value:
            best_value, best_g = float(values[best]), candidates[best]
        width = fine
    return best_value, best_g


def _tilted_interior(log_odds: float) -> NDArray[np.float64]:
    weights = MU_I.probs * np.exp(log_odds * _STEPS)[None, :]
    return np.asarray(weights / weights.sum())


def typical_triple(params: TasepParams, L: int) -> MacroTriple:
    """Law-of-large-numbers triple of the effective bridge.

    Low density: z descends linearly from 1−2α and ν^I = μ^I e^{θY}/Z with
    e^θ = α/(1−α). High density: z climbs linearly to 1−2β with
    e^θ = (1−β)/β. Maximal current: z ≡ 0 and ν = μ.
    """
    if L < 1:
        raise ValidationError(f"L must be at least 1, got {L}")
    x = np.arange(L + 1) / L
    alpha, beta = params.alpha, params.beta
    if alpha < 0.5 and alpha < beta:
        z = (1.0 - 2.0 * alpha) * (1.0 - x)
        nuI = _tilted_interior(math.log(alpha / (1.0 - alpha)))
    elif beta < 0.5 and beta < alpha:
        z = (1.0 - 2.0 * beta) * x
        nuI = _tilted_interior(math.log((1.0 - beta) / beta))
    else:
        z = np.zeros(L + 1)
        nuI = MU_I.probs
    return MacroTriple(z=z, m=np.zeros(L), nuB=MU_B.probs, nuI=nuI)


def calibrate_constant(params: TasepParams, L: int = 16) -> float:
    """c = −(boundary terms + ℐ*) at the typical triple.

    The result is compared against −log 4 − log(ρ̄(1−ρ̄)) and the
    discrepancy logged.
    """
    triple = typical_triple(params, L)
    c = -(boundary_terms(triple.z[0], triple.z[-1], params) + rate_star(triple))
    expected = -math.log(4.0) - math.log(rho_bar(params) * (1.0 - rho_bar(params)))
    log.info(
        "[rate_tasep] calibrated c=%.12g, closed form C=%.12g (difference %.3g)",
        c,
        expected,
        c - expected,
    )
    return c
