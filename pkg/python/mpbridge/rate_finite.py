"""
Pair rate functional of finite rational models.

The rate of the pair empirical measure ν² is

    I²(ν²) = inf Σ 𝒞² log(𝒞² / (𝒞¹ M^(a)_{b,b'})) + log λ

over stationary pair laws 𝒞² on A×B whose A²-marginal is ν². Its dual is

    sup_p Σ ν²(a,a') log p(a,a') + log λ − log k(p),

where k(p) is the Perron value of the tilted matrix M^(a)_{b,b'} p(a,a').
D is invariant under p(a,a') → c·p(a,a') u(a)/u(a'), and every positive p
is equivalent to a row-stochastic one, so reported tilts are stochastic.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize

from mpbridge.empirical import GeneralizedSpatialMeasure, KWordMeasure
from mpbridge.exceptions import (
    BoundaryOptimum,
    Infeasible,
    NoConvergence,
    NotPrimitive,
    ValidationError,
)
from mpbridge.internal.entropy import is_probability, relative_entropy
from mpbridge.perron import (
    check_primitive,
    doob_transform,
    perron_dense,
    stationary_distribution,
)
from mpbridge.rational import (
    RationalModel,
    build_enlarged,
    enlarged_matrix,
    perron_of,
    theta_invariant,
)

log = logging.getLogger(__name__)

# Line search of the iterative scaling solver.
_ARMIJO = 1e-4
_MIN_STEP = 1e-12
_STEP_GROWTH_RESIDUAL = 1e-4
_TINY = 1e-300


@dataclass(frozen=True)
class RateOptions:
    """Solver settings shared by the primal and dual pair-rate solvers."""

    tol: float = 1e-10
    grad_tol: float = 1e-12
    max_iter: int = 100_000
    log_p_bound: float = 40.0
    stationarity_tol: float = 1e-9
    raise_infeasible: bool = False


@dataclass(frozen=True, eq=False)
class RateReport:
    """Value of a rate functional with the optimizer and diagnostics."""

    value: float
    minimizer: NDArray[np.float64] | None = None
    gap: float = math.nan
    iterations: int = 0
    converged: bool = True
    feasible: bool = True
    boundary: float = math.nan
    constraint_residual: float = 0.0
    message: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "value": self.value,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
            "boundary": self.boundary,
            "constraint_residual": self.constraint_residual,
        }
        if self.minimizer is not None:
            record["minimizer"] = np.asarray(self.minimizer).tolist()
        if self.message:
            record["message"] = self.message
        record.update(self.extra)
        return record


@dataclass(frozen=True, eq=False)
class TiltedPerron:
    k: float
    gamma: NDArray[np.float64]


def _pair_array(nu2: KWordMeasure | ArrayLike, alphabet_size: int) -> NDArray[np.float64]:
    arr = np.asarray(nu2.weights if isinstance(nu2, KWordMeasure) else nu2, dtype=float)
    if arr.shape != (alphabet_size, alphabet_size):
        raise ValidationError(
            f"pair measure must have shape ({alphabet_size}, {alphabet_size}), got {arr.shape}"
        )
    return arr


def _infeasibility(
    model: RationalModel, nu: NDArray[np.float64], tol: float
) -> str | None:
    """Reason why no 𝒞² matches ν², or None."""
    if not is_probability(nu, tol):
        return "pair measure is not a probability"
    if np.max(np.abs(nu.sum(axis=0) - nu.sum(axis=1))) > tol:
        return "pair measure is not finite-stationary"
    blocks = model.matrices.reshape(model.alphabet_size, -1).max(axis=1)
    charged = nu > tol
    dead = charged & (blocks[:, None] <= 0)
    if np.any(dead):
        a, a2 = (int(i) for i in np.argwhere(dead)[0])
        return f"pair ({a},{a2}) is charged but M^({a}) vanishes"
    return None


def _infeasible_report(reason: str, opts: RateOptions) -> RateReport:
    if opts.raise_infeasible:
        raise Infeasible(reason)
    log.info("[rate_finite] infeasible input: %s", reason)
    return RateReport(value=math.inf, feasible=False, message=reason)


def tilted_matrix(model: RationalModel, p: ArrayLike) -> NDArray[np.float64]:
    """Entries M^(a)_{b,b'} p(a,a') on the enlarged state space."""
    tilt = np.asarray(p, dtype=float)
    return np.asarray(enlarged_matrix(model) * np.kron(tilt, np.ones((model.dim, model.dim))))


def tilted_perron(model: RationalModel, p: ArrayLike) -> TiltedPerron:
    """Perron value k(p) and vector γ (max entry 1) of the tilted matrix.

    Raises:
        NotPrimitive: If the tilted matrix is reducible or periodic.
    """
    tilt = np.asarray(p, dtype=float)
    if tilt.shape != (model.alphabet_size,) * 2 or np.any(tilt <= 0):
        raise ValidationError("tilt must be a positive |A|×|A| matrix")
    T = tilted_matrix(model, tilt)
    report = check_primitive(T)
    if not report.primitive:
        raise NotPrimitive(f"tilted matrix is not primitive (period={report.period})")
    pd, _ = perron_dense(T)
    return TiltedPerron(pd.value, pd.right_vector)


def _tilted_state(
    model: RationalModel, p: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    """k(p) and the stationary pair law on (A×B)² of the tilted Doob chain."""
    T = tilted_matrix(model, p)
    pd, left = perron_dense(T)
    right = pd.right_vector
    W = left[:, None] * T * right[None, :]
    return pd.value, np.asarray(W / W.sum())


def _symbol_marginal(model: RationalModel, W: NDArray[np.float64]) -> NDArray[np.float64]:
    A, B = model.alphabet_size, model.dim
    return np.asarray(W.reshape(A, B, A, B).sum(axis=(1, 3)))


def _dual_value(nu: NDArray[np.float64], log_p: NDArray[np.float64], lam: float, k: float) -> float:
    charged = nu > 0
    return float(np.sum(nu[charged] * log_p[charged]) + math.log(lam) - math.log(k))


def _stochastic_gauge(p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-stochastic representative p(a,a') v(a') / (ρ v(a)) with (ρ, v) Perron of p."""
    pd, _ = perron_dense(p)
    v = pd.right_vector
    return np.asarray(p * v[None, :] / (pd.value * v[:, None]))


def _primal_from_pair_law(
    model: RationalModel, nu: NDArray[np.float64], W: NDArray[np.float64], lam: float
) -> tuple[float, NDArray[np.float64], float]:
    """Rescale W blockwise to the exact A²-marginal ν² and evaluate the primal.

    Returns the primal value, the rescaled 𝒞² and its stationarity residual.
    """
    A, B = model.alphabet_size, model.dim
    blocks = W.reshape(A, B, A, B)
    marginal = blocks.sum(axis=(1, 3))
    scale = np.divide(nu, marginal, out=np.zeros_like(nu), where=marginal > 0)
    C2 = (blocks * scale[:, None, :, None]).reshape(A * B, A * B)
    C1 = C2.sum(axis=1)
    reference = C1[:, None] * enlarged_matrix(model)
    value = relative_entropy(C2, reference) + math.log(lam)
    residual = float(np.max(np.abs(C2.sum(axis=0) - C1)))
    return value, C2, residual


def pair_rate_primal(
    model: RationalModel,
    nu2: KWordMeasure | ArrayLike,
    opts: RateOptions | None = None,
) -> RateReport:
    """Minimize the relative-entropy functional over matching stationary 𝒞².

    The minimizer has the form 𝒞² ∝ l(a,b) M^(a)_{b,b'} p(a,a') r(a',b'),
    the stationary pair law of the Doob transform of the tilted matrix.
    The tilt is fitted by damped iterative scaling p ← p·(ν²/G(p))^η, where
    G(p) is the A²-marginal of that pair law. The step η starts at 1, is
    halved until D(p) rises by an Armijo fraction of the predicted ascent,
    and is only allowed to grow again while the residual is large. Pairs
    with ν² = 0 keep the floor tilt exp(−2·opts.log_p_bound). The fitted law
    is finally rescaled block by block onto the exact marginal ν².

    Raises:
        NoConvergence: If the marginal residual stays above opts.tol, or the
            line search cannot find an ascent step.
    """
    opts = opts or RateOptions()
    nu = _pair_array(nu2, model.alphabet_size)
    reason = _infeasibility(model, nu, opts.stationarity_tol)
    if reason is not None:
        return _infeasible_report(reason, opts)

    lam = perron_dense(model.total)[0].value
    lower = -2.0 * opts.log_p_bound
    charged = nu > 0
    log_p = np.where(charged, 0.0, lower)
    k, W = _tilted_state(model, np.exp(log_p))
    value = _dual_value(nu, log_p, lam, k)
    step = 1.0
    residual = math.inf
    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        G = _symbol_marginal(model, W)
        residual = float(np.max(np.abs(G - nu)))
        if residual <= opts.tol:
            break
        if residual > _STEP_GROWTH_RESIDUAL:
            step = min(1.0, 2.0 * step)
        direction = np.zeros_like(nu)
        direction[charged] = np.log(nu[charged]) - np.log(np.maximum(G[charged], _TINY))
        ascent = float(np.sum((nu - G)[charged] * direction[charged]))
        # Rounding-level decreases of D count as ascent.
        slack = 1e-13 * (1.0 + abs(value))
        while True:
            trial = np.maximum(log_p + step * direction, lower)
            trial[charged] -= np.max(trial[charged])
            k_trial, W_trial = _tilted_state(model, np.exp(trial))
            trial_value = _dual_value(nu, trial, lam, k_trial)
            if trial_value >= value + _ARMIJO * step * ascent - slack:
                break
            step *= 0.5
            if step < _MIN_STEP:
                raise NoConvergence(
                    f"iterative scaling line search failed at residual {residual:.3g}",
                    iterations=iteration,
                    residual=residual,
                )
        log_p, k, W, value = trial, k_trial, W_trial, trial_value
    else:
        raise NoConvergence(
            f"iterative scaling marginal residual {residual:.3g} after {opts.max_iter} iterations",
            iterations=opts.max_iter,
            residual=residual,
        )

    primal, C2, stationarity = _primal_from_pair_law(model, nu, W, lam)
    log.info(
        "[rate_finite] primal %.12g after %d scaling steps (dual %.12g, step %.3g)",
        primal,
        iteration,
        value,
        step,
    )
    return RateReport(
        value=primal,
        minimizer=C2,
        gap=primal - value,
        iterations=iteration,
        converged=True,
        boundary=float(np.min(_stochastic_gauge(np.exp(log_p)))),
        constraint_residual=max(residual, stationarity),
    )


def pair_rate_dual(
    model: RationalModel,
    nu2: KWordMeasure | ArrayLike,
    opts: RateOptions | None = None,
) -> RateReport:
    """Maximize D(p) = Σ ν² log p + log λ − log k(p) in the log-parameters.

    The gradient of log k is the A²-marginal of the tilted Doob chain's pair
    law, built from the left and right Perron vectors. L-BFGS-B runs in
    u = log p inside the box |u| ≤ opts.log_p_bound; its Wolfe line search
    only accepts improving steps. The reported tilt is the row-stochastic
    representative of the optimum.

    Raises:
        NoConvergence: If the optimizer stops with a large projected gradient.
    """
    opts = opts or RateOptions()
    nu = _pair_array(nu2, model.alphabet_size)
    reason = _infeasibility(model, nu, opts.stationarity_tol)
    if reason is not None:
        return _infeasible_report(reason, opts)

    lam = perron_dense(model.total)[0].value
    shape = nu.shape

    def negative_dual(u: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        log_p = u.reshape(shape)
        k, W = _tilted_state(model, np.exp(log_p))
        G = _symbol_marginal(model, W)
        return -_dual_value(nu, log_p, lam, k), -(nu - G).ravel()

    bound = opts.log_p_bound
    result = optimize.minimize(
        negative_dual,
        np.zeros(nu.size),
        jac=True,
        method="L-BFGS-B",
        bounds=[(-bound, bound)] * nu.size,
        options={"maxiter": opts.max_iter, "ftol": 1e-16, "gtol": opts.grad_tol},
    )
    u = np.asarray(result.x)
    _, grad = negative_dual(u)
    free = (u > -bound + 1e-9) & (u < bound - 1e-9)
    projected = float(np.max(np.abs(grad[free]))) if np.any(free) else 0.0
    if not result.success and projected > 1e-6:
        raise NoConvergence(
            f"dual ascent stopped ({result.message}) with gradient {projected:.3g}",
            iterations=int(result.nit),
            residual=projected,
        )
    if np.any(u <= -bound + 1e-9):
        warnings.warn(
            f"dual optimum reached the log-tilt bound -{bound}", BoundaryOptimum, stacklevel=2
        )

    p = _stochastic_gauge(np.exp(u.reshape(shape)))
    k, W = _tilted_state(model, p)
    value = _dual_value(nu, np.log(p), lam, k)
    primal, _, stationarity = _primal_from_pair_law(model, nu, W, lam)
    log.info("[rate_finite] dual %.12g after %d iterations", value, result.nit)
    return RateReport(
        value=value,
        minimizer=p,
        gap=primal - value,
        iterations=int(result.nit),
        converged=bool(result.success) or projected <= 1e-6,
        boundary=float(np.min(p)),
        constraint_residual=stationarity,
        message=str(result.message),
    )


def typical_pair_measure(model: RationalModel) -> NDArray[np.float64]:
    """A²-projection of the stationary enlarged pair law Θ(s)𝔖(s,t)."""
    chain = build_enlarged(model)
    theta = stationary_distribution(doob_transform(model.total, perron_of(chain)))
    Theta = theta_invariant(chain, theta)
    W = Theta[:, None] * chain.S_frak.entries
    return _symbol_marginal(model, W)


def rate_parallel_case(m: ArrayLike, nu2: KWordMeasure | ArrayLike) -> float:
    """Σ ν² log(ν²(a,a') / (ν¹(a) ℙ(a'))) with ℙ = m / Σm."""
    weights = np.asarray(m, dtype=float)
    if weights.ndim != 1 or np.any(weights <= 0):
        raise ValidationError("m must be a positive weight vector")
    nu = _pair_array(nu2, weights.size)
    if not is_probability(nu) or np.max(np.abs(nu.sum(axis=0) - nu.sum(axis=1))) > 1e-9:
        return math.inf
    law = weights / weights.sum()
    return relative_entropy(nu, nu.sum(axis=1)[:, None] * law[None, :])


def rate_stochastic_case(nuk: KWordMeasure | ArrayLike, alphabet_size: int) -> float:
    """Σ ν^k log(ν^k / (ν^{k−1} ⊗ Uniform(A)))."""
    weights = np.asarray(nuk.weights if isinstance(nuk, KWordMeasure) else nuk, dtype=float)
    if weights.shape != (alphabet_size,) * weights.ndim:
        raise ValidationError(f"measure must be an |A|^k cube with |A|={alphabet_size}")
    if not is_probability(weights):
        return math.inf
    if weights.ndim == 1:
        return relative_entropy(weights, np.full(alphabet_size, 1.0 / alphabet_size))
    if np.max(np.abs(weights.sum(axis=-1) - weights.sum(axis=0))) > 1e-9:
        return math.inf
    lower = weights.sum(axis=-1)
    return relative_entropy(weights, lower[..., None] / alphabet_size)


def spatial_rate(
    model: RationalModel,
    Pi2: GeneralizedSpatialMeasure | ArrayLike,
    opts: RateOptions | None = None,
    workers: int = 1,
) -> float:
    """Riemann sum (1/L) Σ_j I²(Π²_j) over per-bin pair laws.

    Pi2 is either an (L, |A|, |A|) array of per-bin probability laws or an
    order-2 generalized spatial measure, whose bins are rescaled by L.
    """
    opts = opts or RateOptions()
    if isinstance(Pi2, GeneralizedSpatialMeasure):
        if Pi2.order != 2:
            raise ValidationError("spatial rate needs an order-2 measure")
        bins = np.stack([Pi2.bin_law(j) * Pi2.bins for j in range(Pi2.bins)])
    else:
        bins = np.asarray(Pi2, dtype=float)
    if bins.ndim != 3 or bins.shape[1:] != (model.alphabet_size,) * 2:
        raise ValidationError(f"expected per-bin pair laws, got shape {bins.shape}")

    for j, law in enumerate(bins):
        reason = _infeasibility(model, law, opts.stationarity_tol)
        if reason is not None:
            log.info("[rate_finite] bin %d: %s", j, reason)
            return math.inf

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda law: pair_rate_dual(model, law, opts), bins))
    return float(np.mean([report.value for report in reports]))
