"""
Perron-Frobenius data for non-negative matrices.

Power iteration for finite primitive matrices, the Doob conjugation that
turns a primitive matrix into a stochastic one, stationary laws of the
resulting chains, and the closed-form Perron value of the half-infinite
constant tridiagonal family.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.special import gammaln, logsumexp

from mpbridge.exceptions import (
    InconsistentEigendata,
    NoConvergence,
    NotPrimitive,
    ValidationError,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
ROW_SUM_TOL = 1e-12
EIGENDATA_TOL = 1e-9

# Catalan sums are evaluated term by term up to this n, in log space beyond.
_DIRECT_RETURN_WEIGHT_MAX_N = 30


def as_nonnegative(M: ArrayLike) -> NDArray[np.float64]:
    """Validate and copy a square non-negative matrix."""
    arr = np.array(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix entries must be finite")
    if np.any(arr < 0):
        raise ValidationError("matrix entries must be non-negative")
    return arr


@dataclass(frozen=True)
class Primitivity:
    """Classification of the support digraph of a non-negative matrix."""

    irreducible: bool
    aperiodic: bool
    period: int

    @property
    def primitive(self) -> bool:
        return self.irreducible and self.aperiodic


@dataclass(frozen=True, eq=False)
class PerronData:
    """Perron value, right vector (max entry 1) and eigen-residual."""

    value: float
    right_vector: NDArray[np.float64]
    residual: float
    iterations: int = 0

    def __repr__(self) -> str:
        return (
            f"PerronData(value={self.value!r}, dim={self.right_vector.size}, "
            f"residual={self.residual:.3g})"
        )


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Row-stochastic matrix; rows sum to 1 within ROW_SUM_TOL."""

    entries: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = as_nonnegative(self.entries)
        deviation = float(np.max(np.abs(arr.sum(axis=1) - 1.0)))
        if deviation > ROW_SUM_TOL:
            raise ValidationError(f"rows must sum to 1, max deviation {deviation:.3g}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True)
class TridiagonalSpec:
    """Constant tridiagonal matrix on N0: diagonal α, upper β₁, lower β₂."""

    diag: float
    upper: float
    lower: float

    def __post_init__(self) -> None:
        for name in ("diag", "upper", "lower"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"tridiagonal {name} must be positive, got {value}")

    def truncated(self, dim: int) -> NDArray[np.float64]:
        """Top-left dim×dim corner of the infinite matrix."""
        return (
            self.diag * np.eye(dim)
            + self.upper * np.eye(dim, k=1)
            + self.lower * np.eye(dim, k=-1)
        )


@dataclass(frozen=True)
class TridiagonalPerron:
    value: float
    eigenvector_term: Callable[[int], float]


def check_primitive(M: ArrayLike) -> Primitivity:
    """Classify M as irreducible/aperiodic and compute the period of state 0.

    The period is the gcd of level[u] + 1 - level[v] over the edges (u, v)
    reachable from state 0, where level is the BFS distance from state 0.
    """
    arr = as_nonnegative(M)
    graph = sparse.csr_matrix((arr > 0).astype(float))
    n_components, _ = csgraph.connected_components(
        graph, directed=True, connection="strong"
    )
    levels = csgraph.shortest_path(graph, unweighted=True, indices=0)
    rows, cols = graph.nonzero()
    reachable = np.isfinite(levels[rows])
    diffs = (levels[rows[reachable]] + 1 - levels[cols[reachable]]).astype(np.int64)
    period = int(np.gcd.reduce(diffs)) if diffs.size else 0

    # A single state without a self-loop has no cycle at all.
    irreducible = n_components == 1 and period > 0
    period = max(period, 1)
    return Primitivity(irreducible=irreducible, aperiodic=period == 1, period=period)


def perron_finite(
    M: ArrayLike,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: ArrayLike | None = None,
) -> PerronData:
    """Perron value and right vector of a primitive matrix by power iteration.

    Args:
        M: Square non-negative primitive matrix.
        tol: Bound on ‖M·e − λ·e‖∞ with ‖e‖∞ = 1. It is raised to a small
            multiple of machine precision times λ·dim when smaller than that.
        max_iter: Iteration cap.
        start: Optional positive starting vector (warm start).

    Returns:
        PerronData with the vector normalized to max entry 1.

    Raises:
        NotPrimitive: If M is reducible or periodic.
        NoConvergence: If the residual is still above tolerance after max_iter.
    """
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    arr = as_nonnegative(M)
    report = check_primitive(arr)
    if not report.primitive:
        raise NotPrimitive(
            f"matrix is not primitive (irreducible={report.irreducible}, "
            f"period={report.period})"
        )

    n = arr.shape[0]
    if start is None:
        x = np.ones(n)
    else:
        x = np.array(start, dtype=float)
        if x.shape != (n,) or np.any(x <= 0):
            raise ValidationError("start vector must be positive with matching length")
    x = x / np.max(x)

    y = arr @ x
    lam = 0.0
    residual = math.inf
    threshold = tol
    clamped = False
    for iteration in range(1, max_iter + 1):
        lam = float(x @ y) / float(x @ x)
        residual = float(np.max(np.abs(y - lam * x)))
        threshold = max(tol, 64.0 * np.finfo(float).eps * lam * n)
        if threshold > tol and not clamped:
            clamped = True
            log.debug(
                "[perron] tolerance %.3g is below rounding level, using %.3g", tol, threshold
            )
        if residual <= threshold:
            log.debug(
                "[perron] converged after %d iterations, residual %.3g", iteration, residual
            )
            return PerronData(lam, x, residual, iteration)
        x = y / np.max(y)
        y = arr @ x

    raise NoConvergence(
        f"power iteration residual {residual:.3g} above {threshold:.3g} "
        f"after {max_iter} iterations",
        iterations=max_iter,
        residual=residual,
    )


def perron_left(
    M: ArrayLike, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> PerronData:
    """Left Perron vector, as the right Perron vector of the transpose."""
    return perron_finite(np.asarray(M, dtype=float).T, tol=tol, max_iter=max_iter)


def perron_dense(M: ArrayLike) -> tuple[PerronData, NDArray[np.float64]]:
    """Right Perron data and left Perron vector from a dense eigensolve.

    Meant for small matrices whose spectral gap can be arbitrarily small,
    where power iteration would stall. Both vectors have max entry 1.
    """
    arr = as_nonnegative(M)
    values, left, right = linalg.eig(arr, left=True, right=True)
    top = int(np.argmax(values.real))
    lam = float(values[top].real)
    r = np.abs(right[:, top].real)
    lv = np.abs(left[:, top].real)
    if lam <= 0 or np.max(r) <= 0 or np.max(lv) <= 0:
        raise NotPrimitive("matrix has no positive dominant eigenvalue")
    r /= np.max(r)
    lv /= np.max(lv)
    residual = float(np.max(np.abs(arr @ r - lam * r)))
    return PerronData(lam, r, residual), lv


def doob_transform(M: ArrayLike, pd: PerronData) -> StochasticMatrix:
    """S = λ⁻¹ diag(e)⁻¹ M diag(e).

    Raises:
        InconsistentEigendata: If the row sums of S miss 1 by more than 1e-9.
    """
    arr = as_nonnegative(M)
    e = np.asarray(pd.right_vector, dtype=float)
    if e.shape != (arr.shape[0],) or np.any(e <= 0) or pd.value <= 0:
        raise InconsistentEigendata("Perron data does not match matrix dimension or sign")
    S = arr * e[None, :] / (pd.value * e[:, None])
    row_sums = S.sum(axis=1)
    deviation = float(np.max(np.abs(row_sums - 1.0)))
    if deviation > EIGENDATA_TOL:
        raise InconsistentEigendata(f"Doob transform row sums deviate by {deviation:.3g}")
    return StochasticMatrix(S / row_sums[:, None])


def stationary_distribution(
    S: StochasticMatrix | ArrayLike, tol: float = DEFAULT_TOL
) -> NDArray[np.float64]:
    """Solve θ·S = θ, Σθ = 1 by least squares on the stacked system."""
    P = S.entries if isinstance(S, StochasticMatrix) else as_nonnegative(S)
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    theta, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    theta = np.clip(theta, 0.0, None)
    theta = theta / theta.sum()
    residual = float(np.max(np.abs(theta @ P - theta)))
    if residual > tol:
        raise NoConvergence(
            f"stationary law residual {residual:.3g} above {tol:.3g}", residual=residual
        )
    return theta


def perron_tridiagonal_infinite(spec: TridiagonalSpec) -> TridiagonalPerron:
    """Perron value α + 2√(β₁β₂) and eigenvector (n+1)(β₂/β₁)^((n+1)/2)."""
    ratio = spec.lower / spec.upper

    def eigenvector_term(n: int) -> float:
        if n < 0:
            raise ValidationError(f"index must be non-negative, got {n}")
        return (n + 1) * ratio ** ((n + 1) / 2)

    return TridiagonalPerron(
        value=spec.diag + 2.0 * math.sqrt(spec.upper * spec.lower),
        eigenvector_term=eigenvector_term,
    )


def log_return_weight_even(n: int, spec: TridiagonalSpec) -> float:
    """log of Σ_k Cat(n−k)·C(2n,2k)·α^{2k}·(β₁β₂)^{n−k}."""
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    k = np.arange(n + 1, dtype=float)
    j = n - k
    log_catalan = gammaln(2 * j + 1) - 2 * gammaln(j + 1) - np.log(j + 1)
    log_binom = gammaln(2 * n + 1) - gammaln(2 * k + 1) - gammaln(2 * (n - k) + 1)
    terms = (
        log_catalan
        + log_binom
        + 2 * k * math.log(spec.diag)
        + j * math.log(spec.upper * spec.lower)
    )
    return float(logsumexp(terms))


def return_weight_even(n: int, spec: TridiagonalSpec) -> float:
    """(A^{2n})_{0,0} for the infinite tridiagonal matrix, via the Catalan sum.

    Small n are summed directly with exact integer combinatorics; larger n
    go through the log-domain sum and return inf when the value overflows.
    """
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if n <= _DIRECT_RETURN_WEIGHT_MAX_N:
        bb = spec.upper * spec.lower
        total = 0.0
        for k in range(n + 1):
            j = n - k
            catalan = math.comb(2 * j, j) // (j + 1)
            total += catalan * math.comb(2 * n, 2 * k) * spec.diag ** (2 * k) * bb**j
        return total
    value = log_return_weight_even(n, spec)
    if value > math.log(np.finfo(float).max):
        log.warning("[perron] return weight for n=%d overflows, log value %.6g", n, value)
        return math.inf
    return math.exp(value)
