"""
Polynomial Approximation Service
Remez minimax fitting of activations and exhaustive base-2 coefficient scanning
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar
from scipy.special import expit

from models.approx_models import ApproxConfig, ApproximationReport, ScanConstraints

logger = logging.getLogger(__name__)

Function = Callable[[np.ndarray], np.ndarray]

# reference quantized swish 2^-3 x^2 + 2^-1 x + 2^-4 and its real counterpart, ascending powers
REFERENCE_SWISH_EXPONENTS = (-4, -1, -3)
REFERENCE_SWISH_COEFFICIENTS = (0.153613744, 0.5, 0.12050344)
CALIBRATION_GRID = tuple(np.arange(2.0, 6.0 + 1e-9, 0.5))
ZERO_COEFFICIENT_TOLERANCE = 1e-12


def swish(x):
    """x * sigmoid(x)"""
    x = np.asarray(x, dtype=np.float64)
    return x * expit(x)


@dataclass(frozen=True)
class RealPoly:
    """Real polynomial with coefficients in ascending powers"""
    coefficients: Tuple[float, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return npoly.polyval(np.asarray(x, dtype=np.float64), self.coefficients)

    def derivative(self, x):
        return npoly.polyval(np.asarray(x, dtype=np.float64), npoly.polyder(self.coefficients))

    def descending(self) -> Tuple[float, ...]:
        return tuple(reversed(self.coefficients))


@dataclass(frozen=True)
class Base2Poly:
    """
    Polynomial whose coefficients are signed powers of two.

    exponents[i] is a_i for the x^i term; signs[i] is -1, 0 or +1 and a zero
    sign marks an exact-zero coefficient whose exponent is ignored.
    """
    exponents: Tuple[int, ...]
    signs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.exponents) != len(self.signs):
            raise ApproximationError("Base-2 polynomial needs one sign per exponent")
        if any(s not in (-1, 0, 1) for s in self.signs):
            raise ApproximationError(f"Signs must be -1, 0 or +1, got {self.signs}")

    @property
    def degree(self) -> int:
        return len(self.exponents) - 1

    @property
    def coefficients(self) -> Tuple[float, ...]:
        return tuple(
            0.0 if s == 0 else s * math.ldexp(1.0, e) for e, s in zip(self.exponents, self.signs)
        )

    def __call__(self, x):
        return npoly.polyval(np.asarray(x, dtype=np.float64), self.coefficients)

    def derivative(self, x):
        return npoly.polyval(np.asarray(x, dtype=np.float64), npoly.polyder(self.coefficients))

    def as_real(self) -> RealPoly:
        return RealPoly(self.coefficients)

    def active_exponents(self) -> List[Optional[int]]:
        return [e if s else None for e, s in zip(self.exponents, self.signs)]

    def descending_exponents(self) -> Tuple[Optional[int], ...]:
        return tuple(reversed(self.active_exponents()))

    @property
    def total_abs_exponent(self) -> int:
        return sum(abs(e) for e, s in zip(self.exponents, self.signs) if s)


@dataclass(frozen=True)
class MinimaxFit:
    """Remez result with its final alternation set"""
    poly: RealPoly
    error: float
    levelled_error: float
    extrema: Tuple[Tuple[float, float], ...]
    iterations: int


# -- sup-norm -----------------------------------------------------------

def _refine_extremum(err: Function, lo: float, hi: float, sign: float) -> Tuple[float, float]:
    result = minimize_scalar(
        lambda x: -sign * float(err(x)), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    x = float(result.x)
    return x, float(err(x))


def max_error(f: Function, p, interval_a: float, grid_points: int = 100_001) -> float:
    """
    Sup-norm distance between f and p on [-a, a]

    Args:
        f: Vectorized target function
        p: Callable polynomial (RealPoly or Base2Poly)
        interval_a: Half-width of the interval
        grid_points: Dense grid size

    Returns:
        max |f(x) - p(x)| from the grid, refined around the largest grid maxima
    """
    xs = np.linspace(-interval_a, interval_a, grid_points)
    err = lambda x: f(x) - p(x)
    values = np.abs(err(xs))
    best = float(values.max())

    interior = np.flatnonzero((values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])) + 1
    if interior.size:
        top = interior[np.argsort(values[interior])[::-1][:8]]
        for i in top:
            sign = 1.0 if err(xs[i]) >= 0 else -1.0
            _, e = _refine_extremum(err, xs[i - 1], xs[i + 1], sign)
            best = max(best, abs(e))
    return best


# -- Remez exchange -----------------------------------------------------

def _alternating_extrema(err: Function, interval_a: float, grid_points: int) -> List[Tuple[float, float]]:
    xs = np.linspace(-interval_a, interval_a, grid_points)
    es = err(xs)
    d = np.diff(es)
    interior = np.flatnonzero(((d[:-1] > 0) & (d[1:] <= 0)) | ((d[:-1] < 0) & (d[1:] >= 0))) + 1
    indices = np.unique(np.concatenate([[0], interior, [grid_points - 1]]))

    merged: List[Tuple[float, float]] = []
    for i in indices:
        x, e = float(xs[i]), float(es[i])
        if 0 < i < grid_points - 1:
            sign = 1.0 if e >= 0 else -1.0
            rx, re = _refine_extremum(err, xs[i - 1], xs[i + 1], sign)
            if sign * re > sign * e:
                x, e = rx, re
        if e == 0.0:
            continue
        if merged and (merged[-1][1] > 0) == (e > 0):
            if abs(e) > abs(merged[-1][1]):
                merged[-1] = (x, e)
        else:
            merged.append((x, e))
    return merged


def _exchange_one(reference: np.ndarray, pattern: np.ndarray, x: float, e: float) -> np.ndarray:
    """Swap x into the reference so the residual signs keep alternating"""
    points = list(reference)
    sign = 1.0 if e >= 0 else -1.0
    if x < points[0]:
        if pattern[0] == sign:
            points[0] = x
        else:
            points = [x] + points[:-1]
    elif x > points[-1]:
        if pattern[-1] == sign:
            points[-1] = x
        else:
            points = points[1:] + [x]
    else:
        j = int(np.searchsorted(points, x)) - 1
        j = min(max(j, 0), len(points) - 2)
        if pattern[j] == sign:
            points[j] = x
        else:
            points[j + 1] = x
    return np.array(points)


def remez(f: Function, degree: int, interval_a: float, config: Optional[ApproxConfig] = None) -> MinimaxFit:
    """
    Minimax polynomial of the given degree on [-a, a] by multi-point exchange

    When the error curve shows fewer than n+2 alternating extrema the step
    falls back to a single-point exchange of the global worst point.

    Args:
        f: Vectorized continuous target function
        degree: Polynomial degree n
        interval_a: Half-width a
        config: Grid size, tolerance and iteration cap

    Returns:
        MinimaxFit whose error curve equioscillates on at least n+2 points
    """
    config = config or ApproxConfig(interval_a=interval_a, degree=degree)
    m = degree + 2
    reference = interval_a * np.cos(np.pi * np.arange(m)[::-1] / (m - 1))
    scale = float(np.max(np.abs(f(np.linspace(-interval_a, interval_a, 101))))) or 1.0
    signs = (-1.0) ** np.arange(m)
    history = []

    for iteration in range(1, config.max_iterations + 1):
        system = np.hstack([np.vander(reference, degree + 1, increasing=True), signs[:, None]])
        try:
            solution = np.linalg.solve(system, f(reference))
        except np.linalg.LinAlgError as e:
            logger.error(f"Remez system singular at iteration {iteration}: {str(e)}")
            raise ConvergenceError(f"Remez system singular at iteration {iteration}: {str(e)}")
        coefficients = tuple(float(c) for c in solution[:-1])
        levelled = abs(float(solution[-1]))
        pattern = signs * (1.0 if solution[-1] >= 0 else -1.0)
        poly = RealPoly(coefficients)
        err = lambda x, poly=poly: f(x) - poly(x)

        extrema = _alternating_extrema(err, interval_a, config.remez_grid_points)
        worst = max((abs(e) for _, e in extrema), default=0.0)
        history.append(worst)

        if worst <= 1e-14 * scale:
            logger.debug(f"Remez: exact fit after {iteration} iteration(s)")
            return MinimaxFit(poly, worst, levelled, tuple(extrema), iteration)
        if worst - levelled <= config.tolerance * worst:
            if len(extrema) < m:
                extrema = [(float(x), float(err(x))) for x in reference]
            logger.debug(f"Remez converged in {iteration} iterations, error {worst:.3e}")
            return MinimaxFit(poly, worst, levelled, tuple(extrema), iteration)
        if len(extrema) < m:
            x_worst, e_worst = max(extrema, key=lambda xe: abs(xe[1]))
            logger.debug(f"Remez: {len(extrema)} extrema at iteration {iteration}, exchanging x={x_worst:.6f}")
            reference = _exchange_one(reference, pattern, x_worst, e_worst)
            continue

        chosen = list(extrema)
        while len(chosen) > m:
            if abs(chosen[0][1]) < abs(chosen[-1][1]):
                chosen.pop(0)
            else:
                chosen.pop()
        reference = np.array([x for x, _ in chosen])

    logger.error(f"Remez did not converge in {config.max_iterations} iterations")
    raise ConvergenceError(
        f"Remez did not converge in {config.max_iterations} iterations on [-{interval_a}, {interval_a}]; "
        f"last errors {history[-5:]}, levelled {levelled:.3e}"
    )


def minimax_fit(f: Function, degree: int, interval_a: float,
                config: Optional[ApproxConfig] = None) -> RealPoly:
    return remez(f, degree, interval_a, config).poly


def calibrate_interval(f: Function = swish, target: Sequence[float] = REFERENCE_SWISH_COEFFICIENTS,
                       candidates: Sequence[float] = CALIBRATION_GRID) -> Tuple[float, dict]:
    """Half-width whose degree-2 minimax fit best matches the target quadratic and constant terms"""
    scores = {}
    for a in candidates:
        poly = minimax_fit(f, 2, float(a))
        c0, _, c2 = poly.coefficients
        scores[float(a)] = abs(c2 / target[2] - 1) + abs(c0 / target[0] - 1)
    best = min(scores, key=scores.get)
    logger.info(f"Calibrated interval half-width a={best} (score {scores[best]:.2e})")
    return best, scores


# -- base-2 quantization ------------------------------------------------

def _nearest_power(c: float) -> int:
    mantissa, exponent = math.frexp(abs(c))
    # 2^(exponent-1) <= |c| < 2^exponent
    return exponent - 1 if mantissa <= 0.75 else exponent


def base2_round(p: RealPoly) -> Base2Poly:
    """Every coefficient replaced by the nearest signed power of two; zeros stay zero"""
    exponents, signs = [], []
    scale = max((abs(c) for c in p.coefficients), default=0.0)
    for power, c in enumerate(p.coefficients):
        if abs(c) <= ZERO_COEFFICIENT_TOLERANCE * max(scale, 1.0):
            logger.warning(f"Coefficient of x^{power} is zero; kept as exact zero")
            exponents.append(0)
            signs.append(0)
        else:
            exponents.append(_nearest_power(c))
            signs.append(1 if c > 0 else -1)
    return Base2Poly(tuple(exponents), tuple(signs))


def default_constraints(fit: MinimaxFit, bound: float, count: int) -> ScanConstraints:
    """Polyhedron around p at its count largest alternation points: p(x_i) -/+ K"""
    ranked = sorted(fit.extrema, key=lambda xe: abs(xe[1]), reverse=True)[:count]
    points = sorted(x for x, _ in ranked)
    values = fit.poly(np.array(points))
    return ScanConstraints(
        points=points,
        lower=[float(v - bound) for v in values],
        upper=[float(v + bound) for v in values],
    )


def _feasible(q: Base2Poly, constraints: ScanConstraints) -> bool:
    values = q(np.array(constraints.points))
    return bool(np.all(values >= np.array(constraints.lower)) and np.all(values <= np.array(constraints.upper)))


@dataclass(frozen=True)
class ScanOutcome:
    poly: Base2Poly
    error: float
    bound: float
    candidates: int
    feasible: int
    fit: MinimaxFit
    rounded: Base2Poly
    rounded_error: float


def scan_base2(f: Function, degree: int, interval_a: float, bound: Optional[float] = None,
               radius: int = 2, constraints: Optional[ScanConstraints] = None,
               config: Optional[ApproxConfig] = None, fit: Optional[MinimaxFit] = None) -> ScanOutcome:
    """
    Exhaustive search over exponent tuples within radius of the rounded minimax polynomial

    Args:
        f: Target function
        degree: Polynomial degree
        interval_a: Half-width a
        bound: Error bound K (must be at least delta(f,p)); defaults to delta(f,p) + delta(f,p_hat)
        radius: Exponent search radius
        constraints: Polyhedron; defaults to p(x_i) -/+ K at the alternation points of p
        config: Grid settings
        fit: Precomputed minimax fit

    Returns:
        ScanOutcome with the error-minimizing base-2 polynomial
    """
    config = config or ApproxConfig(interval_a=interval_a, degree=degree)
    fit = fit or remez(f, degree, interval_a, config)
    grid = config.grid_points
    delta_p = max_error(f, fit.poly, interval_a, grid)
    rounded = base2_round(fit.poly)
    delta_hat = max_error(f, rounded, interval_a, grid)

    if bound is None:
        bound = delta_p + delta_hat
    if bound < delta_p * (1 - 1e-9):
        raise ScanConstraintError(f"Bound K={bound:.6g} is below delta(f,p)={delta_p:.6g}")
    constraints = constraints or default_constraints(fit, bound, degree + 2)

    xs = np.linspace(-interval_a, interval_a, grid)
    fx = f(xs)
    choices = [
        range(e - radius, e + radius + 1) if s else (0,)
        for e, s in zip(rounded.exponents, rounded.signs)
    ]

    enumerated = 0
    shortlist = []
    for exponents in itertools.product(*choices):
        enumerated += 1
        q = Base2Poly(tuple(exponents), rounded.signs)
        if not _feasible(q, constraints):
            continue
        grid_error = float(np.max(np.abs(fx - q(xs))))
        if grid_error > bound:
            continue
        shortlist.append((grid_error, q))

    if not shortlist:
        logger.error(f"Base-2 scan found no feasible tuple (K={bound:.4g}, radius={radius})")
        raise ScanConstraintError(
            f"No base-2 polynomial within radius {radius} satisfies K={bound:.6g}; "
            f"increase the bound or the radius"
        )

    best_grid = min(e for e, _ in shortlist)
    finalists = [(max_error(f, q, interval_a, grid), q) for e, q in shortlist if e <= best_grid * (1 + 1e-6) + 1e-15]
    finalists = [(e, q) for e, q in finalists if e <= bound]
    if not finalists:
        raise ScanConstraintError(f"Refined errors all exceed K={bound:.6g}; increase the bound")
    error, poly = min(finalists, key=lambda eq: (eq[0], eq[1].total_abs_exponent, eq[1].exponents))

    logger.info(
        f"Base-2 scan: {len(shortlist)}/{enumerated} feasible, best exponents "
        f"{poly.descending_exponents()} error {error:.6g}"
    )
    return ScanOutcome(poly, error, bound, enumerated, len(shortlist), fit, rounded, delta_hat)


def base2_scan(f: Function, degree: int, interval_a: float, bound: Optional[float] = None,
               radius: int = 2, constraints: Optional[ScanConstraints] = None) -> Base2Poly:
    return scan_base2(f, degree, interval_a, bound, radius, constraints).poly


def approximation_report(config: ApproxConfig, f: Function = swish,
                         reference: Optional[Sequence[int]] = REFERENCE_SWISH_EXPONENTS) -> ApproximationReport:
    """Fit, round and scan, and compare the scan with a reference exponent tuple"""
    outcome = scan_base2(f, config.degree, config.interval_a, config.bound, config.radius, config=config)
    fit = outcome.fit
    reference_error = None
    if reference is not None and len(reference) == config.degree + 1:
        signs = tuple(1 if c >= 0 else -1 for c in fit.poly.coefficients)
        reference_poly = Base2Poly(tuple(reference), signs)
        reference_error = max_error(f, reference_poly, config.interval_a, config.grid_points)
    else:
        reference = None

    report = ApproximationReport(
        interval_a=config.interval_a,
        degree=config.degree,
        minimax_coefficients=list(fit.poly.coefficients),
        minimax_error=max_error(f, fit.poly, config.interval_a, config.grid_points),
        rounded_exponents=outcome.rounded.active_exponents(),
        rounded_error=outcome.rounded_error,
        scanned_exponents=outcome.poly.active_exponents(),
        scanned_signs=list(outcome.poly.signs),
        scanned_error=outcome.error,
        bound=outcome.bound,
        radius=config.radius,
        candidates=outcome.candidates,
        feasible=outcome.feasible,
        reference_exponents=list(reference) if reference is not None else None,
        reference_error=reference_error,
    )
    if report.matches_reference is False:
        logger.warning(
            f"Scanned exponents {outcome.poly.descending_exponents()} differ from reference "
            f"{tuple(reversed(reference))}: errors {outcome.error:.6g} vs {reference_error:.6g}"
        )
    return report


class ApproximationError(Exception):
    """Custom exception for polynomial approximation errors"""
    pass


class ConvergenceError(ApproximationError):
    """Remez exchange failed to converge"""
    pass


class ScanConstraintError(ApproximationError):
    """Base-2 scan has an empty feasible set"""
    pass
