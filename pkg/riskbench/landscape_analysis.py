"""
Module computes landscape-complexity properties on raw fitness: activity threshold, distribution
shape, modality, local optima, ruggedness and pairwise epistasis
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import find_peaks
from scipy.stats import gaussian_kde, kurtosis, skew

from riskbench.errors import DegenerateInputError
from riskbench.landscape_store import Landscape, NeighborIndex, build_neighbor_index

logger = logging.getLogger(__name__)

OTSU_BINS = 256
KDE_GRID = 512
KDE_PROMINENCE = 0.01
EPISTASIS_TOLERANCE = 0.05
RIDGE = 1e-6

PROFILE_COLUMNS = ("landscape", "active_pct", "otsu_threshold", "n", "ruggedness", "cauchy_peak", "kurtosis",
                   "skewness", "kde_peaks", "local_optima", "magnitude_epistasis_pct", "non_magnitude_epistasis_pct")


@dataclass
class LandscapeProfile:
    """ Complexity properties of one landscape

    Properties that could not be computed are NaN with the reason in errors; fallbacks taken
    along the way are listed in flags.
    """
    landscape: str
    n: int
    active_pct: float = math.nan
    otsu_threshold: float = math.nan
    ruggedness: float = math.nan
    cauchy_peak: float = math.nan
    kurtosis: float = math.nan
    skewness: float = math.nan
    kde_peaks: float = math.nan
    local_optima: float = math.nan
    magnitude_epistasis_pct: float = math.nan
    non_magnitude_epistasis_pct: float = math.nan
    errors: Dict[str, str] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def to_row(self) -> Dict[str, object]:
        """ Values in export column order

        :return: Dict keyed by PROFILE_COLUMNS
        """
        values = asdict(self)
        return {column: values[column] for column in PROFILE_COLUMNS}


@dataclass(frozen=True)
class CauchyFit:
    """ Maximum-likelihood Cauchy parameters

    converged is False when the optimizer failed and location fell back to the median.
    """
    location: float
    scale: float
    converged: bool


def _as_values(values: Sequence[float], minimum: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < minimum:
        raise DegenerateInputError("%s needs at least %d values, got %d" % (name, minimum, values.size))
    if not np.all(np.isfinite(values)):
        raise DegenerateInputError("%s needs finite values" % name)
    return values


def _plateau_middle(scores: np.ndarray) -> int:
    best = scores.max()
    close = np.flatnonzero(np.isclose(scores, best, rtol=1e-12, atol=0.0))
    run_end = 0
    while run_end + 1 < close.size and close[run_end + 1] == close[run_end] + 1:
        run_end += 1
    run = close[:run_end + 1]
    return int(run[run.size // 2])


def otsu_threshold(fitness: Sequence[float]) -> Tuple[float, float]:
    """ Otsu threshold over a 256-bin histogram

    The threshold is the upper edge of the last bin of the low class; when several splits tie,
    the middle of the first tied run is taken.

    :param fitness: Raw fitness values
    :raises: DegenerateInputError for fewer than 2 distinct values
    :return: (threshold, percentage of values >= threshold)
    """
    values = _as_values(fitness, 2, "otsu_threshold")
    if values.min() == values.max():
        raise DegenerateInputError("otsu_threshold needs at least 2 distinct values")
    counts, edges = np.histogram(values, bins=OTSU_BINS)
    weights = counts / counts.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    omega = np.cumsum(weights)[:-1]
    mu = np.cumsum(weights * centers)[:-1]
    mu_total = float((weights * centers).sum())
    denom = omega * (1.0 - omega)
    between = np.zeros_like(omega)
    valid = denom > 0
    between[valid] = (mu_total * omega[valid] - mu[valid]) ** 2 / denom[valid]
    split = _plateau_middle(between)
    threshold = float(edges[split + 1])
    active_pct = 100.0 * np.count_nonzero(values >= threshold) / values.size
    return threshold, float(active_pct)


def moments(fitness: Sequence[float]) -> Tuple[float, float]:
    """ Sample skewness and excess kurtosis

    :param fitness: Raw fitness values
    :raises: DegenerateInputError for fewer than 3 values or zero variance
    :return: (skewness, kurtosis)
    """
    values = _as_values(fitness, 3, "moments")
    if np.ptp(values) == 0:
        raise DegenerateInputError("moments need nonzero variance")
    return float(skew(values)), float(kurtosis(values, fisher=True))


def kde_peaks(fitness: Sequence[float]) -> int:
    """ Number of modes of a Scott-bandwidth Gaussian KDE

    Peaks are interior local maxima on a 512-point grid over [min, max] with prominence of at
    least 1% of the density maximum. A density whose only mode sits on the boundary counts as one.

    :param fitness: Raw fitness values
    :raises: DegenerateInputError for fewer than 10 values or zero variance
    :return: Peak count >= 1
    """
    values = _as_values(fitness, 10, "kde_peaks")
    if np.ptp(values) == 0:
        raise DegenerateInputError("kde_peaks needs nonzero variance")
    grid = np.linspace(values.min(), values.max(), KDE_GRID)
    density = gaussian_kde(values)(grid)
    peaks, _ = find_peaks(density, prominence=KDE_PROMINENCE * density.max())
    return max(1, int(peaks.size))


def _cauchy_nll(params: np.ndarray, values: np.ndarray) -> Tuple[float, np.ndarray]:
    location, log_scale = params
    scale = math.exp(log_scale)
    r = (values - location) / scale
    one_plus = 1.0 + r * r
    nll = float(np.mean(np.log(math.pi * scale) + np.log(one_plus)))
    grad_location = float(np.mean(-2.0 * r / (scale * one_plus)))
    grad_log_scale = float(np.mean(1.0 - 2.0 * r * r / one_plus))
    return nll, np.array([grad_location, grad_log_scale])


def fit_cauchy(values: Sequence[float]) -> CauchyFit:
    """ Maximum-likelihood Cauchy location and scale

    L-BFGS-B on (location, log scale) from (median, half interquartile range).

    :param values: Sample
    :raises: DegenerateInputError for fewer than 10 values
    :return: CauchyFit
    """
    values = _as_values(values, 10, "cauchy_peak")
    median = float(np.median(values))
    q25, q75 = np.percentile(values, [25, 75])
    half_iqr = 0.5 * float(q75 - q25)
    if half_iqr <= 0:
        half_iqr = float(np.std(values)) or 1.0
    try:
        result = minimize(_cauchy_nll, np.array([median, math.log(half_iqr)]), args=(values,), jac=True,
                          method="L-BFGS-B")
    except (ValueError, FloatingPointError, OverflowError) as err:
        logger.warning("Cauchy fit raised %s; using the median", err)
        return CauchyFit(median, half_iqr, False)
    location, log_scale = result.x
    if not (result.success and math.isfinite(location) and math.isfinite(log_scale)):
        logger.warning("Cauchy fit did not converge (%s); using the median", result.message)
        return CauchyFit(median, half_iqr, False)
    return CauchyFit(float(location), float(math.exp(log_scale)), True)


def cauchy_peak(fitness: Sequence[float]) -> float:
    """ Location of the fitted Cauchy distribution

    :param fitness: Raw fitness values
    :return: Location (the median when the fit fails)
    """
    return fit_cauchy(fitness).location


def local_optima(landscape: Landscape, neighbors: Optional[NeighborIndex] = None) -> int:
    """ Variants strictly fitter than every Hamming-1 neighbor in the pool

    Variants without neighbors are not counted.

    :param landscape: Landscape
    :param neighbors: Prebuilt index, built when omitted
    :return: Count
    """
    neighbors = neighbors or build_neighbor_index(landscape)
    sources, targets = neighbors.edges()
    fitness = landscape.raw_fitness
    best_neighbor = np.full(len(landscape), -np.inf)
    np.maximum.at(best_neighbor, sources, fitness[targets])
    has_neighbor = np.isfinite(best_neighbor)
    return int(np.count_nonzero(has_neighbor & (fitness > best_neighbor)))


def _dummy_design(landscape: Landscape) -> Tuple[np.ndarray, int]:
    codes = landscape.as_array()
    columns = [np.ones(len(landscape))]
    varying = 0
    for position in range(landscape.length):
        letters, counts = np.unique(codes[:, position], return_counts=True)
        if letters.size < 2:
            continue
        varying += 1
        reference = letters[np.argmax(counts)]
        for letter in letters:
            if letter != reference:
                columns.append((codes[:, position] == letter).astype(float))
    return np.column_stack(columns), varying


# pylint: disable=unused-argument
def ruggedness(landscape: Landscape, neighbors: Optional[NeighborIndex] = None,
               flags: Optional[List[str]] = None) -> float:
    """ Roughness-to-slope ratio of the best additive fit

    The additive model has an intercept and one coefficient per non-reference letter at each
    varying position (reference: the most common letter there). Ruggedness is the RMS residual
    divided by the mean absolute coefficient.

    :param landscape: Landscape
    :param neighbors: Unused by the additive fit; accepted for a uniform property signature
    :param flags: List receiving "ruggedness:ridge" when the design is rank deficient
    :raises: DegenerateInputError with fewer than 2 varying positions or zero slope
    :return: Ruggedness >= 0
    """
    design, varying = _dummy_design(landscape)
    if varying < 2:
        raise DegenerateInputError("ruggedness needs at least 2 mutated positions, got %d" % varying)
    target = landscape.raw_fitness
    coefficients, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        logger.warning("Additive fit of %s is rank deficient; using ridge %.0e", landscape.name, RIDGE)
        if flags is not None:
            flags.append("ruggedness:ridge")
        gram = design.T @ design + RIDGE * np.eye(design.shape[1])
        coefficients = np.linalg.solve(gram, design.T @ target)
    residuals = target - design @ coefficients
    slope = float(np.mean(np.abs(coefficients[1:])))
    if slope == 0:
        raise DegenerateInputError("additive fit has zero slope")
    return float(np.sqrt(np.mean(residuals ** 2)) / slope)


def reference_sequence(landscape: Landscape, flags: Optional[List[str]] = None) -> str:
    """ Wild type when present in the pool, otherwise the Hamming medoid

    The medoid minimizes the total Hamming distance to all pool members; ties go to the
    lexicographically smallest sequence.

    :param landscape: Landscape
    :param flags: List receiving "reference:medoid" when the fallback is used
    :return: Reference sequence
    """
    if landscape.wild_type is not None and landscape.index_of(landscape.wild_type) is not None:
        return landscape.wild_type
    if flags is not None:
        flags.append("reference:medoid")
    codes = landscape.as_array()
    agreement = np.zeros(len(landscape))
    for position in range(landscape.length):
        counts = np.bincount(codes[:, position], minlength=256)
        agreement += counts[codes[:, position]]
    distance = len(landscape) * landscape.length - agreement
    tied = np.flatnonzero(distance == distance.min())
    return min(landscape.sequences[i] for i in tied)


def classify_quadruple(f_ref: float, f_a: float, f_b: float, f_ab: float, tolerance: float) -> Optional[str]:
    """ Epistasis class of one double-mutant cycle

    :param f_ref: Reference fitness
    :param f_a: Single mutant a
    :param f_b: Single mutant b
    :param f_ab: Double mutant
    :param tolerance: |epsilon| at or below which the pair is additive
    :return: "magnitude", "non_magnitude" or None for an additive pair
    """
    epsilon = f_ab - f_a - f_b + f_ref
    if abs(epsilon) <= tolerance:
        return None
    sign_flip = np.sign(f_ab - f_b) != np.sign(f_a - f_ref) or np.sign(f_ab - f_a) != np.sign(f_b - f_ref)
    return "non_magnitude" if sign_flip else "magnitude"


def epistasis(landscape: Landscape, flags: Optional[List[str]] = None) -> Tuple[float, float]:
    """ Percentages of magnitude and non-magnitude epistasis over complete double-mutant cycles

    Every pool member at Hamming distance 2 from the reference whose two single mutants are also
    in the pool forms one cycle.

    :param landscape: Landscape
    :param flags: Receives fallback notes
    :return: (magnitude_pct, non_magnitude_pct), (0, 0) without epistatic cycles
    """
    reference = reference_sequence(landscape, flags)
    fitness = landscape.raw_fitness
    f_ref = fitness[landscape.index_of(reference)]
    tolerance = EPISTASIS_TOLERANCE * float(np.std(fitness))
    codes = landscape.as_array()
    ref_codes = np.frombuffer(reference.encode("ascii"), dtype=np.uint8)
    doubles = np.flatnonzero((codes != ref_codes).sum(axis=1) == 2)
    counts = {"magnitude": 0, "non_magnitude": 0}
    for index in doubles:
        seq = landscape.sequences[index]
        first, second = np.flatnonzero(codes[index] != ref_codes)
        single_a = landscape.index_of(reference[:first] + seq[first] + reference[first + 1:])
        single_b = landscape.index_of(reference[:second] + seq[second] + reference[second + 1:])
        if single_a is None or single_b is None:
            continue
        label = classify_quadruple(f_ref, fitness[single_a], fitness[single_b], fitness[index], tolerance)
        if label is not None:
            counts[label] += 1
    total = counts["magnitude"] + counts["non_magnitude"]
    if total == 0:
        return 0.0, 0.0
    magnitude = 100.0 * counts["magnitude"] / total
    return magnitude, 100.0 - magnitude


def profile(landscape: Landscape, neighbors: Optional[NeighborIndex] = None) -> LandscapeProfile:
    """ Every property of a landscape

    A property whose input is degenerate is left NaN with the reason in errors; the others are
    still computed.

    :param landscape: Landscape
    :param neighbors: Prebuilt neighbor index
    :return: LandscapeProfile
    """
    result = LandscapeProfile(landscape=landscape.name, n=len(landscape))
    raw = landscape.raw_fitness

    def capture(name, compute):
        try:
            return compute()
        except DegenerateInputError as err:
            logger.warning("%s: %s not computed: %s", landscape.name, name, err)
            result.errors[name] = str(err)
            return None

    otsu = capture("otsu_threshold", lambda: otsu_threshold(raw))
    if otsu is not None:
        result.otsu_threshold, result.active_pct = otsu
    shape = capture("moments", lambda: moments(raw))
    if shape is not None:
        result.skewness, result.kurtosis = shape
    peaks = capture("kde_peaks", lambda: kde_peaks(raw))
    if peaks is not None:
        result.kde_peaks = peaks
    cauchy = capture("cauchy_peak", lambda: fit_cauchy(raw))
    if cauchy is not None:
        result.cauchy_peak = cauchy.location
        if not cauchy.converged:
            result.flags.append("cauchy_peak:median")
    neighbors = neighbors or build_neighbor_index(landscape)
    result.local_optima = local_optima(landscape, neighbors)
    rugged = capture("ruggedness", lambda: ruggedness(landscape, neighbors, result.flags))
    if rugged is not None:
        result.ruggedness = rugged
    result.magnitude_epistasis_pct, result.non_magnitude_epistasis_pct = epistasis(landscape, result.flags)
    return result
