"""Noise-strength estimation for velocity series.

Two estimators and a combination rule:

* Method 1 (multi-resolution): closed-form estimate from the squared
  successive-difference sums V1, V2, V3 of the series at resolutions N,
  N/2, N/4.  Differencing kills the smooth part of the signal at a rate
  that depends on the resolution while the noise contributes at a known
  rate, so a fixed linear combination of the three sums isolates the
  noise power up to a bias driven by the clean signal's own variation.

* Method 2 (TV balance): sweep the denoiser over a sigma grid, track the
  increments of TV(sigma) * sigma^2, and take the first local minimum of
  that increment sequence.  Oversmoothing makes TV collapse while
  sigma^2 keeps growing; the first stall of the product marks the
  balance point.

* Combination: take the smaller of the two, but never let the implied
  denoised TV fall below TV_l = (5/2)(v_max - v_min).  A series flatter
  than that bound gets sigma 0 (no denoising).

The sigma convention throughout is the constraint form
sigma^2 = (1/2) h sum residual^2, i.e. velocity times sqrt(minutes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import VelocitySeries, pair_average, total_variation, _as_float_vector
from .solver import SolverConfig, denoise_values, sweep_config

# Grid used by the balance sweep unless the caller says otherwise:
# 0 and 1, then every 5 up to 50.
DEFAULT_SIGMA_GRID = (0.0, 1.0) + tuple(float(s) for s in range(5, 55, 5))

# Sweep profile for the balance method and the pipeline.  The smoothing
# here is deliberately coarser than the solver default: the balance
# point is insensitive to epsilon but the stopping rule is not, and at
# epsilon near machine level the sweeps would run to the iteration cap
# on every grid point.
SWEEP_SOLVER = SolverConfig(sigma=0.0, epsilon=0.1)

FLAG_NO_NOISE = "no-noise"
FLAG_TV_BELOW_LOWER_BOUND = "tv-below-lower-bound"


@dataclass(frozen=True)
class MultiresVariations:
    """Squared-difference sums at the three resolutions, each divided by
    the effective slice length 2^j h."""

    v1: float
    v2: float
    v3: float


@dataclass(frozen=True)
class SigmaEstimate:
    """Combined noise estimate with the curves that produced it.

    tv_curve holds (sigma, TV) pairs over the sweep grid; delta_curve
    holds (sigma_k^2, delta_k) pairs where delta_k is the increment of
    TV * sigma^2 between consecutive grid points.
    """

    sigma1: float
    sigma2: float
    sigma_best: float
    tv_curve: tuple[tuple[float, float], ...]
    delta_curve: tuple[tuple[float, float], ...]
    tv_lower: float
    flags: tuple[str, ...] = ()


def _values_and_h(series, h):
    if isinstance(series, VelocitySeries):
        return series.values, series.h
    if h is None:
        raise ValueError("h is required when passing a bare array")
    return _as_float_vector(series, "series"), float(h)


def _check_resolution(n: int):
    if n % 4:
        raise ValueError(f"length {n} not divisible by 4")
    if n < 8:
        raise ValueError(f"need at least 8 samples, got {n}")


def multires_variations(series, h: float | None = None) -> MultiresVariations:
    """V_{j+1} = sum |v^j_{i+1} - v^j_i|^2 / (2^j h) for j = 0, 1, 2."""
    v, h = _values_and_h(series, h)
    _check_resolution(v.size)
    out = []
    cur = v
    for j in range(3):
        out.append(float(np.sum(np.diff(cur) ** 2)) / (2 ** j * h))
        if j < 2:
            cur = pair_average(cur)
    return MultiresVariations(*out)


def _estimator_coefficients(n: int) -> tuple[float, float, float, float]:
    a1 = 119 / 16 - 27 / (4 * n)
    a2 = 9 / (4 * n) - 49 / 16
    a3 = 9 / (2 * n) - 35 / 8
    den = 3577 / 128 + 189 / (8 * n * n) - 819 / (16 * n)
    return a1, a2, a3, den


def estimate_sigma_multires(series, h: float | None = None) -> float:
    """Method 1: closed-form noise strength from the three variations.

    The squared estimate can come out negative on nearly clean input;
    it is clamped to zero before the square root.
    """
    v, h = _values_and_h(series, h)
    var = multires_variations(v, h)
    a1, a2, a3, den = _estimator_coefficients(v.size)
    s2 = h * h * (a1 * var.v1 + a2 * var.v2 + a3 * var.v3) / den
    return float(np.sqrt(max(s2, 0.0)))


def multires_bias(clean, h: float | None = None) -> float:
    """Expected excess of the Method-1 squared estimate on a clean signal.

    Computed from the clean variations V1c, V2c, V3c:

        Bias = h^2 [ (49/16 - 9/4N)(V1c - V2c)
                   + (35/8 - 9/2N)(V1c - V3c) ] / D,

    with D the estimator denominator.  Zero for constant input.
    """
    v, h = _values_and_h(clean, h)
    var = multires_variations(v, h)
    n = v.size
    _, _, _, den = _estimator_coefficients(n)
    num = (49 / 16 - 9 / (4 * n)) * (var.v1 - var.v2) + (35 / 8 - 9 / (2 * n)) * (
        var.v1 - var.v3
    )
    return h * h * num / den


def _validate_grid(sigma_grid) -> np.ndarray:
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.size < 3:
        raise ValueError("sigma grid needs at least 3 values")
    if grid[0] != 0.0:
        raise ValueError("sigma grid must start at 0")
    if not np.all(np.diff(grid) > 0):
        raise ValueError("sigma grid must be strictly increasing")
    return grid


def _sweep_tv(values: np.ndarray, h: float, grid: np.ndarray, solver: SolverConfig):
    return [
        denoise_values(values, sweep_config(solver, float(s)), h=h).final_tv for s in grid
    ]


def _balance_deltas(grid: np.ndarray, tvs) -> np.ndarray:
    products = np.asarray(tvs) * grid ** 2
    return np.diff(products)


def _first_local_minimum(grid: np.ndarray, deltas: np.ndarray) -> float:
    # deltas[i] is the increment into grid point i+1; the first grid
    # point with an increment (index 1) has no left neighbour and is
    # never eligible, the last one only if the sequence decreases into
    # it and nothing interior fired.
    m = deltas.size
    for i in range(1, m - 1):
        if deltas[i] <= deltas[i - 1] and deltas[i] <= deltas[i + 1]:
            return float(grid[i + 1])
    if m >= 2 and deltas[m - 1] <= deltas[m - 2]:
        return float(grid[m])
    return float(grid[int(np.argmin(deltas)) + 1])


def estimate_sigma_balance(series, sigma_grid, solver: SolverConfig, h: float | None = None) -> float:
    """Method 2: first local minimum of the TV * sigma^2 increments.

    Runs the denoiser once per grid sigma.  Constant input (an all-zero
    TV curve) has no noise to balance and returns 0.
    """
    v, h = _values_and_h(series, h)
    grid = _validate_grid(sigma_grid)
    tvs = _sweep_tv(v, h, grid, solver)
    if all(t == 0.0 for t in tvs):
        return 0.0
    return _first_local_minimum(grid, _balance_deltas(grid, tvs))


def combine_estimates(
    sigma1: float,
    sigma2: float,
    series,
    tv_curve,
    solver: SolverConfig = SWEEP_SOLVER,
    h: float | None = None,
) -> float:
    """Pick min(sigma1, sigma2) unless that oversmooths.

    The guard is TV_l = (5/2)(v_max - v_min): if the TV of the denoised
    series at the candidate sigma stays at or above TV_l the candidate
    stands; otherwise the sigma where the TV curve crosses TV_l is found
    by bisection between the bracketing grid points (to 0.1 in sigma)
    and returned.  A series whose full TV is already below TV_l gets 0.
    TV values at off-grid sigmas come from dedicated solver runs, never
    from interpolation.
    """
    v, h = _values_and_h(series, h)
    curve = [(float(s), float(t)) for s, t in tv_curve]
    tv_lower = 2.5 * (float(v.max()) - float(v.min()))
    known = dict(curve)

    def tv_at(s: float) -> float:
        if s in known:
            return known[s]
        t = denoise_values(v, sweep_config(solver, s), h=h).final_tv
        known[s] = t
        return t

    s = min(sigma1, sigma2)
    if tv_at(s) >= tv_lower:
        return float(s)

    lo = hi = None
    for (s0, t0), (s1, t1) in zip(curve, curve[1:]):
        if t0 >= tv_lower > t1:
            lo, hi = s0, s1
    if lo is None:
        if curve and curve[-1][1] >= tv_lower:
            # the curve never drops below the bound on the grid; the
            # candidate must sit beyond it, so the largest grid sigma
            # is the best guarded choice
            return float(curve[-1][0])
        return 0.0
    while hi - lo > 0.1:
        mid = 0.5 * (lo + hi)
        if tv_at(mid) >= tv_lower:
            lo = mid
        else:
            hi = mid
    return float(lo)


def estimate_sigma(
    series,
    sigma_grid=DEFAULT_SIGMA_GRID,
    solver: SolverConfig = SWEEP_SOLVER,
    h: float | None = None,
) -> SigmaEstimate:
    """Run both methods and the combination on one series.

    The grid sweep is shared between Method 2 and the combination rule,
    so the solver runs once per grid point plus whatever the bisection
    needs.
    """
    v, h = _values_and_h(series, h)
    grid = _validate_grid(sigma_grid)
    sigma1 = estimate_sigma_multires(v, h)
    tvs = _sweep_tv(v, h, grid, solver)
    deltas = _balance_deltas(grid, tvs)
    tv_curve = tuple((float(s), float(t)) for s, t in zip(grid, tvs))
    delta_curve = tuple(
        (float(s * s), float(d)) for s, d in zip(grid[1:], deltas)
    )
    tv_lower = 2.5 * (float(v.max()) - float(v.min()))

    flags = []
    if all(t == 0.0 for t in tvs):
        sigma2 = 0.0
        flags.append(FLAG_NO_NOISE)
        best = 0.0
    else:
        sigma2 = _first_local_minimum(grid, deltas)
        best = combine_estimates(sigma1, sigma2, v, tv_curve, solver, h=h)
        if best == 0.0 and min(sigma1, sigma2) > 0.0:
            flags.append(FLAG_TV_BELOW_LOWER_BOUND)
    return SigmaEstimate(
        sigma1=float(sigma1),
        sigma2=float(sigma2),
        sigma_best=float(best),
        tv_curve=tv_curve,
        delta_curve=delta_curve,
        tv_lower=float(tv_lower),
        flags=tuple(flags),
    )
