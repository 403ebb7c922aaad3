# /phasekaczmarz/phasekaczmarz/admissibility.py
"""
Empirical certification of the four deterministic admissibility conditions
of a measurement system:

  tessellation     sign-disagreement fractions track geodesic distance
  second moment    1/(2d) <= z^T M z <= 3/(2d) on the unit sphere
  trunc fourth     truncated fourth moment <= 4/d^2
  trunc tail       tail second moment <= 4 delta / d

Only the second-moment condition is decided exactly (extreme eigenvalues).
The others are suprema over the sphere and are certified by sampling plus
adversarial candidates; a sampled pass is evidence, a sampled fail comes
with a witness and is a proof of violation.
"""

import logging
import math

import numpy as np

from .config import AdmissibilityConstants, Config
from .errors import ContractViolation, EigenSolverError
from .geometry import as_vector, geodesic_frac, sample_unit_sphere_batch
from .models import AdmissibilityReport, CheckMethod, ConditionResult

logger = logging.getLogger(__name__)

PAIR_CHUNK = 128
DIR_CHUNK = 256

SIGMA_ZERO_NOTE = ("sign disagreement uses sigma(0) = +1; verdicts on systems with exact "
                   "zeros in <x, phi> depend on this convention")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ContractViolation(f"delta must lie in (0, 1), got {delta}")


# --- Truncation surrogates ---

def gamma1(s, delta):
    """Lipschitz (2/delta) surrogate for s^2 truncated at 1/delta."""
    _check_delta(delta)
    s = np.asarray(s, dtype=np.float64)
    inv = 1.0 / delta
    out = np.where(s <= inv, s * s, np.where(s <= 2.0 * inv, (2.0 * inv - s) * inv, 0.0))
    return float(out) if out.ndim == 0 else out


def gamma2(s, delta):
    """Lipschitz (2) surrogate for s restricted to s > 1/delta."""
    _check_delta(delta)
    s = np.asarray(s, dtype=np.float64)
    out = np.where(s <= 1.0 / delta, delta * s * s, s)
    return float(out) if out.ndim == 0 else out


# --- Condition: tessellation ---

def _signs(points, vectors):
    """sigma(<p, phi_i>) for every point (rows) and measurement (columns)."""
    return (points @ vectors.T) >= 0


def tessellation_deviation(system, x, y, one_sided=False):
    x = as_vector(x, d=system.d, name='x')
    y = as_vector(y, d=system.d, name='y')
    sx = _signs(x[None, :], system.vectors)[0]
    sy = _signs(y[None, :], system.vectors)[0]
    fraction = float(np.mean(sx != sy))
    gap = fraction - geodesic_frac(x, y)
    return gap if one_sided else abs(gap)


def sample_tessellation_pairs(d, n_pairs, rng, radius_range=Config.SMALL_ANGLE_RADIUS_RANGE):
    """
    Half independent uniform pairs, half correlated pairs y = normalize(x + r u)
    with r log-uniform on radius_range so small angles are probed.
    """
    n_close = n_pairs // 2
    n_far = n_pairs - n_close
    xs = sample_unit_sphere_batch(n_pairs, d, rng)
    ys_far = sample_unit_sphere_batch(n_far, d, rng)

    low, high = radius_range
    radii = np.exp(rng.uniform(math.log(low), math.log(high), size=n_close))
    directions = sample_unit_sphere_batch(n_close, d, rng)
    ys_close = xs[n_far:] + radii[:, None] * directions
    norms = np.linalg.norm(ys_close, axis=1)
    # x + r u vanishes only for r = 1, u = -x; fall back to x itself.
    degenerate = norms == 0.0
    ys_close[degenerate] = xs[n_far:][degenerate]
    norms[degenerate] = 1.0
    ys_close = ys_close / norms[:, None]

    return xs, np.vstack([ys_far, ys_close])


def check_tessellation(system, delta, n_pairs, rng, one_sided=False):
    _check_delta(delta)
    if n_pairs < 1:
        raise ContractViolation(f"n_pairs must be >= 1, got {n_pairs}")
    xs, ys = sample_tessellation_pairs(system.d, n_pairs, rng)

    worst = -math.inf
    worst_index = 0
    for start in range(0, n_pairs, PAIR_CHUNK):
        stop = min(start + PAIR_CHUNK, n_pairs)
        sx = _signs(xs[start:stop], system.vectors)
        sy = _signs(ys[start:stop], system.vectors)
        fractions = np.mean(sx != sy, axis=1)
        cosines = np.clip(np.sum(xs[start:stop] * ys[start:stop], axis=1), -1.0, 1.0)
        gaps = fractions - np.arccos(cosines) / math.pi
        deviations = gaps if one_sided else np.abs(gaps)
        i = int(np.argmax(deviations))
        if deviations[i] > worst:  # strict: ties keep the lowest index
            worst = float(deviations[i])
            worst_index = start + i

    passed = worst < delta
    logger.debug(f"    -> tessellation: max deviation {worst:.4g} over {n_pairs} pairs")
    return ConditionResult(
        name='tessellation',
        passed=passed,
        worst_margin=delta - worst,
        method=CheckMethod.SAMPLED_SUP,
        samples_used=n_pairs,
        observed=worst,
        bound=delta,
        witness=None if passed else [xs[worst_index], ys[worst_index]],
    )


# --- Condition: second moment sandwich ---

def second_moment_matrix(system):
    return system.vectors.T @ system.vectors / system.m


def quadratic_form_extremes(system):
    """(lambda_min, v_min, lambda_max, v_max) of the empirical second-moment matrix."""
    try:
        eigvals, eigvecs = np.linalg.eigh(second_moment_matrix(system))
    except np.linalg.LinAlgError as e:
        raise EigenSolverError(f"eigen-decomposition failed: {e}") from e
    return float(eigvals[0]), eigvecs[:, 0], float(eigvals[-1]), eigvecs[:, -1]


def check_second_moment(system, constants=None):
    constants = constants or AdmissibilityConstants.from_config()
    d = system.d
    lam_min, v_min, lam_max, v_max = quadratic_form_extremes(system)
    lower = constants.second_moment_lower / d
    upper = constants.second_moment_upper / d
    low_margin = lam_min - lower
    high_margin = upper - lam_max

    if low_margin <= high_margin:
        margin, observed, bound, witness = low_margin, lam_min, lower, v_min
    else:
        margin, observed, bound, witness = high_margin, lam_max, upper, v_max
    passed = lam_min >= lower and lam_max <= upper

    return ConditionResult(
        name='second_moment',
        passed=passed,
        worst_margin=float(margin),
        method=CheckMethod.EXACT_EIGEN,
        samples_used=0,
        observed=observed,
        bound=bound,
        witness=None if passed else [witness],
    )


# --- Conditions: truncated moments ---

def candidate_directions(system, n_dirs, rng):
    """n_dirs uniform directions followed by every measurement vector."""
    return np.vstack([sample_unit_sphere_batch(n_dirs, system.d, rng), system.vectors])


def trunc_fourth_values(system, delta, directions):
    """E_phi[<z,phi>^4 1{<z,phi>^2 <= 1/(delta d)}] for each unit direction z."""
    threshold = 1.0 / (delta * system.d)
    out = np.empty(len(directions))
    for start in range(0, len(directions), DIR_CHUNK):
        p2 = (directions[start:start + DIR_CHUNK] @ system.vectors.T) ** 2
        out[start:start + DIR_CHUNK] = np.mean(np.where(p2 <= threshold, p2 * p2, 0.0), axis=1)
    return out


def trunc_tail_values(system, delta, directions):
    """E_phi[<z,phi>^2 1{<z,phi>^2 > 1/(delta d)}] for each unit direction z."""
    threshold = 1.0 / (delta * system.d)
    out = np.empty(len(directions))
    for start in range(0, len(directions), DIR_CHUNK):
        p2 = (directions[start:start + DIR_CHUNK] @ system.vectors.T) ** 2
        out[start:start + DIR_CHUNK] = np.mean(np.where(p2 > threshold, p2, 0.0), axis=1)
    return out


def _sampled_sup(name, values, directions, bound, n_sampled):
    i = int(np.argmax(values))  # first maximum: lowest candidate index
    worst = float(values[i])
    passed = worst <= bound
    return ConditionResult(
        name=name,
        passed=passed,
        worst_margin=bound - worst,
        method=CheckMethod.SAMPLED_SUP,
        samples_used=n_sampled,
        observed=worst,
        bound=bound,
        witness=None if passed else [directions[i]],
    )


def check_trunc_fourth(system, delta, n_dirs, rng, constants=None):
    _check_delta(delta)
    if n_dirs < 1:
        raise ContractViolation(f"n_dirs must be >= 1, got {n_dirs}")
    constants = constants or AdmissibilityConstants.from_config()
    directions = candidate_directions(system, n_dirs, rng)
    values = trunc_fourth_values(system, delta, directions)
    return _sampled_sup('trunc_fourth', values, directions,
                        constants.trunc_fourth / system.d ** 2, len(directions))


def check_trunc_tail(system, delta, n_dirs, rng, constants=None):
    _check_delta(delta)
    if n_dirs < 1:
        raise ContractViolation(f"n_dirs must be >= 1, got {n_dirs}")
    constants = constants or AdmissibilityConstants.from_config()
    directions = candidate_directions(system, n_dirs, rng)
    values = trunc_tail_values(system, delta, directions)
    return _sampled_sup('trunc_tail', values, directions,
                        constants.trunc_tail * delta / system.d, len(directions))


def certify(system, delta, n_pairs, n_dirs, rng, constants=None):
    """
    Runs all four checks. Each sampled check draws from its own child stream
    of rng so adding pairs never changes the candidate directions.
    """
    _check_delta(delta)
    constants = constants or AdmissibilityConstants.from_config()
    logger.info(f"Certify: d={system.d} m={system.m} delta={delta}")

    report = AdmissibilityReport(
        delta=delta,
        cond_tessellation=check_tessellation(system, delta, n_pairs, rng.child(0)),
        cond_second_moment=check_second_moment(system, constants),
        cond_trunc_fourth=check_trunc_fourth(system, delta, n_dirs, rng.child(1), constants),
        cond_trunc_tail=check_trunc_tail(system, delta, n_dirs, rng.child(2), constants),
        constants=constants.to_dict(),
        notes=[SIGMA_ZERO_NOTE],
    )
    for cond in report.conditions:
        verdict = 'pass' if cond.passed else 'FAIL'
        logger.info(f"    -> {cond.name}: {verdict} (margin {cond.worst_margin:.4g}, {cond.method.value})")
    return report
