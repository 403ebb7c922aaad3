# /phasekaczmarz/phasekaczmarz/analysis.py
"""
Closed-form moment oracles for the uniform law on the sphere, the exact
one-step conditional expectation of the phase Kaczmarz error, and the Monte
Carlo drift / hitting-time harness.
"""

import logging
import math

import numpy as np

from .config import Config
from .errors import ContractViolation, DomainError
from .geometry import (
    SeededRng,
    as_vector,
    geodesic_frac,
    sample_unit_sphere,
    sample_unit_sphere_batch,
    sigma_array,
)
from .kaczmarz import draw_indices
from .models import DriftReport, MomentEstimate, MomentKind, SweepRow
from .util import chunk_ranges, parallel_map

logger = logging.getLogger(__name__)

MOMENT_CHUNK = 100_000
FIT_FLOOR = 1e-20
ROUNDOFF_FACTOR = 16


# --- Closed-form oracles ---

def second_moment_exact(z, d):
    """E <z, phi>^2 = |z|^2 / d."""
    if d < 1:
        raise ContractViolation(f"d must be >= 1, got {d}")
    z = as_vector(z, name='z')
    return float(np.dot(z, z)) / d


def fourth_moment_exact(z, d):
    """E <z, phi>^4 = 3 |z|^4 / (d (d + 2))."""
    if d < 1:
        raise ContractViolation(f"d must be >= 1, got {d}")
    z = as_vector(z, name='z')
    sq = float(np.dot(z, z))
    return 3.0 * sq * sq / (d * (d + 2))


def cross_moment_exact(d):
    """E <e1, phi>^2 <e2, phi>^2 = 1 / (d (d + 2)); a third of the fourth moment."""
    if d < 2:
        raise ContractViolation(f"cross moment needs d >= 2, got {d}")
    return 1.0 / (d * (d + 2))


def mismatch_prob_exact(x, y):
    """P(sigma(<x, phi>) != sigma(<y, phi>)) = angle(x, y) / pi."""
    return geodesic_frac(x, y)


def mismatch_energy_bound(x, y, d):
    """Cauchy-Schwarz bound on E |sigma diff|^2 <x - y, phi>^2."""
    x = as_vector(x, name='x')
    y = as_vector(y, d=x.size, name='y')
    return 4.0 * math.sqrt(mismatch_prob_exact(x, y)) * math.sqrt(fourth_moment_exact(x - y, d))


def delta_zero():
    """Largest delta with 8 sqrt(2 delta) + 16 delta <= 1/4 (quadratic in sqrt(delta))."""
    root = (-8.0 * math.sqrt(2.0) + math.sqrt(128.0 + 16.0)) / 32.0
    return root * root


def contraction_chain_bound(delta, geo):
    """d |z|^-2 E_Phi |sigma diff|^2 <z, phi>^2 is at most this on an admissible system."""
    return 8.0 * math.sqrt(delta + geo) + 16.0 * delta


# --- Monte Carlo estimators ---

def _moment_samples(kind, args, phi):
    if kind == MomentKind.SECOND:
        return (phi @ args[0]) ** 2
    if kind == MomentKind.FOURTH:
        return (phi @ args[0]) ** 4
    if kind == MomentKind.CROSS:
        return phi[:, 0] ** 2 * phi[:, 1] ** 2
    x, y = args
    differ = sigma_array(phi @ x) != sigma_array(phi @ y)
    if kind == MomentKind.MISMATCH:
        return differ.astype(np.float64)
    # |sigma diff|^2 is 4 on a mismatch and 0 otherwise
    return np.where(differ, 4.0 * (phi @ (x - y)) ** 2, 0.0)


def estimate_moment(kind, args, n_samples, rng):
    """
    Sample mean over fresh uniform sphere draws with its standard error.

    args: (z,) for second/fourth, (d,) for cross, (x, y) for the mismatch kinds.
    """
    kind = MomentKind(kind)
    if n_samples < 2:
        raise ContractViolation(f"n_samples must be >= 2, got {n_samples}")
    if kind == MomentKind.CROSS:
        d = int(args[0])
        if d < 2:
            raise ContractViolation(f"cross moment needs d >= 2, got {d}")
        args = ()
    elif kind in (MomentKind.SECOND, MomentKind.FOURTH):
        args = (as_vector(args[0], name='z'),)
        d = args[0].size
    else:
        x = as_vector(args[0], name='x')
        y = as_vector(args[1], d=x.size, name='y')
        if not np.any(x) or not np.any(y):
            raise DomainError("mismatch moments need nonzero x and y")
        args = (x, y)
        d = x.size

    samples = np.concatenate([
        _moment_samples(kind, args, sample_unit_sphere_batch(len(block), d, rng))
        for block in chunk_ranges(n_samples, MOMENT_CHUNK)
    ])
    return MomentEstimate(
        value=float(np.mean(samples)),
        n_samples=n_samples,
        std_error=float(np.std(samples, ddof=1) / math.sqrt(n_samples)),
    )


# --- Exact one-step expectation ---

def _check_pair(system, x, x_k):
    x = as_vector(x, d=system.d, name='x')
    x_k = as_vector(x_k, d=system.d, name='x_k')
    return x, x_k


def expected_onestep_sq_error(system, x, x_k):
    """
    E_t |x - x_{k+1}|^2 over the uniform index draw, by enumerating all m
    possible phase Kaczmarz steps from x_k.
    """
    x, x_k = _check_pair(system, x, x_k)
    vectors = system.vectors
    current = vectors @ x_k
    coef = sigma_array(current) * np.abs(vectors @ x) - current
    z_next = (x - x_k)[None, :] - coef[:, None] * vectors
    return float(np.mean(np.einsum('ij,ij->i', z_next, z_next)))


def expected_onestep_sq_error_identity(system, x, x_k):
    """
    The same expectation rebuilt from the per-step identity
    |z'|^2 = |z|^2 - <z, phi>^2 + |sigma(<x,phi>) - sigma(<x_k,phi>)|^2 <x, phi>^2.
    """
    x, x_k = _check_pair(system, x, x_k)
    vectors = system.vectors
    z = x - x_k
    along_x = vectors @ x
    sign_gap = sigma_array(along_x) - sigma_array(vectors @ x_k)
    per_step = float(np.dot(z, z)) - (vectors @ z) ** 2 + sign_gap ** 2 * along_x ** 2
    return float(np.mean(per_step))


# --- Initialisation and sweeps ---

def synthetic_init(x, abs_err, rng):
    """x0 = x + abs_err * u with u uniform on the sphere; dist(x, x0) = abs_err."""
    x = as_vector(x, name='x')
    norm = float(np.linalg.norm(x))
    if not 0.0 <= abs_err < norm:
        raise ContractViolation(f"abs_err must lie in [0, |x|) = [0, {norm:.6g}), got {abs_err}")
    return x + abs_err * sample_unit_sphere(x.size, rng)


def contraction_sweep(system, x, radii, n_states, rng, threads=1):
    """
    For each radius r, the exact one-step ratio E|z_{k+1}|^2 / |z_k|^2 over
    n_states states x_k = x - r u, u uniform on the sphere (a uniform-shell
    surrogate for the algorithm's own law of x_k).
    """
    x = as_vector(x, d=system.d, name='x')
    if n_states < 1:
        raise ContractViolation(f"n_states must be >= 1, got {n_states}")
    rho = 1.0 - 1.0 / (4 * system.d)
    rows = []
    for i, r in enumerate(radii):
        if not r > 0:
            raise ContractViolation(f"radii must be positive, got {r}")
        states = x[None, :] - r * sample_unit_sphere_batch(n_states, system.d, rng.child(i))

        def ratio(x_k):
            z = x - x_k
            return expected_onestep_sq_error(system, x, x_k) / float(np.dot(z, z))

        ratios = np.array(parallel_map(ratio, states, threads))
        rows.append(SweepRow(
            radius=float(r),
            max_ratio=float(np.max(ratios)),
            mean_ratio=float(np.mean(ratios)),
            n_states=n_states,
            rho=rho,
        ))
        logger.info(f"    -> r={r:.4g}: max ratio {rows[-1].max_ratio:.6f} (rho={rho:.6f})")
    return rows


# --- Drift / hitting-time harness ---

def _batch_sq_dist(x, iterates):
    minus = np.sum((x[None, :] - iterates) ** 2, axis=1)
    plus = np.sum((x[None, :] + iterates) ** 2, axis=1)
    return np.minimum(minus, plus)


def _batch_intensities(system, x):
    # same contraction as the batched step, so x itself is an exact fixed point
    vectors = np.ascontiguousarray(system.vectors)
    return np.abs(np.einsum('ij,ij->i', vectors, np.tile(x, (system.m, 1))))


def record_schedule(horizon, record_every):
    steps = list(range(0, horizon + 1, record_every))
    if steps[-1] != horizon:
        steps.append(horizon)
    return steps


def _drift_chunk(system, x, intensities, abs_err, b_sq, horizon, schedule, base_rng, trial_ids):
    """
    Runs one fixed block of trials side by side. Trial i draws its start and
    its index sequence from base_rng.child(i) only, so the block result does
    not depend on which other trials share it.
    """
    n = len(trial_ids)
    d = system.d
    iterates = np.empty((n, d))
    indices = np.empty((n, horizon), dtype=np.int64)
    for row, i in enumerate(trial_ids):
        child = base_rng.child(i)
        iterates[row] = synthetic_init(x, abs_err, child)
        indices[row] = draw_indices(child, system.m, horizon)

    record_at = {j: slot for slot, j in enumerate(schedule)}
    recorded_sq = np.empty((len(schedule), n))
    recorded_alive = np.empty((len(schedule), n), dtype=bool)

    sq = _batch_sq_dist(x, iterates)
    hit = np.where(sq > b_sq, 0, -1)
    alive = sq <= b_sq
    recorded_sq[0] = sq
    recorded_alive[0] = True
    energy_sum = 0.0

    for k in range(horizon):
        t = indices[:, k]
        phis = system.vectors[t]
        current = np.einsum('ij,ij->i', phis, iterates)
        coef = sigma_array(current) * intensities[t] - current
        iterates += coef[:, None] * phis

        sq = _batch_sq_dist(x, iterates)
        survived_to_k = alive.copy()
        if k >= 1:
            energy_sum += float(np.sum(sq[survived_to_k]))
        newly = alive & (sq > b_sq)
        hit[newly] = k + 1
        alive &= ~newly

        slot = record_at.get(k + 1)
        if slot is not None:
            recorded_sq[slot] = sq
            recorded_alive[slot] = survived_to_k

    return {
        'hit': hit,
        'recorded_sq': recorded_sq,
        'recorded_alive': recorded_alive,
        'final_sq': sq,
        'energy_sum': energy_sum,
    }


def _fit_rho(schedule, means, floor):
    points = [(j, v) for j, v in zip(schedule, means) if v is not None and v > floor]
    if len(points) < 2:
        return None
    js = np.array([p[0] for p in points], dtype=np.float64)
    logs = np.log([p[1] for p in points])
    slope = np.polyfit(js, logs, 1)[0]
    return float(math.exp(slope))


def run_drift_experiment(system, x, delta, eps, n_trials, horizon=None, base_seed=0,
                         threads=1, record_every=None, trial_chunk=None):
    """
    Runs n_trials independent phase Kaczmarz paths started at relative error
    delta * eps and measures escapes above b = delta |x| together with the
    conditional decay of the squared error. Aggregation is in trial order, so
    the report is identical for any thread count.
    """
    x = as_vector(x, d=system.d, name='x')
    if not delta > 0 or not eps >= 0 or not delta * eps < 1:
        raise ContractViolation(f"need delta > 0, eps >= 0 and delta * eps < 1, got {delta}, {eps}")
    if n_trials < 1:
        raise ContractViolation(f"n_trials must be >= 1, got {n_trials}")
    d = system.d
    horizon = horizon or Config.HORIZON_PER_DIM * d
    record_every = record_every or max(1, horizon // 200)
    trial_chunk = trial_chunk or Config.TRIAL_CHUNK

    norm_x = float(np.linalg.norm(x))
    b = delta * norm_x
    b_sq = b * b
    abs_err = delta * eps * norm_x
    rho = 1.0 - 1.0 / (4 * d)
    roundoff_floor = (ROUNDOFF_FACTOR * d * np.finfo(np.float64).eps * norm_x) ** 2
    schedule = record_schedule(horizon, record_every)
    intensities = _batch_intensities(system, x)
    base_rng = SeededRng(base_seed)

    logger.info(f"Drift: {n_trials} trials, d={d} m={system.m} K={horizon} b={b:.4g} seed={base_seed}")
    blocks = chunk_ranges(n_trials, trial_chunk)

    def run_block(block):
        result = _drift_chunk(system, x, intensities, abs_err, b_sq, horizon, schedule, base_rng, block)
        logger.debug(f"    -> trials {block.start}-{block.stop - 1} done")
        return result

    results = parallel_map(run_block, blocks, threads)

    hit = np.concatenate([r['hit'] for r in results])
    recorded_sq = np.concatenate([r['recorded_sq'] for r in results], axis=1)
    recorded_alive = np.concatenate([r['recorded_alive'] for r in results], axis=1)
    final_sq = np.concatenate([r['final_sq'] for r in results])
    energy_sum = sum(r['energy_sum'] for r in results)

    escaped = hit >= 0
    escape_count = int(np.count_nonzero(escaped))
    z0_sq = float(np.mean(recorded_sq[0]))

    means, std_errors, counts, bounds, stable = [], [], [], [], []
    for slot, j in enumerate(schedule):
        mask = recorded_alive[slot]
        survivors = recorded_sq[slot][mask]
        counts.append(int(survivors.size))
        means.append(float(np.mean(survivors)) if survivors.size else None)
        std_errors.append(float(np.std(survivors, ddof=1) / math.sqrt(survivors.size))
                          if survivors.size > 1 else 0.0)
        bounds.append(math.exp(-j / (4 * d)) * z0_sq)
        stable.append(float(np.mean(np.where(escaped, 0.0, recorded_sq[slot]))))

    escape_frequency = escape_count / n_trials
    report = DriftReport(
        d=d,
        m=system.m,
        delta_b=b,
        rho=rho,
        n_trials=n_trials,
        horizon=horizon,
        escape_count=escape_count,
        escape_bound=rho * z0_sq / b_sq,
        initial_sq_error=z0_sq,
        recorded_k=schedule,
        surviving_mean_sq_error=means,
        surviving_std_error=std_errors,
        n_surviving=counts,
        theorem_bound=bounds,
        stable_weighted_mean_sq_error=stable,
        energy_lhs=b_sq * escape_frequency + (1.0 / rho - 1.0) * energy_sum / n_trials,
        energy_rhs=rho * z0_sq,
        fitted_rho=(_fit_rho(schedule, means, max(FIT_FLOOR * z0_sq, roundoff_floor))
                    if z0_sq > 0 else None),
        final_sq_errors=final_sq.tolist(),
        base_seed=base_seed,
        roundoff_floor=roundoff_floor,
    )
    logger.info(f"    -> escapes {escape_count}/{n_trials}, bound {report.escape_bound:.4g}, "
                f"fitted rho {report.fitted_rho}")
    return report


def escape_ok(report, n_se=3.0):
    """Escape frequency within the escape bound plus n_se binomial standard errors."""
    p = min(max(report.escape_bound, 0.0), 1.0)
    se = math.sqrt(p * (1.0 - p) / report.n_trials)
    return report.escape_frequency <= report.escape_bound + n_se * se


def decay_ok(report, n_se=3.0, rel_tol=1e-12):
    """
    Surviving mean curve below exp(-k/4d) |z0|^2 + n_se SE at every recorded k.
    Means already at the roundoff floor are not held against the bound.
    """
    for mean, se, bound in zip(report.surviving_mean_sq_error, report.surviving_std_error,
                               report.theorem_bound):
        if mean is None:
            continue
        if mean > bound * (1.0 + rel_tol) + n_se * se + report.roundoff_floor:
            return False
    return True


def tail_probability_check(report, a):
    """
    Empirical P(|z_K| >= rho^(K/2) a) at the horizon against its bound
    (|z0| / a)^2 + P(escape).
    """
    if not a > 0:
        raise ContractViolation(f"a must be positive, got {a}")
    level_sq = report.rho ** report.horizon * a * a
    final = np.asarray(report.final_sq_errors)
    empirical = float(np.mean(final >= level_sq))
    bound = report.initial_sq_error / (a * a) + report.escape_frequency
    return empirical, bound
