# /phasekaczmarz/phasekaczmarz/jobs.py

import csv
import logging
import math
from pathlib import Path

import numpy as np

from . import admissibility, analysis, kaczmarz, measurements
from .config import AdmissibilityConstants
from .errors import ContractViolation
from .geometry import SeededRng, normalize
from .models import MomentKind, Mode, SolveConfig
from .util import format_float, write_json

logger = logging.getLogger(__name__)

DRIFT_CSV_HEADER = ['k', 'surviving_mean_sq_error', 'theorem_bound', 'n_surviving']
SWEEP_CSV_HEADER = ['radius', 'max_ratio', 'mean_ratio', 'n_states', 'rho']

# Seeds of the independent streams a job draws from.
STREAM_SYSTEM, STREAM_TRUTH, STREAM_INIT, STREAM_CHECKS = range(4)


def _csv_value(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return format(value, '.17g')
    return value


def _write_csv(path, header, rows):
    with Path(path).open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_value(v) for v in row])
    return path


def gen_system_job(d, m, distribution, seed, out):
    logger.info(f"Gen: {distribution} system d={d} m={m} seed={seed}")
    system = measurements.generate_system(d, m, distribution, SeededRng(seed))
    measurements.save_system(system, out)
    logger.info(f"    -> wrote {out}")
    return system


def observe_job(system_path, truth_path, out, signed=False):
    system = measurements.load_system(system_path)
    x = measurements.load_vector(truth_path)
    observation = (measurements.observe_signed if signed else measurements.observe)(system, x)
    measurements.save_observation(observation, out)
    logger.info(f"Observe: wrote {'signed' if signed else 'phaseless'} observation of m={system.m} to {out}")
    return observation


def random_truth(d, seed):
    """Unit ground truth drawn from its own stream of the seed."""
    return normalize(SeededRng(seed).child(STREAM_TRUTH).standard_normal(d))


def solve_job(system_path, mode, steps, seed, out, obs_path=None, truth_path=None, x0_path=None,
              init_err=0.05, stop_tol=None, trace_every=1, meta_path=None):
    """
    Loads (or synthesises) the data, runs the solver and writes the trace.
    Without a truth vector the observation file is the only data source.
    """
    mode = Mode(mode)
    system = measurements.load_system(system_path)
    truth = measurements.load_vector(truth_path) if truth_path else None

    if obs_path:
        observation = measurements.load_observation(obs_path)
    elif truth is not None:
        observe = measurements.observe_signed if mode == Mode.LINEAR else measurements.observe
        observation = observe(system, truth)
    else:
        raise ContractViolation("solve needs an observation file or a truth vector")

    if x0_path:
        x0 = measurements.load_vector(x0_path)
    elif truth is not None:
        abs_err = init_err * float(np.linalg.norm(truth))
        x0 = analysis.synthetic_init(truth, abs_err, SeededRng(seed).child(STREAM_INIT))
    else:
        raise ContractViolation("solve needs --x0 when no truth vector is given")

    cfg = SolveConfig(max_steps=steps, seed=seed, stop_tol=stop_tol, trace_every=trace_every)
    logger.info(f"Solve: {mode.value} mode, {steps} steps, seed={seed}")
    trace = kaczmarz.run(system, observation, x0, cfg, mode=mode, ground_truth=truth)
    kaczmarz.save_trace(trace, out)
    if meta_path:
        write_json(trace.metadata(), meta_path)
    logger.info(f"    -> wrote {len(trace.steps)} trace rows to {out}")
    return trace


def certify_job(system_path, delta, n_pairs, n_dirs, seed, out=None, constants=None):
    system = measurements.load_system(system_path)
    constants = constants or AdmissibilityConstants.from_config()
    report = admissibility.certify(system, delta, n_pairs, n_dirs,
                                   SeededRng(seed).child(STREAM_CHECKS), constants)
    if out:
        write_json(report.to_dict(), out)
    return report


def _resolve_system(system_path, d, m, seed):
    if system_path:
        return measurements.load_system(system_path)
    if d is None or m is None:
        raise ContractViolation("give either a system file or both d and m")
    return measurements.generate_system(d, m, 'UniformSphere', SeededRng(seed).child(STREAM_SYSTEM))


def _resolve_truth(truth_path, d, seed):
    if truth_path:
        return measurements.load_vector(truth_path)
    return random_truth(d, seed)


def drift_job(delta, eps, n_trials, seed, out=None, csv_out=None, system_path=None, truth_path=None,
              d=None, m=None, horizon=None, record_every=None, threads=1):
    system = _resolve_system(system_path, d, m, seed)
    x = _resolve_truth(truth_path, system.d, seed)
    report = analysis.run_drift_experiment(
        system, x, delta, eps, n_trials,
        horizon=horizon, base_seed=seed, threads=threads, record_every=record_every,
    )
    payload = report.to_dict()
    payload['escape_ok'] = analysis.escape_ok(report)
    payload['decay_ok'] = analysis.decay_ok(report)
    payload['delta_zero'] = analysis.delta_zero()
    if out:
        write_json(payload, out)
    if csv_out:
        _write_csv(csv_out, DRIFT_CSV_HEADER, report.curve_rows())
    return report


def sweep_job(radii, n_states, seed, out=None, csv_out=None, system_path=None, truth_path=None,
              d=None, m=None, delta=None, threads=1):
    system = _resolve_system(system_path, d, m, seed)
    x = _resolve_truth(truth_path, system.d, seed)
    norm_x = float(np.linalg.norm(x))
    logger.info(f"Sweep: {len(radii)} radii x {n_states} states, d={system.d} m={system.m}")
    rows = analysis.contraction_sweep(system, x, radii, n_states,
                                      SeededRng(seed).child(STREAM_INIT), threads=threads)

    payload = {
        'd': system.d,
        'm': system.m,
        'seed': seed,
        'state_law': 'uniform_shell',
        'rho': 1.0 - 1.0 / (4 * system.d),
        'delta_zero': analysis.delta_zero(),
        'rows': [row.to_dict() for row in rows],
    }
    if delta is not None:
        # Chain bound at relative error r/|x|; geodesic distance <= r/|x|.
        payload['chain_bounds'] = [
            analysis.contraction_chain_bound(delta, min(row.radius / norm_x, 1.0)) for row in rows
        ]
    if out:
        write_json(payload, out)
    if csv_out:
        _write_csv(csv_out, SWEEP_CSV_HEADER,
                   [(r.radius, r.max_ratio, r.mean_ratio, r.n_states, r.rho) for r in rows])
    return rows


def moments_job(d, n_samples, seed):
    """Closed-form vs. Monte Carlo rows: (name, exact, estimate, std_error)."""
    rng = SeededRng(seed)
    e1 = np.zeros(d)
    e1[0] = 1.0
    rows = [
        ('second', analysis.second_moment_exact(e1, d),
         analysis.estimate_moment(MomentKind.SECOND, (e1,), n_samples, rng.child(0))),
        ('fourth', analysis.fourth_moment_exact(e1, d),
         analysis.estimate_moment(MomentKind.FOURTH, (e1,), n_samples, rng.child(1))),
    ]
    if d >= 2:
        rows.append(('cross', analysis.cross_moment_exact(d),
                     analysis.estimate_moment(MomentKind.CROSS, (d,), n_samples, rng.child(2))))
        for i, fraction in enumerate((1 / 6, 1 / 4, 1 / 2, 3 / 4)):
            theta = fraction * math.pi
            y = np.zeros(d)
            y[0], y[1] = math.cos(theta), math.sin(theta)
            rows.append((f'mismatch(theta={fraction:.4g}pi)', analysis.mismatch_prob_exact(e1, y),
                         analysis.estimate_moment(MomentKind.MISMATCH, (e1, y), n_samples,
                                                  rng.child(3 + i))))
    return [(name, exact, est.value, est.std_error) for name, exact, est in rows]


def format_moments_table(rows):
    lines = [f"{'moment':<24}{'closed_form':>16}{'monte_carlo':>16}{'std_error':>14}{'z':>8}"]
    for name, exact, value, se in rows:
        z = (value - exact) / se if se > 0 else 0.0
        lines.append(f"{name:<24}{format_float(exact, 10):>16}{format_float(value, 10):>16}"
                     f"{format_float(se, 4):>14}{z:>8.2f}")
    return '\n'.join(lines)
