# /phasekaczmarz/phasekaczmarz/kaczmarz.py

import csv
import logging
from pathlib import Path

import numpy as np

from .errors import ContractViolation, ParseError
from .geometry import SeededRng, as_vector, inner, sigma
from .measurements import check_binding
from .models import IterationTrace, Mode, SolveConfig, StepRecord

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-12
UNIT_TOL = 1e-10
TRACE_HEADER = ['k', 't', 'sq_error', 'mismatch']


def _check_unit(phi_t):
    if abs(float(np.dot(phi_t, phi_t)) - 1.0) > UNIT_TOL:
        raise ContractViolation("measurement vector is not unit norm")


def linear_rk_step(x_k, phi_t, y_t):
    """Orthogonal projection of x_k onto the hyperplane <u, phi_t> = y_t."""
    _check_unit(phi_t)
    return x_k + (y_t - inner(x_k, phi_t)) * phi_t


def phase_rk_step(x_k, phi_t, y_abs_t):
    """
    Kaczmarz step for phaseless data: the unknown sign of <x, phi_t> is
    replaced by the sign of the current measurement <x_k, phi_t>.
    """
    if y_abs_t < 0:
        raise ContractViolation(f"intensity must be nonnegative, got {y_abs_t}")
    _check_unit(phi_t)
    current = inner(x_k, phi_t)
    return x_k + (sigma(current) * y_abs_t - current) * phi_t


def _sq_error(x_ref, x_k, mode):
    minus = float(np.linalg.norm(x_ref - x_k))
    if mode == Mode.LINEAR:
        return minus * minus
    closest = min(minus, float(np.linalg.norm(x_ref + x_k)))
    return closest * closest


def draw_indices(rng, m, n_steps):
    """Uniform indices on {0, ..., m-1}, independent and with replacement."""
    return rng.integers(m, size=n_steps)


def run(system, observation, x0, cfg, mode=Mode.PHASE, ground_truth=None):
    """
    Runs cfg.max_steps randomized Kaczmarz steps from x0.

    Linear mode needs signed measurements, Phase mode intensities. When the
    ground truth is supplied every recorded step carries dist^2(x, x_k) and a
    sign-mismatch flag taken against the sign of x that is closer to x0.
    """
    mode = Mode(mode)
    if not isinstance(cfg, SolveConfig):
        raise ContractViolation("cfg must be a SolveConfig")
    check_binding(system, observation)
    if mode == Mode.LINEAR and not observation.signed:
        raise ContractViolation("linear mode needs signed measurements")
    if mode == Mode.PHASE and observation.signed:
        observation = observation.phaseless()

    x_k = as_vector(x0, d=system.d, name='x0').copy()
    values = observation.values
    vectors = system.vectors
    step = linear_rk_step if mode == Mode.LINEAR else phase_rk_step

    x_ref = None
    initial_sq_error = None
    reference_sign = None
    if ground_truth is not None:
        x = as_vector(ground_truth, d=system.d, name='ground_truth')
        # Signed data pin down x itself; phaseless data only x up to sign.
        reference_sign = 1
        if mode == Mode.PHASE and np.linalg.norm(x - x_k) > np.linalg.norm(x + x_k):
            reference_sign = -1
        x_ref = reference_sign * x
        initial_sq_error = _sq_error(x_ref, x_k, mode)

    rng = SeededRng(cfg.seed)
    indices = draw_indices(rng, system.m, cfg.max_steps)
    last = cfg.max_steps - 1
    steps = []
    stopped_early = False
    error_peaks = None if x_ref is None else [(0, initial_sq_error)]

    for k, t in enumerate(indices):
        t = int(t)
        phi_t = vectors[t]
        mismatch = None
        if x_ref is not None:
            mismatch = sigma(inner(x_ref, phi_t)) != sigma(inner(x_k, phi_t))

        x_k = step(x_k, phi_t, values[t])

        sq_error = None
        if x_ref is not None:
            sq_error = _sq_error(x_ref, x_k, mode)
            if sq_error > error_peaks[-1][1]:
                error_peaks.append((k + 1, sq_error))
            if cfg.stop_tol is not None and sq_error <= cfg.stop_tol:
                stopped_early = k < last
                steps.append(StepRecord(k, t, sq_error, mismatch))
                break

        if k % cfg.trace_every == 0 or k == last:
            steps.append(StepRecord(k, t, sq_error, mismatch))

    trace = IterationTrace(
        steps=steps,
        final_iterate=x_k,
        initial_sq_error=initial_sq_error,
        mode=mode,
        seed=cfg.seed,
        reference_sign=reference_sign,
        stopped_early=stopped_early,
        error_peaks=error_peaks,
    )
    if stopped_early:
        logger.info(f"    -> stopped early at step {steps[-1].k} (sq_error={steps[-1].sq_error:.3e})")
    return trace


def hitting_time(trace, b):
    """
    First j >= 0 with dist^2(x, x_j) > b^2, where j counts applied steps.
    Returns None when no error within the horizon exceeds b^2.

    The first exceedance is always a new running maximum, so traces from
    `run` answer exactly from their error peaks whatever the record stride.
    Traces without peaks must hold every step.
    """
    if b <= 0:
        raise ContractViolation(f"b must be positive, got {b}")
    if not trace.has_ground_truth:
        raise ContractViolation("hitting_time needs a trace recorded with ground truth")
    threshold = b * b
    if trace.error_peaks is not None:
        path = trace.error_peaks
    elif trace.is_contiguous:
        path = trace.error_path()
    else:
        raise ContractViolation("trace skips steps and carries no error peaks; record with trace_every=1")
    for j, sq_error in path:
        if sq_error > threshold:
            return j
    return None


def save_trace(trace, path):
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRACE_HEADER)
        for rec in trace.steps:
            writer.writerow([
                rec.k,
                rec.t,
                '' if rec.sq_error is None else format(rec.sq_error, '.17g'),
                '' if rec.mismatch is None else int(rec.mismatch),
            ])
    return path


def load_trace(path):
    """Reads the step records of a trace file (final iterate is not stored)."""
    path = Path(path)
    with path.open('r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TRACE_HEADER:
        raise ParseError(f"header must be {','.join(TRACE_HEADER)}", path=path, line=1)
    steps = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ParseError("expected 4 columns", path=path, line=i)
        try:
            steps.append(StepRecord(
                k=int(row[0]),
                t=int(row[1]),
                sq_error=float(row[2]) if row[2] else None,
                mismatch=bool(int(row[3])) if row[3] else None,
            ))
        except ValueError:
            raise ParseError("malformed trace row", path=path, line=i)
    return steps
