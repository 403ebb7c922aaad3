import math

import numpy as np
import pytest

from phasekaczmarz.analysis import synthetic_init
from phasekaczmarz.errors import ContractViolation, DigestMismatch
from phasekaczmarz.geometry import SeededRng, inner, sigma
from phasekaczmarz.kaczmarz import (
    TRACE_HEADER,
    hitting_time,
    linear_rk_step,
    load_trace,
    phase_rk_step,
    run,
    save_trace,
)
from phasekaczmarz.measurements import generate_system, observe, observe_signed
from phasekaczmarz.models import IterationTrace, Mode, SolveConfig, StepRecord

E1 = np.array([1.0, 0.0])


def test_linear_step_examples():
    assert np.allclose(linear_rk_step(np.array([0.0, 0.0]), E1, 2.0), [2.0, 0.0])
    assert np.allclose(linear_rk_step(np.array([5.0, 3.0]), E1, 2.0), [2.0, 3.0])


def test_phase_step_examples():
    assert np.allclose(phase_rk_step(np.array([0.5, 0.2]), E1, 1.0), [1.0, 0.2])
    # a sign mismatch pushes the iterate to the wrong branch
    assert np.allclose(phase_rk_step(np.array([-0.5, 0.2]), E1, 1.0), [-1.0, 0.2])
    # sigma(0) = +1
    assert np.allclose(phase_rk_step(np.array([0.0, 0.2]), E1, 1.0), [1.0, 0.2])


def test_phase_step_zero_intensity_lands_on_hyperplane(rng):
    phi = np.array([0.6, 0.8])
    out = phase_rk_step(rng.standard_normal(2), phi, 0.0)
    assert abs(inner(out, phi)) < 1e-12


def test_phase_step_satisfies_intensity(rng):
    for _ in range(200):
        phi = rng.standard_normal(5)
        phi /= np.linalg.norm(phi)
        x_k = rng.standard_normal(5)
        y_abs = abs(rng.standard_normal())
        assert abs(abs(inner(phase_rk_step(x_k, phi, y_abs), phi)) - y_abs) < 1e-12


def test_step_contracts():
    with pytest.raises(ContractViolation):
        phase_rk_step(np.zeros(2), E1, -1.0)
    with pytest.raises(ContractViolation):
        phase_rk_step(np.zeros(2), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(ContractViolation):
        linear_rk_step(np.zeros(2), np.array([2.0, 0.0]), 1.0)


def _random_state(rng, d):
    phi = rng.standard_normal(d)
    phi /= np.linalg.norm(phi)
    x = rng.standard_normal(d)
    x_k = x + rng.uniform(0.01, 2.0) * rng.standard_normal(d)
    return x, x_k, phi


def _check_identity(rng, n_steps):
    for _ in range(n_steps):
        d = int(rng.integers(63)) + 2
        x, x_k, phi = _random_state(rng, d)
        z = x - x_k
        x_next = phase_rk_step(x_k, phi, abs(inner(x, phi)))
        z_next = x - x_next
        gap = sigma(inner(x, phi)) - sigma(inner(x_k, phi))
        lhs = float(np.dot(z_next, z_next))
        rhs = float(np.dot(z, z)) - inner(z, phi) ** 2 + gap ** 2 * inner(x, phi) ** 2
        scale = float(np.dot(z, z)) + 4 * inner(x, phi) ** 2
        assert abs(lhs - rhs) <= 1e-10 * scale
        bound = float(np.dot(z, z)) + (gap ** 2 - 1) * inner(z, phi) ** 2
        assert lhs <= bound + 1e-10 * scale


def test_per_step_error_identity():
    _check_identity(SeededRng(2024), 2000)


@pytest.mark.slow
def test_per_step_error_identity_many():
    _check_identity(SeededRng(2025), 100_000)


def test_phase_fixed_point(random_system, rng):
    system = random_system(5, 40)
    x = rng.standard_normal(5)
    trace = run(system, observe(system, x), x, SolveConfig(max_steps=200, seed=1), ground_truth=x)
    assert trace.initial_sq_error == 0.0
    assert all(rec.sq_error == 0.0 for rec in trace.steps)
    assert np.array_equal(trace.final_iterate, x)


def test_linear_mode_never_increases_error(random_system, rng):
    d, m = 20, 200
    system = random_system(d, m, seed=8)
    x = rng.standard_normal(d)
    x0 = rng.standard_normal(d)
    trace = run(system, observe_signed(system, x), x0, SolveConfig(max_steps=2000, seed=3),
                mode=Mode.LINEAR, ground_truth=x)
    errors = [e for _, e in trace.error_path()]
    for before, after in zip(errors, errors[1:]):
        assert after <= before * (1 + 1e-9) + 1e-28


def test_sign_flip_equivariance(random_system, rng):
    system = random_system(6, 60, seed=4)
    x = rng.standard_normal(6)
    x0 = synthetic_init(x, 0.3 * np.linalg.norm(x), rng)
    obs = observe(system, x)
    cfg = SolveConfig(max_steps=300, seed=9)
    plus = run(system, obs, x0, cfg, ground_truth=x)
    minus = run(system, obs, -x0, cfg, ground_truth=x)
    assert np.array_equal(minus.final_iterate, -plus.final_iterate)
    assert [r.sq_error for r in minus.steps] == [r.sq_error for r in plus.steps]
    assert minus.reference_sign == -plus.reference_sign


def test_phase_matches_linear_without_mismatch(random_system, rng):
    d = 10
    system = random_system(d, 200, seed=5)
    x = rng.standard_normal(d)
    x0 = synthetic_init(x, 1e-4 * np.linalg.norm(x), rng)
    cfg = SolveConfig(max_steps=500, seed=6)
    phase = run(system, observe(system, x), x0, cfg, ground_truth=x)
    linear = run(system, observe_signed(system, x), x0, cfg, mode=Mode.LINEAR, ground_truth=x)
    assert not any(rec.mismatch for rec in phase.steps)
    assert np.array_equal(phase.final_iterate, linear.final_iterate)
    assert [r.t for r in phase.steps] == [r.t for r in linear.steps]
    assert phase.steps == linear.steps


def _recovery_successes(n_trials):
    d, m = 20, 400
    successes = 0
    for trial in range(n_trials):
        rng = SeededRng(1000 + trial)
        system = generate_system(d, m, 'UniformSphere', rng.child(0))
        x = rng.child(1).standard_normal(d)
        x0 = synthetic_init(x, 0.05 * np.linalg.norm(x), rng.child(2))
        trace = run(system, observe(system, x), x0, SolveConfig(max_steps=4000, seed=trial),
                    ground_truth=x)
        if trace.final_sq_error() <= 1e-12 * float(np.dot(x, x)):
            successes += 1
    return successes


def test_local_recovery_from_five_percent():
    assert _recovery_successes(10) >= 9


@pytest.mark.slow
def test_local_recovery_from_five_percent_many():
    assert _recovery_successes(100) >= 99


def test_run_is_reproducible(random_system, rng):
    system = random_system(4, 30)
    x = rng.standard_normal(4)
    obs = observe(system, x)
    cfg = SolveConfig(max_steps=100, seed=2)
    a = run(system, obs, np.zeros(4), cfg, ground_truth=x)
    b = run(system, obs, np.zeros(4), cfg, ground_truth=x)
    assert a.steps == b.steps
    assert np.array_equal(a.final_iterate, b.final_iterate)


def test_run_rejects_foreign_observation(random_system):
    a = random_system(3, 10, seed=1)
    b = random_system(3, 10, seed=2)
    with pytest.raises(DigestMismatch):
        run(b, observe(a, np.ones(3)), np.zeros(3), SolveConfig(max_steps=5))


def test_linear_mode_needs_signed_data(random_system):
    system = random_system(3, 10)
    with pytest.raises(ContractViolation):
        run(system, observe(system, np.ones(3)), np.zeros(3), SolveConfig(max_steps=5), mode=Mode.LINEAR)


def test_phase_mode_accepts_signed_data(random_system, rng):
    system = random_system(3, 10)
    x = rng.standard_normal(3)
    cfg = SolveConfig(max_steps=50, seed=4)
    a = run(system, observe_signed(system, x), np.ones(3), cfg)
    b = run(system, observe(system, x), np.ones(3), cfg)
    assert np.array_equal(a.final_iterate, b.final_iterate)
    assert not a.has_ground_truth
    assert a.steps[0].sq_error is None


def test_trace_stride(random_system):
    system = random_system(3, 10)
    trace = run(system, observe(system, np.ones(3)), np.zeros(3),
                SolveConfig(max_steps=23, trace_every=5))
    assert [rec.k for rec in trace.steps] == [0, 5, 10, 15, 20, 22]


def test_early_stop(random_system, rng):
    system = random_system(5, 100, seed=3)
    x = rng.standard_normal(5)
    x0 = synthetic_init(x, 0.01 * np.linalg.norm(x), rng)
    trace = run(system, observe(system, x), x0, SolveConfig(max_steps=5000, seed=1, stop_tol=1e-8),
                ground_truth=x)
    assert trace.stopped_early
    assert trace.final_sq_error() <= 1e-8
    assert trace.steps[-1].k < 4999


@pytest.mark.parametrize('kwargs', [{'max_steps': 0}, {'max_steps': 5, 'trace_every': 0},
                                    {'max_steps': 5, 'stop_tol': -1.0}])
def test_solve_config_validation(kwargs):
    with pytest.raises(ContractViolation):
        SolveConfig(**kwargs)


def _trace(initial, errors):
    steps = [StepRecord(k, 0, e, False) for k, e in enumerate(errors)]
    return IterationTrace(steps=steps, final_iterate=np.zeros(1), initial_sq_error=initial)


def test_hitting_time_examples():
    assert hitting_time(_trace(0.5, [0.3, 0.2]), 1.0) is None
    assert hitting_time(_trace(0.5, [0.3, 1.2, 0.1]), 1.0) == 2
    assert hitting_time(_trace(2.0, [0.3]), 1.0) == 0
    # strict inequality
    assert hitting_time(_trace(0.5, [1.0]), 1.0) is None


def test_hitting_time_contracts():
    with pytest.raises(ContractViolation):
        hitting_time(_trace(0.5, [0.3]), 0.0)
    no_truth = IterationTrace(steps=[StepRecord(0, 0)], final_iterate=np.zeros(1))
    with pytest.raises(ContractViolation):
        hitting_time(no_truth, 1.0)


def _first_exceedance(trace, threshold):
    return next((j for j, e in trace.error_path() if e > threshold), None)


def test_hitting_time_exact_on_strided_trace():
    system = generate_system(3, 8, 'UniformSphere', SeededRng(11))
    unrecorded_peaks = 0
    for seed in range(40):
        rng = SeededRng(seed)
        x = rng.child(0).standard_normal(3)
        x0 = synthetic_init(x, 0.5 * np.linalg.norm(x), rng.child(1))
        obs = observe(system, x)
        full = run(system, obs, x0, SolveConfig(max_steps=300, seed=seed), ground_truth=x)
        strided = run(system, obs, x0, SolveConfig(max_steps=300, seed=seed, trace_every=10),
                      ground_truth=x)
        assert np.array_equal(full.final_iterate, strided.final_iterate)
        path = full.error_path()
        for _, sq_error in path:
            if sq_error == 0.0:
                continue
            b = math.sqrt(sq_error * (1 - 1e-9))
            expected = _first_exceedance(full, b * b)
            assert hitting_time(full, b) == expected
            assert hitting_time(strided, b) == expected
        unrecorded_peaks += sum(1 for j, _ in strided.error_peaks if j > 0 and (j - 1) % 10)
    assert unrecorded_peaks > 0


def test_hitting_time_refuses_gapped_trace_without_peaks():
    steps = [StepRecord(0, 0, 0.3, False), StepRecord(10, 0, 0.2, False)]
    trace = IterationTrace(steps=steps, final_iterate=np.zeros(1), initial_sq_error=0.5)
    with pytest.raises(ContractViolation):
        hitting_time(trace, 1.0)


def test_trace_round_trip(tmp_path, random_system, rng):
    system = random_system(4, 20)
    x = rng.standard_normal(4)
    trace = run(system, observe(system, x), np.zeros(4), SolveConfig(max_steps=30, seed=5), ground_truth=x)
    path = save_trace(trace, tmp_path / 'trace.csv')
    assert path.read_text().splitlines()[0] == ','.join(TRACE_HEADER)
    assert load_trace(path) == trace.steps
