# /phasekaczmarz/phasekaczmarz/models.py

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np


class Provenance(str, Enum):
    UNIFORM_SPHERE = 'UniformSphere'
    GAUSSIAN_NORMALIZED = 'GaussianNormalized'
    LOADED = 'Loaded'


class Mode(str, Enum):
    LINEAR = 'linear'
    PHASE = 'phase'


class CheckMethod(str, Enum):
    EXACT_EIGEN = 'ExactEigen'
    SAMPLED_SUP = 'SampledSup'


class MomentKind(str, Enum):
    SECOND = 'second'
    FOURTH = 'fourth'
    CROSS = 'cross'
    MISMATCH = 'mismatch'
    MISMATCH_ENERGY = 'mismatch_energy'


@dataclass(frozen=True, eq=False)
class MeasurementSystem:
    vectors: np.ndarray  # (m, d), unit rows
    provenance: Provenance = Provenance.LOADED
    seed: Optional[int] = None

    @property
    def m(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]

    @cached_property
    def digest(self):
        # Imported lazily: measurements depends on models.
        from .measurements import system_digest
        return system_digest(self)

    def __repr__(self):
        return f'<MeasurementSystem d={self.d} m={self.m} {self.provenance.value}>'


@dataclass(frozen=True, eq=False)
class PhaselessObservation:
    intensities: np.ndarray
    system_digest: str

    signed = False

    @property
    def m(self):
        return self.intensities.shape[0]

    @property
    def values(self):
        return self.intensities


@dataclass(frozen=True, eq=False)
class SignedObservation:
    """Signed measurements y_i = <x, phi_i>, the input of linear Kaczmarz."""
    measurements: np.ndarray
    system_digest: str

    signed = True

    @property
    def m(self):
        return self.measurements.shape[0]

    @property
    def values(self):
        return self.measurements

    def phaseless(self):
        return PhaselessObservation(np.abs(self.measurements), self.system_digest)


@dataclass(frozen=True)
class StepRecord:
    k: int
    t: int
    sq_error: Optional[float] = None
    mismatch: Optional[bool] = None


@dataclass
class IterationTrace:
    steps: list
    final_iterate: np.ndarray
    initial_sq_error: Optional[float] = None
    mode: Mode = Mode.PHASE
    seed: int = 0
    reference_sign: Optional[int] = None  # sign of x the mismatch flags are taken against
    stopped_early: bool = False
    # (j, sq_error) at every new running maximum of the error, recorded on all steps
    error_peaks: Optional[list] = None

    @property
    def has_ground_truth(self):
        return self.initial_sq_error is not None

    @property
    def is_contiguous(self):
        return all(rec.k == k for k, rec in enumerate(self.steps))

    def error_path(self):
        """(j, sq_error) pairs, j = number of steps applied; j = 0 is the start."""
        path = [(0, self.initial_sq_error)]
        path.extend((rec.k + 1, rec.sq_error) for rec in self.steps)
        return path

    def final_sq_error(self):
        if not self.has_ground_truth:
            return None
        return self.steps[-1].sq_error if self.steps else self.initial_sq_error

    def metadata(self):
        return {
            'mode': self.mode.value,
            'seed': self.seed,
            'n_recorded': len(self.steps),
            'initial_sq_error': self.initial_sq_error,
            'final_sq_error': self.final_sq_error(),
            'reference_sign': self.reference_sign,
            'mismatch_reference': 'sign of x closer to x0 at k=0',
            'stopped_early': self.stopped_early,
        }


@dataclass(frozen=True)
class SolveConfig:
    max_steps: int
    seed: int = 0
    stop_tol: Optional[float] = None  # None: never stop early
    trace_every: int = 1

    def __post_init__(self):
        from .errors import ContractViolation
        if self.max_steps < 1:
            raise ContractViolation(f"max_steps must be >= 1, got {self.max_steps}")
        if self.trace_every < 1:
            raise ContractViolation(f"trace_every must be >= 1, got {self.trace_every}")
        if self.stop_tol is not None and not self.stop_tol >= 0:
            raise ContractViolation(f"stop_tol must be >= 0, got {self.stop_tol}")


@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_margin: float
    method: CheckMethod
    samples_used: int = 0
    observed: float = 0.0
    bound: float = 0.0
    witness: Optional[list] = None

    def to_dict(self):
        return {
            'name': self.name,
            'passed': self.passed,
            'worst_margin': self.worst_margin,
            'observed': self.observed,
            'bound': self.bound,
            'method': self.method.value,
            'samples_used': self.samples_used,
            'witness': None if self.witness is None else [np.asarray(w).tolist() for w in self.witness],
        }

    @classmethod
    def from_dict(cls, data):
        witness = data.get('witness')
        return cls(
            name=data['name'],
            passed=data['passed'],
            worst_margin=data['worst_margin'],
            method=CheckMethod(data['method']),
            samples_used=data['samples_used'],
            observed=data.get('observed', 0.0),
            bound=data.get('bound', 0.0),
            witness=None if witness is None else [np.asarray(w, dtype=np.float64) for w in witness],
        )


@dataclass
class AdmissibilityReport:
    delta: float
    cond_tessellation: ConditionResult
    cond_second_moment: ConditionResult
    cond_trunc_fourth: ConditionResult
    cond_trunc_tail: ConditionResult
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def conditions(self):
        return (self.cond_tessellation, self.cond_second_moment,
                self.cond_trunc_fourth, self.cond_trunc_tail)

    @property
    def overall(self):
        return all(cond.passed for cond in self.conditions)

    def to_dict(self):
        return {
            'delta': self.delta,
            'overall': self.overall,
            'cond_tessellation': self.cond_tessellation.to_dict(),
            'cond_second_moment': self.cond_second_moment.to_dict(),
            'cond_trunc_fourth': self.cond_trunc_fourth.to_dict(),
            'cond_trunc_tail': self.cond_trunc_tail.to_dict(),
            'constants': dict(self.constants),
            'notes': list(self.notes),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            delta=data['delta'],
            cond_tessellation=ConditionResult.from_dict(data['cond_tessellation']),
            cond_second_moment=ConditionResult.from_dict(data['cond_second_moment']),
            cond_trunc_fourth=ConditionResult.from_dict(data['cond_trunc_fourth']),
            cond_trunc_tail=ConditionResult.from_dict(data['cond_trunc_tail']),
            constants=data.get('constants', {}),
            notes=data.get('notes', []),
        )


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    n_samples: int
    std_error: float

    def z_score(self, exact):
        if self.std_error == 0:
            return 0.0 if self.value == exact else math.inf
        return (self.value - exact) / self.std_error


@dataclass
class DriftReport:
    d: int
    m: int
    delta_b: float
    rho: float
    n_trials: int
    horizon: int
    escape_count: int
    escape_bound: float
    initial_sq_error: float
    recorded_k: list
    surviving_mean_sq_error: list
    surviving_std_error: list
    n_surviving: list
    theorem_bound: list
    stable_weighted_mean_sq_error: list
    energy_lhs: float
    energy_rhs: float
    fitted_rho: Optional[float]
    final_sq_errors: list
    base_seed: int = 0
    roundoff_floor: float = 0.0  # squared errors below this are float64 noise

    @property
    def escape_frequency(self):
        return self.escape_count / self.n_trials if self.n_trials else 0.0

    def to_dict(self):
        return {
            'd': self.d,
            'm': self.m,
            'delta_b': self.delta_b,
            'rho': self.rho,
            'n_trials': self.n_trials,
            'horizon': self.horizon,
            'base_seed': self.base_seed,
            'escape_count': self.escape_count,
            'escape_frequency': self.escape_frequency,
            'escape_bound': self.escape_bound,
            'initial_sq_error': self.initial_sq_error,
            'roundoff_floor': self.roundoff_floor,
            'energy_lhs': self.energy_lhs,
            'energy_rhs': self.energy_rhs,
            'fitted_rho': self.fitted_rho,
            'recorded_k': list(self.recorded_k),
            'surviving_mean_sq_error': list(self.surviving_mean_sq_error),
            'surviving_std_error': list(self.surviving_std_error),
            'n_surviving': list(self.n_surviving),
            'theorem_bound': list(self.theorem_bound),
            'stable_weighted_mean_sq_error': list(self.stable_weighted_mean_sq_error),
            'final_sq_errors': list(self.final_sq_errors),
        }

    def curve_rows(self):
        return [
            (k, mean, bound, n)
            for k, mean, bound, n in zip(self.recorded_k, self.surviving_mean_sq_error,
                                         self.theorem_bound, self.n_surviving)
        ]


@dataclass(frozen=True)
class SweepRow:
    radius: float
    max_ratio: float
    mean_ratio: float
    n_states: int
    rho: float

    def to_dict(self):
        return {
            'radius': self.radius,
            'max_ratio': self.max_ratio,
            'mean_ratio': self.mean_ratio,
            'n_states': self.n_states,
            'rho': self.rho,
        }
