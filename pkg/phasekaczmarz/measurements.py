# /phasekaczmarz/phasekaczmarz/measurements.py

import csv
import hashlib
import logging
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DigestMismatch, ParseError, ZeroMeasurementError
from .geometry import as_vector, inner, sample_unit_sphere_batch
from .models import MeasurementSystem, PhaselessObservation, Provenance, SignedObservation

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-10
FLOAT_FORMAT = '.17g'


def _fmt(value):
    return format(float(value), FLOAT_FORMAT)


def generate_system(d, m, distribution, rng):
    """
    Draws m independent measurement vectors on the unit sphere in R^d.

    Both distributions end up with the same normalized law; the label is kept
    so experiments can tell them apart.
    """
    if d < 1 or m < 1:
        raise ContractViolation(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    distribution = Provenance(distribution)

    if distribution == Provenance.UNIFORM_SPHERE:
        vectors = sample_unit_sphere_batch(m, d, rng)
    elif distribution == Provenance.GAUSSIAN_NORMALIZED:
        raw = rng.standard_normal((m, d))
        vectors, _ = _normalize_rows(raw)
    else:
        raise ContractViolation(f"cannot generate a system with provenance {distribution.value}")

    logger.debug(f"Generated {distribution.value} system d={d} m={m} seed={rng.seed}")
    return MeasurementSystem(vectors=vectors, provenance=distribution, seed=rng.seed)


def _normalize_rows(raw):
    norms = np.linalg.norm(raw, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroMeasurementError(int(zero[0]))
    return raw / norms[:, None], norms


def normalize_observation(phi_raw, y_abs_raw):
    """Rescales (phi_i, |y_i|) to (phi_i/|phi_i|, |y_i|/|phi_i|)."""
    raw = np.asarray(phi_raw, dtype=np.float64)
    y_abs = np.asarray(y_abs_raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ContractViolation("phi_raw must be a non-empty list of vectors")
    if y_abs.shape != (raw.shape[0],):
        raise ContractViolation(f"expected {raw.shape[0]} intensities, got {y_abs.size}")
    if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(y_abs))):
        raise ContractViolation("measurements must be finite")
    if np.any(y_abs < 0):
        raise ContractViolation(f"intensity {int(np.argmax(y_abs < 0))} is negative")

    vectors, norms = _normalize_rows(raw)
    system = MeasurementSystem(vectors=vectors, provenance=Provenance.LOADED)
    return system, PhaselessObservation(y_abs / norms, system.digest)


def _signed_values(system, x):
    x = as_vector(x, d=system.d, name='x')
    return np.array([inner(phi, x) for phi in system.vectors], dtype=np.float64)


def observe(system, x):
    """Intensities |<x, phi_i>| of the signal x."""
    return PhaselessObservation(np.abs(_signed_values(system, x)), system.digest)


def observe_signed(system, x):
    return SignedObservation(_signed_values(system, x), system.digest)


def system_digest(system):
    """64-bit hex digest of the canonical serialization of a system."""
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{system.d},{system.m};".encode('ascii'))
    h.update(np.ascontiguousarray(system.vectors, dtype='<f8').tobytes())
    return h.hexdigest()


def check_binding(system, observation):
    if observation.m != system.m:
        raise ContractViolation(f"observation has {observation.m} entries, system has m={system.m}")
    expected = system.digest
    if observation.system_digest != expected:
        raise DigestMismatch(expected, observation.system_digest)


# --- System files ---

def save_system(system, path):
    path = Path(path)
    seed = 'NA' if system.seed is None else str(system.seed)
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['d', system.d, 'm', system.m, 'provenance', system.provenance.value, 'seed', seed])
        for row in system.vectors:
            writer.writerow([_fmt(v) for v in row])
    return path


def _parse_floats(cells, path, line_no):
    try:
        values = [float(c) for c in cells]
    except ValueError:
        raise ParseError("entry is not a decimal number", path=path, line=line_no)
    if not all(np.isfinite(values)):
        raise ParseError("non-finite entry", path=path, line=line_no)
    return values


def _parse_header(header, keys, path):
    """Parses `key,value,key,value,...` pairs; keys must appear in order."""
    if header is None or len(header) < 2 * len(keys) or header[0:2 * len(keys):2] != list(keys):
        raise ParseError(f"malformed header, expected keys {','.join(keys)}", path=path, line=1)
    return {key: header[2 * i + 1] for i, key in enumerate(keys)}, header[2 * len(keys):]


def _parse_count(value, name, path):
    try:
        count = int(value)
    except ValueError:
        raise ParseError(f"header field {name} is not an integer", path=path, line=1)
    if count < 1:
        raise ParseError(f"header field {name} must be positive", path=path, line=1)
    return count


def load_system(path):
    path = Path(path)
    with path.open('r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))

    fields, _ = _parse_header(rows[0] if rows else None, ('d', 'm', 'provenance', 'seed'), path)
    d = _parse_count(fields['d'], 'd', path)
    m = _parse_count(fields['m'], 'm', path)
    try:
        provenance = Provenance(fields['provenance'])
    except ValueError:
        raise ParseError(f"unknown provenance '{fields['provenance']}'", path=path, line=1)
    seed = None
    if fields['seed'] != 'NA':
        try:
            seed = int(fields['seed'])
        except ValueError:
            raise ParseError("header field seed is not an integer", path=path, line=1)

    body = rows[1:]
    if len(body) != m:
        raise ParseError(f"expected {m} vector rows, found {len(body)}", path=path, line=len(rows))

    vectors = np.empty((m, d), dtype=np.float64)
    for i, row in enumerate(body):
        line_no = i + 2
        if len(row) != d:
            raise ParseError(f"row {i} has {len(row)} entries, expected {d}", path=path, line=line_no)
        vectors[i] = _parse_floats(row, path, line_no)

    norms = np.linalg.norm(vectors, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        raise ParseError(f"row {int(bad[0])} is not unit norm", path=path, line=int(bad[0]) + 2)

    return MeasurementSystem(vectors=vectors, provenance=provenance, seed=seed)


# --- Observation files ---

def save_observation(observation, path):
    path = Path(path)
    header = ['m', observation.m, 'digest', observation.system_digest]
    if observation.signed:
        header += ['signed', 'true']
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for value in observation.values:
            writer.writerow([_fmt(value)])
    return path


def load_observation(path):
    path = Path(path)
    with path.open('r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))

    fields, rest = _parse_header(rows[0] if rows else None, ('m', 'digest'), path)
    m = _parse_count(fields['m'], 'm', path)
    signed = rest == ['signed', 'true']
    if rest and not signed:
        raise ParseError("unexpected trailing header fields", path=path, line=1)

    body = rows[1:]
    if len(body) != m:
        raise ParseError(f"expected {m} rows, found {len(body)}", path=path, line=len(rows))
    values = np.empty(m, dtype=np.float64)
    for i, row in enumerate(body):
        if len(row) != 1:
            raise ParseError(f"row {i} must hold exactly one value", path=path, line=i + 2)
        values[i] = _parse_floats(row, path, i + 2)[0]

    if signed:
        return SignedObservation(values, fields['digest'])
    if np.any(values < 0):
        raise ParseError(f"intensity {int(np.argmax(values < 0))} is negative",
                         path=path, line=int(np.argmax(values < 0)) + 2)
    return PhaselessObservation(values, fields['digest'])


# --- Vector files ---

def save_vector(x, path):
    path = Path(path)
    x = as_vector(x)
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['d', x.size])
        for value in x:
            writer.writerow([_fmt(value)])
    return path


def load_vector(path):
    path = Path(path)
    with path.open('r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    fields, rest = _parse_header(rows[0] if rows else None, ('d',), path)
    if rest:
        raise ParseError("unexpected trailing header fields", path=path, line=1)
    d = _parse_count(fields['d'], 'd', path)
    body = rows[1:]
    if len(body) != d:
        raise ParseError(f"expected {d} rows, found {len(body)}", path=path, line=len(rows))
    values = []
    for i, row in enumerate(body):
        if len(row) != 1:
            raise ParseError(f"row {i} must hold exactly one value", path=path, line=i + 2)
        values.extend(_parse_floats(row, path, i + 2))
    return np.array(values, dtype=np.float64)
