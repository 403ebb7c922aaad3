# /phasekaczmarz/phasekaczmarz/geometry.py
"""
Sign convention, phase-invariant distance, spherical geometry and the seeded
randomness contract shared by every other module.
"""

import math

import numpy as np

from .errors import ContractViolation, DomainError

MAX_SEED = 2**64 - 1
UNIT_NORM_TOL = 1e-12


class SeededRng:
    """
    Portable seeded generator (Philox counter-based bit generator).

    child(i) is a pure function of (seed, spawn path, i), so every trial can
    own an independent stream that does not depend on the order in which
    trials are executed.
    """

    def __init__(self, seed, spawn_key=()):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise ContractViolation(f"seed must be an integer, got {seed!r}")
        seed = int(seed)
        if not 0 <= seed <= MAX_SEED:
            raise ContractViolation(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def child(self, index):
        return SeededRng(self.seed, self.spawn_key + (int(index),))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, high, size=None):
        """Uniform integers on {0, ..., high-1}, with replacement."""
        return self.generator.integers(0, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def __repr__(self):
        return f'<SeededRng seed={self.seed} path={self.spawn_key}>'


def as_vector(values, d=None, name='vector'):
    """Coerces to a finite 1-D float64 array, optionally of length d."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ContractViolation(f"{name} must be a non-empty 1-D array")
    if d is not None and vec.size != d:
        raise ContractViolation(f"{name} has dimension {vec.size}, expected {d}")
    if not np.all(np.isfinite(vec)):
        raise ContractViolation(f"{name} has non-finite entries")
    return vec


def inner(u, v):
    # Every step and every observation goes through this, so intensities and
    # iterate inner products are computed identically.
    return float(np.dot(u, v))


def sigma(w):
    """Real phase with the convention sigma(0) = +1."""
    return 1.0 if w >= 0 else -1.0


def sigma_array(w):
    return np.where(np.asarray(w) >= 0, 1.0, -1.0)


def dist_up_to_sign(u, v):
    u = as_vector(u, name='u')
    v = as_vector(v, d=u.size, name='v')
    return min(float(np.linalg.norm(u - v)), float(np.linalg.norm(u + v)))


def geodesic_frac(x, y):
    """Angle between x and y divided by pi, in [0, 1]."""
    x = as_vector(x, name='x')
    y = as_vector(y, d=x.size, name='y')
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise DomainError("geodesic distance needs nonzero vectors")
    cosine = min(1.0, max(-1.0, float(np.dot(x, y)) / (nx * ny)))
    return math.acos(cosine) / math.pi


def normalize(x):
    x = as_vector(x)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise DomainError("cannot normalize the zero vector")
    return x / norm


def sample_unit_sphere(d, rng):
    """One draw from the uniform law on the unit sphere in R^d."""
    if d < 1:
        raise ContractViolation(f"dimension must be positive, got {d}")
    while True:
        g = rng.standard_normal(d)
        norm = float(np.linalg.norm(g))
        if norm > 0.0:
            return g / norm


def sample_unit_sphere_batch(n, d, rng):
    """n independent sphere draws as an (n, d) array, drawn in one stream."""
    if d < 1:
        raise ContractViolation(f"dimension must be positive, got {d}")
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    # All-zero normal rows have probability zero; redraw them in place.
    for i in np.flatnonzero(norms == 0.0):
        g[i] = sample_unit_sphere(d, rng)
        norms[i] = 1.0
    return g / norms[:, None]
