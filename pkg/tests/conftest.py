import numpy as np
import pytest

from phasekaczmarz import configure_logging
from phasekaczmarz.geometry import SeededRng
from phasekaczmarz.measurements import generate_system, save_system, save_vector
from phasekaczmarz.models import MeasurementSystem


@pytest.fixture(scope='session', autouse=True)
def _logging():
    # Bind the stderr handler before any CliRunner swaps sys.stderr.
    configure_logging()


@pytest.fixture
def rng():
    return SeededRng(12345)


def make_system(rows):
    return MeasurementSystem(vectors=np.array(rows, dtype=np.float64))


@pytest.fixture
def basis_2d():
    return make_system([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def random_system():
    def build(d, m, seed=0):
        return generate_system(d, m, 'UniformSphere', SeededRng(seed))
    return build


@pytest.fixture
def system_file(tmp_path):
    def build(d, m, seed=0, name='sys.csv'):
        path = tmp_path / name
        save_system(generate_system(d, m, 'UniformSphere', SeededRng(seed)), path)
        return path
    return build


@pytest.fixture
def vector_file(tmp_path):
    def build(values, name='x.csv'):
        path = tmp_path / name
        save_vector(np.asarray(values, dtype=np.float64), path)
        return path
    return build
