import json
import logging

import pytest

from phasekaczmarz import configure_logging, logger
from phasekaczmarz.admissibility import certify
from phasekaczmarz.config import AdmissibilityConstants, Config, load_experiment_config
from phasekaczmarz.errors import ContractViolation, ParseError
from phasekaczmarz.geometry import SeededRng
from phasekaczmarz.util import chunk_ranges, parallel_map, resolve_threads, to_json


def test_constants_from_config():
    constants = AdmissibilityConstants.from_config()
    assert constants.second_moment_lower == Config.SECOND_MOMENT_LOWER
    assert constants.to_dict()['trunc_tail'] == 4.0


def test_constants_from_custom_config():
    class Strict(Config):
        TRUNC_FOURTH_CONSTANT = 2.0

    assert AdmissibilityConstants.from_config(Strict).trunc_fourth == 2.0


def test_load_experiment_config(tmp_path):
    path = tmp_path / 'exp.json'
    path.write_text('{"drift": {"record-every": 5, "trials": 10}}')
    assert load_experiment_config(path) == {'drift': {'record_every': 5, 'trials': 10}}


def test_load_experiment_config_bad_json(tmp_path):
    path = tmp_path / 'exp.json'
    path.write_text('{\n  "gen": {,}\n}')
    with pytest.raises(ParseError) as exc:
        load_experiment_config(path)
    assert exc.value.line == 2


def test_resolve_threads():
    assert resolve_threads(3) == 3
    assert resolve_threads('2') == 2
    assert resolve_threads('auto') >= 1
    with pytest.raises(ContractViolation):
        resolve_threads(0)
    with pytest.raises(ContractViolation):
        resolve_threads('many')


def test_parallel_map_keeps_order():
    assert parallel_map(lambda v: v * v, range(20), threads=4) == [v * v for v in range(20)]


def test_chunk_ranges():
    assert chunk_ranges(5, 2) == [range(0, 2), range(2, 4), range(4, 5)]
    assert chunk_ranges(0, 3) == []


def test_json_is_canonical():
    text = to_json({'b': 1, 'a': float('inf')})
    assert text.endswith('\n')
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {'a': 'inf', 'b': 1}


def test_configure_logging_is_idempotent():
    configure_logging()
    count = len(logger.handlers)
    configure_logging()
    assert len(logger.handlers) == count


def test_jobs_log_through_package_logger(caplog, random_system):
    with caplog.at_level(logging.INFO, logger='phasekaczmarz'):
        certify(random_system(2, 10), 0.3, 20, 10, SeededRng(0))
    assert any(record.getMessage().startswith('Certify:') for record in caplog.records)
