# /phasekaczmarz/phasekaczmarz/config.py

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError


class Config:
    """Base configuration."""
    # --- Runtime Configuration ---
    # Worker threads for trial/candidate evaluation. 'auto' uses os.cpu_count().
    THREADS = os.getenv('PHASEKACZMARZ_THREADS', 'auto')
    LOG_LEVEL = os.getenv('PHASEKACZMARZ_LOG_LEVEL', 'INFO')
    LOG_DIR = os.getenv('PHASEKACZMARZ_LOG_DIR')  # unset -> no log file

    # Trials per vectorised chunk. Fixed independently of THREADS so results
    # do not depend on the schedule.
    TRIAL_CHUNK = int(os.getenv('PHASEKACZMARZ_TRIAL_CHUNK', '64'))
    HORIZON_PER_DIM = int(os.getenv('PHASEKACZMARZ_HORIZON_PER_DIM', '400'))

    # --- Admissibility Constants ---
    SECOND_MOMENT_LOWER = 0.5
    SECOND_MOMENT_UPPER = 1.5
    TRUNC_FOURTH_CONSTANT = 4.0
    TRUNC_TAIL_CONSTANT = 4.0
    SMALL_ANGLE_RADIUS_RANGE = (1e-4, 1.0)


@dataclass(frozen=True)
class AdmissibilityConstants:
    second_moment_lower: float = Config.SECOND_MOMENT_LOWER
    second_moment_upper: float = Config.SECOND_MOMENT_UPPER
    trunc_fourth: float = Config.TRUNC_FOURTH_CONSTANT
    trunc_tail: float = Config.TRUNC_TAIL_CONSTANT

    @classmethod
    def from_config(cls, config_class=Config):
        return cls(
            second_moment_lower=config_class.SECOND_MOMENT_LOWER,
            second_moment_upper=config_class.SECOND_MOMENT_UPPER,
            trunc_fourth=config_class.TRUNC_FOURTH_CONSTANT,
            trunc_tail=config_class.TRUNC_TAIL_CONSTANT,
        )

    def to_dict(self):
        return {
            'second_moment_lower': self.second_moment_lower,
            'second_moment_upper': self.second_moment_upper,
            'trunc_fourth': self.trunc_fourth,
            'trunc_tail': self.trunc_tail,
        }


COMMANDS = ('gen', 'observe', 'solve', 'certify', 'drift', 'sweep', 'moments')


def load_experiment_config(path):
    """
    Reads a JSON experiment file of the form {"<command>": {"<flag>": value}}
    and returns it as a click default_map. Flag names use underscores.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e

    if not isinstance(data, dict):
        raise ParseError("top level must be an object", path=path, line=1)

    default_map = {}
    for command, flags in data.items():
        if command not in COMMANDS:
            raise ParseError(f"unknown command section '{command}'", path=path)
        if not isinstance(flags, dict):
            raise ParseError(f"section '{command}' must be an object", path=path)
        default_map[command] = {key.replace('-', '_'): value for key, value in flags.items()}
    return default_map
