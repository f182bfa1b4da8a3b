"""Dynamic self-triggered output-feedback control.

Configs are passed as dicts (or JSON text) with the same schema as the
``stc`` command-line tool.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    ParameterSet,
    StcEngine,
    c_value,
    effective_rate,
    phi_solve,
    robot_arm,
    scaled_interval,
    t_max,
    u_value,
)

__version__ = _core.__version__


def _text(config):
    if config is None:
        return "{}"
    return config if isinstance(config, str) else _json.dumps(config)


def config_hash(config=None):
    """Validate a config and return its hash."""
    return _core.parse_config(_text(config))


def parameter_sets(config=None):
    """Certified parameter sets for a config, in engine order."""
    return _core.parameter_sets(_text(config))


def simulate(initial, horizon=10.0, config=None, period=0.0):
    """One closed-loop run from (x_p1, x_p2, x_o1, x_o2).

    A positive ``period`` runs the periodic baseline instead.
    """
    return _core.simulate(_text(config), list(initial), horizon, period)


def monte_carlo(config=None):
    """Benchmark statistics as a dict."""
    return _json.loads(_core.monte_carlo(_text(config)))


__all__ = [
    "ConfigError",
    "ParameterSet",
    "StcEngine",
    "c_value",
    "config_hash",
    "effective_rate",
    "monte_carlo",
    "parameter_sets",
    "phi_solve",
    "robot_arm",
    "scaled_interval",
    "simulate",
    "t_max",
    "u_value",
]
