"""Python access to the branching Hunt process laboratory.

Models and experiments are described by the same JSON configuration the
``bhp_lab`` tool reads; dicts are serialized before crossing into C++.
"""

import json

from . import _core
from ._core import (
    CapacityError,
    DegenerateLawError,
    NumericError,
    PreconditionError,
    SubcriticalityError,
    ValidationError,
)

__version__ = _core.version.split()[-1]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def spectrum(config, allow_subcritical=False):
    """lambda1, lambda2, gap and the L^2(m) norm check of h."""
    return _core.spectrum(_text(config), allow_subcritical)


def ground_state(config, xs):
    return _core.ground_state(_text(config), list(xs))


def kernel_h(config, t, x, y):
    """Transition density of the h-process with respect to h^2 m."""
    return _core.kernel_h(_text(config), t, x, y)


def simulate(config, spine=False):
    """One forest (or spine tree) from the config's simulate section."""
    return _core.simulate(_text(config), spine)


def verify(config, experiment="", workers=1):
    """Runs an experiment (or "spectral") and returns the report document."""
    return json.loads(_core.verify(_text(config), experiment, workers))


def run_cli(*args):
    """Runs bhp_lab in-process; returns (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


__all__ = [
    "CapacityError",
    "DegenerateLawError",
    "NumericError",
    "PreconditionError",
    "SubcriticalityError",
    "ValidationError",
    "ground_state",
    "kernel_h",
    "run_cli",
    "simulate",
    "spectrum",
    "verify",
]
