"""Chiller set-point optimisation with actor-critic RL and cross-building transfer.

Modules: ``data`` (CSV ingestion, imputation, moments), ``neural`` (segmented
feed-forward nets), ``similarity`` (building similarity score), ``bdne``
(neural building emulator), ``agent`` (actor-critic loop), ``metrics``
(warm-up metrics and aggregation), ``synth`` (synthetic building pairs),
``experiment`` (paired scenario runs) and ``cli`` (the ``relbot`` command).
"""

from .errors import ConfigError, InputError, RelbotError, TrainingError

__version__ = "0.1.0"

__all__ = ["ConfigError", "InputError", "RelbotError", "TrainingError", "__version__"]
