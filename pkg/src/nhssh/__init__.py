"""Entanglement Hamiltonians of the non-Hermitian SSH chain at arbitrary precision."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import ModelParams, Phase, classify_phase  # noqa: F401
