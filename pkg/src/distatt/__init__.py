"""
Distributed attitude and position estimation for multi-agent systems on trees.

Continuous and hybrid SO(3) observers driven by relative attitude
measurements, a bearing-based position estimator, a hybrid-system runtime
and a scenario CLI.
"""

from . import attitude, errors, formation, hybrid, so3, topology
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "attitude", "errors", "formation", "hybrid", "so3", "topology", "__version__"]
