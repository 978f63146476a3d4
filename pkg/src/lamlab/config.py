"""Centralized numeric tolerances and run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Tolerances:
    # scale-free parallelism test and rank-one minors
    parallel: float = 1e-9
    # fixed-point iteration stop: ||t_{n+1} - t_n||_inf
    convergence: float = 1e-9
    # polytope equality rows
    membership: float = 1e-10
    # allowed negativity of weights on the float path
    nonneg: float = 1e-12
    # below this a decomposition direction counts as zero
    zero_direction: float = 1e-12
    barycenter: float = 1e-10


@dataclass(frozen=True)
class FixedPointConfig:
    max_iter: int = 200
    max_restarts: int = 5
    max_depth_escalations: int = 1
    seed: int = 0
    stagnation_window: int = 15
    tolerances: Tolerances = field(default_factory=Tolerances)


DEFAULT_TOLERANCES = Tolerances()
