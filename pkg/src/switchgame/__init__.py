"""Solver and Monte Carlo verifier for zero-sum stochastic switching games."""

from .grid import Grid, build_grid
from .model import (ConfigurationError, CostMatrices, GameSpec, load_game, obstacle_M,
                    obstacle_N, validate_costs, validate_game, validate_no_free_loop)
from .montecarlo import SimConfig, estimate_value, simulate_path
from .solver import (ValueField, check_sandwich, howard_solve, isaacs_residual,
                     value_iteration_oracle)
from .strategy import classify_regions, extract_switch_sets, policy_lookup

__version__ = "0.1.0"
