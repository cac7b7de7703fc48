"""Resource allocation for wireless-powered NOMA uplinks under LCD and SICD decoding."""
from .model import NetworkInstance, PhysicalConfig, build_network, load_physical_config
from .throughput import Allocation, Scheme, Solution, Status, jain_index, rates
from .solver_core import SolverOptions, check_feasible
from .maxsum import (solve_maxsum_lcd, solve_maxsum_lcd_given_tau, solve_maxsum_sicd,
                     solve_maxsum_sicd_dual, solve_tau_only_lcd)
from .maxmin import solve_maxmin, solve_maxmin_given_tau
from .oracle import GridSpec, Objective, grid_search

__version__ = "0.1.0"
