"""Discounted and zero-temperature approximations of calibrated subactions for expanding maps."""

from .discounted import (
    ConvergenceError,
    DiscountParams,
    SolveReport,
    bellman_operator,
    greedy_realizer,
    integrate,
    normalized_subaction,
    occupational_measure,
    solve_normalized,
    solve_subaction,
)
from .dynamics import CircleGrid, CircleMap, FunctionField, ShiftSpace
from .gibbs import (
    GibbsParams,
    PressureReport,
    entropy_gap,
    gibbs_operator,
    pressure_bounds,
    pressure_exact,
    ruelle_eigenfunction,
    sandwich_check,
    scaled_eigen_log,
    solve_gibbs,
    theorem2_field,
)
from .mane import (
    check_calibrated,
    check_subaction,
    compute_V,
    karp_max_cycle_mean,
    mane_grid,
    mane_matrix,
    max_cycle_mean,
    symbolic_oracle,
    transition_weights,
)
from .potentials import (
    AnalyticPotential,
    WordPotential,
    constant_potential,
    example_potential,
    load_system,
    random_word_potential,
    sample_to_grid,
)

__version__ = "0.1.0"
