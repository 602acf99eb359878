"""Optimal entry and exit rules for a project with implementation delay under GBM prices."""

from .entry_solver import EntrySolution, entry_residual, eval_H, solve_double_trigger, solve_entry
from .errors import ConfigError, ConvergenceError, DomainError, MissingTrigger, PreconditionError
from .exit_solver import ExitSolution, eval_G, solve_exit
from .model import LambdaPair, ProjectParams, Regime, classify, lambda_roots, validate
from .policy import InfiniteValue, Solution, describe, solve
from .rules import EntryRule, ExitRule
from .transform import TransformCoeffs, delayed_payoff_equivalence_residual, transform_coeffs

__version__ = "0.1.0"
