from .joint_astar import joint_astar
from .lacam import SolveOutcome, SolverBudget, Status, solve
from .pibt import PIBT, pibt_step

__all__ = ["PIBT", "SolveOutcome", "SolverBudget", "Status", "joint_astar", "pibt_step", "solve"]
