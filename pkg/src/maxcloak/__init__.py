"""maxcloak: structure-preserving Crank-Nicolson Maxwell solver and source-cloaking optimal control."""
__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .adjoint import RieszMap, reduced_gradient, run_adjoint  # noqa: E402
from .assembly import MaterialField, assemble_mass, assemble_mixed_mass, project_initial_B, project_initial_E  # noqa: E402
from .config import ConfigError, build_problem, from_preset, load_scenario, parse_scenario  # noqa: E402
from .derham import build_operators  # noqa: E402
from .forward import run_forward  # noqa: E402
from .linalg import LinearSolver, SolverError, cg_solve  # noqa: E402
from .mesh import boundary_edges, build_mesh, tag_regions  # noqa: E402
from .objective import ControlTrajectory, ObjectiveConfig, evaluate_cost  # noqa: E402
from .optimizer import OptimSettings, grad_check, minimize  # noqa: E402
from .problem import Discretization, TimeGrid  # noqa: E402
from .scenarios import builtin_scenario  # noqa: E402

__all__ = ["BACKEND", "RieszMap", "reduced_gradient", "run_adjoint", "MaterialField", "assemble_mass",
           "assemble_mixed_mass", "project_initial_B", "project_initial_E", "ConfigError", "build_problem",
           "from_preset", "load_scenario", "parse_scenario", "build_operators", "run_forward", "LinearSolver",
           "SolverError", "cg_solve", "boundary_edges", "build_mesh", "tag_regions", "ControlTrajectory",
           "ObjectiveConfig", "evaluate_cost", "OptimSettings", "grad_check", "minimize", "Discretization",
           "TimeGrid", "builtin_scenario"]
