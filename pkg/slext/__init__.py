"""Nonnegative self-adjoint extensions of singular Sturm-Liouville operators."""
from .config import NumericsConfig, get_config, load_numerics_config, set_config
from .errors import SlextError
from .extensions import Coupled, Separated, coupled, parse_spec
from .problem import builtin_bessel, builtin_free, builtin_regular, builtin_symmetric_bessel, load_problem_file
from .spectra import eigenvalues, lowest_eigenvalue

__version__ = "0.1.0"
