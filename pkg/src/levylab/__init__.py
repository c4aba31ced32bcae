"""Monte Carlo laboratory for the iterated Levy transformation of Brownian paths."""

__version__ = "0.1.0"

from .levy import IterateStack, SignConvention, iterate, levy_transform, sign_of, zeros
from .paths import Grid, IncrementModel, Path, RngStream, generate_path, reflect_after, scale_path, sup_deviation

__all__ = [
    "__version__",
    "Grid",
    "Path",
    "RngStream",
    "IncrementModel",
    "generate_path",
    "scale_path",
    "reflect_after",
    "sup_deviation",
    "SignConvention",
    "IterateStack",
    "sign_of",
    "levy_transform",
    "iterate",
    "zeros",
]
