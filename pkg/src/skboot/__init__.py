"""Combined input and metamodel uncertainty quantification for stochastic
simulations via metamodel-assisted bootstrapping."""

from . import bootstrap, design, harness, input_models, queueing, sk, uq
from .errors import SkbootError

__all__ = [
    "SkbootError",
    "bootstrap",
    "design",
    "harness",
    "input_models",
    "queueing",
    "sk",
    "uq",
]

__version__ = "0.1.0"
