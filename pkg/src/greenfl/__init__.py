"""Carbon accounting and discrete-event simulation for cross-device federated learning."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
