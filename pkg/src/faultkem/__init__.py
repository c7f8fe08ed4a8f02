"""faultkem: fault-assisted chosen-ciphertext key recovery on LPR-style KEMs."""

__version__ = "0.1.0"

from .ring import BACKEND

__all__ = ["BACKEND", "__version__"]
