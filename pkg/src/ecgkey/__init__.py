"""Secret key agreement from ECG inter-pulse intervals."""

from .errors import EcgKeyError

__version__ = "0.1.0"
__all__ = ["EcgKeyError", "__version__"]
