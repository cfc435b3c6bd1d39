"""Feature-space generalized category discovery engine."""

__version__ = "0.1.0"

from gcdlib.kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
