"""Neural compression toolkit for hyperspectral radiance cubes."""

from . import config  # noqa: F401  (pins thread pools before numpy loads)

__version__ = "0.1.0"
