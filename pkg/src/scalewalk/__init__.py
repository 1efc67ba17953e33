"""Random walks on planar cell configurations: embeddings, energies and scaling-limit diagnostics."""
from .environment import CellConfiguration, load_config, save_config, validate
from .errors import ConfigurationError, FormatError, GeometryError, SolverError, WindowTooSmall
from .geometry import Region, Square, TimedCurve

__version__ = "0.1.0"

__all__ = [
    "CellConfiguration",
    "ConfigurationError",
    "FormatError",
    "GeometryError",
    "Region",
    "SolverError",
    "Square",
    "TimedCurve",
    "WindowTooSmall",
    "load_config",
    "save_config",
    "validate",
    "__version__",
]
