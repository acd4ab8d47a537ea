"""Sky-survey observation clustering into a source catalog."""

from .config import EngineConfig, KMeansParams, parse_config
from .errors import SkycatError

__version__ = "0.1.0"

__all__ = ["EngineConfig", "KMeansParams", "SkycatError", "parse_config", "__version__"]
