"""HTTP microservice exposing a frozen tabular time-series encoder."""

from .app import create_app
from .encoder import FrozenRandomFeatureEncoder, make_encoder

__version__ = "0.1.0"

__all__ = ["FrozenRandomFeatureEncoder", "create_app", "make_encoder"]
