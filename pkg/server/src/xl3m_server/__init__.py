"""Reference model server for the xl3m wire protocol."""

from .app import build_app
from .conformance import CheckResult, conformance_check
from .engine import ModelEngine, ServerConfig, load_engine

__version__ = "0.1.0"
