"""HTTP bridge exposing an encoder-decoder LM behind the /v1 backend protocol."""

from .config import BridgeConfig, bridge_config
from .finetune import FinetuneResult, finetune, read_pairs
from .service import create_app, serve

__all__ = [
    "BridgeConfig",
    "FinetuneResult",
    "bridge_config",
    "create_app",
    "finetune",
    "read_pairs",
    "serve",
]

__version__ = "0.1.0"
