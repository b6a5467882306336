"""Reference HTTP victim service for black-box attack evaluation."""

from .app import BadRequest, ServiceConfig, create_app, decode_request, postprocess
from .backends import Backend, EchoBackend, ToyBackend, TorchvisionBackend, load_backend

__version__ = "0.1.0"

__all__ = [
    "BadRequest",
    "ServiceConfig",
    "create_app",
    "decode_request",
    "postprocess",
    "Backend",
    "EchoBackend",
    "ToyBackend",
    "TorchvisionBackend",
    "load_backend",
]
