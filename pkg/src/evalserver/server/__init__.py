from .app import create_app
from .context import ServerContext

__all__ = ["create_app", "ServerContext"]
