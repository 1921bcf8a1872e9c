from .app import create_app
from .backends import BackendLoadError, HashedNgramBackend, load_backend

__version__ = "0.1.0"
