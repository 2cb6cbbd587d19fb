"""FastAPI service wrapping a live in-process deployment."""

from .app import create_app
from .deployment import Deployment, DeploymentConfig

__all__ = ["create_app", "Deployment", "DeploymentConfig"]
