"""HTTP service wrapping the datastore and assessment pipeline."""

from .app import create_app

__all__ = ["create_app"]
