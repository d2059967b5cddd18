"""Entrypoint para uvicorn (raiz do projeto)."""
from app.main import app

__all__ = ["app"]
