from koranyi.cli.app import app, main

__all__ = ["app", "main"]
