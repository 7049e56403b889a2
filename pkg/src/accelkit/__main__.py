"""Allow `python -m accelkit ...` to reach the command line interface."""

from .cli import entrypoint

entrypoint()
