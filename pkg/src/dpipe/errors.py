"""Shared exception base for the package."""


class DpipeError(Exception):
    """Base class for every error raised by dpipe modules."""
