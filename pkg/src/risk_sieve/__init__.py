"""Driving-risk models for filtering unimportant agents around an ego vehicle."""

__version__ = "0.1.0"
