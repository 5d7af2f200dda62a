"""Synthetic roadside-camera episodes and sequence regressors for vehicle speed."""

__version__ = "0.1.0"
