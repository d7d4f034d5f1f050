"""Consistency-weighted RGB-D direct visual odometry."""

__version__ = "0.1.0"
