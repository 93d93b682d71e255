"""Unsupervised anomaly detection for control-system logs."""

APP_NAME = "cpsdetect"
__version__ = "1.0.0"
