"""Drone power-consumption models: analytic baselines and a BiLSTM regressor."""

__version__ = "0.1.0"
