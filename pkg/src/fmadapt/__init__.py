"""Desk-scale speech foundation-model pretraining and domain adaptation."""

__version__ = "0.1.0"
