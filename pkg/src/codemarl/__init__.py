"""Delay-tolerant multi-agent communication with learned intents."""

__version__ = "0.1.0"
