"""Multi-agent reinforcement learning for buildings sharing an energy storage system."""

__version__ = "0.1.0"
