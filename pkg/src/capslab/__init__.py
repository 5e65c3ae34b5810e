"""Smooth continuous-control policies: regularisers, metric, environments, learners."""

__version__ = "0.1.0"
