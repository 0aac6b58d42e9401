"""Scenario Scout: surrogate-guided multi-objective test generation for agent environments."""
__version__ = "1.0.0"
