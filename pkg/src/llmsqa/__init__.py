"""Fault localization and vulnerability detection experiments with LLM ensembles.

Pipeline: corpus -> SBFL hints / example retrieval -> prompts -> model
gateway (record/replay cache) -> answer parsing -> voting or
cross-validation -> scoring and reports.
"""

__version__ = "0.1.0"
