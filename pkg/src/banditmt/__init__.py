"""Bandit multiple hypothesis testing with anytime FDR control.

A library and simulator for sequentially testing one null hypothesis per
bandit arm (or per arm set): exploration policies pick which arms to sample,
per-hypothesis e-processes or p-processes accumulate evidence, and step-up
procedures (BH / e-BH, optionally DAG-constrained) emit a rejection set whose
false discovery rate stays below the target level at every stopping time.
"""

__version__ = "0.1.0"

from . import engine, evidence, exploration, harness, mt, multiagent  # noqa: F401
