"""Visually prompted keyword localisation toolkit.

Pipeline stages: synthetic corpus generation, mel frontend, unit quantisation,
few-shot pair mining, matchmap-attention model training, detection and
localisation evaluation. See the CLI (``vpkl --help``) for orchestration.
"""

__version__ = "0.1.0"
