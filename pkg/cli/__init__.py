"""
Командная строка: validate, eval, forensics, potential, gap, scenario, classify,
aggregate, complete-lattice, render, serve-agent, serve-verifier.
"""

from .commands import build_parser, run_cli

__all__ = ['build_parser', 'run_cli']
