"""
Механизмы аттестации - плагины, обнаруживаемые core.mechanism_loader.
"""

from .base_mechanism import BaseMechanism
from .basic_mechanisms import MeasureOnlyMechanism, SerialReadMechanism, TokenOnlyMechanism
from .quote_mechanism import QuoteMechanism

__all__ = [
    'BaseMechanism',
    'QuoteMechanism',
    'MeasureOnlyMechanism',
    'TokenOnlyMechanism',
    'SerialReadMechanism',
]
