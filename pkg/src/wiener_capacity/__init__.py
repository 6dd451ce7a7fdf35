"""Capacity bounds and achievable rates for the Wiener phase-noise channel."""

from .errors import CapacityError
from .model import ChannelParams, ReceivedBlock, SymbolBlock, simulate

__all__ = ["CapacityError", "ChannelParams", "ReceivedBlock", "SymbolBlock", "simulate"]
__version__ = "0.1.0"
