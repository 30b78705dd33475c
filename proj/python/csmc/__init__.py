"""Reward-guided sampling from discrete diffusion models with a clean-sample MH chain."""

from ._csmc import *  # noqa: F401,F403
from ._csmc import ConfigError, InvalidArgument, RewardTransportError  # noqa: F401

__version__ = "0.1.0"
