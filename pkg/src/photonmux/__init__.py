"""Asynchronous multi-layer superimposed transmission over a Poisson
photon-counting channel: chip-level HMM, achievable rates, EM channel
estimation, Viterbi/BCJR detection, and turbo joint detection/decoding."""

__version__ = "0.1.0"

from .channel import ChannelConfig, uniform_config  # noqa: F401
from .errors import (  # noqa: F401
    BudgetError,
    ConfigError,
    DegenerateLikelihoodError,
    InfeasibleError,
    PhotonmuxError,
    SpecValidationError,
)
