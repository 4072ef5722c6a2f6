"""Channel configuration, chip/layer index algebra, and forward simulation.

A frame carries L superimposed binary OOK layers of M symbols each.  Symbol
boundaries of adjacent layers are offset by normalized delays rho_1..rho_L
(summing to 1), which slices the frame into T = M*L + L - 1 chips.  Within a
chip the photon count is Poisson with mean tau_t * (lambda0 + sum of the
active layers' rates).

Conventions used throughout the package:
  * chips t and symbol indices j are 1-based in public APIs, matching the
    math; internal arrays are 0-based,
  * a chip state is the length-L bit vector of the layers' active symbols;
    its integer index is little-endian with layer 1 as the least significant
    bit,
  * "aligned" mode collapses the chip structure to M chips of width 1 where
    every layer switches symbols at every chip boundary.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError

DELAY_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ChannelConfig:
    """Static description of a superimposed link.

    Attributes
    ----------
    num_layers : int
        Number of superimposed layers L >= 1.
    num_symbols : int
        Symbols per layer M >= 1.
    delays : tuple of float
        Normalized relative delays rho_1..rho_L in (0, 1], summing to 1.
    layer_rates : tuple of float
        Mean detected photoelectrons per symbol duration for each layer.
    background_rate : float
        Mean background photoelectrons per symbol duration (lambda0).
    priors : ndarray, shape (L, M)
        Prior probability that each symbol equals 1.
    aligned : bool
        If True, all layers share symbol boundaries (M chips of width 1).
    """

    num_layers: int
    num_symbols: int
    delays: tuple
    layer_rates: tuple
    background_rate: float
    priors: np.ndarray
    aligned: bool = False

    def __post_init__(self):
        L, M = int(self.num_layers), int(self.num_symbols)
        if L < 1:
            raise ConfigError(f"num_layers must be >= 1, got {L}")
        if M < 1:
            raise ConfigError(f"num_symbols must be >= 1, got {M}")
        object.__setattr__(self, "num_layers", L)
        object.__setattr__(self, "num_symbols", M)

        delays = tuple(float(d) for d in np.atleast_1d(self.delays))
        if len(delays) != L:
            raise ConfigError(f"expected {L} delays, got {len(delays)}")
        if any(d <= 0.0 or d > 1.0 for d in delays):
            raise ConfigError("each delay must lie in (0, 1]")
        if abs(sum(delays) - 1.0) > DELAY_SUM_TOL:
            raise ConfigError(f"delays must sum to 1, got {sum(delays)!r}")
        object.__setattr__(self, "delays", delays)

        rates = tuple(float(r) for r in np.atleast_1d(self.layer_rates))
        if len(rates) != L:
            raise ConfigError(f"expected {L} layer rates, got {len(rates)}")
        if any(r < 0.0 for r in rates):
            raise ConfigError("layer rates must be nonnegative")
        object.__setattr__(self, "layer_rates", rates)

        lam0 = float(self.background_rate)
        if lam0 < 0.0:
            raise ConfigError("background_rate must be nonnegative")
        object.__setattr__(self, "background_rate", lam0)

        q = np.asarray(self.priors, dtype=float)
        if q.ndim == 0:
            q = np.full((L, M), float(q))
        if q.shape != (L, M):
            raise ConfigError(f"priors must have shape ({L}, {M}), got {q.shape}")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise ConfigError("priors must lie in [0, 1]")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "priors", q)
        object.__setattr__(self, "aligned", bool(self.aligned))

    def with_rates(self, layer_rates=None, background_rate=None):
        """Copy of this config with different intensity parameters."""
        return dataclasses.replace(
            self,
            layer_rates=tuple(layer_rates) if layer_rates is not None else self.layer_rates,
            background_rate=background_rate if background_rate is not None else self.background_rate,
        )


def uniform_config(num_layers, num_symbols, layer_rates, background_rate,
                   q=0.5, delays=None, aligned=False):
    """Convenience constructor: equal delays 1/L and a scalar prior."""
    L = int(num_layers)
    if L < 1:
        raise ConfigError(f"num_layers must be >= 1, got {L}")
    if delays is None:
        delays = (1.0 / L,) * L
    if np.isscalar(layer_rates):
        layer_rates = (float(layer_rates),) * L
    return ChannelConfig(L, int(num_symbols), tuple(delays), tuple(layer_rates),
                         background_rate, q, aligned=aligned)


# ---------------------------------------------------------------------------
# chip / layer index algebra
# ---------------------------------------------------------------------------

def chip_count(config):
    """Number of chips T in a frame: M*L + L - 1, or M when aligned."""
    if config.aligned:
        return config.num_symbols
    return config.num_symbols * config.num_layers + config.num_layers - 1


def symbol_index(config, layer, t):
    """1-based symbol index of `layer` active in chip t (may fall outside [1, M]).

    An index of 0 or M+1 refers to the virtual all-zero boundary symbols.
    """
    if config.aligned:
        return t
    L = config.num_layers
    return -((t - layer + 1) // -L)  # ceil((t - layer + 1) / L)


def chip_duration(config, t):
    """Width tau_t of chip t in symbol durations."""
    _check_chip(config, t)
    if config.aligned:
        return 1.0
    return config.delays[(t - 1) % config.num_layers]


def chip_durations(config):
    """All chip widths as an array of length T."""
    T = chip_count(config)
    if config.aligned:
        return np.ones(T)
    reps = -(T // -config.num_layers)
    return np.tile(np.asarray(config.delays), reps)[:T]


def state_table(num_layers):
    """All 2^L states as a (2^L, L) bit matrix; layer 1 is bit 0 (LSB)."""
    S = 1 << num_layers
    idx = np.arange(S)
    return ((idx[:, None] >> np.arange(num_layers)[None, :]) & 1).astype(np.uint8)


def state_index(bits):
    """Integer index of a state bit vector (little-endian, layer 1 = LSB)."""
    bits = np.asarray(bits, dtype=np.int64)
    return int((bits << np.arange(bits.shape[-1])).sum(-1))


def state_at_chip(config, symbols, t):
    """State vector governing chip t for a given L x M symbol matrix."""
    _check_chip(config, t)
    symbols = np.asarray(symbols)
    L, M = config.num_layers, config.num_symbols
    out = np.zeros(L, dtype=np.uint8)
    for layer in range(1, L + 1):
        j = symbol_index(config, layer, t)
        if 1 <= j <= M:
            out[layer - 1] = symbols[layer - 1, j - 1]
    return out


def state_rate(config, bits):
    """Total Poisson intensity lambda0 + Lambda . s for one state."""
    bits = np.asarray(bits, dtype=float)
    return config.background_rate + float(np.dot(np.asarray(config.layer_rates), bits))


def state_rates(config):
    """Total intensity of every state, indexed by canonical state index."""
    bits = state_table(config.num_layers).astype(float)
    return config.background_rate + bits @ np.asarray(config.layer_rates)


def _check_chip(config, t):
    T = chip_count(config)
    if not 1 <= t <= T:
        raise IndexError(f"chip index {t} outside [1, {T}]")


# ---------------------------------------------------------------------------
# forward simulation
# ---------------------------------------------------------------------------

def sample_symbols(config, seed):
    """Draw an L x M symbol matrix with independent Bernoulli(q) entries."""
    rng = np.random.default_rng(seed)
    u = rng.random((config.num_layers, config.num_symbols))
    return (u < config.priors).astype(np.uint8)


def chip_rate_sequence(config, symbols):
    """Per-chip Poisson means tau_t * (lambda0 + Lambda . S_t), length T."""
    T = chip_count(config)
    L = config.num_layers
    rates = np.empty(T)
    lam = np.asarray(config.layer_rates)
    for t in range(1, T + 1):
        s = state_at_chip(config, symbols, t)
        rates[t - 1] = config.background_rate + float(lam @ s)
    return chip_durations(config) * rates


def sample_observations(config, symbols, seed):
    """Draw the length-T photoelectron count sequence for a symbol matrix.

    Counts are independent Poisson draws consumed in chip order, so the
    result is reproducible given (config, symbols, seed).
    """
    rng = np.random.default_rng(seed)
    return rng.poisson(chip_rate_sequence(config, symbols)).astype(np.int64)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def config_to_dict(config):
    q = np.asarray(config.priors)
    if np.all(q == q.flat[0]):
        priors = float(q.flat[0])
    else:
        priors = [[float(x) for x in row] for row in q]
    return {
        "layers": config.num_layers,
        "symbols_per_layer": config.num_symbols,
        "delays": [float(d) for d in config.delays],
        "layer_rates": [float(r) for r in config.layer_rates],
        "background_rate": float(config.background_rate),
        "priors": priors,
        "aligned": bool(config.aligned),
    }


def config_from_dict(data):
    try:
        return ChannelConfig(
            num_layers=data["layers"],
            num_symbols=data["symbols_per_layer"],
            delays=tuple(data["delays"]),
            layer_rates=tuple(data["layer_rates"]),
            background_rate=data.get("background_rate", 0.0),
            priors=np.asarray(data.get("priors", 0.5)),
            aligned=data.get("aligned", False),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc.args[0]}") from None


def save_config(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)


def load_config(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(data)


def save_observations(counts, path):
    """One decimal count per line."""
    with open(path, "w") as fh:
        for n in np.asarray(counts).ravel():
            fh.write(f"{int(n)}\n")


def load_observations(path):
    with open(path) as fh:
        return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
