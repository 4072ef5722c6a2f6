"""Sequence detection on the chip trellis: Viterbi and per-symbol posteriors.

Viterbi runs in the log domain over the structurally allowed transitions
(one layer switches per chip boundary, boundary symbols forced to zero)
and maximizes the Poisson observation likelihood, so it is a maximum-
likelihood sequence detector that ignores the symbol priors.  The
per-symbol posterior detector ("BCJR") reuses the scaled forward/backward
pass, which does include the priors, and reads each symbol's posterior
off a chip inside its span after checking that every chip of the span
agrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmm import Trellis, forward_backward

SPAN_CONSISTENCY_TOL = 1e-9


@dataclass
class DetectionOutput:
    """Detected symbols with the per-chip state decisions behind them."""

    symbols: np.ndarray          # (L, M) hard bit decisions
    states: np.ndarray           # (T,) chip state indices along the decision
    score: float                 # log-likelihood (Viterbi) / log posterior mass
    symbol_posteriors: np.ndarray = None   # (L, M) P(bit = 1 | obs), BCJR only


def _path_to_symbols(trellis, path):
    """Read the L x M symbol matrix off a chip-state path.

    Within a symbol's chip span the corresponding bit cannot change, so
    any chip of the span determines the symbol; the first one is used.
    """
    L, M = trellis.L, trellis.M
    bits = trellis.bits
    symbols = np.zeros((L, M), dtype=np.uint8)
    for i in range(1, L + 1):
        for j in range(1, M + 1):
            t = _first_chip_of_span(trellis, i, j)
            symbols[i - 1, j - 1] = bits[path[t - 1], i - 1]
    return symbols


def _first_chip_of_span(trellis, layer, j):
    """First chip (1-based) whose active symbol of `layer` is symbol j."""
    if trellis.config.aligned:
        return j
    # symbol_index(i, t) = ceil((t - i + 1) / L) = j  <=>  t in a run of L chips
    t = (j - 1) * trellis.L + layer
    return max(1, min(t, trellis.T))


def _span_chips(trellis, layer, j):
    """All chips (1-based) whose active symbol of `layer` is symbol j."""
    if trellis.config.aligned:
        return [j]
    start = (j - 1) * trellis.L + layer
    return [t for t in range(start, start + trellis.L) if 1 <= t <= trellis.T]


def viterbi_detect(config, obs, rates=None):
    """Maximum-likelihood chip-state path and the symbols it implies.

    Ties are broken toward the smallest state index.  The score is the
    Poisson log-likelihood of the winning path (symbol priors excluded;
    structurally impossible transitions excluded).
    """
    obs = np.asarray(obs)
    trellis = Trellis(config, rates=rates)
    T, S = trellis.T, trellis.S
    if obs.shape != (T,):
        raise ValueError(f"expected {T} observation chips, got {obs.shape}")

    metric = np.full(S, -np.inf)
    metric[trellis.initial_support()] = 0.0
    metric += trellis.emission_logprob(1, obs[0])
    back = np.empty((T - 1, S), dtype=np.int64) if T > 1 else \
        np.empty((0, S), dtype=np.int64)
    for t in range(2, T + 1):
        allowed = trellis.support_matrix(t - 1)
        cand = np.where(allowed, metric[:, None], -np.inf)
        # argmax picks the first (smallest) predecessor index on ties
        prev = cand.argmax(axis=0)
        metric = cand[prev, np.arange(S)] + trellis.emission_logprob(t, obs[t - 1])
        back[t - 2] = prev

    path = np.empty(T, dtype=np.int64)
    path[T - 1] = int(metric.argmax())
    score = float(metric[path[T - 1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t - 1][path[t]]
    return DetectionOutput(
        symbols=_path_to_symbols(trellis, path),
        states=path,
        score=score,
    )


def symbol_posteriors(config, obs, rates=None, posterior=None):
    """P(symbol bit = 1 | all observations) for every layer/symbol slot.

    Marginalizes the forward/backward chip-state posterior at one chip of
    each symbol's span, after asserting that all chips of the span give
    the same marginal (they must, up to numerical error).
    """
    trellis = Trellis(config, rates=rates)
    if posterior is None:
        posterior = forward_backward(config, obs, rates=rates)
    gamma = posterior.state_posteriors()
    L, M = trellis.L, trellis.M
    bit_on = trellis.bits.astype(bool)
    out = np.empty((L, M))
    for i in range(1, L + 1):
        mass = gamma[:, bit_on[:, i - 1]].sum(axis=1)
        for j in range(1, M + 1):
            span = _span_chips(trellis, i, j)
            vals = mass[np.asarray(span) - 1]
            if vals.max() - vals.min() > SPAN_CONSISTENCY_TOL:
                raise AssertionError(
                    f"symbol ({i},{j}) posterior varies across its chip span: "
                    f"{vals.max() - vals.min():.3e}")
            out[i - 1, j - 1] = vals[0]
    return out


def bcjr_detect(config, obs, rates=None):
    """Per-symbol MAP decisions from the forward/backward posteriors.

    Each symbol is decided independently by thresholding its posterior at
    1/2 (ties go to 0).  The reported states are the per-chip MAP states;
    the score is the total observation log-likelihood.
    """
    obs = np.asarray(obs)
    posterior = forward_backward(config, obs, rates=rates)
    probs = symbol_posteriors(config, obs, rates=rates, posterior=posterior)
    gamma = posterior.state_posteriors()
    return DetectionOutput(
        symbols=(probs > 0.5).astype(np.uint8),
        states=gamma.argmax(axis=1),
        score=float(posterior.log_likelihood),
        symbol_posteriors=probs,
    )


def symbol_error_rate(detected, truth):
    """Fraction of symbol slots decided incorrectly."""
    detected = np.asarray(detected)
    truth = np.asarray(truth)
    if detected.shape != truth.shape:
        raise ValueError("shape mismatch between decisions and truth")
    return float(np.mean(detected != truth))
