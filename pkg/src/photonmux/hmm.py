"""Hidden-Markov view of the chip sequence: transitions, emissions,
forward/backward machinery, and conditional sequence entropy.

The chain runs over chips t = 1..T with 2^L states.  Between chips t and
t+1 exactly one layer k = (t mod L) + 1 starts a fresh symbol (all layers
at once in aligned mode); the other components are frozen.  Emissions are
Poisson with mean tau_t * lambda_state and are never materialized as a
dense matrix since the count alphabet is unbounded.

All recursions are carried out with per-chip scaling so frames with tens
of thousands of chips do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .channel import (
    chip_count,
    chip_durations,
    state_rates,
    state_table,
    symbol_index,
)
from .errors import DegenerateLikelihoodError


class Trellis:
    """Precomputed transition structure for one channel configuration.

    Transition matrices repeat with period L in the bulk of the frame, so
    only the distinct matrices are built and cached.  An optional rate
    table (e.g. from channel estimation) overrides the configured
    per-state intensities for emissions.
    """

    def __init__(self, config, rates=None):
        self.config = config
        self.L = config.num_layers
        self.M = config.num_symbols
        self.S = 1 << self.L
        self.T = chip_count(config)
        self.bits = state_table(self.L)
        self.tau = chip_durations(config)
        if rates is None:
            self.rates = state_rates(config)
        else:
            self.rates = np.asarray(rates, dtype=float)
            if self.rates.shape != (self.S,):
                raise ValueError(f"rate table must have shape ({self.S},)")
        self._same_off = self._same_off_layer_masks()
        self._matrix_cache = {}
        self._support_cache = {}

    def _same_off_layer_masks(self):
        # same_off[k][v, s] true when v and s agree on every layer except k
        if self.config.aligned:
            return None
        idx = np.arange(self.S)
        masks = []
        for k in range(self.L):
            other = idx & ~(1 << k)
            masks.append(other[:, None] == other[None, :])
        return masks

    # -- transition structure ------------------------------------------------

    def changing_layer(self, t):
        """1-based layer that starts a new symbol between chips t and t+1."""
        return (t % self.L) + 1

    def _step_params(self, t):
        """(layer k 1-based, fresh symbol index j*) for step t -> t+1."""
        if self.config.aligned:
            return None, t + 1
        k = self.changing_layer(t)
        return k, symbol_index(self.config, k, t + 1)

    def step_matrix(self, t):
        """Transition matrix A_t[v, s] = P(S_{t+1}=s | S_t=v), 1 <= t <= T-1."""
        if not 1 <= t <= self.T - 1:
            raise IndexError(f"transition step {t} outside [1, {self.T - 1}]")
        q = self.config.priors
        if self.config.aligned:
            key = ("a", t)
            if np.all(q == q.flat[0]):
                key = ("a-uniform",)
            if key not in self._matrix_cache:
                col = q[:, t]  # fresh symbol index t+1, 0-based column t
                p1 = np.prod(np.where(self.bits, col[None, :], 1.0 - col[None, :]), axis=1)
                self._matrix_cache[key] = np.tile(p1, (self.S, 1))
            return self._matrix_cache[key]
        k, j = self._step_params(t)
        p = float(q[k - 1, j - 1]) if 1 <= j <= self.M else 0.0
        key = (k, p)
        if key not in self._matrix_cache:
            new_bit = self.bits[:, k - 1].astype(bool)
            prob = np.where(new_bit, p, 1.0 - p)[None, :]
            self._matrix_cache[key] = np.where(self._same_off[k - 1], prob, 0.0)
        return self._matrix_cache[key]

    def support_matrix(self, t):
        """Structurally allowed transitions (priors ignored, boundaries kept)."""
        if self.config.aligned:
            return np.ones((self.S, self.S), dtype=bool)
        k, j = self._step_params(t)
        in_range = 1 <= j <= self.M
        key = (k, in_range)
        if key not in self._support_cache:
            allowed = self._same_off[k - 1].copy()
            if not in_range:
                allowed &= ~self.bits[:, k - 1].astype(bool)[None, :]
            self._support_cache[key] = allowed
        return self._support_cache[key]

    def initial(self):
        """Initial state distribution pi_1."""
        q = self.config.priors
        if self.config.aligned:
            col = q[:, 0]
            return np.prod(np.where(self.bits, col[None, :], 1.0 - col[None, :]), axis=1)
        # only the first layer's first symbol is live in chip 1
        pi = np.zeros(self.S)
        pi[0] = 1.0 - q[0, 0]
        pi[1] = q[0, 0]
        return pi

    def initial_support(self):
        if self.config.aligned:
            return np.ones(self.S, dtype=bool)
        return ~self.bits[:, 1:].any(axis=1)

    # -- emissions -----------------------------------------------------------

    def emission_logprob(self, t, n):
        """log P(N_t = n | state) for every state; n may be a batch array.

        Returns shape (S,) for scalar n, or (B, S) for a length-B batch.
        Zero-rate states give probability 1 at n = 0 and 0 otherwise.
        """
        mu = self.tau[t - 1] * self.rates
        n = np.asarray(n)
        scalar = n.ndim == 0
        n2 = np.atleast_1d(n).astype(float)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = n2 * np.log(mu[None, :]) - gammaln(n2 + 1.0) - mu[None, :]
        zero = mu == 0.0
        if zero.any():
            out[:, zero] = np.where(n2 == 0.0, 0.0, -np.inf)
        return out[0] if scalar else out


@dataclass
class TrellisPosterior:
    """Scaled forward/backward tables for one observation sequence.

    alpha[t] is P(S_{t+1} | N_1..t+1) (0-based rows); beta is scaled so
    that alpha * beta is the per-chip state posterior and sums to 1 at
    every chip.  log_likelihood is the total observation log-likelihood.
    """

    alpha: np.ndarray
    beta: np.ndarray
    scale: np.ndarray
    log_likelihood: float

    def state_posteriors(self):
        return self.alpha * self.beta


def initial_distribution(config):
    """Initial chip-state distribution pi_1 as a length-2^L vector."""
    return Trellis(config).initial()


def transition_prob(config, t, from_bits, to_bits):
    """P(S_{t+1} = to | S_t = from) for 1 <= t <= T-1."""
    tr = Trellis(config)
    A = tr.step_matrix(t)
    i = int(np.dot(np.asarray(from_bits, dtype=np.int64), 1 << np.arange(tr.L)))
    j = int(np.dot(np.asarray(to_bits, dtype=np.int64), 1 << np.arange(tr.L)))
    return float(A[i, j])


def emission_logprob(config, t, bits, n, rates=None):
    """log P(N_t = n | S_t = bits)."""
    tr = Trellis(config, rates=rates)
    i = int(np.dot(np.asarray(bits, dtype=np.int64), 1 << np.arange(tr.L)))
    return float(tr.emission_logprob(t, n)[i])


def _forward_batch(trellis, obs):
    """Scaled forward pass over a (B, T) count batch.

    Returns (alpha (B,T,S), scale (B,T)).
    """
    B, T = obs.shape
    S = trellis.S
    alpha = np.empty((B, T, S))
    scale = np.empty((B, T))
    a = trellis.initial()[None, :] * np.exp(trellis.emission_logprob(1, obs[:, 0]))
    _normalize_step(a, scale[:, 0], 1)
    alpha[:, 0] = a
    for t in range(2, T + 1):
        A = trellis.step_matrix(t - 1)
        b = np.exp(trellis.emission_logprob(t, obs[:, t - 1]))
        a = (alpha[:, t - 2] @ A) * b
        _normalize_step(a, scale[:, t - 1], t)
        alpha[:, t - 1] = a
    return alpha, scale


def _normalize_step(a, scale_out, t):
    c = a.sum(axis=1)
    if not np.all(np.isfinite(c)) or np.any(c <= 0.0):
        raise DegenerateLikelihoodError(f"zero or non-finite likelihood at chip {t}")
    a /= c[:, None]
    scale_out[:] = c


def _backward_batch(trellis, obs, scale):
    B, T = obs.shape
    beta = np.empty((B, T, trellis.S))
    beta[:, T - 1] = 1.0
    for t in range(T - 1, 0, -1):
        A = trellis.step_matrix(t)
        b = np.exp(trellis.emission_logprob(t + 1, obs[:, t]))
        beta[:, t - 1] = (beta[:, t] * b) @ A.T / scale[:, t, None]
    return beta


def forward_backward(config, obs, rates=None):
    """Scaled forward/backward pass for one length-T observation sequence."""
    post = forward_backward_batch(config, np.asarray(obs)[None, :], rates=rates)
    return TrellisPosterior(post.alpha[0], post.beta[0], post.scale[0],
                            float(post.log_likelihood[0]))


def forward_backward_batch(config, obs, rates=None):
    """Vectorized forward/backward over a (B, T) batch of count sequences."""
    obs = np.asarray(obs)
    trellis = Trellis(config, rates=rates)
    if obs.shape[-1] != trellis.T:
        raise ValueError(f"expected {trellis.T} chips, got {obs.shape[-1]}")
    alpha, scale = _forward_batch(trellis, obs)
    beta = _backward_batch(trellis, obs, scale)
    loglik = np.log(scale).sum(axis=1)
    return TrellisPosterior(alpha, beta, scale, loglik)


def prior_marginals(config):
    """Prior state marginals pi_t for every chip, shape (T, 2^L)."""
    trellis = Trellis(config)
    out = np.empty((trellis.T, trellis.S))
    out[0] = trellis.initial()
    for t in range(1, trellis.T):
        out[t] = out[t - 1] @ trellis.step_matrix(t)
    return out


def sequence_entropy_given_obs(config, obs, rates=None):
    """H(S_1..T | N = obs) in bits, via the linear-time forward recursion."""
    return float(batch_sequence_entropy(config, np.asarray(obs)[None, :], rates=rates)[0])


def batch_sequence_entropy(config, obs, rates=None):
    """Conditional state-path entropies (bits) for a (B, T) count batch.

    Propagates, per state, the entropy of the path posterior conditioned on
    ending in that state; one forward pass, O(T * 4^L) per sequence.
    """
    obs = np.asarray(obs)
    trellis = Trellis(config, rates=rates)
    B, T = obs.shape
    if T != trellis.T:
        raise ValueError(f"expected {trellis.T} chips, got {T}")
    S = trellis.S
    a = trellis.initial()[None, :] * np.exp(trellis.emission_logprob(1, obs[:, 0]))
    scale = np.empty(B)
    _normalize_step(a, scale, 1)
    H = np.zeros((B, S))
    for t in range(2, T + 1):
        A = trellis.step_matrix(t - 1)
        b = np.exp(trellis.emission_logprob(t, obs[:, t - 1]))
        w = a[:, :, None] * A[None, :, :] * b[:, None, :]
        denom = w.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            P = w / denom[:, None, :]
        P = np.nan_to_num(P, nan=0.0, posinf=0.0, neginf=0.0)
        logP = np.zeros_like(P)
        np.log2(P, out=logP, where=P > 0.0)
        H = (P * (H[:, :, None] - logP)).sum(axis=1)
        a = denom
        _normalize_step(a, scale, t)
    logA = np.zeros_like(a)
    np.log2(a, out=logA, where=a > 0.0)
    return (a * (H - logA)).sum(axis=1)
