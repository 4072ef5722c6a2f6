"""EM channel estimation of per-state photoelectron rates with partial pilots.

Pilot sequences are known on the first L_p layers (possibly none); the
remaining layers' symbols are unknown data.  Each chip is treated as an
independent mixture of the Poisson rates of its candidate states (the
pilot bits pin L_p components, the free layers range over 2^(L-L_p)
patterns), and EM alternates per-chip posteriors with the closed-form
count-over-duration rate update.  With full pilots the E-step posteriors
are indicators and the estimate is the one-shot empirical rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import chip_count, chip_durations, state_table, symbol_index
from .errors import ConfigError, DegenerateLikelihoodError


@dataclass(frozen=True)
class PilotConfig:
    """Known pilot symbols on the first `num_pilot_layers` layers.

    pilot_bits has shape (L_p, M) and covers the whole pilot frame; L_p
    may be 0 (blind estimation).
    """

    pilot_bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.pilot_bits, dtype=np.uint8)
        if bits.ndim != 2:
            bits = bits.reshape(0, 0) if bits.size == 0 else np.atleast_2d(bits)
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ConfigError("pilot bits must be 0/1")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "pilot_bits", bits)

    @property
    def num_pilot_layers(self):
        return self.pilot_bits.shape[0]

    def num_chips(self, config):
        return chip_count(config)


def no_pilots():
    return PilotConfig(np.zeros((0, 0), dtype=np.uint8))


@dataclass
class EstimationResult:
    """Per-state rate estimates (background included) and EM diagnostics."""

    rates: np.ndarray                 # (2^L,) total rate per state
    iterations_run: int
    converged: bool
    trajectory: np.ndarray            # (iters+1, 2^L) including the init
    log_likelihoods: np.ndarray       # (iters,) observed-data log-likelihood
    estimated: np.ndarray = field(default=None)  # states actually observed


def _pilot_patterns(config, pilots):
    """Per-chip pilot contribution to the state index, plus candidate offsets."""
    L = config.num_layers
    Lp = pilots.num_pilot_layers
    if Lp > L:
        raise ConfigError(f"more pilot layers ({Lp}) than layers ({L})")
    if Lp and pilots.pilot_bits.shape[1] != config.num_symbols:
        raise ConfigError("pilot length must match symbols_per_layer")
    T = chip_count(config)
    base = np.zeros(T, dtype=np.int64)
    for i in range(1, Lp + 1):
        for t in range(1, T + 1):
            j = symbol_index(config, i, t)
            if 1 <= j <= config.num_symbols and pilots.pilot_bits[i - 1, j - 1]:
                base[t - 1] |= 1 << (i - 1)
    free = np.arange(Lp, L)
    combos = np.arange(1 << (L - Lp))
    offsets = np.zeros(len(combos), dtype=np.int64)
    for pos, layer in enumerate(free):
        offsets |= ((combos >> pos) & 1) << layer
    return base, offsets


def default_init(config, pilots, obs):
    """Monotone spread of initial rates, increasing with active layers.

    Scales with the empirical mean rate and adds a small per-state offset
    so that equal-popcount states stay distinct (the EM ordering
    precondition rejects exactly equal initial rates).
    """
    obs = np.asarray(obs)
    tau = chip_durations(config)
    scale = max(float(obs.sum()) / float(tau.sum()), 1e-6)
    L = config.num_layers
    pop = state_table(L).sum(axis=1).astype(float)
    idx = np.arange(1 << L, dtype=float)
    return scale * (0.25 + pop + 0.02 * idx) / (0.25 + 0.5 * L)


def em_estimate(config, pilots, obs, init=None, max_iters=500, tol=1e-6,
                rel_floor=0.01):
    """EM estimate of per-state total rates from one pilot-frame observation.

    The E-step treats chips independently (a per-chip Poisson mixture over
    the candidate states, uniform mixture weights); the M-step is the
    closed-form count-sum over duration-sum update.  Iterates until the
    maximum per-state relative change drops below tol; the denominator is
    floored at rel_floor times the current maximum rate so near-zero
    states (background only) cannot stall the stopping rule.
    """
    obs = np.asarray(obs, dtype=np.int64)
    T = chip_count(config)
    if obs.shape != (T,):
        raise ValueError(f"expected {T} observation chips, got {obs.shape}")
    L = config.num_layers
    S = 1 << L
    tau = chip_durations(config)
    base, offsets = _pilot_patterns(config, pilots)

    lam = np.asarray(default_init(config, pilots, obs) if init is None else init,
                     dtype=float).copy()
    if lam.shape != (S,):
        raise ValueError(f"init rate map must have shape ({S},)")

    # group chips by pilot pattern so the E-step vectorizes per group
    groups = []
    seen_states = np.zeros(S, dtype=bool)
    for pattern in np.unique(base):
        sel = np.nonzero(base == pattern)[0]
        cands = pattern | offsets
        if len(set(lam[cands])) != len(cands):
            raise ConfigError("degenerate init: candidate states share an initial rate")
        seen_states[cands] = True
        groups.append((sel, cands, obs[sel].astype(float), tau[sel]))

    trajectory = [lam.copy()]
    logliks = []
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        num = np.zeros(S)
        den = np.zeros(S)
        loglik = 0.0
        for sel, cands, n_g, tau_g in groups:
            mu = tau_g[:, None] * lam[cands][None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                logw = n_g[:, None] * np.log(mu) - mu
            logw = np.where(mu > 0.0, logw, np.where(n_g[:, None] == 0.0, 0.0, -np.inf))
            top = logw.max(axis=1)
            if not np.all(np.isfinite(top)):
                raise DegenerateLikelihoodError("non-finite chip likelihood in E-step")
            w = np.exp(logw - top[:, None])
            tot = w.sum(axis=1)
            # additive -log(n!) terms omitted: constant in the rates
            loglik += float(np.sum(top + np.log(tot / len(cands))))
            q_post = w / tot[:, None]
            num[cands] += q_post.T @ n_g
            den[cands] += q_post.T @ tau_g
        logliks.append(loglik)
        new_lam = lam.copy()
        mask = den > 0.0
        new_lam[mask] = num[mask] / den[mask]
        floor = max(rel_floor * float(new_lam.max()), 1e-300)
        rel = np.abs(new_lam - lam) / np.maximum(np.abs(lam), floor)
        change = float(rel[seen_states].max()) if seen_states.any() else 0.0
        lam = new_lam
        trajectory.append(lam.copy())
        if change < tol:
            converged = True
            break

    return EstimationResult(
        rates=lam,
        iterations_run=iterations,
        converged=converged,
        trajectory=np.asarray(trajectory),
        log_likelihoods=np.asarray(logliks),
        estimated=seen_states,
    )


def em_log_likelihood(config, pilots, obs, rates):
    """Observed-data log-likelihood of a rate map under the per-chip mixture."""
    obs = np.asarray(obs, dtype=np.int64)
    tau = chip_durations(config)
    base, offsets = _pilot_patterns(config, pilots)
    lam = np.asarray(rates, dtype=float)
    total = 0.0
    for pattern in np.unique(base):
        sel = np.nonzero(base == pattern)[0]
        cands = pattern | offsets
        n_g = obs[sel].astype(float)
        mu = tau[sel][:, None] * lam[cands][None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = n_g[:, None] * np.log(mu) - mu
        logw = np.where(mu > 0.0, logw, np.where(n_g[:, None] == 0.0, 0.0, -np.inf))
        top = logw.max(axis=1)
        total += float(np.sum(top + np.log(np.exp(logw - top[:, None]).sum(axis=1)
                                           / len(cands))))
    return total


def layer_rates_from_states(rates, num_layers):
    """Least-squares split of per-state totals into (lambda0, lambda_1..L)."""
    bits = state_table(num_layers).astype(float)
    A = np.hstack([np.ones((bits.shape[0], 1)), bits])
    sol, *_ = np.linalg.lstsq(A, np.asarray(rates, dtype=float), rcond=None)
    return float(sol[0]), tuple(float(x) for x in sol[1:])
