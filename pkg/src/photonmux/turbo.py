"""Iterative joint detection and decoding (turbo processing).

Each global iteration runs one multi-layer soft detection pass followed by
a block of LDPC decoding iterations per layer.  The detector produces a
per-symbol log-likelihood ratio by summing, over the symbol's chip span,
the log ratio of the Poisson chip likelihoods with the interfering
layers' bits marginalized out under per-bit probabilities; those
probabilities come from the symbol priors on the first pass and from the
decoders' soft output afterwards.  In MAP mode the prior log-odds are
added to form a log-a-posteriori ratio before decoding.

Sign conventions: soft values here are log P(bit = 1) / P(bit = 0)
(positive favors 1); the min-sum decoder uses the opposite convention, so
values are negated at the decoder boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import chip_count, chip_durations, state_rates, symbol_index
from .hmm import Trellis
from .ldpc import min_sum_decode

LLR_CLAMP = 50.0


@dataclass
class SoftInfo:
    """Per-symbol log-ratio soft information exchanged in the turbo loop."""

    values: np.ndarray       # (L, M) log-ratios, clamped to +-LLR_CLAMP
    kind: str                # "LLR" or "LAR"
    iteration: int = 0

    def __post_init__(self):
        self.values = np.clip(np.asarray(self.values, dtype=float),
                              -LLR_CLAMP, LLR_CLAMP)
        if self.kind not in ("LLR", "LAR"):
            raise ValueError(f"soft info kind must be LLR or LAR, got {self.kind!r}")


def prior_log_odds(config):
    """log(q / (1 - q)) per symbol slot, clamped like all soft values."""
    q = np.asarray(config.priors, dtype=float)
    with np.errstate(divide="ignore"):
        return np.clip(np.log(q) - np.log1p(-q), -LLR_CLAMP, LLR_CLAMP)


def bit_probabilities(soft, config, form="printed"):
    """P(bit = 1) implied by decoder soft output, for detector feedback.

    LAR-kind values pass through a plain logistic.  For LLR-kind values
    the "printed" form scales the ratio by the prior odds q/(1-q) inside
    the exponent; the "standard" form adds the prior log-odds instead
    (the two agree at q = 1/2).
    """
    x = soft.values
    if soft.kind == "LAR":
        arg = x
    elif form == "printed":
        q = np.asarray(config.priors, dtype=float)
        arg = (q / (1.0 - q)) * x
    elif form == "standard":
        arg = x + prior_log_odds(config)
    else:
        raise ValueError(f"unknown posterior form {form!r}")
    return 1.0 / (1.0 + np.exp(-np.clip(arg, -LLR_CLAMP, LLR_CLAMP)))


def _interferer_prob_table(config, probs):
    """Per-chip P(bit = 1) for every layer, with boundary symbols forced 0."""
    L, M = config.num_layers, config.num_symbols
    T = chip_count(config)
    table = np.zeros((T, L))
    for t in range(1, T + 1):
        for layer in range(1, L + 1):
            j = symbol_index(config, layer, t)
            if 1 <= j <= M:
                table[t - 1, layer - 1] = probs[layer - 1, j - 1]
    return table


def detector_llr(config, obs, rates=None, extrinsic_probs=None, iteration=0):
    """Per-symbol detector LLR with soft interference marginalization.

    For each symbol the LLR sums, over the L chips of its span, the log
    ratio of the chip likelihoods under bit 1 versus bit 0, where the
    other layers' bits are averaged out with probabilities
    `extrinsic_probs` (an (L, M) array of P(bit = 1); defaults to the
    configured priors on the first pass).  Output is clamped to +-50.
    """
    obs = np.asarray(obs)
    trellis = Trellis(config, rates=rates)
    L, M = trellis.L, trellis.M
    if obs.shape != (trellis.T,):
        raise ValueError(f"expected {trellis.T} observation chips, got {obs.shape}")
    probs = np.asarray(config.priors, dtype=float) if extrinsic_probs is None \
        else np.asarray(extrinsic_probs, dtype=float)
    ptab = _interferer_prob_table(config, probs)
    bits = trellis.bits.astype(bool)
    # per-chip, per-state likelihoods in one shot: (T, S)
    mu = trellis.tau[:, None] * trellis.rates[None, :]
    n = obs.astype(float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        loglike = n * np.log(mu) - mu
    loglike = np.where(mu > 0.0, loglike, np.where(n == 0.0, 0.0, -np.inf))
    like = np.exp(loglike - loglike.max(axis=1, keepdims=True))
    out = np.empty((L, M))
    for k in range(1, L + 1):
        on = bits[:, k - 1]
        # interference weight of each state per chip (layer k excluded)
        w = np.ones_like(like)
        for j in range(L):
            if j != k - 1:
                pj = ptab[:, j][:, None]
                w *= np.where(bits[None, :, j], pj, 1.0 - pj)
        wl = w * like
        with np.errstate(divide="ignore"):
            ratio = np.log(wl[:, on].sum(axis=1)) - np.log(wl[:, ~on].sum(axis=1))
        if config.aligned:
            out[k - 1] = ratio
        else:
            span = (np.arange(M)[:, None] * L + (k - 1)
                    + np.arange(L)[None, :])
            out[k - 1] = ratio[span].sum(axis=1)
    return SoftInfo(np.clip(out, -LLR_CLAMP, LLR_CLAMP), "LLR", iteration)


@dataclass
class JointDecodeResult:
    """Decoded bits and convergence diagnostics of the turbo loop."""

    codewords: np.ndarray        # (L, n) hard decisions, best iterate per layer
    messages: np.ndarray         # (L, k) systematic message bits
    converged: bool              # all layers' parity checks satisfied
    iterations: int              # global turbo iterations executed
    unsatisfied: np.ndarray      # (L,) parity failures of the reported iterate
    soft: SoftInfo = None        # final detector soft information


def joint_decode(config, obs, codes, rates=None, mode="MAP",
                 global_iters=5, ldpc_iters=25, feedback="posterior",
                 posterior_form="printed"):
    """Turbo joint detection and decoding of one frame.

    Each of the `global_iters` iterations runs the soft detector, adds
    the prior log-odds in MAP mode, then `ldpc_iters` min-sum iterations
    per layer.  Decoder soft output (full posterior, or extrinsic with
    `feedback="extrinsic"`) sets the interference probabilities of the
    next detector pass.  Stops early once every layer's parity checks
    pass; otherwise each layer reports its best iterate (fewest
    unsatisfied checks).
    """
    if mode not in ("ML", "MAP"):
        raise ValueError(f"mode must be ML or MAP, got {mode!r}")
    if isinstance(codes, (list, tuple)):
        codes = list(codes)
    else:
        codes = [codes] * config.num_layers
    if len(codes) != config.num_layers:
        raise ValueError("need one code per layer")
    for code in codes:
        if code.n != config.num_symbols:
            raise ValueError(
                f"code length {code.n} must equal symbols per layer "
                f"{config.num_symbols}")

    L, M = config.num_layers, config.num_symbols
    log_prior = prior_log_odds(config)
    probs = None
    best_bits = np.zeros((L, M), dtype=np.uint8)
    best_bad = np.full(L, np.iinfo(np.int64).max)
    soft = None
    iters_done = 0
    for v in range(global_iters):
        iters_done = v + 1
        soft = detector_llr(config, obs, rates=rates,
                            extrinsic_probs=probs, iteration=v)
        if mode == "MAP":
            soft = SoftInfo(soft.values + log_prior, "LAR", v)
        dec_soft = np.empty((L, M))
        for k in range(L):
            res = min_sum_decode(codes[k], -soft.values[k], max_iters=ldpc_iters)
            dec_soft[k] = -res.llr_out
            if res.unsatisfied < best_bad[k]:
                best_bad[k] = res.unsatisfied
                best_bits[k] = res.bits
        if not best_bad.any():
            break
        fb = dec_soft - soft.values if feedback == "extrinsic" else dec_soft
        probs = bit_probabilities(SoftInfo(fb, soft.kind, v), config,
                                  form=posterior_form)
    messages = np.stack([codes[k].extract_message(best_bits[k]) for k in range(L)])
    return JointDecodeResult(
        codewords=best_bits,
        messages=messages,
        converged=not best_bad.any(),
        iterations=iters_done,
        unsatisfied=best_bad.astype(np.int64),
        soft=soft,
    )
