"""Achievable-rate computations and power allocation.

Covers the exact single-layer rate (per-symbol enumeration of interfering
symbols with Poisson tail truncation), the Monte-Carlo sum rate (sampled
frames plus the linear-time conditional path entropy), the single-use
OOK vs 2-PPM comparison, and grid-search power allocation for L = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .channel import chip_count, sample_observations, sample_symbols, symbol_index
from .errors import BudgetError, InfeasibleError
from .hmm import batch_sequence_entropy

DEFAULT_TAIL_EPSILON = 1e-10
COUNT_CAP = 10_000


def binary_entropy(x):
    """-x log2 x - (1-x) log2 (1-x), with the 0 log 0 = 0 convention."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy argument outside [0, 1]: {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def input_entropy(config, layer_set=None):
    """Total prior entropy (bits) of the symbols in the given layer set."""
    layers = _check_layer_set(config, layer_set)
    q = config.priors
    return float(sum(binary_entropy(q[i - 1, j]) for i in layers
                     for j in range(config.num_symbols)))


def _check_layer_set(config, layer_set):
    if layer_set is None:
        return list(range(1, config.num_layers + 1))
    layers = sorted(set(int(k) for k in layer_set))
    if not layers or layers[0] < 1 or layers[-1] > config.num_layers:
        raise ValueError(f"layer set must be a nonempty subset of 1..{config.num_layers}")
    return layers


@dataclass
class RateResult:
    rate_bits_per_symbol: float
    std_error: float = 0.0
    samples_used: int = 0


# ---------------------------------------------------------------------------
# single-layer rate (exact, truncated count sums)
# ---------------------------------------------------------------------------

def _poisson_cap(mu, tail_epsilon):
    """Smallest cap with P(N > cap) <= tail_epsilon for Poisson(mu)."""
    if mu <= 0.0:
        return 0
    cap = int(poisson.ppf(1.0 - tail_epsilon, mu))
    if cap > COUNT_CAP:
        raise BudgetError(f"count truncation cap {cap} exceeds {COUNT_CAP}")
    return cap


def _poisson_logpmf(n, mu):
    n = np.asarray(n, dtype=float)
    if mu == 0.0:
        return np.where(n == 0.0, 0.0, -np.inf)
    return n * math.log(mu) - gammaln(n + 1.0) - mu


def _symbol_conditional_entropy(config, k, j, tail_epsilon):
    """H(Z_{k,j} | interfering symbols, counts in the symbol's chip span).

    Enumerates the neighboring layers' symbols over the L-chip span and
    sums the L-dimensional count space with per-chip Poisson truncation.
    """
    L, M = config.num_layers, config.num_symbols
    lam = np.asarray(config.layer_rates)
    lam0 = config.background_rate
    q = config.priors
    if config.aligned:
        span = [j]
    else:
        span = list(range((j - 1) * L + k, j * L + k - 1 + 1))
    taus = [1.0 if config.aligned else config.delays[(t - 1) % L] for t in span]

    # distinct in-range interfering symbols touching the span
    others = [i for i in range(1, L + 1) if i != k]
    var_keys = []
    chip_sym = {}  # (i, t) -> symbol index (or 0 for the fixed boundary zero)
    for i in others:
        for t in span:
            idx = symbol_index(config, i, t)
            if not 1 <= idx <= M:
                idx = 0
            chip_sym[(i, t)] = idx
            if idx != 0 and (i, idx) not in var_keys:
                var_keys.append((i, idx))
    V = len(var_keys)

    # per-chip count caps at the maximum possible rate
    max_rate = lam0 + lam.sum()
    caps = [_poisson_cap(tau * max_rate, tail_epsilon) for tau in taus]
    grids = np.meshgrid(*[np.arange(c + 1) for c in caps], indexing="ij")

    def span_logpmf(zk, assign):
        total = 0.0
        for pos, t in enumerate(span):
            rate = lam0 + lam[k - 1] * zk
            for i in others:
                idx = chip_sym[(i, t)]
                bit = assign.get((i, idx), 0) if idx != 0 else 0
                rate += lam[i - 1] * bit
            total = total + _poisson_logpmf(grids[pos], taus[pos] * rate)
        return total

    H = 0.0
    for w in range(1 << V):
        assign = {var_keys[v]: (w >> v) & 1 for v in range(V)}
        pw = 1.0
        for (i, idx), bit in assign.items():
            qi = q[i - 1, idx - 1]
            pw *= qi if bit else 1.0 - qi
        if pw == 0.0:
            continue
        qk = q[k - 1, j - 1]
        pz = {0: 1.0 - qk, 1: qk}
        like = {z: np.exp(span_logpmf(z, assign)) for z in (0, 1)}
        denom = pz[0] * like[0] + pz[1] * like[1]
        for z in (0, 1):
            if pz[z] == 0.0:
                continue
            joint = pw * pz[z] * like[z]
            with np.errstate(divide="ignore", invalid="ignore"):
                logpost = np.log2(pz[z] * like[z]) - np.log2(denom)
            logpost = np.where(joint > 0.0, logpost, 0.0)
            H -= float((joint * logpost).sum())
    return H


def single_layer_rate(config, k, tail_epsilon=DEFAULT_TAIL_EPSILON, method="auto"):
    """Maximum achievable rate of layer k in bits per symbol.

    method="uniform" uses the single interior-symbol term times M (valid
    when every prior is equal; edge symbols neglected), method="exact"
    sums all M per-symbol terms, "auto" picks uniform when possible.
    """
    L, M = config.num_layers, config.num_symbols
    if not 1 <= k <= L:
        raise ValueError(f"layer {k} outside 1..{L}")
    q = config.priors
    uniform = bool(np.all(q == q.flat[0])) and M >= 3
    if method == "auto":
        method = "uniform" if uniform else "exact"
    if method == "uniform" and not uniform:
        raise ValueError("uniform method requires equal priors and M >= 3")

    prior_bits = sum(binary_entropy(q[k - 1, j]) for j in range(M))
    if method == "uniform":
        cond = M * _symbol_conditional_entropy(config, k, 2, tail_epsilon)
    else:
        cond = sum(_symbol_conditional_entropy(config, k, j, tail_epsilon)
                   for j in range(1, M + 1))
    return RateResult(rate_bits_per_symbol=(prior_bits - cond) / M)


# ---------------------------------------------------------------------------
# Monte-Carlo sum rate
# ---------------------------------------------------------------------------

def sum_rate_mc(config, mc_samples=200, seed=0, batch_size=512):
    """Achievable sum rate via sampled frames and conditional path entropy.

    Draws (Z, N) pairs from the channel, averages H(paths | N) with
    compensated summation, and reports the standard error of the mean.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    M = config.num_symbols
    T = chip_count(config)
    seeds = np.random.SeedSequence(seed).spawn(mc_samples)
    ent = np.empty(mc_samples)
    for start in range(0, mc_samples, batch_size):
        stop = min(start + batch_size, mc_samples)
        obs = np.empty((stop - start, T), dtype=np.int64)
        for i in range(start, stop):
            child = seeds[i].spawn(2)
            Z = sample_symbols(config, child[0])
            obs[i - start] = sample_observations(config, Z, child[1])
        ent[start:stop] = batch_sequence_entropy(config, obs)
    mean_h = float(math.fsum(ent) / mc_samples)
    rate = (input_entropy(config) - mean_h) / M
    if mc_samples > 1:
        se = float(np.std(ent, ddof=1) / math.sqrt(mc_samples) / M)
    else:
        se = float("inf")
    return RateResult(rate_bits_per_symbol=rate, std_error=se, samples_used=mc_samples)


# ---------------------------------------------------------------------------
# single-use OOK vs 2-PPM
# ---------------------------------------------------------------------------

def _discrete_entropy(p):
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0.0]
    return float(-(p * np.log2(p)).sum())


def ook_mutual_information(lambda1, lambda0, q, tail_epsilon=DEFAULT_TAIL_EPSILON):
    cap = _poisson_cap(lambda0 + lambda1, tail_epsilon)
    n = np.arange(cap + 1)
    p0 = np.exp(_poisson_logpmf(n, lambda0))
    p1 = np.exp(_poisson_logpmf(n, lambda0 + lambda1))
    mix = (1.0 - q) * p0 + q * p1
    return _discrete_entropy(mix) - (1.0 - q) * _discrete_entropy(p0) - q * _discrete_entropy(p1)


def ppm2_mutual_information(lambda1, lambda0, q, tau, tail_epsilon=DEFAULT_TAIL_EPSILON):
    cap = _poisson_cap(lambda0 + lambda1, tail_epsilon)
    n = np.arange(cap + 1)
    # slot pmfs for (pulse present, pulse absent) at each duty split
    a0 = np.exp(_poisson_logpmf(n, tau * lambda0))
    a1 = np.exp(_poisson_logpmf(n, tau * (lambda0 + lambda1)))
    b0 = np.exp(_poisson_logpmf(n, (1.0 - tau) * lambda0))
    b1 = np.exp(_poisson_logpmf(n, (1.0 - tau) * (lambda0 + lambda1)))
    px0 = np.outer(a0, b1)  # X = 0: pulse in the second slot
    px1 = np.outer(a1, b0)  # X = 1: pulse in the first slot
    mix = (1.0 - q) * px0 + q * px1
    return _discrete_entropy(mix) - (1.0 - q) * _discrete_entropy(px0) - q * _discrete_entropy(px1)


def ook_vs_ppm(lambda1, lambda0, q_grid=51, tau_grid=51,
               tail_epsilon=DEFAULT_TAIL_EPSILON):
    """Grid-maximized single-use mutual informations (I_OOK, I_2PPM) in bits."""
    qs = np.linspace(0.0, 1.0, q_grid + 2)[1:-1]
    taus = np.linspace(0.0, 1.0, tau_grid + 2)[1:-1]
    if lambda1 <= 0.0:
        return 0.0, 0.0
    i_ook = max(ook_mutual_information(lambda1, lambda0, q, tail_epsilon) for q in qs)
    i_ppm = max(ppm2_mutual_information(lambda1, lambda0, q, tau, tail_epsilon)
                for q in qs for tau in taus)
    return float(i_ook), float(i_ppm)


# ---------------------------------------------------------------------------
# power allocation (L = 2)
# ---------------------------------------------------------------------------

def power_alloc_sum(lambda_s, template, grid_points=101, mc_samples=200, seed=0):
    """Case 1: split lambda_s across two layers to maximize the sum rate.

    Evaluates a lambda_1 grid with shared seeds (common randomness across
    grid points); exact-max ties break toward the equal split.
    Returns (lambda1, lambda2, best RateResult, sweep rows).
    """
    if template.num_layers != 2:
        raise ValueError("power allocation is implemented for L = 2 templates")
    if lambda_s < 0.0:
        raise ValueError("lambda_s must be nonnegative")
    grid = np.linspace(0.0, lambda_s, grid_points)
    sweep = []
    for lam1 in grid:
        cfg = template.with_rates(layer_rates=(lam1, lambda_s - lam1))
        res = sum_rate_mc(cfg, mc_samples=mc_samples, seed=seed)
        sweep.append((float(lam1), float(lambda_s - lam1), res))
    best_rate = max(r.rate_bits_per_symbol for _, _, r in sweep)
    ties = [row for row in sweep if row[2].rate_bits_per_symbol >= best_rate - 1e-12]
    lam1, lam2, res = min(ties, key=lambda row: abs(row[0] - lambda_s / 2.0))
    return lam1, lam2, res, sweep


def power_alloc_constrained(lambda_s, r2_floor, template, grid_points=101,
                            tail_epsilon=DEFAULT_TAIL_EPSILON):
    """Case 2: maximize layer 1's rate subject to R*_2 >= r2_floor.

    Scans lambda_2 on a grid, takes the smallest feasible lambda_2 (the
    intersection point), and returns (lambda1, lambda2, R1, sweep rows).
    """
    if template.num_layers != 2:
        raise ValueError("power allocation is implemented for L = 2 templates")
    grid = np.linspace(0.0, lambda_s, grid_points)
    sweep = []
    feasible = None
    best_r2 = -1.0
    for lam2 in grid:
        cfg = template.with_rates(layer_rates=(lambda_s - lam2, lam2))
        r2 = single_layer_rate(cfg, 2, tail_epsilon=tail_epsilon).rate_bits_per_symbol
        sweep.append((float(lambda_s - lam2), float(lam2), r2))
        best_r2 = max(best_r2, r2)
        if feasible is None and r2 >= r2_floor:
            feasible = float(lam2)
    if feasible is None:
        raise InfeasibleError(
            f"R*_2 floor {r2_floor} unreachable; maximum achievable is {best_r2:.6f}",
            best=best_r2)
    cfg = template.with_rates(layer_rates=(lambda_s - feasible, feasible))
    r1 = single_layer_rate(cfg, 1, tail_epsilon=tail_epsilon).rate_bits_per_symbol
    return lambda_s - feasible, feasible, r1, sweep


# ---------------------------------------------------------------------------
# brute-force subset-rate bound (small instances only)
# ---------------------------------------------------------------------------

def conditional_rate_bound(config, layer_set, tail_epsilon=1e-8):
    """(1/M) I(Z_U; N | Z_{L \\ U}) by exhaustive enumeration.

    Only feasible for brute-force-sized instances (L <= 3, small M);
    intended for verifying the subset constraints on test instances.
    """
    import itertools

    from .channel import chip_rate_sequence

    layers = _check_layer_set(config, layer_set)
    L, M = config.num_layers, config.num_symbols
    if L * M > 16:
        raise BudgetError("conditional_rate_bound is exponential in L*M")
    T = chip_count(config)
    q = config.priors
    caps = [_poisson_cap(d * (config.background_rate + sum(config.layer_rates)),
                         tail_epsilon)
            for d in (np.ones(T) if config.aligned else
                      [config.delays[(t - 1) % L] for t in range(1, T + 1)])]
    grid_size = int(np.prod([c + 1 for c in caps]))
    if grid_size > 2_000_000:
        raise BudgetError(f"count grid of {grid_size} points is too large; "
                          "use smaller rates or a looser tail_epsilon")
    count_grids = list(itertools.product(*[range(c + 1) for c in caps]))
    mats = [np.array(bits, dtype=np.uint8).reshape(L, M)
            for bits in itertools.product([0, 1], repeat=L * M)]
    pz = np.array([np.prod(np.where(Zm == 1, q, 1.0 - q)) for Zm in mats])
    mus = np.array([chip_rate_sequence(config, Zm) for Zm in mats])
    ns = np.array(count_grids, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = ns[None, :, :] * np.where(mus[:, None, :] > 0, np.log(mus[:, None, :]), -np.inf) \
            - gammaln(ns[None, :, :] + 1.0) - mus[:, None, :]
    ll = np.where((mus[:, None, :] == 0) & (ns[None, :, :] == 0), 0.0, ll)
    like = np.exp(ll.sum(axis=2))  # (Z, n)
    joint = pz[:, None] * like

    sel = [i - 1 for i in layers]
    rest = [i for i in range(L) if i + 1 not in layers]
    keys_rest = np.array([tuple(Zm[rest].ravel()) for Zm in mats], dtype=object)
    h_cond = 0.0
    for rk in set(map(tuple, (Zm[rest].ravel() for Zm in mats))):
        mask = np.array([tuple(Zm[rest].ravel()) == rk for Zm in mats])
        sub = joint[mask]  # rows: assignments of the selected layers
        denom = sub.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logpost = np.log2(sub) - np.log2(denom[None, :])
        h_cond -= float(np.where(sub > 0.0, sub * logpost, 0.0).sum())
    h_prior = float(sum(binary_entropy(q[i - 1, j]) for i in layers for j in range(M)))
    return (h_prior - h_cond) / M
