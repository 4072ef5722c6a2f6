"""Config-driven experiment runner: sweeps, CSV/JSON artifacts, figures.

An experiment is described by a small YAML/dict spec (kind, channel
parameters, sweep axes, seed) and produces three artifacts in the output
directory: a CSV with a fixed column order, a JSON manifest echoing the
spec with seeds/budgets/version/wall time, and rendered PNG figures.
CSV content is a pure function of (spec, seed, scale), so reruns are
byte-identical; the manifest's wall time is the only non-reproducible
field and lives outside the CSV.

Sweep points are independent and can run in a process pool; rows are
assembled in sweep order regardless of completion order.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import (
    ChannelConfig,
    load_observations,
    sample_observations,
    sample_symbols,
    uniform_config,
)
from .detection import bcjr_detect, viterbi_detect
from .errors import InfeasibleError, SpecValidationError
from .estimation import PilotConfig, em_estimate, no_pilots
from .ldpc import load_alist, make_qc_code
from .pilots import m_sequence, tile_pilot
from .rates import (
    ook_vs_ppm,
    power_alloc_constrained,
    power_alloc_sum,
    single_layer_rate,
    sum_rate_mc,
)
from .turbo import joint_decode

KINDS = ("rate-sum", "rate-single", "layer-select", "power-alloc",
         "estimate", "detect", "ber-sim", "ook-vs-ppm")

# budget presets; every shrink relative to the source study is recorded in
# the manifest under "scale"
SCALES = {
    "desk": {"mc_samples": 200, "frames": 20, "symbols": 1000, "code": "qc-1024"},
    "paper": {"mc_samples": 2000, "frames": 1000, "symbols": 10000,
              "code": "qc-12620"},
}

CODE_PRESETS = {
    "qc-1024": dict(n=1024, k=512, z=32),
    "qc-12620": dict(n=12620, k=6310, z=10),
}


@dataclass
class ExperimentSpec:
    """Validated description of one experiment run."""

    kind: str
    channel: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecValidationError("kind", f"unknown kind {self.kind!r}; "
                                      f"expected one of {', '.join(KINDS)}")
        for name in ("channel", "sweep", "options"):
            value = getattr(self, name)
            if not isinstance(value, dict):
                raise SpecValidationError(name, "must be a mapping")
        self.seed = int(self.seed)
        axis = _SWEEP_AXES.get(self.kind)
        if axis is not None:
            values = self.sweep.get(axis)
            if values is None or (isinstance(values, (list, tuple))
                                  and len(values) == 0):
                raise SpecValidationError(f"sweep.{axis}",
                                          "sweep axis missing or empty")


_SWEEP_AXES = {
    "rate-sum": "symbols",
    "rate-single": "lambda",
    "layer-select": "lambda",
    "power-alloc": "lambda_s",
    "ber-sim": "lambda_ave",
    "ook-vs-ppm": "lambda1",
}


def spec_from_dict(data):
    if not isinstance(data, dict):
        raise SpecValidationError("", "experiment spec must be a mapping")
    known = {"kind", "channel", "sweep", "options", "seed"}
    for key in data:
        if key not in known:
            raise SpecValidationError(key, "unknown spec field")
    if "kind" not in data:
        raise SpecValidationError("kind", "missing required field")
    return ExperimentSpec(
        kind=data["kind"],
        channel=data.get("channel", {}) or {},
        sweep=data.get("sweep", {}) or {},
        options=data.get("options", {}) or {},
        seed=data.get("seed", 0),
    )


def load_spec(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return spec_from_dict(data)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    f = float(value)
    return "nan" if np.isnan(f) else format(f, ".12g")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _point_seeds(seed, count):
    """Deterministic independent seeds, one per sweep point."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def _delays(rho, num_layers):
    """Delay tuple from a sweep entry: 'aligned', a scalar rho, or a list."""
    if rho == "aligned":
        return None
    if np.isscalar(rho):
        rho = float(rho)
        if num_layers == 2:
            return (rho, 1.0 - rho)
        rest = (1.0 - rho) / (num_layers - 1)
        return (rho,) + (rest,) * (num_layers - 1)
    return tuple(float(r) for r in rho)


def _base_config(spec, scale, **overrides):
    ch = dict(spec.channel)
    ch.update(overrides)
    L = int(ch.get("layers", 2))
    M = int(ch.get("symbols_per_layer", SCALES[scale]["symbols"]))
    rates = ch.get("layer_rates", 10.0)
    if np.isscalar(rates):
        rates = (float(rates),) * L
    delays = ch.get("delays")
    return uniform_config(
        L, M, tuple(float(r) for r in rates),
        float(ch.get("background_rate", 0.01)),
        q=ch.get("priors", 0.5),
        delays=tuple(float(d) for d in delays) if delays else None,
        aligned=bool(ch.get("aligned", False)),
    )


def _pmap(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# sweep-point workers (module level so they pickle into the pool)
# ---------------------------------------------------------------------------

def _rate_sum_point(task):
    cfg_kwargs, mc_samples, seed = task
    cfg = ChannelConfig(**cfg_kwargs)
    res = sum_rate_mc(cfg, mc_samples=mc_samples, seed=seed)
    return res.rate_bits_per_symbol, res.std_error, res.samples_used


def _layer_rates_point(task):
    cfg_kwargs, mc_samples, seed, max_layers = task
    base = ChannelConfig(**cfg_kwargs)
    lam = base.layer_rates[0]
    out = []
    for L in range(1, max_layers + 1):
        cfg = uniform_config(L, base.num_symbols, lam, base.background_rate,
                             q=float(base.priors.flat[0]))
        res = sum_rate_mc(cfg, mc_samples=mc_samples, seed=seed + L)
        out.append(res.rate_bits_per_symbol)
    return out


def _ber_point(task):
    (cfg_kwargs, frames, seed, mode, ldpc_iters, global_iters,
     code_kwargs, code_file) = task
    cfg = ChannelConfig(**cfg_kwargs)
    code = load_alist(code_file) if code_file else make_qc_code(**code_kwargs)
    L = cfg.num_layers
    rng = np.random.default_rng(seed)
    frame_seeds = _point_seeds(seed, frames)
    sym_errs = bit_errs = symbols = bits = 0
    for f in range(frames):
        msgs = rng.integers(0, 2, (L, code.k)).astype(np.uint8)
        truth = np.stack([code.encode(m) for m in msgs])
        obs = sample_observations(cfg, truth, frame_seeds[f])
        det = bcjr_detect(cfg, obs)
        sym_errs += int((det.symbols != truth).sum())
        symbols += truth.size
        res = joint_decode(cfg, obs, code, mode=mode,
                           global_iters=global_iters, ldpc_iters=ldpc_iters)
        bit_errs += int((res.messages != msgs).sum())
        bits += msgs.size
    return sym_errs, symbols, bit_errs, bits


# ---------------------------------------------------------------------------
# kind runners: each returns (header, rows, extras-for-manifest)
# ---------------------------------------------------------------------------

def _run_rate_sum(spec, scale, workers):
    mc = int(spec.options.get("mc_samples", SCALES[scale]["mc_samples"]))
    delays = spec.sweep.get("delays", ["aligned", 0.1, 0.3, 0.5])
    symbols = [int(m) for m in spec.sweep["symbols"]]
    points = [(d, m) for d in delays for m in symbols]
    seeds = _point_seeds(spec.seed, len(points))
    L = int(spec.channel.get("layers", 2))
    tasks = []
    for (d, m), s in zip(points, seeds):
        if d == "aligned":
            cfg = _base_config(spec, scale, symbols_per_layer=m, aligned=True)
        else:
            cfg = _base_config(spec, scale, symbols_per_layer=m,
                               delays=_delays(d, L), aligned=False)
        tasks.append((_config_kwargs(cfg), mc, s))
    results = _pmap(_rate_sum_point, tasks, workers)
    rows = [(str(d), m, r, se, n)
            for (d, m), (r, se, n) in zip(points, results)]
    return (["delay", "symbols", "sum_rate", "std_error", "samples"], rows,
            {"mc_samples": mc})


def _config_kwargs(cfg):
    return dict(num_layers=cfg.num_layers, num_symbols=cfg.num_symbols,
                delays=cfg.delays, layer_rates=cfg.layer_rates,
                background_rate=cfg.background_rate,
                priors=np.asarray(cfg.priors), aligned=cfg.aligned)


def _run_rate_single(spec, scale, workers):
    layer = int(spec.options.get("layer", 1))
    total = spec.options.get("total")
    method = spec.options.get("method", "auto")
    rows = []
    for lam in spec.sweep["lambda"]:
        lam = float(lam)
        cfg = _base_config(spec, scale)
        rates = list(cfg.layer_rates)
        rates[layer - 1] = lam
        if total is not None and cfg.num_layers == 2:
            rates[2 - layer] = float(total) - lam
        cfg = cfg.with_rates(layer_rates=rates)
        rate = single_layer_rate(cfg, layer, method=method)
        rows.append((lam, layer, rate.rate_bits_per_symbol))
    return ["lambda", "layer", "rate"], rows, {"method": method}


def select_layers(lam, sigma, max_layers=4, symbols=500, background=0.01,
                  q=0.5, mc_samples=200, seed=0, rates=None):
    """Smallest worthwhile layer count: grow L while each extra layer adds
    at least sigma bits per symbol to the achievable sum rate."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if rates is None:
        rates = []
        for L in range(1, max_layers + 1):
            cfg = uniform_config(L, symbols, float(lam), background, q=q)
            rates.append(sum_rate_mc(cfg, mc_samples=mc_samples,
                                     seed=seed + L).rate_bits_per_symbol)
    l_star = 1
    for L in range(2, len(rates) + 1):
        if rates[L - 1] - rates[L - 2] >= sigma:
            l_star = L
        else:
            break
    return l_star, list(rates)


def _run_layer_select(spec, scale, workers):
    sigma = float(spec.options.get("sigma", 0.2))
    max_layers = int(spec.options.get("max_layers", 4))
    mc = int(spec.options.get("mc_samples", SCALES[scale]["mc_samples"]))
    lams = [float(x) for x in spec.sweep["lambda"]]
    seeds = _point_seeds(spec.seed, len(lams))
    tasks = []
    for lam, s in zip(lams, seeds):
        cfg = _base_config(spec, scale, layers=1, layer_rates=lam)
        tasks.append((_config_kwargs(cfg), mc, s, max_layers))
    results = _pmap(_layer_rates_point, tasks, workers)
    rows = []
    for lam, rates in zip(lams, results):
        l_star, _ = select_layers(lam, sigma, rates=rates)
        for L, r in enumerate(rates, start=1):
            rows.append((lam, L, r, l_star))
    return (["lambda", "layers", "sum_rate", "l_star"], rows,
            {"sigma": sigma, "mc_samples": mc, "max_layers": max_layers})


def _run_power_alloc(spec, scale, workers):
    case = spec.options.get("case", "sum")
    grid = int(spec.options.get("grid_points", 101))
    mc = int(spec.options.get("mc_samples", SCALES[scale]["mc_samples"]))
    template = _base_config(spec, scale)
    if case == "sum":
        rows = []
        seeds = _point_seeds(spec.seed, len(spec.sweep["lambda_s"]))
        for lam_s, s in zip(spec.sweep["lambda_s"], seeds):
            lam1, lam2, res, _ = power_alloc_sum(
                float(lam_s), template, grid_points=grid,
                mc_samples=mc, seed=s)
            rows.append((float(lam_s), lam1, lam2, res.rate_bits_per_symbol))
        return (["lambda_s", "lambda_1", "lambda_2", "sum_rate"], rows,
                {"case": case, "grid_points": grid, "mc_samples": mc})
    if case != "constrained":
        raise SpecValidationError("options.case", f"unknown case {case!r}")
    lam_s = float(spec.sweep["lambda_s"][0])
    floors = [float(x) for x in spec.options.get("r2_floor", [0.1])]
    rows = []
    for floor in floors:
        try:
            lam1, lam2, r1, _ = power_alloc_constrained(
                lam_s, floor, template, grid_points=grid)
            rows.append((floor, lam1, lam2, r1, 1))
        except InfeasibleError:
            rows.append((floor, float("nan"), float("nan"), float("nan"), 0))
    return (["r2_floor", "lambda_1", "lambda_2", "r1", "feasible"], rows,
            {"case": case, "lambda_s": lam_s, "grid_points": grid})


def _run_estimate(spec, scale, workers):
    cfg = _base_config(spec, scale)
    pilot_layer_counts = [int(x) for x in
                          spec.options.get("pilot_layers", [0, 1])]
    tol = float(spec.options.get("tol", 1e-6))
    max_iters = int(spec.options.get("max_iters", 500))
    pilot_bits = tile_pilot(m_sequence(), cfg.num_symbols)
    obs_file = spec.options.get("obs_file")
    if obs_file:
        obs = load_observations(obs_file)
    else:
        symbols = sample_symbols(cfg, spec.seed)
        for i in range(max(pilot_layer_counts)):
            symbols[i] = pilot_bits
        obs = sample_observations(cfg, symbols, spec.seed + 1)
    rows, extras = [], {}
    for lp in pilot_layer_counts:
        pilots = no_pilots() if lp == 0 else \
            PilotConfig(np.tile(pilot_bits, (lp, 1)))
        res = em_estimate(cfg, pilots, obs, tol=tol, max_iters=max_iters)
        for it, lam in enumerate(res.trajectory):
            for s, value in enumerate(lam):
                rows.append((lp, it, s, value))
        extras[f"pilot_layers_{lp}"] = {
            "iterations": res.iterations_run, "converged": bool(res.converged)}
    return (["pilot_layers", "iteration", "state", "rate"], rows,
            {"tol": tol, **extras})


def _run_detect(spec, scale, workers):
    cfg = _base_config(spec, scale)
    algo = spec.options.get("algo", "bcjr")
    obs_file = spec.options.get("obs_file")
    extras = {"algo": algo}
    if obs_file:
        obs = load_observations(obs_file)
        truth = None
    else:
        truth = sample_symbols(cfg, spec.seed)
        obs = sample_observations(cfg, truth, spec.seed + 1)
    if algo == "viterbi":
        det = viterbi_detect(cfg, obs)
        extras["path_metric"] = det.score
    elif algo == "bcjr":
        det = bcjr_detect(cfg, obs)
        extras["log_likelihood"] = det.score
    else:
        raise SpecValidationError("options.algo",
                                  f"unknown detector {algo!r}")
    rows = []
    for k in range(cfg.num_layers):
        for j in range(cfg.num_symbols):
            post = det.symbol_posteriors[k, j] \
                if det.symbol_posteriors is not None else float("nan")
            rows.append((k + 1, j + 1, int(det.symbols[k, j]), post))
    if truth is not None:
        extras["symbol_error_rate"] = float((det.symbols != truth).mean())
    return ["layer", "symbol", "bit", "posterior"], rows, extras


def _run_ber_sim(spec, scale, workers):
    frames = int(spec.options.get("frames", SCALES[scale]["frames"]))
    mode = spec.options.get("mode", "MAP").upper()
    code_file = spec.options.get("code_file")
    code_kwargs = dict(CODE_PRESETS[SCALES[scale]["code"]])
    code_kwargs["seed"] = int(spec.options.get("code_seed", 1))
    ldpc_iters = int(spec.options.get("ldpc_iters", 25))
    global_iters = int(spec.options.get("global_iters", 5))
    probe = load_alist(code_file) if code_file else make_qc_code(**code_kwargs)
    L = int(spec.channel.get("layers", 2))
    rhos = spec.sweep.get("rho", [0.5])
    lams = [float(x) for x in spec.sweep["lambda_ave"]]
    points = [(lam, r) for lam in lams for r in rhos]
    seeds = _point_seeds(spec.seed, len(points))
    tasks = []
    for (lam, rho), s in zip(points, seeds):
        cfg = _base_config(spec, scale, layers=L, layer_rates=lam,
                           symbols_per_layer=probe.n,
                           delays=_delays(rho, L))
        tasks.append((_config_kwargs(cfg), frames, s, mode,
                      ldpc_iters, global_iters, code_kwargs, code_file))
    results = _pmap(_ber_point, tasks, workers)
    rows = []
    for (lam, rho), (se, sym, be, bits) in zip(points, results):
        rows.append((lam, str(rho), frames, sym, se / sym, be / bits))
    return (["lambda_ave", "rho", "frames", "symbols",
             "uncoded_ser", "coded_ber"], rows,
            {"mode": mode, "frames": frames, "code_n": probe.n,
             "code_k": probe.k, "ldpc_iters": ldpc_iters,
             "global_iters": global_iters})


def _run_ook_vs_ppm(spec, scale, workers):
    lam0 = float(spec.channel.get("background_rate", 0.01))
    rows = []
    for lam1 in spec.sweep["lambda1"]:
        i_ook, i_ppm = ook_vs_ppm(float(lam1), lam0)
        rows.append((float(lam1), i_ook, i_ppm))
    return ["lambda1", "i_ook", "i_ppm"], rows, {"background_rate": lam0}


_RUNNERS = {
    "rate-sum": _run_rate_sum,
    "rate-single": _run_rate_single,
    "layer-select": _run_layer_select,
    "power-alloc": _run_power_alloc,
    "estimate": _run_estimate,
    "detect": _run_detect,
    "ber-sim": _run_ber_sim,
    "ook-vs-ppm": _run_ook_vs_ppm,
}


def run(spec, out_dir, workers=1, scale="desk", figures=True):
    """Execute one experiment; returns the paths of the written artifacts.

    Writes <kind>.csv (deterministic), <kind>.manifest.json (spec echo,
    seed, budgets, version, wall time), and PNG figures rendered from the
    CSV rows.
    """
    if scale not in SCALES:
        raise SpecValidationError("scale", f"unknown scale {scale!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    header, rows, extras = _RUNNERS[spec.kind](spec, scale, workers)
    csv_path = out / f"{spec.kind}.csv"
    write_csv(csv_path, header, rows)
    figure_paths = []
    if figures:
        from .plots import render_figures
        figure_paths = render_figures(spec.kind, header, rows, out)
    manifest = {
        "kind": spec.kind,
        "spec": {"kind": spec.kind, "channel": spec.channel,
                 "sweep": spec.sweep, "options": spec.options,
                 "seed": spec.seed},
        "seed": spec.seed,
        "scale": {"name": scale, **SCALES[scale]},
        "budgets": extras,
        "version": __version__,
        "wall_time_s": round(time.time() - start, 3),
        "outputs": [csv_path.name] + [p.name for p in figure_paths],
    }
    manifest_path = out / f"{spec.kind}.manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return {"csv": csv_path, "manifest": manifest_path,
            "figures": figure_paths}
