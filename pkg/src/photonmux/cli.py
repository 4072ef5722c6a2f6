"""Command-line experiment runner.

Subcommands:
  run        execute an experiment described by a YAML spec file
  detect     run Viterbi or BCJR detection on an observation file
  estimate   run EM channel estimation on an observation file
  ber-sim    coded/uncoded error-rate sweep with joint detection+decoding

Exit codes: 0 success, 2 invalid configuration/spec, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, PhotonmuxError, SpecValidationError
from .experiments import ExperimentSpec, load_spec, run

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_common(parser):
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the spec's random seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel worker processes for sweep points")
    parser.add_argument("--scale", choices=("desk", "paper"), default="desk",
                        help="budget preset: desk (fast) or paper (full size)")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering, emit CSV/manifest only")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="photonmux",
        description="Simulator for multi-layer superimposed transmission "
                    "over a Poisson photon-counting channel.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a YAML spec")
    p_run.add_argument("--config", required=True, help="experiment spec file")
    _add_common(p_run)

    p_det = sub.add_parser("detect", help="detect symbols from observations")
    p_det.add_argument("--config", required=True, help="channel config file")
    p_det.add_argument("--obs", help="observation counts file (one per line); "
                                     "omitted: simulate a frame from the seed")
    p_det.add_argument("--algo", choices=("viterbi", "bcjr"), default="bcjr")
    _add_common(p_det)

    p_est = sub.add_parser("estimate", help="EM channel estimation")
    p_est.add_argument("--config", required=True, help="channel config file")
    p_est.add_argument("--obs", help="observation counts file; omitted: "
                                     "simulate a pilot frame from the seed")
    p_est.add_argument("--pilot-layers", default="0,1",
                       help="comma list of pilot layer counts to compare")
    p_est.add_argument("--tol", type=float, default=1e-6)
    _add_common(p_est)

    p_ber = sub.add_parser("ber-sim", help="coded/uncoded error-rate sweep")
    p_ber.add_argument("--mode", choices=("ml", "map"), default="map")
    p_ber.add_argument("--code", help="alist parity-check file (default: "
                                      "built-in quasi-cyclic code)")
    p_ber.add_argument("--lambda-ave", required=True,
                       help="comma list of per-layer intensities")
    p_ber.add_argument("--rho", default="0.5",
                       help="comma list of relative delays")
    p_ber.add_argument("--frames", type=int, default=None)
    p_ber.add_argument("--layers", type=int, default=2)
    p_ber.add_argument("--background", type=float, default=0.01)
    _add_common(p_ber)

    return parser


def _spec_from_args(args):
    if args.command == "run":
        spec = load_spec(args.config)
    elif args.command == "detect":
        spec = ExperimentSpec(
            kind="detect",
            channel=_channel_dict(args.config),
            options={"algo": args.algo,
                     **({"obs_file": args.obs} if args.obs else {})},
        )
    elif args.command == "estimate":
        spec = ExperimentSpec(
            kind="estimate",
            channel=_channel_dict(args.config),
            options={"pilot_layers": [int(x) for x in
                                      args.pilot_layers.split(",")],
                     "tol": args.tol,
                     **({"obs_file": args.obs} if args.obs else {})},
        )
    else:  # ber-sim
        options = {"mode": args.mode.upper()}
        if args.code:
            options["code_file"] = args.code
        if args.frames is not None:
            options["frames"] = args.frames
        spec = ExperimentSpec(
            kind="ber-sim",
            channel={"layers": args.layers, "background_rate": args.background},
            sweep={"lambda_ave": _floats(args.lambda_ave),
                   "rho": _floats(args.rho)},
            options=options,
        )
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def _channel_dict(path):
    import yaml
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise SpecValidationError("channel", f"{path}: expected a mapping")
    return data


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        spec = _spec_from_args(args)
        paths = run(spec, args.out, workers=args.workers, scale=args.scale,
                    figures=not args.no_figures)
    except (SpecValidationError, ConfigError) as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PhotonmuxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {paths['csv']}")
    for fig in paths["figures"]:
        print(f"wrote {fig}")
    print(f"wrote {paths['manifest']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
