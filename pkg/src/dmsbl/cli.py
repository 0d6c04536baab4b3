"""Command-line front end.

Subcommands: generate (draw a scenario to .cbin files), estimate (run
one method on a stored scenario), bench (Monte-Carlo sweep with CSV and
figure reports), export-interference-dataset (training segments for the
score trainer), score-eval (apply a .dmsc network to a stored vector).

Exit codes: 0 success, 1 configuration problem, 2 numeric failure,
3 file or format problem.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench, config, sampler
from .cbin import read_cbin, write_cbin
from .errors import ConfigError, FormatError, NumericError
from .score_net import ScoreNetwork
from .scores import GaussianInterferencePrior, load_interference_provider
from .signal_model import (InterferenceSpec, MeasurementModel, PilotMatrix,
                           generate_interference, squared_exp_covariance)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep 2 for numerics
        raise ConfigError(message)


def _add_config_args(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")


def build_parser():
    parser = _Parser(prog="dmsbl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw one scenario to a directory")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trial", type=int, default=0,
                   help="trial counter mixed into the seed split")

    p = sub.add_parser("estimate", help="run one method on a stored scenario")
    _add_config_args(p)
    p.add_argument("--scenario", required=True,
                   help="directory written by `dmsbl generate`")
    p.add_argument("--method", required=True, choices=bench.KNOWN_METHODS)
    p.add_argument("--out", help="directory for estimate.cbin and trace.csv")

    p = sub.add_parser("bench", help="Monte-Carlo NMSE sweep with reports")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("export-interference-dataset",
                       help="write interference segments for score training")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4096)
    p.add_argument("--scale", type=float, default=1.0,
                   help="amplitude applied to every segment")
    p.add_argument("--scale-spread", type=float, default=0.0,
                   help="uniform relative amplitude jitter in [-s, +s]")

    p = sub.add_parser("score-eval",
                       help="apply a .dmsc score network to a .cbin vector")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out", required=True)
    return parser


def _load_cfg(args):
    return config.build(file_path=args.config, overrides=args.set)


def cmd_generate(args):
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed_seq = bench.trial_seed(cfg["bench.seed"], 0, args.trial)
    scenario = bench.make_scenario(cfg, cfg["scenario.snr_db"],
                                   cfg["scenario.sir_db"], seed_seq)
    model = scenario.model
    write_cbin(out / "pilot.cbin", model.A.pilot)
    write_cbin(out / "channel.cbin", scenario.h_true)
    write_cbin(out / "noisy.cbin", model.y)
    config.write_file(cfg, out / "config.cfg")
    with open(out / "meta.cfg", "w") as f:
        f.write(f"sigma_y2={model.sigma_y2!r}\n")
        f.write(f"interference_scale2={scenario.interference_scale2!r}\n")
        f.write(f"trial={args.trial}\n")
    print(f"scenario written to {out} (M={model.A.M}, L={model.A.L})")
    return 0


def _scenario_provider(cfg, meta):
    if cfg["scenario.interference"] == "gaussian_process":
        cov = squared_exp_covariance(cfg["scenario.m"],
                                     cfg["scenario.gp_corr_len"])
        scale2 = float(meta.get("interference_scale2", 1.0))
        return GaussianInterferencePrior(cov).scaled(scale2)
    return load_interference_provider(cfg["scores.weights"],
                                      vjp_mode=cfg["scores.vjp"],
                                      vjp_gate=cfg["scores.vjp_gate"])


def cmd_estimate(args):
    scen_dir = Path(args.scenario)
    if not scen_dir.is_dir():
        raise FormatError(f"scenario directory {scen_dir} does not exist")
    # defaults <- stored scenario config <- --config file <- --set flags
    cfg = dict(config.DEFAULTS)
    config.apply_pairs(cfg, config.parse_file(scen_dir / "config.cfg"))
    if args.config:
        config.apply_pairs(cfg, config.parse_file(args.config))
    config.apply_pairs(cfg, config.override_pairs(args.set))
    meta = config.parse_file(scen_dir / "meta.cfg")

    pilot = read_cbin(scen_dir / "pilot.cbin")
    y = read_cbin(scen_dir / "noisy.cbin")
    A = PilotMatrix(pilot, cfg["scenario.l"])
    model = MeasurementModel(A, y, float(meta["sigma_y2"]))
    truth = None
    if (scen_dir / "channel.cbin").exists():
        truth = read_cbin(scen_dir / "channel.cbin")

    scenario = bench.Scenario(model=model, h_true=truth,
                              interference_scale2=float(
                                  meta.get("interference_scale2", 1.0)))
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    if args.method.startswith("dmsbl"):
        provider = _scenario_provider(cfg, meta)
        scfg = bench._sampler_config(cfg, args.method, cfg["sampler.seed"])
        result = sampler.run(model, scfg, provider, truth=truth)
        h_hat = result.h_hat
        if out:
            sampler.write_trace_csv(result.trace, out / "trace.csv")
    else:
        if truth is None and args.method == "mmse":
            raise ConfigError("mmse needs channel.cbin to calibrate its "
                              "noise level in this harness")
        h_hat, _ = bench.run_method(cfg, args.method, scenario,
                                    sampler_seed=cfg["sampler.seed"])
    if out:
        write_cbin(out / "estimate.cbin", h_hat)
    print(f"method={args.method}")
    if truth is not None:
        print(f"nmse_db={sampler.nmse_db(h_hat, truth)!r}")
    return 0


def cmd_bench(args):
    cfg = _load_cfg(args)
    progress = None
    if not args.quiet:
        def progress(done, total):
            print(f"\rtrial {done}/{total}", end="", flush=True)
    rows = bench.run_experiment(cfg, progress=progress)
    if not args.quiet:
        print()
    summary = bench.emit_reports(rows, args.out,
                                 render_figures=cfg["bench.figures"])
    config.write_file(cfg, Path(args.out) / "config.cfg")
    for row in summary:
        print(f"snr={row['snr_db']:g} sir={row['sir_db']:g} "
              f"{row['method']}: mean NMSE {row['nmse_mean_db']:.2f} dB "
              f"({row['trials']} trials)")
    return 0


def cmd_export(args):
    cfg = _load_cfg(args)
    if args.count < 1:
        raise ConfigError(f"--count must be >= 1, got {args.count}")
    if not 0.0 <= args.scale_spread < 1.0:
        raise ConfigError("--scale-spread must be in [0, 1)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = bench.interference_spec_from(cfg)
    rng = np.random.default_rng(
        bench.trial_seed(cfg["bench.seed"], 857, 0))
    width = len(str(args.count - 1))
    for i in range(args.count):
        seg = generate_interference(spec, rng)
        amp = args.scale * (1.0 + args.scale_spread * rng.uniform(-1.0, 1.0))
        write_cbin(out / f"seg_{i:0{width}d}.cbin", amp * seg)
    with open(out / "manifest.cfg", "w") as f:
        f.write(f"count={args.count}\n")
        f.write(f"length={spec.length}\n")
        f.write(f"kind={spec.kind}\n")
        f.write(f"scale={args.scale!r}\n")
        f.write(f"scale_spread={args.scale_spread!r}\n")
    print(f"wrote {args.count} segments of length {spec.length} to {out}")
    return 0


def cmd_score_eval(args):
    net = ScoreNetwork.load(args.weights, dtype=np.float64)
    x = read_cbin(args.input)
    write_cbin(args.out, net.score(x, args.t))
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "export-interference-dataset": cmd_export,
    "score-eval": cmd_score_eval,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
