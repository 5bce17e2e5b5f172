"""Command-line entry point.

Exit status: 0 on success, 1 on invalid input or usage, 2 on I/O failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import channel, config, emnet, estimation, harness, scenario, selection, specfun
from .errors import DomainError, NumericError, TrainingFailure

FIGURES = ("fig5a", "fig5b", "fig6", "fig7", "fig9", "fig10", "conv")
# trial counts stated for each figure
FIGURE_TRIALS = {"fig5a": 100_000, "fig5b": 5000, "fig7": 10_000, "fig9": 2000,
                 "fig10": 2000, "conv": 200}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: $%s/<name>.csv or stdout)"
                   % harness.OUTPUT_ENV)
    p.add_argument("--trials", type=int)
    return p


def build_parser():
    parser = _Parser(prog="netsense", description="Networked radar sensing simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = _common(sub.add_parser("analyze", help="closed-form threshold table"))
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--Lmax", type=int, default=12)

    p = _common(sub.add_parser("montecarlo", help="P_d simulation against theory"))
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--snr-db", type=float, nargs="+")
    p.add_argument("--clutter-model", choices=("gaussian", "waveform"), default="gaussian")
    p.add_argument("--threshold", choices=("approx", "exact"), default="approx")

    p = _common(sub.add_parser("select", help="greedy TMT selection trace"))
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--mode", choices=selection.MODES, default="exact")

    p = _common(sub.add_parser("estimate", help="estimate one TMT's clutter covariance"))
    p.add_argument("--tmt", type=int, default=0)
    p.add_argument("--iota", type=float, default=0.5)
    p.add_argument("--snapshots", type=int, default=50)
    p.add_argument("--estimator", choices=("scm", "em", "emnet"), default="em")
    p.add_argument("--model", help="EM-Net model file (for --estimator emnet)")
    p.add_argument("--iters", type=int, default=50)

    p = _common(sub.add_parser("train", help="train EM-Net"))
    p.add_argument("--layers", type=int, default=10)
    p.add_argument("--batches", type=int, default=1500)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--iota", type=float, default=0.5)
    p.add_argument("--snapshots", type=int, default=50)

    p = _common(sub.add_parser("evaluate", help="plug-in detection with each estimator"))
    p.add_argument("--model", required=True)
    p.add_argument("--iota", type=float, default=0.5)
    p.add_argument("--snapshots", type=int, default=50)
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--snr-db", type=float, nargs="+", default=[-5.0, 0.0, 5.0, 10.0, 15.0])

    p = _common(sub.add_parser("reproduce", help="regenerate a figure's data"))
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("--model", help="EM-Net model file (fig9, fig10, conv)")
    p.add_argument("--pfa", type=float, default=0.01)
    return parser


def _scenario(args, default=scenario.paper_scenario_fig4):
    return config.load_scenario(args.config) if args.config else default()


def _emit(args, name, text):
    path = args.out or harness.default_output(name)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}", file=sys.stderr)


def _trials(args, default):
    n = args.trials if args.trials is not None else default
    if n < 1:
        raise DomainError("--trials must be >= 1")
    return n


def _analyze(args):
    if args.Lmax < 1:
        raise DomainError("--Lmax must be >= 1")
    t = harness.Table(["L", "pfa", "threshold_approx", "threshold_exact", "relative_gap",
                       "increment"])
    for L in range(1, args.Lmax + 1):
        ga, ge = specfun.threshold_approx(args.pfa, L), specfun.threshold_exact(args.pfa, L)
        t.add(L, args.pfa, ga, ge, (ga - ge) / ge, specfun.threshold_increment(args.pfa, L))
    _emit(args, "analyze", t.to_csv())


def _montecarlo(args):
    spec = harness.ExperimentSpec("montecarlo", _scenario(args), _trials(args, harness.DEFAULT_TRIALS),
                                  args.pfa, seed=args.seed)
    t = harness.run_pd_accuracy(spec, args.snr_db, model=args.clutter_model,
                                threshold=args.threshold)
    _emit(args, "montecarlo", t.to_csv())


def _select(args):
    cfg = _scenario(args)
    state = selection.select_tmts(cfg, args.pfa, args.mode)
    _emit(args, "select", state.trace_csv())


def _load_model(path):
    return emnet.EMNetModel.load(path)


def _estimate(args):
    cfg = _scenario(args)
    if not 0 <= args.tmt < cfg.n_tmt:
        raise DomainError(f"--tmt must lie in [0, {cfg.n_tmt})")
    setup = harness.EstimationSetup.default(args.snapshots, args.iota, cfg=cfg)
    rng = harness.stream(args.seed, "estimate")
    Y = setup.ee_snapshots(args.tmt, rng)
    if args.estimator == "scm":
        R = estimation.scm(Y)
    else:
        pat = estimation.make_pattern(Y.shape[0], cfg.n_rx, args.iota, rng)
        data = estimation.PartialSnapshots.from_full(Y, pat)
        if args.estimator == "em":
            R = estimation.em_run(data, max_iters=args.iters).state.estimate
        else:
            if not args.model:
                raise DomainError("--estimator emnet needs --model")
            R = emnet.forward(_load_model(args.model), data)[-1]
    _emit(args, "estimate", estimation.matrix_to_csv(R * cfg.noise_power))


def _train(args):
    cfg = _scenario(args)
    tc = emnet.TrainingConfig(n_layers=args.layers, n_batches=args.batches,
                              step_size=args.step_size, seed=args.seed)
    setup = harness.EstimationSetup.default(args.snapshots, args.iota, cfg=cfg)
    res = harness.train_emnet(tc, setup)
    res.model.meta.update({"iota": args.iota, "snapshots": args.snapshots,
                           "final_loss": res.loss_trace[-1] if res.loss_trace else "nan"})
    _emit(args, "model", res.model.to_text())


def _evaluate(args):
    cfg = _scenario(args)
    model = _load_model(args.model)
    setup = harness.EstimationSetup.default(args.snapshots, args.iota, cfg=cfg)
    t = harness.evaluate_methods(setup, model, args.snr_db, _trials(args, 2000), args.seed,
                                 args.pfa)
    _emit(args, "evaluate", t.to_csv())


def _reproduce(args):
    fig = args.figure
    trials = _trials(args, FIGURE_TRIALS.get(fig, 1))
    if fig in ("fig5a", "fig5b", "fig6"):
        spec = harness.ExperimentSpec(fig, _scenario(args), trials, args.pfa, seed=args.seed)
        run = {"fig5a": harness.run_threshold_accuracy, "fig5b": harness.run_pd_accuracy,
               "fig6": harness.run_array_gain}[fig]
        _emit(args, fig, run(spec).to_csv())
        return
    if fig == "fig7":
        spec = harness.ExperimentSpec(fig, None, trials, args.pfa, seed=args.seed)
        _emit(args, fig, harness.run_macro_diversity(spec).table.to_csv())
        return
    setup = harness.EstimationSetup.default()
    if args.model:
        model = _load_model(args.model)
    else:
        model = harness.train_emnet(emnet.TrainingConfig(seed=args.seed), setup).model
    if fig == "conv":
        _emit(args, fig, harness.layer_losses(setup, model, trials, args.seed).to_csv())
        return
    spec = harness.ExperimentSpec(fig, None, trials, args.pfa, seed=args.seed)
    grids = {"fig9": dict(iota_grid=()), "fig10": dict(n_grid=())}[fig]
    out = harness.run_estimation_suite(spec, model=model, **grids)
    _emit(args, fig, out[fig].to_csv())


COMMANDS = {"analyze": _analyze, "montecarlo": _montecarlo, "select": _select,
            "estimate": _estimate, "train": _train, "evaluate": _evaluate,
            "reproduce": _reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise DomainError("--seed must be an unsigned 64-bit integer")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    except (DomainError, NumericError, TrainingFailure) as exc:
        print(f"netsense: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename or ""
        print(f"netsense: I/O error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
