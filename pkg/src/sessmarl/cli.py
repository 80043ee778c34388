"""Command-line entry point: validate, train, evaluate, compare, oracle, synth-data.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import CentralizedScheme, UserOnlyScheme, heuristic_controller
from .config import ConfigError, RunConfig, json_schema, load_config, parse_config, write_resolved
from .environment import EpisodeTrace
from .evaluation import (
    MetricsReport,
    OracleBoundError,
    OracleInstance,
    comparison_table,
    dp_oracle,
    summarize,
)
from .maddpg import ProposedScheme, Trainer, evaluate, load_actors, read_curves, write_curves
from .neuralnet import DivergenceError, predict
from .timeseries import CASES, DataError, load_csv, sample_window, synth_series, write_csv

log = logging.getLogger("sessmarl")

METHODS = ("proposed", "user_only", "centralized")
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _stamp() -> str:
    return datetime.now().strftime("%Y%m%dT%H%M%S%f")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    if getattr(args, "smoke", False):
        cfg = cfg.smoke()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output_dir)


def _alpha_ratio(args, cfg: RunConfig) -> float:
    if getattr(args, "alpha_ratio", None) is not None:
        return args.alpha_ratio
    return cfg.reward.alpha_temp / cfg.reward.alpha_energy if cfg.reward.alpha_energy else cfg.reward.alpha_temp


def _scheme(method: str, cfg: RunConfig, alpha_ratio: float, active=None):
    env = cfg.make_env(alpha_ratio)
    if method == "proposed":
        return ProposedScheme(env)
    if method == "user_only":
        return UserOnlyScheme(env, active)
    if method == "centralized":
        return CentralizedScheme(env)
    raise UsageError(f"unknown method {method!r}")


# -- commands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    if args.schema:
        print(json.dumps(json_schema(), indent=2))
        return EXIT_OK
    cfg = _config(args)
    print(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_synth_data(args) -> int:
    cfg = _config(args)
    cases = CASES if args.case is None else (args.case,)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    for case in cases:
        series = cfg.model_copy(update={"dataset": cfg.dataset.model_copy(update={"path": None})}).load_series(case)
        path = out / f"synth_{case}.csv"
        write_csv(series, path, cfg.dataset.column_map)
        print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    case, method = args.case, args.method
    ratio = _alpha_ratio(args, cfg)
    run_dir = _out_dir(args, cfg) / f"{method}-{case}-{cfg.seed}-{_stamp()}"
    run_dir.mkdir(parents=True)
    write_resolved(cfg, run_dir / "resolved_config.json")
    manifest = {"method": method, "case": case, "seed": cfg.seed, "alpha_ratio": ratio, "version": __version__}
    (run_dir / "seed_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    series = cfg.load_series(case)
    tcfg = cfg.train_config()
    ranges = cfg.case_ranges()
    env = cfg.make_env(ratio)
    jobs = [(_scheme(method, cfg, ratio, [i]), run_dir / f"building{i + 1}") for i in range(env.N)] if method == "user_only" \
        else [(_scheme(method, cfg, ratio), run_dir / "checkpoint")]

    names, curves = [], []
    t0 = time.perf_counter()
    for scheme, ckpt in jobs:
        tr = Trainer(scheme, series, case, tcfg, ranges, cfg.environment.init_soc)
        try:
            tr.run(checkpoint_dir=ckpt, progress=_progress(args))
        except DivergenceError as exc:
            tr.save(ckpt)
            print(f"training diverged: {exc}; partial artifacts kept in {run_dir}", file=sys.stderr)
            return EXIT_RUNTIME
        names += tr.agent_names
        curves.append(tr.learning_curves)
    manifest["checkpoints"] = [str(ckpt.relative_to(run_dir)) for _, ckpt in jobs]
    (run_dir / "seed_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_curves(run_dir / "curves.csv", names, np.hstack(curves))
    log.info("trained %s on %s in %.1fs", method, case, time.perf_counter() - t0)
    print(run_dir)
    return EXIT_OK


def _progress(args):
    if not args.verbose:
        return None

    def report(episode, returns):
        print(f"episode {episode}: " + " ".join(f"{r:.2f}" for r in returns), file=sys.stderr)

    return report


def _policies_for_run(run_dir: Path, cfg: RunConfig, manifest: dict):
    method = manifest["method"]
    ratio = manifest["alpha_ratio"]
    scheme = _scheme(method, cfg, ratio)
    actors = {}
    for ckpt in manifest["checkpoints"]:
        path = run_dir / ckpt
        if not (path / "trainer.json").is_file():
            raise FileNotFoundError(f"missing checkpoint {path}")
        actors.update(load_actors(path))
    try:
        nets = [actors[s.name] for s in scheme.specs]
    except KeyError as exc:
        raise FileNotFoundError(f"checkpoint for agent {exc} not found in {run_dir}") from None
    return scheme, [lambda o, net=net: predict(net, o) for net in nets]


def cmd_evaluate(args) -> int:
    if bool(args.run) == (args.method == "heuristic"):
        raise UsageError("give either --run DIR (repeatable) or --method heuristic")
    cfg = _config(args)
    case = args.case
    traces: list[EpisodeTrace] = []
    sources = []
    if args.method == "heuristic":
        label = "heuristic"
        env = cfg.make_env()
        window = sample_window(cfg.load_series(case), case, "eval", case_ranges=cfg.case_ranges(), length=env.K)
        traces.append(env.rollout(heuristic_controller(env), window, init_soc=cfg.environment.init_soc))
        sources.append("heuristic")
    else:
        label = None
        for run in args.run:
            run_dir = Path(run)
            if not (run_dir / "seed_manifest.json").is_file():
                raise FileNotFoundError(f"{run_dir} is not a training run directory")
            manifest = json.loads((run_dir / "seed_manifest.json").read_text())
            if "checkpoints" not in manifest:
                raise FileNotFoundError(f"{run_dir} has no finished checkpoints")
            if manifest["case"] != case:
                raise UsageError(f"{run_dir} was trained on case {manifest['case']!r}, not {case!r}")
            run_cfg = parse_config(json.loads((run_dir / "resolved_config.json").read_text()))
            method_label = manifest["method"] + (f"({manifest['alpha_ratio']:g})" if manifest["method"] == "proposed" else "")
            if label not in (None, method_label):
                raise UsageError(f"runs mix methods {label!r} and {method_label!r}")
            label = method_label
            scheme, policies = _policies_for_run(run_dir, run_cfg, manifest)
            window = sample_window(run_cfg.load_series(case), case, "eval", case_ranges=run_cfg.case_ranges(), length=scheme.env.K)
            traces += evaluate(policies, scheme, window, cfg.evaluation.episodes, init_soc=run_cfg.environment.init_soc)
            sources.append(str(run_dir))

    out = _out_dir(args, cfg) / f"eval-{label}-{case}-{_stamp()}"
    out.mkdir(parents=True)
    for i, t in enumerate(traces):
        t.to_csv(out / f"trace_{i}.csv")
    doc = {"method": label, "case": case, "sources": sources, "reports": [summarize(t).as_dict() for t in traces]}
    (out / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(out)
    return EXIT_OK


def _read_metrics(path: Path) -> dict:
    f = path / "metrics.json" if path.is_dir() else path
    if not f.is_file():
        raise FileNotFoundError(f"no metrics.json in {path}")
    return json.loads(f.read_text())


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("compare needs at least two evaluated runs")
    cfg = _config(args)
    grouped: dict[str, list[MetricsReport]] = {}
    for p in args.runs:
        doc = _read_metrics(Path(p))
        if args.case is not None and doc["case"] != args.case:
            raise UsageError(f"{p} holds case {doc['case']!r}, expected {args.case!r}")
        if args.case is None:
            args.case = doc["case"]
        grouped.setdefault(doc["method"], []).extend(MetricsReport.from_dict(r) for r in doc["reports"])
    table = comparison_table(grouped, args.case)
    out = _out_dir(args, cfg)
    table.write(out, f"compare-{args.case}")
    print(table.to_text())
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    horizon = args.horizon or cfg.evaluation.oracle.horizon
    levels = tuple(float(v) for v in args.levels.split(",")) if args.levels else tuple(cfg.evaluation.oracle.levels)
    env = cfg.make_env()
    window = sample_window(cfg.load_series(args.case), args.case, "eval", case_ranges=cfg.case_ranges(), length=env.K)
    inst = OracleInstance(env, window.head(horizon), horizon, levels, init_soc=cfg.environment.init_soc)
    try:
        inst.validate()
    except OracleBoundError as exc:
        raise UsageError(str(exc)) from None
    res = dp_oracle(inst, cfg.reward.lam)
    doc = {"case": args.case, "horizon": horizon, "levels": list(levels), "lambda": cfg.reward.lam, **res.to_dict()}
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"oracle-{args.case}-h{horizon}.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc))
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("--smoke", action="store_true", help="tiny profile: 2 episodes of 8 steps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sessmarl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="print the fully resolved configuration")
    s.add_argument("--schema", action="store_true", help="print the configuration JSON schema instead")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("train", parents=[common], help="train one method on one case")
    s.add_argument("--method", choices=METHODS, default="proposed")
    s.add_argument("--case", choices=CASES, required=True)
    s.add_argument("--alpha-ratio", type=float, help="alpha_temp / alpha_energy (alpha_energy fixed)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="noise-free rollouts on the case's evaluation window")
    s.add_argument("--run", action="append", default=[], help="training run directory (repeat for several seeds)")
    s.add_argument("--method", choices=["heuristic"], help="evaluate the rule-based controller")
    s.add_argument("--case", choices=CASES, required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", parents=[common], help="comparison table over evaluated runs")
    s.add_argument("runs", nargs="+", help="evaluation directories or metrics.json files")
    s.add_argument("--case", choices=CASES)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("oracle", parents=[common], help="exhaustive optimum on a truncated evaluation window")
    s.add_argument("--case", choices=CASES, default="spring")
    s.add_argument("--horizon", type=int)
    s.add_argument("--levels", help="comma-separated action grid levels, e.g. -1,0,1")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("synth-data", parents=[common], help="write synthetic price/temperature CSVs")
    s.add_argument("--case", choices=CASES)
    s.set_defaults(func=cmd_synth_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError, DivergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
