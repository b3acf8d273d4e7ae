"""Operator entry point.

Subcommands: ``run`` a loop to completion, ``resume`` one, ``compare``
strategies over seeded simulated runs, ``sweep`` a hyperparameter, and
``serve`` the review endpoint for human-in-the-loop runs.

Config files are TOML with keys matching the run-config field names; any
field can also be set from a flag, and flags win. Exit codes are stable:
0 success, 1 config error, 2 backend or bind error, 3 needs a human
(run a human-strategy loop under ``serve``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .backends import BackendSpec, derive_seed
from .engine import Engine, RunConfig, RunStatus, SoISpec
from .errors import BackendError, ConfigError, GalError, ProtocolError
from .strategy import StrategyKind

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_NEEDS_HUMAN = 3


# -- config assembly ---------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


def build_config(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if getattr(args, "config", None):
        doc = load_config_file(args.config)

    soi_doc = dict(doc.get("soi", {}))
    backend_doc = dict(doc.get("backend", {}))

    def override(target: dict, key: str, attr: str):
        value = getattr(args, attr, None)
        if value is not None:
            target[key] = value

    override(soi_doc, "pseudo_token", "pseudo_token")
    override(soi_doc, "non_soi_text", "non_soi_text")
    override(soi_doc, "reference_caption_template", "caption_template")
    override(backend_doc, "kind", "backend")
    override(backend_doc, "endpoint", "endpoint")
    override(backend_doc, "sigma", "sigma")
    override(backend_doc, "base_gain", "base_gain")
    override(backend_doc, "weight_scale", "weight_scale")
    override(backend_doc, "g_init_low", "g_init_low")
    override(backend_doc, "g_init_high", "g_init_high")
    override(backend_doc, "positive_gain_cap", "positive_gain_cap")
    override(backend_doc, "timeout", "backend_timeout")
    override(backend_doc, "poll_interval", "poll_interval")

    merged = dict(doc)
    merged["soi"] = soi_doc
    merged["backend"] = backend_doc
    override(merged, "strategy", "strategy")
    override(merged, "m", "m")
    override(merged, "k", "k")
    override(merged, "lambda", "lam")
    override(merged, "max_rounds", "rounds")
    override(merged, "master_seed", "seed")
    override(merged, "embedding_dim", "embedding_dim")
    if getattr(args, "anchor", None):
        merged["anchors"] = list(args.anchor)
    if getattr(args, "reference", None):
        merged["references"] = list(args.reference)
    if getattr(args, "eval_prompt", None):
        merged["eval_prompts"] = list(args.eval_prompt)
    if getattr(args, "no_balance", False):
        merged["balance_enabled"] = False
    if getattr(args, "no_strip_soi", False):
        merged["strip_soi_for_scoring"] = False

    run_dir = (getattr(args, "run_dir", None) or merged.get("run_dir")
               or os.environ.get("GAL_RUN_DIR"))
    if not run_dir:
        raise ConfigError("no run_dir given (flag, config key, or GAL_RUN_DIR)")
    merged["run_dir"] = str(run_dir)

    for required in ("soi", "anchors", "references"):
        if not merged.get(required):
            raise ConfigError(f"config is missing {required!r}")
    return RunConfig.from_dict(merged)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--run-dir", help="run directory (or GAL_RUN_DIR)")
    p.add_argument("--strategy", help="random | uncertainty | human")
    p.add_argument("--no-balance", action="store_true",
                   help="admit synthetic references at weight 1.0")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--rounds", type=int, help="round cap")
    p.add_argument("--m", type=int, help="samples per anchor per round")
    p.add_argument("--k", type=int, help="directions admitted per round")
    p.add_argument("--lam", "--lambda", dest="lam", type=float,
                   help="openness learning rate")
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--anchor", action="append", help="anchor template (repeatable)")
    p.add_argument("--reference", action="append", help="reference image (repeatable)")
    p.add_argument("--eval-prompt", action="append",
                   help="evaluation prompt (repeatable; remote backend only)")
    p.add_argument("--pseudo-token")
    p.add_argument("--non-soi-text")
    p.add_argument("--caption-template")
    p.add_argument("--no-strip-soi", action="store_true",
                   help="score against prompts with the pseudo token kept")
    p.add_argument("--backend", choices=["simulated", "remote"])
    p.add_argument("--endpoint", help="remote backend base URL")
    p.add_argument("--sigma", type=float)
    p.add_argument("--base-gain", type=float)
    p.add_argument("--weight-scale", type=float)
    p.add_argument("--g-init-low", type=float)
    p.add_argument("--g-init-high", type=float)
    p.add_argument("--positive-gain-cap", type=float)
    p.add_argument("--backend-timeout", type=float)
    p.add_argument("--poll-interval", type=float)


def _print_round_table(engine: Engine, out=None) -> None:
    out = out or sys.stdout
    header = f"{'round':>5}  {'txt_aln':>8}  {'img_aln':>8}  {'ovf':>6}  {'delta':>10}  {'sel':>3}  state"
    print(header, file=out)
    for rec in engine.rounds:
        m = rec.metrics
        state = rec.stop_reason if rec.stopped else "running"
        print(f"{rec.round:>5}  {m.txt_aln:>8.4f}  {m.img_aln:>8.4f}  "
              f"{m.ovf:>6.3f}  {rec.openness:>10.6f}  {len(rec.selected):>3}  {state}",
              file=out)


# -- run / resume -------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if config.strategy is StrategyKind.HUMAN and not args.serve:
        print("human strategy needs the review endpoint; rerun with --serve "
              "(or `gal serve`) and open the review UI", file=sys.stderr)
        return EXIT_NEEDS_HUMAN

    if args.serve:
        return _serve_config(config, args.bind)

    try:
        with Engine(config) as engine:
            status = engine.run_to_completion()
            _print_round_table(engine)
            if status is RunStatus.AWAITING_HUMAN:
                print("run paused for human review; restart under `gal serve`",
                      file=sys.stderr)
                return EXIT_NEEDS_HUMAN
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except GalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def cmd_resume(args: argparse.Namespace) -> int:
    run_dir = args.run_dir or os.environ.get("GAL_RUN_DIR")
    if not run_dir:
        print("resume needs --run-dir or GAL_RUN_DIR", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with Engine.resume(run_dir) as engine:
            status = engine.run_to_completion()
            _print_round_table(engine)
            if status is RunStatus.AWAITING_HUMAN:
                print("run paused for human review; restart under `gal serve`",
                      file=sys.stderr)
                return EXIT_NEEDS_HUMAN
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except GalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


# -- compare ------------------------------------------------------------------


def parse_strategy_spec(spec: str) -> tuple[StrategyKind, bool]:
    """'uncertainty+balance' -> (UNCERTAINTY, True); bare names are unbalanced."""
    name, _, suffix = spec.strip().partition("+")
    balance = False
    if suffix:
        if suffix.strip() != "balance":
            raise ConfigError(f"unknown strategy modifier {suffix!r}")
        balance = True
    try:
        kind = StrategyKind(name.strip())
    except ValueError:
        raise ConfigError(f"unknown strategy {name!r}")
    if kind is StrategyKind.HUMAN:
        raise ConfigError("compare cannot run the human strategy unattended")
    return kind, balance


def run_one(config: RunConfig) -> dict:
    """Run a config to completion and return its final-round summary."""
    with Engine(config) as engine:
        engine.run_to_completion()
        last = engine.rounds[-1]
        first = engine.rounds[0]
        return {
            "rounds": len(engine.rounds),
            "stop_reason": last.stop_reason,
            "txt_aln": last.metrics.txt_aln,
            "img_aln": last.metrics.img_aln,
            "ovf": last.metrics.ovf,
            "round1_ovf": first.metrics.ovf,
            "mean_alignment": (float(engine.backend.alignment.mean())
                               if hasattr(engine.backend, "alignment") else None),
        }


def compare_strategies(config: RunConfig, specs: list[tuple[StrategyKind, bool]],
                       n_seeds: int, work_dir: Path) -> list[dict]:
    """Paired seeded runs of each strategy variant on the simulated backend.

    Seed i is shared across variants so comparisons are paired.
    """
    rows = []
    for kind, balance in specs:
        tag = kind.value + ("+balance" if balance else "")
        for i in range(n_seeds):
            seed = derive_seed(config.master_seed, 7_000 + i)
            run_dir = work_dir / f"{tag.replace('+', '_')}-s{i}"
            cfg = dataclasses.replace(
                config, strategy=kind, balance_enabled=balance,
                master_seed=seed, run_dir=str(run_dir))
            result = run_one(cfg)
            rows.append({"strategy": tag, "seed_index": i, "master_seed": seed,
                         **result})
    return rows


def write_comparison_csv(rows: list[dict], specs: list[tuple[StrategyKind, bool]],
                         path: Path) -> None:
    columns = ["strategy", "seed_index", "master_seed", "rounds", "stop_reason",
               "txt_aln", "img_aln", "ovf", "round1_ovf"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])
        for kind, balance in specs:
            tag = kind.value + ("+balance" if balance else "")
            group = [r for r in rows if r["strategy"] == tag]
            if not group:
                continue
            writer.writerow([
                tag, "mean", "", "",
                "",
                repr(sum(r["txt_aln"] for r in group) / len(group)),
                repr(sum(r["img_aln"] for r in group) / len(group)),
                repr(sum(r["ovf"] for r in group) / len(group)),
                repr(sum(r["round1_ovf"] for r in group) / len(group)),
            ])


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        config = build_config(args)
        if config.backend.kind != "simulated":
            raise ConfigError("compare needs the simulated backend "
                              "(it runs many full loops)")
        specs = [parse_strategy_spec(s) for s in args.strategies.split(",") if s.strip()]
        if not specs:
            raise ConfigError("no strategies given")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    work_dir = Path(config.run_dir) / "compare"
    try:
        rows = compare_strategies(config, specs, args.seeds, work_dir)
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    out = Path(args.out)
    write_comparison_csv(rows, specs, out)
    print(f"wrote {out} ({len(rows)} runs)")
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------


def sweep_param(config: RunConfig, param: str, values: list[str],
                n_seeds: int, work_dir: Path) -> list[dict]:
    rows = []
    for value_str in values:
        if param == "lambda":
            cfg = dataclasses.replace(config, lam=float(value_str))
        elif param == "k":
            cfg = dataclasses.replace(config, k=int(value_str))
        elif param == "anchors":
            n = int(value_str)
            if not config.k <= n <= len(config.anchors):
                raise ConfigError(
                    f"anchor count {n} must be between k={config.k} and "
                    f"{len(config.anchors)}")
            cfg = dataclasses.replace(config, anchors=config.anchors[:n])
        else:
            raise ConfigError(f"unsupported sweep param {param!r}")

        finals = []
        for i in range(n_seeds):
            seed = derive_seed(config.master_seed, 9_000 + i)
            run_dir = work_dir / f"{param}-{value_str}-s{i}"
            one = dataclasses.replace(cfg, master_seed=seed, run_dir=str(run_dir))
            finals.append(run_one(one))
        rows.append({
            "param": param,
            "value": value_str,
            "seeds": n_seeds,
            "txt_aln": sum(f["txt_aln"] for f in finals) / len(finals),
            "img_aln": sum(f["img_aln"] for f in finals) / len(finals),
            "ovf": sum(f["ovf"] for f in finals) / len(finals),
            "mean_rounds": sum(f["rounds"] for f in finals) / len(finals),
            "converged_fraction": sum(1 for f in finals
                                      if f["stop_reason"] == "converged") / len(finals),
        })
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        config = build_config(args)
        if config.backend.kind != "simulated":
            raise ConfigError("sweep needs the simulated backend")
        values = [v for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("no sweep values given")
        rows = sweep_param(config, args.param, values, args.seeds,
                           Path(config.run_dir) / "sweep")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    out = Path(args.out)
    columns = ["param", "value", "seeds", "txt_aln", "img_aln", "ovf",
               "mean_rounds", "converged_fraction"]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])
    print(f"wrote {out} ({len(rows)} values)")
    return EXIT_OK


# -- serve ---------------------------------------------------------------------


def _serve_config(config: RunConfig, bind: str) -> int:
    from .server import serve

    host, _, port_str = bind.partition(":")
    try:
        port = int(port_str)
    except ValueError:
        print(f"config error: bad --bind {bind!r}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        state_file = Path(config.run_dir) / "state.json"
        engine = (Engine.resume(config.run_dir) if state_file.exists()
                  else Engine(config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, ProtocolError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    try:
        with engine:
            serve(engine, host or "127.0.0.1", port)
        return EXIT_OK
    except OSError as exc:
        print(f"bind failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _serve_config(config, args.bind)


# -- entry ------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gal",
                                     description="generative active learning runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a loop until it stops")
    _add_config_flags(p_run)
    p_run.add_argument("--serve", action="store_true",
                       help="host the review endpoint while running")
    p_run.add_argument("--bind", default="127.0.0.1:8008")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="continue a persisted run")
    p_resume.add_argument("--run-dir")
    p_resume.set_defaults(func=cmd_resume)

    p_cmp = sub.add_parser("compare", help="paired seeded strategy comparison")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--strategies", default="random,uncertainty,uncertainty+balance")
    p_cmp.add_argument("--seeds", type=int, default=10)
    p_cmp.add_argument("--out", default="comparison.csv")
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="sweep one hyperparameter")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, help="lambda | k | anchors")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", type=int, default=5)
    p_sweep.add_argument("--out", default="sweep.csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_serve = sub.add_parser("serve", help="host the review endpoint")
    _add_config_flags(p_serve)
    p_serve.add_argument("--bind", default="127.0.0.1:8008")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
