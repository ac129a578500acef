"""Command-line front end.

Subcommands:

    ingest   validate a canonical CSV; optionally split/normalize to files
    synth    generate a synthetic two-cluster dataset as CSV
    run      execute the full scheme grid and write report + charts
    sweep    attack-strength sweep only (no defence, no quantifier)
    report   pretty-print an existing report.json; optionally re-emit charts

All failures exit nonzero after printing one JSON line to stderr of the
form {"error": <class>, "detail": <message>} so wrappers never parse
tracebacks.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .datasets import (
    IOT23_FEATURES,
    NBAIOT_FEATURES,
    SplitSpec,
    SynthSpec,
    load_csv,
    normalize,
    save_csv,
    split,
    synth_generate,
)
from .errors import BotuqError, InvalidSpec
from .experiment import (
    CsvSource,
    ExperimentConfig,
    SynthSource,
    config_from_dict,
    emit_charts,
    run_experiment,
    run_sweep,
)
from .models import ArchConfig, TrainConfig
from .attack import AttackConfig
from .defence import DefenceConfig

_SCHEMAS = {"nbaiot": NBAIOT_FEATURES, "iot23": IOT23_FEATURES}


def _fail_line(exc) -> None:
    print(
        json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
        file=sys.stderr,
    )


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep stderr machine-readable
        print(json.dumps({"error": "UsageError", "detail": message}), file=sys.stderr)
        raise SystemExit(2)


# -- ingest -------------------------------------------------------------------


def cmd_ingest(args) -> int:
    schema = _SCHEMAS[args.schema] if args.schema else None
    d = load_csv(args.csv, schema=schema)
    n0, n1 = d.class_counts()
    summary = {
        "name": d.name,
        "rows": d.n_samples,
        "features": d.n_features,
        "benign": n0,
        "botnet": n1,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        tr, te = split(d, SplitSpec(args.train_fraction, args.seed))
        if not args.raw:
            tr, stats = normalize(tr)
            te, _ = normalize(te, stats)
            (out / "norm_stats.json").write_text(
                json.dumps(
                    {"mins": stats.mins.tolist(), "maxs": stats.maxs.tolist()},
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )
        save_csv(tr, out / "train.csv")
        save_csv(te, out / "test.csv")
        summary["out"] = str(out)
        summary["train_rows"] = tr.n_samples
        summary["test_rows"] = te.n_samples
    print(json.dumps(summary, sort_keys=True))
    return 0


# -- synth --------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec(args.n, args.features, args.class_separation, args.noise_std, args.seed)
    d = synth_generate(spec)
    save_csv(d, args.out)
    n0, n1 = d.class_counts()
    print(
        json.dumps(
            {"name": d.name, "rows": d.n_samples, "features": d.n_features,
             "benign": n0, "botnet": n1, "out": args.out},
            sort_keys=True,
        )
    )
    return 0


# -- run / sweep ----------------------------------------------------------------


def _experiment_flags(p: argparse.ArgumentParser, sweep_required: bool) -> None:
    p.add_argument("--config", help="JSON config file; excludes the other experiment flags")
    src = p.add_argument_group("dataset source")
    src.add_argument("--csv", help="canonical CSV path")
    src.add_argument("--synth", action="store_true", help="use the synthetic generator")
    src.add_argument("--synth-n", type=int, default=2000)
    src.add_argument("--synth-features", type=int, default=10)
    src.add_argument("--synth-sep", type=float, default=4.0)
    src.add_argument("--synth-noise", type=float, default=1.0)
    model = p.add_argument_group("model")
    model.add_argument("--arch", choices=("lstm", "cnn_lstm"), default="lstm")
    model.add_argument("--hidden", type=int, default=10)
    model.add_argument("--embed-dim", type=int, default=8)
    model.add_argument("--dropout", type=float, default=0.5)
    model.add_argument("--lr", type=float, default=0.01)
    model.add_argument("--epochs", type=int, default=20)
    atk = p.add_argument_group("attack")
    atk.add_argument("--no-attack", action="store_true")
    atk.add_argument("--attack-epsilon", type=float, default=0.10)
    atk.add_argument("--attack-lr", type=float, default=None,
                     help="defaults to --lr")
    atk.add_argument("--attack-passes", type=int, default=None,
                     help="defaults to --epochs")
    dfc = p.add_argument_group("defence")
    dfc.add_argument("--no-defence", action="store_true")
    dfc.add_argument("--defence-epsilon", type=float, default=0.10)
    dfc.add_argument("--defence-quantifier", choices=("deep_ensemble", "swag"),
                     default="deep_ensemble")
    dfc.add_argument("--defence-members", type=int, default=10)
    dfc.add_argument("--allow-clean-defence", action="store_true")
    rep = p.add_argument_group("reporting")
    rep.add_argument("--quantifier", choices=("deep_ensemble", "swag", "none"),
                     default="deep_ensemble")
    rep.add_argument("--quantifier-size", type=int, default=10)
    rep.add_argument("--sweep", required=sweep_required,
                     help="comma-separated epsilon list, e.g. 0,0.02,0.05,0.1")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--out", help="output directory for report and charts")


def _config_from_args(args) -> tuple[ExperimentConfig, str | None]:
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = config_from_dict(json.loads(text))
        if args.out:
            cfg = replace(cfg, output_dir=args.out)
        return cfg, text
    if bool(args.csv) == bool(args.synth):
        raise InvalidSpec("pick a dataset source: either --csv PATH or --synth")
    if args.csv:
        source = CsvSource(args.csv)
    else:
        source = SynthSource(args.synth_n, args.synth_features, args.synth_sep, args.synth_noise)
    arch = ArchConfig(
        kind=args.arch, hidden_size=args.hidden,
        embed_dim=args.embed_dim, dropout_rate=args.dropout,
    )
    tcfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs)
    attack = None
    if not args.no_attack:
        attack = AttackConfig(
            epsilon=args.attack_epsilon,
            learning_rate=args.attack_lr if args.attack_lr is not None else args.lr,
            passes=args.attack_passes,
        )
    defence = None
    if not args.no_defence:
        defence = DefenceConfig(
            epsilon=args.defence_epsilon,
            quantifier=args.defence_quantifier,
            members=args.defence_members,
        )
    sweep = None
    if args.sweep:
        sweep = tuple(float(v) for v in args.sweep.split(",") if v.strip() != "")
    cfg = ExperimentConfig(
        source=source,
        arch=arch,
        tcfg=tcfg,
        attack=attack,
        defence=defence,
        quantifier=args.quantifier,
        quantifier_size=args.quantifier_size,
        sweep=sweep,
        train_fraction=args.train_fraction,
        output_dir=args.out,
        master_seed=args.master_seed,
        allow_clean_defence=args.allow_clean_defence,
    )
    return cfg, None


def _print_run_summary(report: dict, out_dir: str | None) -> None:
    lines = {"schemes": {}}
    for name, rec in report["schemes"].items():
        lines["schemes"][name] = {
            "accuracy": rec["metrics"]["accuracy"],
            "fpr": rec["metrics"]["fpr"],
            "tpr": rec["metrics"]["tpr"],
        }
    if report.get("sweep"):
        lines["sweep"] = {str(p["epsilon"]): p["accuracy"] for p in report["sweep"]}
    if out_dir:
        lines["out"] = out_dir
    print(json.dumps(lines, sort_keys=True))


def cmd_run(args) -> int:
    cfg, text = _config_from_args(args)
    report = run_experiment(cfg, config_text=text)
    _print_run_summary(report, cfg.output_dir)
    return 0


def cmd_sweep(args) -> int:
    cfg, text = _config_from_args(args)
    if cfg.sweep is None:
        raise InvalidSpec("sweep needs --sweep or a config file with a sweep list")
    report = run_sweep(cfg, config_text=text)
    print(json.dumps(
        {"sweep": [[p["epsilon"], p["accuracy"]] for p in report["sweep"]]},
    ))
    return 0


# -- report ---------------------------------------------------------------------


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    d = report["dataset"]
    print(f"dataset {d['name']}: {d['rows']} rows, {d['features']} features "
          f"({d['train_rows']} train / {d['test_rows']} test)")
    print(f"master seed {report['seeds']['master']}, split {d['split_hash'][:12]}")
    header = f"{'scheme':<12}{'accuracy':>10}{'precision':>11}{'recall':>9}{'fpr':>9}{'tpr':>9}{'f1':>9}"
    print(header)
    for name in ("no_attack", "wba", "umd"):
        rec = report["schemes"].get(name)
        if rec is None:
            continue
        m = rec["metrics"]
        print(f"{name:<12}{m['accuracy']:>10.4f}{m['precision']:>11.4f}"
              f"{m['recall']:>9.4f}{m['fpr']:>9.4f}{m['tpr']:>9.4f}{m['f1']:>9.4f}")
    q = report.get("quantifier")
    if q:
        print(f"quantifier {q['kind']} (M={q['size']}):")
        for name, rec in sorted(q["per_scheme"].items()):
            u = rec["uncertainty_mean"]
            print(f"  {name:<10} accuracy {rec['accuracy']:.4f}  "
                  f"H {u['entropy']:.4f}  MI {u['mutual_info']:.4f}  "
                  f"VV {u['variance']:.4f}  AKLD {u['akld']:.4f}")
    if report.get("sweep"):
        pts = "  ".join(f"{p['epsilon']:g}:{p['accuracy']:.4f}" for p in report["sweep"])
        print(f"sweep  {pts}")
    if args.charts:
        written = emit_charts(report, args.charts)
        print("charts: " + ", ".join(str(p) for p in written))
    return 0


# -- entry ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="botuq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a canonical CSV")
    p.add_argument("csv")
    p.add_argument("--schema", choices=sorted(_SCHEMAS))
    p.add_argument("--out", help="write split (and normalized) train/test CSVs here")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="skip normalization")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--features", type=int, default=10)
    p.add_argument("--class-separation", type=float, default=4.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the scheme grid")
    _experiment_flags(p, sweep_required=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="attack-strength sweep")
    _experiment_flags(p, sweep_required=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print a report.json")
    p.add_argument("report")
    p.add_argument("--charts", help="re-emit chart CSVs into this directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except BotuqError as exc:
        _fail_line(exc)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        _fail_line(exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
