"""Scheme-grid experiment runner.

One experiment fixes a dataset, an architecture, and a master seed, then
runs up to three schemes over one shared train/test split:

    no_attack   plain training
    wba         the weight-corruption attack
    umd         uncertainty sanitization of the training data, then retrain

Every scheme's model is evaluated on the same held-out test rows. A
reporting quantifier (deep ensemble or posterior draws) can be attached to
produce per-scheme mean-prediction accuracies and test-set uncertainty
summaries; it is trained under the same regime as the scheme it reports on
(attacked runs for the attacked scheme, the sanitized data for the defended
one), otherwise its uncertainties would describe a different pipeline than
the one being scored.

All randomness fans out from the master seed through labeled derivations,
and the report records the full table, so any number in it can be traced
to a seed and recomputed. Reports are byte-stable: rerunning the same
configuration reproduces the JSON exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .attack import AttackConfig, wba, wba_update, poison_rows_csv
from .datasets import (
    Dataset,
    SplitSpec,
    SynthSpec,
    load_csv,
    normalize,
    split,
    synth_generate,
)
from .defence import (
    DefenceConfig,
    apply_removal,
    removal_order,
    sanitization_csv,
    score_samples,
)
from .errors import InvalidSpec, IoError
from .evaluation import MetricsReport, confusion, metrics
from .models import ArchConfig, ModelParams, TrainConfig, init_params, predict_proba, train
from .seeding import DERIVATION_SCHEME, derive_seed
from .uncertainty import (
    ensemble_member_probs,
    ensemble_train,
    member_measures,
    swag_collect,
    swag_fit,
    swag_member_probs,
)

QUANTIFIER_KINDS = ("deep_ensemble", "swag", "none")
SCHEME_ORDER = ("no_attack", "wba", "umd")
SEED_LABELS = ("data", "split", "train", "defence", "ensemble", "swag", "swag-draws")
REPORT_FILE = "report.json"


@dataclass(frozen=True)
class CsvSource:
    path: str


@dataclass(frozen=True)
class SynthSource:
    n: int = 2000
    features: int = 10
    class_separation: float = 4.0
    noise_std: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs. Seed fields inside tcfg/attack/defence are
    placeholders: the master seed overrides them through the fan-out, so two
    configs differing only in sub-seeds run identically."""

    source: CsvSource | SynthSource
    arch: ArchConfig = ArchConfig()
    tcfg: TrainConfig = TrainConfig()
    attack: AttackConfig | None = AttackConfig()
    defence: DefenceConfig | None = DefenceConfig()
    quantifier: str = "deep_ensemble"
    quantifier_size: int = 10
    sweep: tuple | None = None
    train_fraction: float = 0.7
    output_dir: str | None = None
    master_seed: int = 0
    allow_clean_defence: bool = False

    def __post_init__(self):
        if not isinstance(self.source, (CsvSource, SynthSource)):
            raise InvalidSpec("source must be a CsvSource or a SynthSource")
        if self.quantifier not in QUANTIFIER_KINDS:
            raise InvalidSpec(f"quantifier must be one of {QUANTIFIER_KINDS}")
        if self.quantifier != "none" and self.quantifier_size < 2:
            raise InvalidSpec("quantifier_size must be >= 2 (consecutive KL)")
        if self.defence is not None and self.attack is None and not self.allow_clean_defence:
            raise InvalidSpec(
                "defence without an attack sanitizes clean data; "
                "pass allow_clean_defence=True if that is intended"
            )
        if self.sweep is not None:
            vals = tuple(float(e) for e in self.sweep)
            if not vals:
                raise InvalidSpec("sweep needs at least one epsilon")
            for e in vals:
                if not 0.0 <= e <= 0.2:
                    raise InvalidSpec(f"sweep epsilon {e} outside [0, 0.2]")
            if self.attack is None:
                raise InvalidSpec("a sweep needs an attack configuration")
            object.__setattr__(self, "sweep", vals)


def seed_table(master: int) -> dict:
    """The per-component seeds. The attack deliberately shares the train
    seed: with epsilon 0 the attacked run then reproduces the clean model
    bit-for-bit, which pins the sweep's origin to the no-attack point."""
    t = {label: derive_seed(master, label) for label in SEED_LABELS}
    t["attack"] = t["train"]
    return t


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical JSON form of a config. output_dir is excluded: it names
    where results land, not what the experiment is."""
    source = asdict(cfg.source)
    source["kind"] = "csv" if isinstance(cfg.source, CsvSource) else "synth"
    out = {
        "source": source,
        "arch": asdict(cfg.arch),
        "tcfg": asdict(cfg.tcfg),
        "attack": asdict(cfg.attack) if cfg.attack else None,
        "defence": asdict(cfg.defence) if cfg.defence else None,
        "quantifier": cfg.quantifier,
        "quantifier_size": cfg.quantifier_size,
        "sweep": list(cfg.sweep) if cfg.sweep else None,
        "train_fraction": cfg.train_fraction,
        "master_seed": cfg.master_seed,
        "allow_clean_defence": cfg.allow_clean_defence,
    }
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Inverse of config_to_dict, accepting the same JSON shape as files."""
    raw = dict(raw)
    src = dict(raw.pop("source"))
    kind = src.pop("kind", "csv" if "path" in src else "synth")
    source = CsvSource(**src) if kind == "csv" else SynthSource(**src)
    kwargs = {"source": source}
    arch = raw.pop("arch", None)
    if arch is not None:
        kwargs["arch"] = ArchConfig(**arch)
    tcfg = raw.pop("tcfg", None)
    if tcfg is not None:
        kwargs["tcfg"] = TrainConfig(**tcfg)
    if "attack" in raw:  # null is meaningful: no attack scheme
        a = raw.pop("attack")
        kwargs["attack"] = AttackConfig(**a) if a is not None else None
    if "defence" in raw:
        d = raw.pop("defence")
        kwargs["defence"] = DefenceConfig(**d) if d is not None else None
    for key in (
        "quantifier", "quantifier_size", "sweep", "train_fraction",
        "output_dir", "master_seed", "allow_clean_defence",
    ):
        value = raw.pop(key, None)
        if value is not None:
            kwargs[key] = value
    if raw:
        raise InvalidSpec(f"unknown config keys: {sorted(raw)}")
    if isinstance(kwargs.get("sweep"), list):
        kwargs["sweep"] = tuple(kwargs["sweep"])
    return ExperimentConfig(**kwargs)


def _load_source(cfg: ExperimentConfig, seeds: dict) -> Dataset:
    if isinstance(cfg.source, CsvSource):
        return load_csv(cfg.source.path)
    s = cfg.source
    return synth_generate(
        SynthSpec(s.n, s.features, s.class_separation, s.noise_std, seeds["data"])
    )


def _split_hash(train: Dataset, test: Dataset) -> str:
    h = hashlib.sha256()
    for part in (train, test):
        h.update(part.features.tobytes())
        h.update(part.labels.tobytes())
        h.update("\x1f".join(part.feature_names).encode("utf-8"))
    return h.hexdigest()


def _evaluate(params: ModelParams, test: Dataset) -> MetricsReport:
    preds = predict_proba(params, test).argmax(axis=1)
    return metrics(confusion(preds, test.labels))


def _scheme_record(mr: MetricsReport, **extras) -> dict:
    rec = {"metrics": mr.to_dict(), "degenerate": sorted(mr.degenerate_flags)}
    rec.update(extras)
    return rec


def _uncertainty_means(probs: np.ndarray) -> dict:
    cols = member_measures(probs).mean(axis=0)
    return {
        "entropy": float(cols[0]),
        "mutual_info": float(cols[1]),
        "variance": float(cols[2]),
        "akld": float(cols[3]),
    }


def _quantifier_summary(probs: np.ndarray, labels: np.ndarray) -> dict:
    mean = probs.mean(axis=0)
    preds = mean.argmax(axis=1)
    mr = metrics(confusion(preds, labels))
    return {
        "accuracy": mr.accuracy,
        "uncertainty_mean": _uncertainty_means(probs),
    }


class _Run:
    """Mutable state of one experiment execution."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.seeds = seed_table(cfg.master_seed)
        raw = _load_source(cfg, self.seeds)
        train_raw, test_raw = split(
            raw, SplitSpec(cfg.train_fraction, self.seeds["split"], stratified=True)
        )
        self.train, stats = normalize(train_raw)
        self.test, _ = normalize(test_raw, stats)
        self.dataset_info = {
            "name": raw.name,
            "rows": raw.n_samples,
            "features": raw.n_features,
            "class_counts": list(raw.class_counts()),
            "train_rows": self.train.n_samples,
            "test_rows": self.test.n_samples,
            "split_hash": _split_hash(self.train, self.test),
        }
        self.tcfg = replace(cfg.tcfg, seed=self.seeds["train"])
        self.clean_params: ModelParams | None = None
        self.attacked_params: ModelParams | None = None
        self.poison = None
        self.acc_cache: dict = {}

    # -- schemes -------------------------------------------------------------

    def run_no_attack(self) -> dict:
        p0 = init_params(self.cfg.arch, self.seeds["train"], self.train.n_features)
        self.clean_params = train(p0, self.train, self.tcfg)
        mr = _evaluate(self.clean_params, self.test)
        # The sweep's eps=0 point is this shared baseline, never a separate
        # degenerate-attack run (when schedules match the two are bit-equal
        # anyway; when the attack lr differs the baseline is still the point
        # the sweep is anchored to).
        self.acc_cache[0.0] = mr.accuracy
        return _scheme_record(mr)

    def run_wba(self) -> dict:
        acfg = replace(self.cfg.attack, seed=self.seeds["attack"])
        self.attacked_params, self.poison = wba(self.train, self.cfg.arch, self.tcfg, acfg)
        mr = _evaluate(self.attacked_params, self.test)
        self.acc_cache[float(acfg.epsilon)] = mr.accuracy
        return _scheme_record(mr, poison_rows=self.poison.p, epsilon=acfg.epsilon)

    def run_umd(self) -> dict:
        dcfg = replace(self.cfg.defence, seed=self.seeds["defence"])
        self.scored = score_samples(self.train, dcfg, self.cfg.arch, self.tcfg)
        self.removed = removal_order(self.scored, dcfg.epsilon)
        self.corrected = apply_removal(self.train, self.removed)
        p0 = init_params(
            self.cfg.arch, derive_seed(dcfg.seed, "retrain"), self.corrected.n_features
        )
        self.defended_params = train(p0, self.corrected, self.tcfg)
        mr = _evaluate(self.defended_params, self.test)
        overlap = None
        if self.poison is not None:
            overlap = int(np.isin(self.removed, self.poison.indices).sum())
        return _scheme_record(
            mr,
            removed_rows=int(self.removed.size),
            poison_overlap=overlap,
            epsilon=dcfg.epsilon,
        )

    # -- reporting quantifier --------------------------------------------------

    def _member_probs_no_attack(self) -> np.ndarray:
        if self.cfg.quantifier == "deep_ensemble":
            e = ensemble_train(
                self.train, self.cfg.arch, self.tcfg,
                self.cfg.quantifier_size, self.seeds["ensemble"],
            )
            return ensemble_member_probs(e, self.test)
        return self._swag_probs_for(self.train)

    def _swag_probs_for(self, data: Dataset) -> np.ndarray:
        sseed = self.seeds["swag"]
        scfg = replace(self.tcfg, seed=sseed)
        p0 = init_params(self.cfg.arch, sseed, data.n_features)
        solution = train(p0, data, scfg)
        posterior = swag_fit(solution, data, scfg, t=self.cfg.quantifier_size)
        return swag_member_probs(
            posterior, self.test, self.cfg.quantifier_size, self.seeds["swag-draws"]
        )

    def _member_probs_wba(self) -> np.ndarray:
        acfg = replace(self.cfg.attack, seed=self.seeds["attack"])
        if self.cfg.quantifier == "deep_ensemble":
            base = self.seeds["ensemble"]
            out = []
            for s in range(self.cfg.quantifier_size):
                member, _ = wba(
                    self.train, self.cfg.arch,
                    replace(self.tcfg, seed=base + s),
                    replace(acfg, seed=base + s),
                )
                out.append(predict_proba(member, self.test))
            return np.stack(out)
        # posterior draws around the attacked trajectory: pretrain with the
        # attack, then keep attacking through the collection epochs
        sseed = self.seeds["swag"]
        sacfg = replace(acfg, seed=sseed)
        pre, poison = wba(self.train, self.cfg.arch, replace(self.tcfg, seed=sseed), sacfg)
        rng = np.random.default_rng(sseed)
        posterior = swag_collect(
            pre,
            lambda p: wba_update(p, self.train, poison, sacfg, rng),
            t=self.cfg.quantifier_size,
        )
        return swag_member_probs(
            posterior, self.test, self.cfg.quantifier_size, self.seeds["swag-draws"]
        )

    def _member_probs_umd(self) -> np.ndarray:
        if self.cfg.quantifier == "deep_ensemble":
            e = ensemble_train(
                self.corrected, self.cfg.arch, self.tcfg,
                self.cfg.quantifier_size, self.seeds["ensemble"],
            )
            return ensemble_member_probs(e, self.test)
        return self._swag_probs_for(self.corrected)

    def quantifier_section(self, executed: list) -> dict | None:
        if self.cfg.quantifier == "none":
            return None
        fns = {
            "no_attack": self._member_probs_no_attack,
            "wba": self._member_probs_wba,
            "umd": self._member_probs_umd,
        }
        per_scheme = {}
        for scheme in executed:
            probs = fns[scheme]()
            per_scheme[scheme] = _quantifier_summary(probs, self.test.labels)
        return {
            "kind": self.cfg.quantifier,
            "size": self.cfg.quantifier_size,
            "per_scheme": per_scheme,
        }

    # -- perturbation sweep ----------------------------------------------------

    def sweep_section(self) -> list | None:
        if self.cfg.sweep is None:
            return None
        out = []
        for eps in self.cfg.sweep:
            eps = float(eps)
            if eps not in self.acc_cache:
                acfg = replace(self.cfg.attack, epsilon=eps, seed=self.seeds["attack"])
                params, _ = wba(self.train, self.cfg.arch, self.tcfg, acfg)
                self.acc_cache[eps] = _evaluate(params, self.test).accuracy
            out.append({"epsilon": eps, "accuracy": self.acc_cache[eps]})
        return out


def run_experiment(cfg: ExperimentConfig, config_text: str | None = None) -> dict:
    """Execute all configured schemes and return the report dict.

    When cfg.output_dir is set, also writes report.json, the chart CSVs,
    and the poison/sanitization audit files there.
    """
    r = _Run(cfg)
    schemes = {"no_attack": r.run_no_attack()}
    if cfg.attack is not None:
        schemes["wba"] = r.run_wba()
    if cfg.defence is not None:
        schemes["umd"] = r.run_umd()
    executed = [s for s in SCHEME_ORDER if s in schemes]

    dcfg_seed = r.seeds["defence"]
    report = {
        "format": 1,
        "config": config_to_dict(cfg),
        "config_text": config_text
        if config_text is not None
        else json.dumps(config_to_dict(cfg), sort_keys=True),
        "dataset": r.dataset_info,
        "seeds": {
            "derivation": DERIVATION_SCHEME,
            "master": cfg.master_seed,
            "table": r.seeds,
            "defence_internal": None
            if cfg.defence is None
            else {
                label: derive_seed(dcfg_seed, label)
                for label in ("ensemble", "swag", "swag-draws", "retrain")
            },
        },
        "schemes": schemes,
        "quantifier": r.quantifier_section(executed),
        "sweep": r.sweep_section(),
    }

    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / REPORT_FILE).write_text(report_json(report), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write report under {out}: {exc}") from exc
        emit_charts(report, out)
        if r.poison is not None:
            poison_rows_csv(r.poison, out / "poison.csv")
        if cfg.defence is not None:
            sanitization_csv(
                r.scored,
                r.removed,
                out / "sanitization.csv",
                poison_indices=None if r.poison is None else r.poison.indices,
            )
    return report


def run_sweep(cfg: ExperimentConfig, config_text: str | None = None) -> dict:
    """Sweep-focused entry point: baseline, attack grid, nothing else."""
    if cfg.sweep is None:
        raise InvalidSpec("run_sweep needs cfg.sweep")
    trimmed = replace(cfg, defence=None, quantifier="none")
    return run_experiment(trimmed, config_text)


def report_json(report: dict) -> str:
    """The canonical byte form: sorted keys, two-space indent, newline end."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _write_csv(path: Path, header: list, rows: list) -> None:
    import csv

    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit_charts(report: dict, out_dir) -> list:
    """Write the chart CSVs a report supports; returns the written paths.

    fpr_tpr.csv always (one row per executed scheme, no-attack first);
    sweep.csv and uncertainty.csv only when the report has those sections.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    written = []

    ordered = [s for s in SCHEME_ORDER if s in report["schemes"]]
    rows = [
        [s, repr(report["schemes"][s]["metrics"]["fpr"]),
         repr(report["schemes"][s]["metrics"]["tpr"])]
        for s in ordered
    ]
    path = out / "fpr_tpr.csv"
    _write_csv(path, ["scheme", "fpr", "tpr"], rows)
    written.append(path)

    if report.get("sweep"):
        rows = [[repr(p["epsilon"]), repr(p["accuracy"])] for p in report["sweep"]]
        path = out / "sweep.csv"
        _write_csv(path, ["epsilon", "accuracy"], rows)
        written.append(path)

    q = report.get("quantifier")
    if q:
        rows = []
        for s in ordered:
            if s in q["per_scheme"]:
                u = q["per_scheme"][s]["uncertainty_mean"]
                rows.append([
                    s, repr(u["entropy"]), repr(u["mutual_info"]),
                    repr(u["variance"]), repr(u["akld"]),
                ])
        path = out / "uncertainty.csv"
        _write_csv(path, ["scheme", "entropy", "mutual_info", "variance", "akld"], rows)
        written.append(path)
    return written
