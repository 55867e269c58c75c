"""Command-line harness: simulate | train | evaluate | sweep | importance | report.

Every command takes --config (JSON file), --seed, --out and --quiet; explicit
flags override config values, which override built-in defaults. Commands are
deterministic given their resolved configuration, and every artifact embeds
{config hash, seed, toolkit version}. Exit codes: 0 success, 1 runtime
failure, 2 usage or input errors.

Config layout (all sections optional unless a command needs them):

    {
      "seed": 0,
      "synthetic": {"n_patients": 500, "true_linear_coefficients": [1.0, -0.5],
                    "nonlinear_risk": "none", "censoring_rate": 0.3,
                    "tie_granularity": 1, "cutoff_days": 30,
                    "time_fixed_noise_levels": 0},
      "cohort": "path/to/cohort.jsonl",
      "records": {"records": "records.jsonl", "schema": "schema.json",
                  "event_spec": {"event_name": "death", ...}},
      "split": {"ratios": [0.6, 0.2, 0.2], "seed": null},
      "model": {"kind": "linear", "hidden_sizes": [128, 64], "embed_dim": 15,
                "lstm_hidden": 32, "tf_embed_dim": 2, "head_sizes": [32, 16, 1],
                "init_seed": null},
      "training": {"batch_size": 40, "learning_rate": 0.001, "epochs": 30,
                   "minibatches_per_epoch": 20, "k_max_observations": 4,
                   "seed": null, "baseline_from_best_minibatch": false},
      "grid": [5, 10, 15]
    }
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from ._version import __version__
from .cohort import (
    Cohort,
    event_spec_from_dict,
    load_cohort,
    save_cohort,
    stratified_split,
    truncate_observations,
)
from .engine import (
    TrainingConfig,
    predict_survival,
    train,
    trained_model_from_dict,
    trained_model_to_dict,
)
from .errors import ConfigError, ParseError, SchemaError, ToolkitError
from .ingest import ingest_cohort
from .metrics import brier_curve, concordance_error, permutation_importance
from .models import (
    RiskModel,
    RiskModelSpec,
    _encode_from_matrix,
    dims_from_schema,
    encode_inputs,
    forward,
    init_params,
)
from .parametric import parametric_model_from_dict, parametric_survival
from .serialize import config_hash, write_csv_artifact, write_json_artifact
from .synthetic import SyntheticConfig, generate_synthetic_cohort_with_truth


# --- config plumbing ---------------------------------------------------------

def _load_config_file(path) -> dict:
    if path is None:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def _pick(flag_value, config_value, default):
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _info(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _out_dir(args, config) -> Path:
    out = Path(_pick(args.out, config.get("out"), "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _provenance(resolved: dict, seed: int) -> dict:
    return {"config_hash": config_hash(resolved), "seed": int(seed),
            "version": __version__}


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _synthetic_section(args, config, seed) -> dict:
    section = dict(config.get("synthetic") or {})
    section["n_patients"] = int(_pick(getattr(args, "n_patients", None),
                                      section.get("n_patients"), 500))
    coeffs = _pick(
        _parse_floats(args.coefficients) if getattr(args, "coefficients", None) else None,
        section.get("true_linear_coefficients"), (1.0, -0.5))
    section["true_linear_coefficients"] = [float(c) for c in coeffs]
    section["nonlinear_risk"] = _pick(getattr(args, "nonlinear_risk", None),
                                      section.get("nonlinear_risk"), "none")
    section["censoring_rate"] = float(_pick(getattr(args, "censoring_rate", None),
                                            section.get("censoring_rate"), 0.3))
    section["tie_granularity"] = int(_pick(getattr(args, "tie_granularity", None),
                                           section.get("tie_granularity"), 1))
    section["cutoff_days"] = int(_pick(getattr(args, "cutoff_days", None),
                                       section.get("cutoff_days"), 30))
    section["time_fixed_noise_levels"] = int(section.get("time_fixed_noise_levels", 0))
    section["seed"] = int(section.get("seed") if section.get("seed") is not None else seed)
    return section


def _load_data(args, config, seed) -> tuple[Cohort, dict]:
    """Resolve the data source. Returns (cohort, descriptor-for-hashing)."""
    cohort_path = _pick(getattr(args, "cohort", None), config.get("cohort"), None)
    if cohort_path is not None:
        return load_cohort(cohort_path), {"cohort": str(cohort_path)}
    records = config.get("records")
    if records is not None:
        spec = event_spec_from_dict(records["event_spec"])
        cohort = ingest_cohort(records["records"], records["schema"], spec)
        return cohort, {"records": {"records": str(records["records"]),
                                    "schema": str(records["schema"]),
                                    "event_spec": records["event_spec"]}}
    if config.get("synthetic") is not None or getattr(args, "n_patients", None) is not None:
        section = _synthetic_section(args, config, seed)
        cohort, _ = generate_synthetic_cohort_with_truth(_synthetic_config(section))
        return cohort, {"synthetic": section}
    raise ConfigError("no data source: provide --cohort, or a config with "
                      "'cohort', 'records' or 'synthetic'")


def _synthetic_config(section: dict) -> SyntheticConfig:
    return SyntheticConfig(
        n_patients=section["n_patients"],
        seed=section["seed"],
        true_linear_coefficients=tuple(section["true_linear_coefficients"]),
        nonlinear_risk=section["nonlinear_risk"],
        censoring_rate=section["censoring_rate"],
        tie_granularity=section["tie_granularity"],
        cutoff_days=section["cutoff_days"],
        time_fixed_noise_levels=section["time_fixed_noise_levels"],
    )


def _split_section(config, seed) -> dict:
    section = dict(config.get("split") or {})
    ratios = tuple(float(r) for r in section.get("ratios", (0.6, 0.2, 0.2)))
    split_seed = int(section.get("seed") if section.get("seed") is not None else seed)
    return {"ratios": list(ratios), "seed": split_seed}


def _model_section(args, config) -> dict:
    section = dict(config.get("model") or {})
    section["kind"] = _pick(getattr(args, "model_kind", None), section.get("kind"), "linear")
    section.setdefault("hidden_sizes", [128, 64])
    section.setdefault("embed_dim", 15)
    section.setdefault("lstm_hidden", 32)
    section.setdefault("tf_embed_dim", 2)
    section.setdefault("head_sizes", [32, 16, 1])
    return section


def _training_section(args, config, seed) -> dict:
    section = dict(config.get("training") or {})
    section["batch_size"] = int(_pick(getattr(args, "batch_size", None),
                                      section.get("batch_size"), 40))
    section["learning_rate"] = float(_pick(getattr(args, "learning_rate", None),
                                           section.get("learning_rate"), 1e-3))
    section["epochs"] = int(_pick(getattr(args, "epochs", None), section.get("epochs"), 30))
    section["minibatches_per_epoch"] = int(_pick(getattr(args, "minibatches_per_epoch", None),
                                                 section.get("minibatches_per_epoch"), 20))
    section["k_max_observations"] = int(_pick(getattr(args, "k_max_observations", None),
                                              section.get("k_max_observations"), 4))
    section["baseline_from_best_minibatch"] = bool(
        section.get("baseline_from_best_minibatch", False))
    section["seed"] = int(section.get("seed") if section.get("seed") is not None else seed)
    return section


def _build_model(model_section: dict, dims, seed) -> RiskModel:
    spec = RiskModelSpec(
        kind=model_section["kind"],
        hidden_sizes=tuple(model_section["hidden_sizes"]),
        embed_dim=int(model_section["embed_dim"]),
        lstm_hidden=int(model_section["lstm_hidden"]),
        tf_embed_dim=int(model_section["tf_embed_dim"]),
        head_sizes=tuple(model_section["head_sizes"]),
    )
    init_seed = model_section.get("init_seed")
    init_seed = int(init_seed) if init_seed is not None else int(seed)
    return RiskModel(spec, dims, init_params(spec, dims, init_seed))


def _training_config(section: dict) -> TrainingConfig:
    return TrainingConfig(
        batch_size=section["batch_size"],
        learning_rate=section["learning_rate"],
        epochs=section["epochs"],
        minibatches_per_epoch=section["minibatches_per_epoch"],
        k_max_observations=section["k_max_observations"],
        seed=section["seed"],
        baseline_from_best_minibatch=section["baseline_from_best_minibatch"],
    )


def _record_rng(seed: int, record_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(seed), zlib.crc32(record_id.encode("utf-8")))))


def _encode_record(record, schema, dims, k, seed):
    matrix = record.longitudinal
    if k is not None:
        matrix = truncate_observations(matrix, k, _record_rng(seed, record.id))
    return _encode_from_matrix(matrix, record.time_fixed, dims)


def _load_bundle(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    section = _synthetic_section(args, config, seed)
    resolved = {"command": "simulate", "seed": seed, "synthetic": section}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    cohort, truth = generate_synthetic_cohort_with_truth(_synthetic_config(section))
    save_cohort(cohort, out / "cohort.jsonl", provenance=prov)
    write_json_artifact(out / "truth.json", {
        "config": section,
        "true_coefficients": list(truth.coefficients),
        "true_risks": {p.id: float(r) for p, r in zip(cohort.patients, truth.risks)},
        "baseline_rate": truth.baseline_rate,
        "provenance": prov,
    })
    _info(args, f"simulate: wrote {cohort.n} patients "
                f"({cohort.n_events} events, {cohort.n_censored} censored) to {out}")
    return 0


def cmd_train(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    cohort, data_desc = _load_data(args, config, seed)
    split = _split_section(config, seed)
    model_section = _model_section(args, config)
    training = _training_section(args, config, seed)
    resolved = {"command": "train", "seed": seed, "data": data_desc,
                "split": split, "model": model_section, "training": training}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    train_c, val_c, test_c = stratified_split(cohort, split["ratios"], split["seed"])
    dims = dims_from_schema(cohort.schema, cohort.event_spec.cutoff_days)
    model = _build_model(model_section, dims, seed)
    trained = train(model, train_c, val_c, _training_config(training))

    bundle = trained_model_to_dict(trained)
    bundle["config"] = resolved
    bundle["provenance"] = prov
    write_json_artifact(out / "model.json", bundle)
    write_csv_artifact(
        out / "training_log.csv",
        ["epoch", "train_nll", "val_concordance_error"],
        [[rec.epoch, rec.train_nll, rec.val_concordance_error]
         for rec in trained.training_log],
        prov,
    )
    if args.export_splits:
        save_cohort(train_c, out / "train.jsonl", provenance=prov)
        save_cohort(val_c, out / "val.jsonl", provenance=prov)
        save_cohort(test_c, out / "test.jsonl", provenance=prov)
    if trained.training_log:
        last = trained.training_log[-1]
        best = min(trained.training_log, key=lambda r: (r.val_concordance_error, r.epoch))
        _info(args, f"train: {len(trained.training_log)} epochs, "
                    f"final val error {last.val_concordance_error:.4f}, "
                    f"best epoch {best.epoch} ({best.val_concordance_error:.4f})")
    else:
        _info(args, "train: 0 epochs requested; saved initialized model with baseline")
    return 0


def _risks_and_survival(bundle: dict, cohort: Cohort, seed: int):
    """Returns (risks array, survival_fn(patient, t)) for either bundle type."""
    dims = dims_from_schema(cohort.schema, cohort.event_spec.cutoff_days)
    if bundle.get("bundle_type") == "cox":
        trained = trained_model_from_dict(bundle)
        k = (bundle.get("config") or {}).get("training", {}).get("k_max_observations")
        inputs = encode_inputs(cohort, k=k, seed=seed)
        risks = np.array([forward(trained.risk_model, enc) for enc in inputs])
        by_identity = {id(p): enc for p, enc in zip(cohort.patients, inputs)}

        def survival_fn(patient, t):
            enc = by_identity.get(id(patient))
            if enc is None:
                enc = _encode_record(patient, cohort.schema, dims, k, seed)
            return predict_survival(trained, enc, t)

        return risks, survival_fn
    if bundle.get("bundle_type") == "parametric":
        model = parametric_model_from_dict(bundle)
        inputs = encode_inputs(cohort)
        x = np.stack([enc.flattened for enc in inputs])
        risks = x @ model.coefficients
        by_identity = {id(p): enc for p, enc in zip(cohort.patients, inputs)}

        def survival_fn(patient, t):
            enc = by_identity.get(id(patient))
            if enc is None:
                enc = _encode_record(patient, cohort.schema, dims, None, seed)
            return parametric_survival(model, enc, t)

        return risks, survival_fn
    raise ConfigError(f"unknown bundle type {bundle.get('bundle_type')!r}")


def _grid_from(args, config) -> tuple[float, ...]:
    if getattr(args, "grid", None):
        return _parse_floats(args.grid)
    raw = config.get("grid")
    if raw is None:
        return ()
    if isinstance(raw, dict):
        return tuple(np.linspace(float(raw["start"]), float(raw["stop"]),
                                 int(raw["num"])).tolist())
    return tuple(float(v) for v in raw)


def cmd_evaluate(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    model_path = _pick(args.model, config.get("model_path"), None)
    if model_path is None:
        raise ConfigError("evaluate needs --model")
    bundle = _load_bundle(model_path)
    cohort, data_desc = _load_data(args, config, seed)
    grid = _grid_from(args, config)
    if not grid:
        horizon = int(max(cohort.times()))
        grid = tuple(float(v) for v in range(1, horizon + 1))
    label = _pick(args.label, config.get("label"), Path(model_path).stem)
    resolved = {"command": "evaluate", "seed": seed, "model_path": str(model_path),
                "data": data_desc, "grid": list(grid), "label": label}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    risks, survival_fn = _risks_and_survival(bundle, cohort, seed)
    conc = concordance_error(cohort.times(), cohort.events(), risks)
    curve = brier_curve(survival_fn, cohort, grid)
    event_name = cohort.event_spec.event_name

    write_json_artifact(out / "metrics.json", {
        "model": label,
        "event": event_name,
        "metrics": {
            "concordance_error": conc.error,
            "comparable_pairs": conc.comparable_pairs,
            "concordant": conc.concordant,
            "discordant": conc.discordant,
            "risk_ties": conc.risk_ties,
            "brier": [{"time": t, "score": s}
                      for t, s in zip(curve.times, curve.scores)],
        },
        "provenance": prov,
    })
    rows = [[label, event_name, "concordance_error", conc.error, seed]]
    rows += [[label, event_name, f"brier@{t:g}", s, seed]
             for t, s in zip(curve.times, curve.scores)]
    write_csv_artifact(out / "metrics.csv",
                       ["model", "event", "metric", "value", "seed"], rows, prov)
    write_csv_artifact(out / "brier.csv", ["time", "brier_score"],
                       [[t, s] for t, s in zip(curve.times, curve.scores)], prov)
    _info(args, f"evaluate: concordance error {conc.error:.4f} "
                f"over {conc.comparable_pairs:.0f} comparable pairs")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    cohort, data_desc = _load_data(args, config, seed)
    split = _split_section(config, seed)
    model_section = _model_section(args, config)
    training = _training_section(args, config, seed)
    b_specs = [s.strip().lower() for s in args.batch_sizes.split(",") if s.strip()]
    k_values = list(_parse_ints(args.k_values))
    resolved = {"command": "sweep", "seed": seed, "data": data_desc, "split": split,
                "model": model_section, "training": training,
                "batch_sizes": b_specs, "k_values": k_values}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    train_c, val_c, test_c = stratified_split(cohort, split["ratios"], split["seed"])
    dims = dims_from_schema(cohort.schema, cohort.event_spec.cutoff_days)
    total_observed_days = sum(p.longitudinal.observed_days().size for p in train_c.patients)
    test_times, test_events = test_c.times(), test_c.events()

    rows = []
    cell = 0
    for b_spec in b_specs:
        b = train_c.n if b_spec == "all" else int(b_spec)
        label = f"B={b} (All)" if b == train_c.n else f"B={b}"
        row: list = [label]
        for k in k_values:
            feasible = 2 <= b <= train_c.n and b * k <= total_observed_days
            if not feasible:
                row.append("")
                cell += 1
                continue
            cell_training = dict(training)
            cell_training["batch_size"] = b
            cell_training["k_max_observations"] = k
            cell_training["seed"] = seed + cell
            model = _build_model(model_section, dims, seed + cell)
            trained = train(model, train_c, val_c, _training_config(cell_training))
            test_inputs = encode_inputs(test_c, k=k, seed=seed + cell)
            risks = np.array([forward(trained.risk_model, enc) for enc in test_inputs])
            err = concordance_error(test_times, test_events, risks).error
            row.append(err)
            cell += 1
            _info(args, f"sweep: B={b} k={k} test concordance error {err:.4f}")
        rows.append(row)
    write_csv_artifact(out / "sweep.csv", ["B"] + [f"k={k}" for k in k_values],
                       rows, prov)
    _info(args, f"sweep: wrote {len(rows)}x{len(k_values)} grid to {out / 'sweep.csv'}")
    return 0


def cmd_importance(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    model_path = _pick(args.model, config.get("model_path"), None)
    if model_path is None:
        raise ConfigError("importance needs --model")
    bundle = _load_bundle(model_path)
    cohort, data_desc = _load_data(args, config, seed)
    repeats = int(_pick(args.repeats, config.get("repeats"), 10))
    features = (list(_parse_strs(args.features)) if args.features
                else config.get("features"))
    resolved = {"command": "importance", "seed": seed, "model_path": str(model_path),
                "data": data_desc, "repeats": repeats, "features": features}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    dims = dims_from_schema(cohort.schema, cohort.event_spec.cutoff_days)
    if bundle.get("bundle_type") == "cox":
        trained = trained_model_from_dict(bundle)
        k = (bundle.get("config") or {}).get("training", {}).get("k_max_observations")

        def risk_fn(record):
            return forward(trained.risk_model,
                           _encode_record(record, cohort.schema, dims, k, seed))
    elif bundle.get("bundle_type") == "parametric":
        model = parametric_model_from_dict(bundle)

        def risk_fn(record):
            enc = _encode_record(record, cohort.schema, dims, None, seed)
            return float(model.coefficients @ enc.flattened)
    else:
        raise ConfigError(f"unknown bundle type {bundle.get('bundle_type')!r}")

    report = permutation_importance(risk_fn, cohort, features=features,
                                    repeats=repeats, seed=seed)
    write_json_artifact(out / "importance.json", {
        "baseline_error": report.baseline_error,
        "repeats": report.repeats,
        "importances": [
            {"feature": e.feature, "mean_increase": e.mean_increase,
             "std_increase": e.std_increase}
            for e in report.entries
        ],
        "provenance": prov,
    })
    for e in report.entries:
        _info(args, f"importance: {e.feature}: "
                    f"{e.mean_increase:.4f} +/- {e.std_increase:.4f}")
    return 0


def _parse_strs(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _expand_metric_paths(raw_paths) -> list[tuple[str, "Path | None"]]:
    """Each argument is a metrics JSON file or a directory containing them.
    Missing files stay in the list with path None so the report can flag them."""
    found: list[tuple[str, "Path | None"]] = []
    for raw in raw_paths:
        p = Path(raw)
        if p.is_dir():
            candidates = sorted(p.glob("*.metrics.json")) + sorted(p.glob("*/metrics.json"))
            if (p / "metrics.json").exists():
                candidates.insert(0, p / "metrics.json")
            for c in candidates:
                found.append((c.stem if c.name != "metrics.json" else c.parent.name, c))
        elif p.exists():
            found.append((p.stem, p))
        else:
            found.append((p.stem, None))
    return found


def cmd_report(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_pick(args.seed, config.get("seed"), 0))
    resolved = {"command": "report", "seed": seed,
                "paths": [str(p) for p in args.paths]}
    prov = _provenance(resolved, seed)
    out = _out_dir(args, config)

    warnings = 0
    rows = []
    for label, path in _expand_metric_paths(args.paths):
        if path is None:
            print(f"warning: missing metrics file for {label!r}", file=sys.stderr)
            warnings += 1
            rows.append({"model": label, "event": "", "concordance_error": None})
            continue
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            value = data["metrics"]["concordance_error"]
            rows.append({"model": data.get("model", label),
                         "event": data.get("event", ""),
                         "concordance_error": float(value)})
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            print(f"warning: unreadable metrics in {path}", file=sys.stderr)
            warnings += 1
            rows.append({"model": label, "event": "", "concordance_error": None})

    scored = sorted((r for r in rows if r["concordance_error"] is not None),
                    key=lambda r: r["concordance_error"])
    ranks = {id(r): str(i + 1) for i, r in enumerate(scored[:3])}
    csv_rows = []
    for r in rows:
        err = r["concordance_error"]
        csv_rows.append([r["model"], r["event"],
                         "absent" if err is None else err,
                         ranks.get(id(r), "")])
    write_csv_artifact(out / "report.csv",
                       ["model", "event", "concordance_error", "rank"],
                       csv_rows, prov)
    write_json_artifact(out / "report.json", {
        "rows": [
            {**r, "rank": ranks.get(id(r), None)}
            for r in rows
        ],
        "warnings": warnings,
        "provenance": prov,
    })
    for row in csv_rows:
        marker = f"  [{row[3]}]" if row[3] else ""
        _info(args, f"report: {row[0]} ({row[1]}): {row[2]}{marker}")
    if warnings:
        print(f"report: {warnings} warning(s)", file=sys.stderr)
    return 0


# --- parser ------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, help="master seed (default 0)")
    sub.add_argument("--out", help="output directory (default ./out)")
    sub.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longsurv",
        description="Time-to-event toolkit: simulate cohorts, train Cox risk "
                    "models, evaluate, sweep, rank feature importance, report.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate a synthetic cohort with ground truth")
    _add_common(p)
    p.add_argument("--n-patients", type=int)
    p.add_argument("--coefficients", help="comma list, e.g. 1.0,-0.5")
    p.add_argument("--nonlinear-risk", choices=("none", "product_of_first_two", "sine_of_first"))
    p.add_argument("--censoring-rate", type=float)
    p.add_argument("--tie-granularity", type=int)
    p.add_argument("--cutoff-days", type=int)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("train", help="fit a risk model and its baseline hazard")
    _add_common(p)
    p.add_argument("--cohort", help="cohort JSONL (with sibling *_meta.json)")
    p.add_argument("--model-kind", choices=("linear", "mlp", "composite"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--minibatches-per-epoch", type=int)
    p.add_argument("--k-max-observations", type=int)
    p.add_argument("--export-splits", action="store_true",
                   help="also write train/val/test cohort files")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("evaluate", help="score a saved model bundle on a cohort")
    _add_common(p)
    p.add_argument("--model", help="model bundle JSON")
    p.add_argument("--cohort")
    p.add_argument("--grid", help="comma list of Brier horizons")
    p.add_argument("--label", help="model label in outputs (default: file stem)")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("sweep", help="grid over batch size B and kept days k")
    _add_common(p)
    p.add_argument("--cohort")
    p.add_argument("--model-kind", choices=("linear", "mlp", "composite"))
    p.add_argument("--batch-sizes", required=True,
                   help="comma list; 'all' means the training cohort size")
    p.add_argument("--k-values", required=True,
                   help="comma list of k, the maximum observed longitudinal "
                        "days kept per patient (excess days are subsampled)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--minibatches-per-epoch", type=int)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("importance", help="permutation importance per feature")
    _add_common(p)
    p.add_argument("--model", help="model bundle JSON")
    p.add_argument("--cohort")
    p.add_argument("--repeats", type=int)
    p.add_argument("--features", help="comma list (default: all features)")
    p.set_defaults(func=cmd_importance)

    p = subs.add_parser("report", help="consolidate metrics files into one table")
    _add_common(p)
    p.add_argument("paths", nargs="+", help="metrics JSON files or directories")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ConfigError, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
