"""Batch command-line interface.

Exit codes: 0 clean, 1 error, 2 adverse impact found (for ``search``: impact
and an alternative was found), 3 impact without an alternative.
"""

import argparse
import dataclasses
import json
import os
import sys

from . import __version__
from ._validation import check_probability
from .data import GROUP_COLUMN, OUTCOME_COLUMN, LabeledData, ScenarioConfig, generate_scenario, \
    load_csv, split, write_csv
from .exceptions import FairlendError
from .impossibility import default_instance_family, feasibility_table, make_instance
from .lda import (BurdenShiftingConfig, Strategy, STRATEGY_KINDS, prong1_adverse_impact,
                  run_burden_shifting)
from .learners import DecisionTreeRiskModel, LogisticRiskModel, _check_gd_params, load_model
from .metrics import fairness_report
from .mitigate import AdversarialDebiasingModel, FairDecisionTreeRiskModel
from .reporting import render_markdown, sha256_file, write_frontier_csv, write_json, \
    write_rows_csv

EXIT_OK, EXIT_ERROR, EXIT_IMPACT, EXIT_NO_LDA = 0, 1, 2, 3

_SCENARIO = {f.name: f.default for f in dataclasses.fields(ScenarioConfig) if f.name != "seed"}
_COMMON = {"seed": 0, "threshold": 0.5, "group_column": GROUP_COLUMN,
           "outcome_column": OUTCOME_COLUMN}
_DATA = dict(_SCENARIO, data=None, id_column=None, train_fraction=0.7)
_DEFAULTS = {
    "simulate": dict(_SCENARIO),
    "audit": dict(_DATA, model=None, model_kind="logistic", model_params={}, air_threshold=0.8,
                  n_bins=10),
    "mitigate": dict(_DATA, technique="fair_tree", grid=[0.0, 0.5, 1.0, 2.0], model_params={},
                     epsilon_predictiveness=0.03, n_bins=10),
    "search": dict(_DATA, model_kind="logistic", model_params={}, air_threshold=0.8, floor=None,
                   epsilon_predictiveness=0.03, min_air_gain=0.05, strategies=list(STRATEGY_KINDS),
                   lambda_grid=[0.0, 0.5, 1.0, 2.0], alpha_grid=[0.5, 1.0, 2.0, 5.0], budget=50,
                   n_bins=10, n_jobs=1),
    "impossibility": {"instances": "default", "score_grid_steps": 20, "tol": 1e-9},
}


class _Parser(argparse.ArgumentParser):
    # usage errors must not collide with the "impact found" exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _json_obj(text):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}")
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def build_parser():
    parser = _Parser(prog="fairlend", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairlend {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file of parameters; flags override it")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float, help="approve when risk score < threshold")
        p.add_argument("--group-column")
        p.add_argument("--outcome-column")

    def scenario(p):
        p.add_argument("--n-rows", type=int)
        p.add_argument("--base-rate-protected", type=float)
        p.add_argument("--base-rate-control", type=float)
        p.add_argument("--protected-fraction", type=float)
        p.add_argument("--proxy-correlation", type=float)
        p.add_argument("--n-noise-features", type=int)

    def data(p):
        scenario(p)
        p.add_argument("--data", help="input CSV; a synthetic scenario is generated if omitted")
        p.add_argument("--id-column")
        p.add_argument("--train-fraction", type=float,
                       help="share of rows used for training; 1 evaluates on the training rows")
        p.add_argument("--model-params", type=_json_obj, help="JSON object of hyperparameters")
        p.add_argument("--n-bins", type=int)

    p = sub.add_parser("simulate", help="generate a synthetic credit dataset")
    common(p)
    scenario(p)

    p = sub.add_parser("audit", help="train or load a model and report fairness metrics")
    common(p)
    data(p)
    p.add_argument("--model", help="model.json to audit instead of training one")
    p.add_argument("--model-kind", choices=("logistic", "tree"))
    p.add_argument("--air-threshold", type=float)

    p = sub.add_parser("mitigate", help="sweep a fairness-regularized tree or adversarial model")
    common(p)
    data(p)
    p.add_argument("--technique", choices=("fair_tree", "adversarial"))
    p.add_argument("--grid", type=_floats, help="lambda or alpha values, e.g. 0,0.5,1")
    p.add_argument("--epsilon-predictiveness", type=float)

    p = sub.add_parser("search", help="run the burden-shifting review and alternatives search")
    common(p)
    data(p)
    p.add_argument("--model-kind", choices=("logistic", "tree"))
    p.add_argument("--air-threshold", type=float)
    p.add_argument("--floor", type=float, help="minimum holdout accuracy for business need")
    p.add_argument("--epsilon-predictiveness", type=float)
    p.add_argument("--min-air-gain", type=float)
    p.add_argument("--strategies", type=_names, help=f"subset of {','.join(STRATEGY_KINDS)}")
    p.add_argument("--lambda-grid", type=_floats)
    p.add_argument("--alpha-grid", type=_floats)
    p.add_argument("--budget", type=int)
    p.add_argument("--n-jobs", type=int)

    p = sub.add_parser("impossibility", help="feasibility table for calibration plus balance")
    common(p)
    p.add_argument("--score-grid-steps", type=int)
    p.add_argument("--tol", type=float)
    return parser


def resolve_config(args):
    """Merge command defaults, the ``--config`` file and explicit flags (in that order)."""
    cfg = dict(_COMMON, **_DEFAULTS[args.command])
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FairlendError(f"config {args.config}: invalid JSON ({exc})") from None
        if not isinstance(file_cfg, dict):
            raise FairlendError(f"config {args.config}: expected a JSON object")
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise FairlendError(f"config {args.config}: unknown keys for "
                                f"'{args.command}': {unknown}")
        cfg.update(file_cfg)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _scenario_config(cfg):
    return ScenarioConfig(**{k: cfg[k] for k in _SCENARIO}, seed=cfg["seed"])


def _check_int(cfg, key, low):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < low:
        raise FairlendError(f"{key} must be an integer >= {low}, got {v!r}")


def _check_grid(values, name):
    if not isinstance(values, (list, tuple)) or not values:
        raise FairlendError(f"{name} must be a non-empty list of numbers")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0:
            raise FairlendError(f"{name} values must be numbers >= 0, got {v!r}")
    return [float(v) for v in values]


def _make_model(kind, params, threshold, seed):
    params = dict(params)
    params.setdefault("seed", seed)
    if kind == "tree":
        params.setdefault("decision_threshold", threshold)
        model = DecisionTreeRiskModel(**params)
        model._check_params()
    else:
        model = LogisticRiskModel(**params)
        _check_gd_params(model.learning_rate, model.epochs, model.l2_penalty)
    return model


def validate(command, cfg):
    """Check every parameter before any data is read or model trained."""
    check_probability(cfg["threshold"], "threshold")
    _check_int(cfg, "seed", 0)
    if command == "impossibility":
        _check_int(cfg, "score_grid_steps", 1)
        if not cfg["tol"] > 0:
            raise FairlendError(f"tol must be positive, got {cfg['tol']}")
        if cfg["instances"] != "default" and not isinstance(cfg["instances"], list):
            raise FairlendError("instances must be 'default' or a list of instance objects")
        return
    if command == "simulate" or cfg.get("data") is None:
        _scenario_config(cfg)
    if command == "simulate":
        return
    tf = cfg["train_fraction"]
    if isinstance(tf, bool) or not isinstance(tf, (int, float)) or not 0.0 < tf <= 1.0:
        raise FairlendError(f"train_fraction must lie in (0, 1], got {tf!r}")
    _check_int(cfg, "n_bins", 1)
    if not isinstance(cfg["model_params"], dict):
        raise FairlendError("model_params must be a JSON object")
    if command == "audit":
        check_probability(cfg["air_threshold"], "air_threshold")
        if cfg["model"] is None:
            if cfg["model_kind"] not in ("logistic", "tree"):
                raise FairlendError(f"model_kind must be 'logistic' or 'tree'")
            _make_model(cfg["model_kind"], cfg["model_params"], cfg["threshold"], cfg["seed"])
    elif command == "mitigate":
        if cfg["technique"] not in ("fair_tree", "adversarial"):
            raise FairlendError("technique must be 'fair_tree' or 'adversarial'")
        cfg["grid"] = _check_grid(cfg["grid"], "grid")
        if not cfg["epsilon_predictiveness"] >= 0:
            raise FairlendError("epsilon_predictiveness must be >= 0")
        kind = "tree" if cfg["technique"] == "fair_tree" else "logistic"
        _make_model(kind, cfg["model_params"], cfg["threshold"], cfg["seed"])
    elif command == "search":
        cfg["lambda_grid"] = _check_grid(cfg["lambda_grid"], "lambda_grid")
        cfg["alpha_grid"] = _check_grid(cfg["alpha_grid"], "alpha_grid")
        _check_int(cfg, "n_jobs", 1)
        for s in cfg["strategies"]:
            Strategy.parse(s)
        _burden_config(cfg)
        _make_model(cfg["model_kind"], cfg["model_params"], cfg["threshold"], cfg["seed"])


def _burden_config(cfg):
    return BurdenShiftingConfig(
        model_kind=cfg["model_kind"], model_params=dict(cfg["model_params"]),
        threshold=float(cfg["threshold"]), air_threshold=float(cfg["air_threshold"]),
        floor=cfg["floor"], epsilon_predictiveness=float(cfg["epsilon_predictiveness"]),
        min_air_gain=float(cfg["min_air_gain"]), strategies=tuple(cfg["strategies"]),
        lambda_grid=tuple(cfg["lambda_grid"]), alpha_grid=tuple(cfg["alpha_grid"]),
        budget=cfg["budget"], n_bins=int(cfg["n_bins"]), n_jobs=int(cfg["n_jobs"]),
        seed=int(cfg["seed"]))


def _load_data(cfg):
    """Return ``(dataset, groups, input_description)``."""
    if cfg.get("data") is not None:
        ds, groups = load_csv(cfg["data"], cfg["outcome_column"], cfg["group_column"],
                              cfg["id_column"])
        return ds, groups, {"source": "csv", "path": cfg["data"],
                            "sha256": sha256_file(cfg["data"])}
    scenario = _scenario_config(cfg)
    ds, groups = generate_scenario(scenario)
    return ds, groups, {"source": "scenario", "scenario": scenario.to_dict()}


def _partition(ds, groups, cfg):
    if cfg["train_fraction"] == 1.0:
        whole = LabeledData(ds, groups)
        return whole, whole
    return split(ds, groups, cfg["train_fraction"], cfg["seed"])


def _data_summary(ds, groups):
    mask = groups.is_protected
    y = ds.outcome
    return {"n_rows": ds.n_rows, "feature_names": list(ds.feature_names),
            "group_sizes": {"protected": int(mask.sum()), "control": int((~mask).sum())},
            "empirical_base_rates": {"protected": float(y[mask].mean()),
                                     "control": float(y[~mask].mean())},
            "empirical_default_rate": float(y.mean())}


def _write_provenance(out, command, cfg, input_desc, summary, outputs):
    doc = {"schema": "fairlend-provenance", "version": 1, "command": command,
           "package_version": __version__, "config": cfg, "input": input_desc,
           "data": summary,
           "outputs": {name: sha256_file(os.path.join(out, name)) for name in outputs}}
    write_json(os.path.join(out, "provenance.json"), doc)


def _audit_doc(report, model, evaluation, air_threshold):
    p1 = prong1_adverse_impact(report, air_threshold)
    doc = {"schema": "fairlend-fairness-report", "version": 1,
           "model": {"kind": model.kind, "features": list(model.features_)},
           "evaluation": evaluation, "air_threshold": air_threshold,
           "adverse_impact_found": p1.adverse_impact_found}
    doc.update(report.to_dict())
    return doc


def cmd_simulate(cfg, out):
    scenario = _scenario_config(cfg)
    ds, groups = generate_scenario(scenario)
    write_csv(os.path.join(out, "data.csv"), ds, groups, cfg["outcome_column"],
              cfg["group_column"])
    _write_provenance(out, "simulate", cfg, {"source": "scenario", "scenario": scenario.to_dict()},
                      _data_summary(ds, groups), ["data.csv"])
    return EXIT_OK


def cmd_audit(cfg, out):
    ds, groups, input_desc = _load_data(cfg)
    if cfg["model"] is not None:
        model = load_model(cfg["model"])
        test, evaluation = LabeledData(ds, groups), "full"
    else:
        train, test = _partition(ds, groups, cfg)
        model = _make_model(cfg["model_kind"], cfg["model_params"], cfg["threshold"], cfg["seed"])
        model.fit(train.dataset)
        evaluation = "training" if cfg["train_fraction"] == 1.0 else "holdout"
    report = fairness_report(model.risk_scores(test.dataset), test.dataset.outcome, test.groups,
                             cfg["threshold"], cfg["n_bins"])
    doc = _audit_doc(report, model, evaluation, float(cfg["air_threshold"]))
    write_json(os.path.join(out, "report.json"), doc)
    report.calibration.to_csv(os.path.join(out, "calibration.csv"))
    write_json(os.path.join(out, "model.json"), model.to_dict())
    outputs = ["report.json", "calibration.csv", "model.json"]
    _write_provenance(out, "audit", cfg, input_desc, _data_summary(ds, groups), outputs)
    return EXIT_IMPACT if doc["adverse_impact_found"] else EXIT_OK


def _mitigation_model(cfg, value):
    params = dict(cfg["model_params"])
    params.setdefault("seed", cfg["seed"])
    if cfg["technique"] == "fair_tree":
        params.setdefault("decision_threshold", cfg["threshold"])
        return FairDecisionTreeRiskModel(lam=value, **params)
    return AdversarialDebiasingModel(alpha=value, **params)


def select_setting(rows, epsilon):
    """Index of the highest-AIR row whose accuracy is within ``epsilon`` of the
    reference row (the first zero setting, else the first row)."""
    ref = next((i for i, r in enumerate(rows) if r["value"] == 0.0), 0)
    floor = rows[ref]["accuracy"] - epsilon
    eligible = [i for i, r in enumerate(rows) if r["air"] is not None and r["accuracy"] >= floor]
    if not eligible:
        return ref
    return min(eligible, key=lambda i: (-rows[i]["air"], -rows[i]["accuracy"], i))


def cmd_mitigate(cfg, out):
    ds, groups, input_desc = _load_data(cfg)
    train, test = _partition(ds, groups, cfg)
    setting = "lambda" if cfg["technique"] == "fair_tree" else "alpha"
    rows, models, reports = [], [], []
    for value in cfg["grid"]:
        model = _mitigation_model(cfg, value).fit(train.dataset, groups=train.groups)
        rep = fairness_report(model.risk_scores(test.dataset), test.dataset.outcome, test.groups,
                              cfg["threshold"], cfg["n_bins"])
        row = {"technique": cfg["technique"], "setting": setting, "value": value,
               "accuracy": rep.accuracy, "air": rep.air, "auc": rep.auc,
               "statistical_parity_gap": rep.statistical_parity_gap,
               "calibration_max_gap": rep.calibration.max_gap}
        if cfg["technique"] == "fair_tree":
            root = model.root_split
            row["root_feature"], row["root_cutoff"] = (None, None) if root is None else root
        rows.append(row)
        models.append(model)
        reports.append(rep)
    chosen = select_setting(rows, cfg["epsilon_predictiveness"])
    for i, row in enumerate(rows):
        row["selected"] = i == chosen
    columns = ["technique", "setting", "value", "accuracy", "air", "auc",
               "statistical_parity_gap", "calibration_max_gap"]
    if cfg["technique"] == "fair_tree":
        columns += ["root_feature", "root_cutoff"]
    write_rows_csv(os.path.join(out, "sweep.csv"), rows, columns + ["selected"])
    write_json(os.path.join(out, "model.json"), models[chosen].to_dict())
    evaluation = "training" if cfg["train_fraction"] == 1.0 else "holdout"
    write_json(os.path.join(out, "report.json"),
               _audit_doc(reports[chosen], models[chosen], evaluation, 0.8))
    reports[chosen].calibration.to_csv(os.path.join(out, "calibration.csv"))
    outputs = ["sweep.csv", "model.json", "report.json", "calibration.csv"]
    _write_provenance(out, "mitigate", cfg, input_desc, _data_summary(ds, groups), outputs)
    return EXIT_OK


def cmd_search(cfg, out):
    bs_config = _burden_config(cfg)
    ds, groups, input_desc = _load_data(cfg)
    train, test = _partition(ds, groups, cfg)
    report = run_burden_shifting(train, test, bs_config)
    write_json(os.path.join(out, "report.json"), report.to_dict())
    with open(os.path.join(out, "report.md"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_markdown(report))
    frontier = report.prong3["frontier"] if report.prong3 else [report.baseline]
    write_frontier_csv(os.path.join(out, "frontier.csv"), frontier)
    chosen = report.baseline
    if report.prong3 is not None and report.prong3["selected"] is not None:
        chosen = report.prong3["selected"]
    write_json(os.path.join(out, "model.json"), chosen.model.to_dict())
    report.baseline.report.calibration.to_csv(os.path.join(out, "calibration.csv"))
    outputs = ["report.json", "report.md", "frontier.csv", "model.json", "calibration.csv"]
    _write_provenance(out, "search", cfg, input_desc, _data_summary(ds, groups), outputs)
    return {"no_impact": EXIT_OK, "lda_found": EXIT_IMPACT, "no_lda": EXIT_NO_LDA}[report.outcome]


def _instances(value):
    if value == "default":
        return default_instance_family()
    out = []
    for item in value:
        if not isinstance(item, dict):
            raise FairlendError(f"instance entries must be objects, got {item!r}")
        out.append(make_instance(**item))
    return out


def cmd_impossibility(cfg, out):
    instances = _instances(cfg["instances"])
    rows = feasibility_table(instances, int(cfg["score_grid_steps"]), float(cfg["tol"]))
    columns = ["instance", "base_rate_protected", "base_rate_control", "equal_base_rates",
               "perfect_prediction", "witness_found"]
    write_rows_csv(os.path.join(out, "feasibility.csv"), rows, columns)
    doc = {"schema": "fairlend-feasibility", "version": 1,
           "score_grid_steps": int(cfg["score_grid_steps"]), "tol": float(cfg["tol"]),
           "rows": rows,
           "matches_theory": all(r["witness_found"] == (r["equal_base_rates"]
                                                        or r["perfect_prediction"]) for r in rows)}
    write_json(os.path.join(out, "report.json"), doc)
    n_rows = sum(len(i.outcomes) for i in instances)
    summary = {"n_instances": len(instances), "n_rows_total": n_rows}
    _write_provenance(out, "impossibility", cfg, {"source": "instances"}, summary,
                      ["feasibility.csv", "report.json"])
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "audit": cmd_audit, "mitigate": cmd_mitigate,
            "search": cmd_search, "impossibility": cmd_impossibility}


def run(argv=None):
    """Parse ``argv``, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        validate(args.command, cfg)
        os.makedirs(args.out, exist_ok=True)
        if not os.access(args.out, os.W_OK):
            raise FairlendError(f"output directory {args.out} is not writable")
        return COMMANDS[args.command](cfg, args.out)
    except (FairlendError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"fairlend {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
