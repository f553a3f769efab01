"""``pipeline`` command-line entry point.

Settings come from a JSON config file (keys named as in :class:`RunConfig`)
and/or flags; flags win. Exit status: 0 success, 1 pipeline error, 2 config
error. Diagnostics go to stderr as ``error:<module>:<kind>: message``.
"""

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

from .classifiers import CLASSIFIERS
from .dataset import (
    DEFAULT_MISSING_TOKENS,
    ampute_mcar,
    atomic_write_text,
    dataset_to_csv,
    heatmap_pgm,
    load_csv,
    summarize_missingness,
)
from .evaluation import FIDELITY_MODES, cross_validate, grid_evaluate
from .exceptions import ConfigError, PipelineError
from .imputation import EMImputer, KNNImputer, MeanImputer
from .numerics import RandomStream
from .selection import VARIANTS, TTestSelector, t_test_select

COMMANDS = ("inspect", "ampute", "impute", "select", "evaluate", "grid")
_NEEDS_SEED = ("ampute", "evaluate", "grid")

_IMPUTER_DEFAULTS = {
    "mean": {},
    "knn": {"k": 3},
    "em": {"tol": 1e-6, "max_iter": 500, "ridge": 1e-6},
}
_IMPUTER_NAMES = {"mean": "MI", "knn": "KNN", "em": "EM"}
_CLASSIFIER_NAMES = {"logistic": "LR", "lda": "LDA", "svm": "SVM", "naive_bayes": "NB"}


def _default_imputers():
    return [{"kind": "mean"}, {"kind": "knn", "k": 3}, {"kind": "em"}]


def _default_classifiers():
    return [{"kind": k} for k in ("logistic", "lda", "svm", "naive_bayes")]


@dataclass
class RunConfig:
    data_path: str = None
    missing_tokens: list = field(default_factory=lambda: list(DEFAULT_MISSING_TOKENS))
    zero_as_missing: bool = False
    label_column: str = None
    positive_label: str = None
    imputers: list = field(default_factory=_default_imputers)
    selector: object = field(default_factory=lambda: {"alpha": 0.05, "variant": "pooled"})
    classifiers: list = field(default_factory=_default_classifiers)
    folds: int = 5
    seed: int = None
    fidelity_mode: str = "per_fold"
    rate: float = None
    report_json: str = None
    summary_csv: str = None
    roc_dir: str = None
    heatmap_path: str = None
    out_path: str = None

    def digest(self):
        """Everything needed to re-run bit-identically (output paths excluded)."""
        return {
            "data_path": self.data_path,
            "missing_tokens": list(self.missing_tokens),
            "zero_as_missing": self.zero_as_missing,
            "label_column": self.label_column,
            "positive_label": self.positive_label,
            "imputers": [_imputer_entry(s) for s in self.imputers],
            "selector": self.selector,
            "classifiers": [_classifier_entry(s) for s in self.classifiers],
            "folds": self.folds,
            "seed": self.seed,
            "fidelity_mode": self.fidelity_mode,
        }

    def digest_line(self):
        return "config: " + json.dumps(self.digest(), sort_keys=True, separators=(",", ":"))


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _spec_kind(spec, key, allowed):
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(key, "expected an object with a 'kind' field")
    if spec["kind"] not in allowed:
        raise ConfigError(f"{key}.kind", f"unknown kind {spec['kind']!r}")
    return dict(spec)


def _imputer_entry(spec):
    spec = _spec_kind(spec, "imputers", _IMPUTER_DEFAULTS)
    kind = spec["kind"]
    entry = {"kind": kind, **_IMPUTER_DEFAULTS[kind]}
    for key, value in spec.items():
        if key in ("kind", "name"):
            continue
        if key not in _IMPUTER_DEFAULTS[kind]:
            raise ConfigError(f"imputers.{kind}.{key}", "unknown option")
        entry[key] = value
    default_name = _IMPUTER_NAMES[kind]
    if kind == "knn" and entry["k"] != 3:
        default_name = f"KNN{entry['k']}"
    entry["name"] = spec.get("name", default_name)
    return entry


def _classifier_entry(spec):
    spec = _spec_kind(spec, "classifiers", CLASSIFIERS)
    kind = spec["kind"]
    params = CLASSIFIERS[kind]().get_params()
    for key, value in spec.items():
        if key in ("kind", "name"):
            continue
        if key not in params:
            raise ConfigError(f"classifiers.{kind}.{key}", "unknown option")
        params[key] = value
    return {"kind": kind, "name": spec.get("name", _CLASSIFIER_NAMES[kind]), **params}


def build_imputer(spec):
    entry = _imputer_entry(spec)
    kind = entry["kind"]
    try:
        if kind == "mean":
            est = MeanImputer()
        elif kind == "knn":
            k = entry["k"]
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                raise ConfigError("imputers.knn.k", "must be a positive integer")
            est = KNNImputer(n_neighbors=k)
        else:
            est = EMImputer(tol=float(entry["tol"]), max_iter=int(entry["max_iter"]),
                            ridge=float(entry["ridge"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"imputers.{kind}", str(exc)) from None
    return entry["name"], est


def build_classifier(spec):
    entry = _classifier_entry(spec)
    params = {k: v for k, v in entry.items() if k not in ("kind", "name")}
    return entry["name"], CLASSIFIERS[entry["kind"]](**params)


def build_selector(spec):
    if spec in (None, "off", False):
        return None
    if not isinstance(spec, dict):
        raise ConfigError("selector", "expected an object or 'off'")
    unknown = set(spec) - {"alpha", "variant", "keep_all_on_empty"}
    if unknown:
        raise ConfigError(f"selector.{sorted(unknown)[0]}", "unknown option")
    variant = spec.get("variant", "pooled")
    if variant not in VARIANTS:
        raise ConfigError("selector.variant", f"must be one of {VARIANTS}")
    alpha = spec.get("alpha", 0.05)
    if not isinstance(alpha, (int, float)) or not 0 < alpha <= 1:
        raise ConfigError("selector.alpha", "must be a number in (0, 1]")
    return TTestSelector(float(alpha), variant, bool(spec.get("keep_all_on_empty", False)))


def _check_unique(names, key):
    seen = set()
    for name in names:
        if name in seen:
            raise ConfigError(key, f"duplicate name {name!r}")
        seen.add(name)


def _flag_overrides(args):
    out = {}
    simple = {
        "data": "data_path",
        "label": "label_column",
        "positive": "positive_label",
        "folds": "folds",
        "seed": "seed",
        "fidelity": "fidelity_mode",
        "rate": "rate",
        "report": "report_json",
        "summary": "summary_csv",
        "roc_dir": "roc_dir",
        "heatmap": "heatmap_path",
        "out": "out_path",
    }
    for flag, key in simple.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    if args.missing_token:
        out["missing_tokens"] = list(args.missing_token)
    if args.zero_as_missing:
        out["zero_as_missing"] = True
    if args.imputer:
        out["imputers"] = [_parse_short_spec(s, "imputers") for s in args.imputer]
    if args.classifier:
        out["classifiers"] = [_parse_short_spec(s, "classifiers") for s in args.classifier]
    if args.no_selection:
        out["selector"] = "off"
    elif args.alpha is not None or args.variant is not None:
        sel = {"alpha": 0.05, "variant": "pooled"}
        if args.alpha is not None:
            sel["alpha"] = args.alpha
        if args.variant is not None:
            sel["variant"] = args.variant
        out["selector"] = sel
    return out


def _parse_short_spec(text, key):
    """``knn:k=1`` or ``svm:kernel=linear,C=10`` -> spec dict."""
    kind, _, rest = text.partition(":")
    spec = {"kind": kind}
    for item in filter(None, rest.split(",")):
        name, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(key, f"malformed option {item!r}")
        try:
            spec[name] = json.loads(raw)
        except json.JSONDecodeError:
            spec[name] = raw
    return spec


def parse_config(command, args=None, config_path=None, overrides=None):
    """Merge a JSON config file with flag overrides and validate the result."""
    values = {}
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be an object")
        unknown = sorted(set(loaded) - _FIELDS)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        values.update(loaded)
    if args is not None:
        values.update(_flag_overrides(args))
    if overrides:
        values.update(overrides)
    cfg = RunConfig(**values)
    _validate(cfg, command)
    return cfg


def _validate(cfg, command):
    for key in ("data_path", "label_column", "positive_label"):
        if getattr(cfg, key) in (None, ""):
            raise ConfigError(key, "required")
    cfg.positive_label = str(cfg.positive_label)
    if not isinstance(cfg.missing_tokens, list) or not all(
        isinstance(t, str) for t in cfg.missing_tokens
    ):
        raise ConfigError("missing_tokens", "must be a list of strings")
    if not isinstance(cfg.zero_as_missing, bool):
        raise ConfigError("zero_as_missing", "must be true or false")
    if not isinstance(cfg.folds, int) or isinstance(cfg.folds, bool) or cfg.folds < 2:
        raise ConfigError("folds", "must be an integer >= 2")
    if cfg.fidelity_mode not in FIDELITY_MODES:
        raise ConfigError("fidelity_mode", f"must be one of {FIDELITY_MODES}")
    if cfg.seed is None:
        if command in _NEEDS_SEED:
            raise ConfigError("seed", "required; runs never pick a seed on their own")
    elif not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if not isinstance(cfg.imputers, list) or not cfg.imputers:
        raise ConfigError("imputers", "must be a nonempty list")
    if not isinstance(cfg.classifiers, list) or not cfg.classifiers:
        raise ConfigError("classifiers", "must be a nonempty list")
    _check_unique([build_imputer(s)[0] for s in cfg.imputers], "imputers")
    names = []
    for spec in cfg.classifiers:
        try:
            names.append(build_classifier(spec)[0])
        except TypeError as exc:
            raise ConfigError("classifiers", str(exc)) from None
    _check_unique(names, "classifiers")
    build_selector(cfg.selector)
    if command == "ampute":
        if cfg.rate is None or not isinstance(cfg.rate, (int, float)) or not 0 <= cfg.rate < 1:
            raise ConfigError("rate", "required, a number in [0, 1)")
    if command in ("ampute", "impute", "select") and not cfg.out_path:
        raise ConfigError("out_path", f"required for {command}")
    if command == "grid" and not (cfg.report_json or cfg.summary_csv or cfg.roc_dir):
        raise ConfigError("report_json", "grid needs at least one output path")


def _load(cfg):
    return load_csv(
        cfg.data_path,
        cfg.label_column,
        cfg.positive_label,
        missing_tokens=cfg.missing_tokens,
        zero_as_missing=cfg.zero_as_missing,
    )


def _csv_with_comment(text, cfg):
    return f"# {cfg.digest_line()}\n{text}"


def cmd_inspect(cfg, jobs, out):
    data = _load(cfg)
    summary = summarize_missingness(data)
    info = summary.to_dict()
    n, d = data.shape
    out.write(f"instances: {n}  features: {d}  positives: {int(data.labels.sum())}\n")
    out.write(f"missing cells: {info['total_missing']}  overall rate: {summary.overall_rate:.4f}\n")
    for name in info["feature_order"]:
        out.write(f"  {name}: {info['per_feature_missing'][name]}\n")
    if cfg.report_json:
        doc = {"config": cfg.digest(), "summary": info}
        atomic_write_text(cfg.report_json, json.dumps(doc, indent=2) + "\n")
    if cfg.heatmap_path:
        atomic_write_text(cfg.heatmap_path, heatmap_pgm(data))


def cmd_ampute(cfg, jobs, out):
    data = _load(cfg)
    amputed = ampute_mcar(data, float(cfg.rate), RandomStream(cfg.seed))
    text = dataset_to_csv(
        amputed,
        label_column=cfg.label_column,
        missing_token=cfg.missing_tokens[0] if cfg.missing_tokens else "NA",
    )
    atomic_write_text(cfg.out_path, _csv_with_comment(text, cfg))


def cmd_impute(cfg, jobs, out):
    data = _load(cfg)
    os.makedirs(cfg.out_path, exist_ok=True)
    for spec in cfg.imputers:
        name, imputer = build_imputer(spec)
        filled = imputer.fit_transform(data.values, mask=data.mask)
        text = dataset_to_csv(data, label_column=cfg.label_column, values=filled)
        atomic_write_text(
            os.path.join(cfg.out_path, f"imputed_{name}.csv"), _csv_with_comment(text, cfg)
        )


def cmd_select(cfg, jobs, out):
    data = _load(cfg)
    selector = build_selector(cfg.selector) or TTestSelector()
    name, imputer = build_imputer(cfg.imputers[0])
    filled = imputer.fit_transform(data.values, mask=data.mask)
    report = t_test_select(
        filled, data.labels, selector.alpha, selector.variant, data.feature_names
    )
    atomic_write_text(cfg.out_path, report.to_csv(comment=cfg.digest_line()))
    out.write(f"selected {int(report.selected.sum())} of {report.n_features} features "
              f"(imputer {name})\n")


def cmd_evaluate(cfg, jobs, out):
    data = _load(cfg)
    imp_name, imputer = build_imputer(cfg.imputers[0])
    clf_name, classifier = build_classifier(cfg.classifiers[0])
    report = cross_validate(
        data, imputer, build_selector(cfg.selector), classifier, cfg.folds,
        RandomStream(cfg.seed), cfg.fidelity_mode,
        names={"imputer": imp_name, "classifier": clf_name},
    )
    doc = {"config": cfg.digest(), **report.to_dict()}
    text = json.dumps(doc, indent=2) + "\n"
    if cfg.report_json:
        atomic_write_text(cfg.report_json, text)
    else:
        out.write(text)
    if cfg.roc_dir:
        curve, _ = report.pooled_roc()
        atomic_write_text(
            os.path.join(cfg.roc_dir, f"roc_{clf_name}_{imp_name}.csv"),
            curve.to_csv(comment=cfg.digest_line()),
        )


def cmd_grid(cfg, jobs, out):
    data = _load(cfg)
    grid = grid_evaluate(
        data,
        [build_imputer(s) for s in cfg.imputers],
        [build_classifier(s) for s in cfg.classifiers],
        build_selector(cfg.selector),
        cfg.folds,
        RandomStream(cfg.seed),
        cfg.fidelity_mode,
        jobs=jobs,
        config=cfg.digest(),
    )
    if cfg.report_json:
        atomic_write_text(cfg.report_json, grid.to_json())
    if cfg.summary_csv:
        atomic_write_text(cfg.summary_csv, grid.summary_csv(comment=cfg.digest_line()))
    if cfg.roc_dir:
        for cell in grid.cells:
            if cell.roc is None:
                continue
            atomic_write_text(
                os.path.join(cfg.roc_dir, f"roc_{cell.classifier}_{cell.imputer}.csv"),
                cell.roc.to_csv(comment=cfg.digest_line()),
            )
    failed = [f"{c.classifier}/{c.imputer}" for c in grid.cells if c.error]
    for cell in grid.cells:
        if cell.error:
            sys.stderr.write(f"warning: cell {cell.classifier}/{cell.imputer} failed: {cell.error}\n")
    out.write(f"{len(grid.cells)} cells evaluated, {len(failed)} failed\n")


_HANDLERS = {
    "inspect": cmd_inspect,
    "ampute": cmd_ampute,
    "impute": cmd_impute,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pipeline",
        description="Missing-data imputation and binary classification benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--data")
        p.add_argument("--label", help="label column name")
        p.add_argument("--positive", help="label value of the positive class")
        p.add_argument("--missing-token", action="append",
                       help="token marking a missing cell (repeatable)")
        p.add_argument("--zero-as-missing", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--folds", type=int)
        p.add_argument("--fidelity", choices=FIDELITY_MODES)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--imputer", action="append",
                       help="mean | knn[:k=N] | em[:tol=..,max_iter=..,ridge=..] (repeatable)")
        p.add_argument("--classifier", action="append",
                       help="logistic | naive_bayes | lda | svm[:kernel=linear,C=..] (repeatable)")
        p.add_argument("--alpha", type=float)
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--no-selection", action="store_true")
        p.add_argument("--rate", type=float)
        p.add_argument("--out")
        p.add_argument("--report")
        p.add_argument("--summary")
        p.add_argument("--roc-dir")
        p.add_argument("--heatmap")
    return parser


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.command, args, args.config)
        if args.jobs < 1:
            raise ConfigError("jobs", "must be at least 1")
    except (ConfigError, TypeError) as exc:
        sys.stderr.write(f"error:cli:ConfigError: {exc}\n")
        return 2
    try:
        _HANDLERS[args.command](cfg, args.jobs, stdout)
    except PipelineError as exc:
        sys.stderr.write(f"error:{exc.module}:{exc.kind}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error:io:IoError: {exc}\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(f"error:{args.command}:ValueError: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
