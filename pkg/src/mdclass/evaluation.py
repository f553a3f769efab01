"""Stratified cross-validation of impute -> select -> classify pipelines.

Undefined metrics (e.g. specificity of a fold without negatives) are carried
as NaN and rendered as the string ``"NaN"`` in reports. Means and standard
deviations skip undefined folds.
"""

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .exceptions import (
    ClassSmallerThanK,
    EmptyFold,
    LengthMismatch,
    PipelineError,
    SingleClass,
)
from .numerics import permutation

METRICS = ("acc", "auc", "sen", "spe")
FIDELITY_MODES = ("per_fold", "whole_dataset")
NAN = float("nan")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class FoldMetrics:
    acc: float = NAN
    auc: float = NAN
    sen: float = NAN
    spe: float = NAN


@dataclass
class FoldRecord:
    fold: int
    metrics: FoldMetrics
    counts: ConfusionCounts = None
    n_test: int = 0
    n_features_selected: int = None
    diagnostics: list = field(default_factory=list)
    # fitted stages, kept for inspection and not serialized
    imputer: object = field(default=None, repr=False)
    selector: object = field(default=None, repr=False)
    classifier: object = field(default=None, repr=False)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def to_csv(self, comment=None):
        lines = [f"# {comment}"] if comment else []
        lines.append("threshold,fpr,tpr")
        for t, f, r in zip(self.thresholds, self.fpr, self.tpr):
            lines.append(f"{_num(t)},{_num(f)},{_num(r)}")
        return "\n".join(lines) + "\n"


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return repr(x)


def _json_value(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "NaN" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def stratified_kfold(labels, k, stream):
    """Fold index per instance; each class is shuffled then dealt round-robin."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    folds = np.empty(labels.size, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ClassSmallerThanK(f"class {cls} has {idx.size} instances, fewer than k={k}")
        order = idx[permutation(idx.size, stream)]
        folds[order] = np.arange(idx.size) % k
    return folds


def confusion_counts(truth, predicted):
    truth = np.asarray(truth).astype(int)
    predicted = np.asarray(predicted).astype(int)
    if truth.shape != predicted.shape:
        raise LengthMismatch("truth and predictions differ in length")
    return ConfusionCounts(
        tp=int(((truth == 1) & (predicted == 1)).sum()),
        fp=int(((truth == 0) & (predicted == 1)).sum()),
        tn=int(((truth == 0) & (predicted == 0)).sum()),
        fn=int(((truth == 1) & (predicted == 0)).sum()),
    )


def binary_metrics(counts):
    """Accuracy, sensitivity and specificity; AUC is left undefined."""
    if counts.total == 0:
        raise EmptyFold("no instances to evaluate")
    pos = counts.tp + counts.fn
    neg = counts.tn + counts.fp
    return FoldMetrics(
        acc=(counts.tp + counts.tn) / counts.total,
        sen=counts.tp / pos if pos else NAN,
        spe=counts.tn / neg if neg else NAN,
    )


def roc_curve_auc(scores, truth):
    """ROC curve over every distinct score and its trapezoidal area.

    A point is predicted positive when its score is >= the threshold, so
    tied scores enter the curve together. The first point (threshold +inf)
    is (0, 0), the last is (1, 1).
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth).astype(int)
    if scores.shape != truth.shape:
        raise LengthMismatch("scores and truth differ in length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes")
    thresholds, inverse = np.unique(-scores, return_inverse=True)
    thresholds = -thresholds  # descending
    pos_at = np.bincount(inverse, weights=truth, minlength=thresholds.size).astype(np.int64)
    neg_at = np.bincount(inverse, weights=1 - truth, minlength=thresholds.size).astype(np.int64)
    tp = np.r_[0, np.cumsum(pos_at)]
    fp = np.r_[0, np.cumsum(neg_at)]
    # integer trapezoid sum: exact until the final division
    twice_area = int((np.diff(fp) * (tp[1:] + tp[:-1])).sum())
    auc = twice_area / (2 * n_pos * n_neg)
    curve = RocCurve(fp / n_neg, tp / n_pos, np.r_[np.inf, thresholds])
    return curve, auc


def _summary(values):
    defined = [v for v in values if not math.isnan(v)]
    m = len(defined)
    mean = float(np.mean(defined)) if m else NAN
    sd = float(np.std(defined, ddof=1)) if m >= 2 else NAN
    return {"mean": mean, "sd": sd, "defined": m}


@dataclass
class CvReport:
    folds: list
    k: int
    seed: int
    fidelity_mode: str
    pipeline: dict
    test_scores: np.ndarray = field(repr=False, default=None)
    test_truth: np.ndarray = field(repr=False, default=None)
    test_index: np.ndarray = field(repr=False, default=None)

    def metric_values(self, name):
        return [getattr(rec.metrics, name) for rec in self.folds]

    @property
    def summary(self):
        return {name: _summary(self.metric_values(name)) for name in METRICS}

    def pooled_roc(self):
        """ROC of all test-fold scores concatenated over folds."""
        if self.test_scores is None or self.test_scores.size == 0:
            raise SingleClass("no scored test instances")
        return roc_curve_auc(self.test_scores, self.test_truth)

    def to_dict(self):
        folds = []
        for rec in self.folds:
            entry = {"fold": rec.fold, "n_test": rec.n_test}
            entry.update({m: _json_value(getattr(rec.metrics, m)) for m in METRICS})
            if rec.counts is not None:
                entry["counts"] = vars(rec.counts).copy()
            if rec.n_features_selected is not None:
                entry["n_features_selected"] = rec.n_features_selected
            if rec.diagnostics:
                entry["diagnostics"] = list(rec.diagnostics)
            folds.append(entry)
        summary = {
            m: {key: _json_value(val) for key, val in s.items()}
            for m, s in self.summary.items()
        }
        flags = [m for m, s in self.summary.items() if s["defined"] < self.k]
        out = {
            **self.pipeline,
            "k": self.k,
            "seed": self.seed,
            "fidelity_mode": self.fidelity_mode,
            "folds": folds,
            "summary": summary,
        }
        if flags:
            out["undefined_folds"] = flags
        return out


def _describe(estimator):
    if estimator is None:
        return None
    return {"class": type(estimator).__name__, "params": estimator.get_params()}


def _diagnostic(exc):
    if isinstance(exc, PipelineError):
        return f"{exc.module}:{exc.kind}: {exc}"
    return f"{type(exc).__name__}: {exc}"


def _fit_preprocessing(imputer, selector, values, mask, y):
    imp = clone(imputer).fit(values, mask=mask)
    X = imp.transform(values, mask=mask)
    sel = None
    if selector is not None:
        sel = clone(selector).fit(X, y)
    return imp, sel


def cross_validate(
    data,
    imputer,
    selector,
    classifier,
    k=5,
    stream=None,
    fidelity_mode="per_fold",
    names=None,
):
    """k-fold cross-validation of one imputer/selector/classifier pipeline.

    In ``per_fold`` mode the imputer and selector are fitted on each training
    fold only and applied to both folds. In ``whole_dataset`` mode they are
    fitted once on all rows before splitting. A fold whose stages fail is
    recorded with undefined metrics and a diagnostic.
    """
    if fidelity_mode not in FIDELITY_MODES:
        raise ValueError(f"fidelity_mode must be one of {FIDELITY_MODES}")
    if stream is None:
        raise ValueError("an explicit random stream is required")
    values, mask, y = data.values, data.mask, data.labels
    assignment = stratified_kfold(y, k, stream)

    shared = None
    if fidelity_mode == "whole_dataset":
        imp, sel = _fit_preprocessing(imputer, selector, values, mask, y)
        X_all = imp.transform(values, mask=mask)
        if sel is not None:
            X_all = sel.transform(X_all)
        shared = (imp, sel, X_all)

    records, scores, truth, index = [], [], [], []
    for f in range(k):
        test = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        rec = FoldRecord(fold=f, metrics=FoldMetrics(), n_test=int(test.size))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                if shared is None:
                    imp, sel = _fit_preprocessing(
                        imputer, selector, values[train], mask[train], y[train]
                    )
                    X_train = imp.transform(values[train], mask=mask[train])
                    X_test = imp.transform(values[test], mask=mask[test])
                    if sel is not None:
                        X_train, X_test = sel.transform(X_train), sel.transform(X_test)
                else:
                    imp, sel, X_all = shared
                    X_train, X_test = X_all[train], X_all[test]
                rec.imputer, rec.selector = imp, sel
                rec.n_features_selected = int(X_train.shape[1])
                clf = clone(classifier).fit(X_train, y[train])
                rec.classifier = clf
                s = clf.decision_function(X_test)
                pred = (s >= 0).astype(int)
            except (PipelineError, ValueError, ArithmeticError) as exc:
                rec.diagnostics.append(_diagnostic(exc))
                records.append(rec)
                continue
        rec.diagnostics.extend(f"warning: {w.message}" for w in caught)
        counts = confusion_counts(y[test], pred)
        m = binary_metrics(counts)
        truth_f = y[test]
        auc = NAN
        if 0 < truth_f.sum() < truth_f.size:
            auc = roc_curve_auc(s, truth_f)[1]
        rec.metrics = FoldMetrics(m.acc, auc, m.sen, m.spe)
        rec.counts = counts
        records.append(rec)
        scores.append(s)
        truth.append(truth_f)
        index.append(test)

    pipeline = dict(names or {})
    pipeline.update(
        {
            "imputer_spec": _describe(imputer),
            "selector_spec": _describe(selector),
            "classifier_spec": _describe(classifier),
        }
    )
    return CvReport(
        folds=records,
        k=k,
        seed=stream.seed,
        fidelity_mode=fidelity_mode,
        pipeline=pipeline,
        test_scores=np.concatenate(scores) if scores else np.empty(0),
        test_truth=np.concatenate(truth) if truth else np.empty(0, dtype=int),
        test_index=np.concatenate(index) if index else np.empty(0, dtype=int),
    )


def cell_stream(stream, imputer_name, classifier_name):
    return stream.child(f"cell/{imputer_name}/{classifier_name}")


@dataclass
class GridCell:
    imputer: str
    classifier: str
    report: CvReport = None
    roc: RocCurve = None
    pooled_auc: float = NAN
    error: str = None

    def to_dict(self):
        out = {"imputer": self.imputer, "classifier": self.classifier}
        if self.error is not None:
            out["failed"] = True
            out["error"] = self.error
            return out
        body = self.report.to_dict()
        out["folds"] = body["folds"]
        out["summary"] = body["summary"]
        if "undefined_folds" in body:
            out["undefined_folds"] = body["undefined_folds"]
        out["pooled_auc"] = _json_value(self.pooled_auc)
        out["pipeline"] = {
            key: body[key] for key in ("imputer_spec", "selector_spec", "classifier_spec")
        }
        return out


@dataclass
class GridReport:
    seed: int
    fidelity_mode: str
    k: int
    cells: list
    config: dict = field(default_factory=dict)

    def cell(self, imputer, classifier):
        for c in self.cells:
            if c.imputer == imputer and c.classifier == classifier:
                return c
        raise KeyError((imputer, classifier))

    def to_dict(self):
        return {
            "seed": self.seed,
            "fidelity_mode": self.fidelity_mode,
            "k": self.k,
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def summary_csv(self, comment=None):
        lines = [f"# {comment}"] if comment else []
        cols = ["classifier", "imputer"]
        for m in METRICS:
            cols += [f"{m}_mean", f"{m}_sd"]
        lines.append(",".join(cols))
        for c in self.cells:
            row = [c.classifier, c.imputer]
            if c.report is None:
                row += ["NaN"] * (2 * len(METRICS))
            else:
                summary = c.report.summary
                for m in METRICS:
                    row += [_num(summary[m]["mean"]), _num(summary[m]["sd"])]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _run_cell(data, imp_name, imputer, clf_name, classifier, selector, k, stream, mode):
    cell = GridCell(imp_name, clf_name)
    try:
        report = cross_validate(
            data, imputer, selector, classifier, k,
            cell_stream(stream, imp_name, clf_name), mode,
            names={"imputer": imp_name, "classifier": clf_name},
        )
    except (PipelineError, ValueError, ArithmeticError) as exc:
        cell.error = _diagnostic(exc)
        return cell
    cell.report = report
    try:
        cell.roc, cell.pooled_auc = report.pooled_roc()
    except PipelineError:
        pass
    return cell


def grid_evaluate(
    data,
    imputers,
    classifiers,
    selector=None,
    k=5,
    stream=None,
    fidelity_mode="per_fold",
    jobs=1,
    config=None,
):
    """Cross-validate every (imputer, classifier) pair.

    ``imputers`` and ``classifiers`` are sequences of ``(name, estimator)``.
    Each cell draws its folds from a child stream keyed by both names, so
    results do not depend on list order or on ``jobs``. Cells are listed
    classifier-major, as in the usual results table.
    """
    imputers, classifiers = list(imputers), list(classifiers)
    if not imputers or not classifiers:
        raise ValueError("imputer and classifier lists must be nonempty")
    if stream is None:
        raise ValueError("an explicit random stream is required")
    tasks = [
        (data, imp_name, imp, clf_name, clf, selector, k, stream, fidelity_mode)
        for clf_name, clf in classifiers
        for imp_name, imp in imputers
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(lambda t: _run_cell(*t), tasks))
    else:
        cells = [_run_cell(*t) for t in tasks]
    return GridReport(stream.seed, fidelity_mode, k, cells, dict(config or {}))
