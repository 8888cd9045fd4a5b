"""Nested cross-validation protocol, metrics, and cohort statistics.

The outer loop estimates generalization with stratified shuffle splits; the
inner loop drives Bayesian hyperparameter tuning on mean validation AUC.
Feature pipelines are fit per outer training fold and never see test rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .domain import FEATURE_BY_NAME, PatientRecord
from .features import FeaturePipelineState, fit_feature_pipeline
from .ingest import CohortTable, round_half_up
from .models import (
    ModelConfig,
    ModelKind,
    TrainedModel,
    TrainingData,
    TrainingDivergedError,
    apply_dl_params,
    build_backbone,
    build_multi_input_model,
    clone_net_for_training,
    compute_frozen_features,
    default_search_space,
    guideline_classify,
    train,
    train_baseline,
)
from .polarmap import compose_quadrants, prepare_for_backbone
from .seeding import derive_seed
from .tuning import SearchSpace, bayesian_tune

OUTER_FOLDS = 5
OUTER_TRAIN_FRACTION = 10.0 / 11.0
INNER_FOLDS = 4
INNER_TRAIN_FRACTION = 9.0 / 10.0

METRIC_NAMES = ("auc", "accuracy", "sensitivity", "specificity")

DISPLAY_NAMES = {
    ModelKind.MULTI_INPUT_DL: "multi-input DL",
    ModelKind.ENET: "ENET",
    ModelKind.SVM: "SVM",
    ModelKind.ADA: "ADA",
    ModelKind.RF: "RF",
    ModelKind.GUIDELINE: "Guideline",
}


class Split(NamedTuple):
    train: np.ndarray
    test: np.ndarray


class FoldEvaluationError(RuntimeError):
    def __init__(self, kind: ModelKind, fold_index: int):
        super().__init__(f"evaluation of {kind.value} failed on outer fold {fold_index}")
        self.kind = kind
        self.fold_index = fold_index


def stratified_shuffle_split(
    labels: np.ndarray, k: int, train_fraction: float, seed: int
) -> list[Split]:
    """k independent stratified splits (test = complement of train).

    Per-class train allocation is round(class_count * fraction), adjusted by
    at most one sample per class to hit the exact global train size.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie in (0, 1)")
    y = np.asarray(labels).astype(int)
    classes = np.unique(y)
    counts = {int(c): int((y == c).sum()) for c in classes}
    short = [c for c, n in counts.items() if n < k]
    if short:
        raise ValueError(f"classes {short} have fewer than k={k} samples")

    n = len(y)
    target = round_half_up(n * train_fraction)
    exact = {c: counts[c] * train_fraction for c in counts}
    alloc = {c: round_half_up(exact[c]) for c in counts}
    for c in alloc:
        alloc[c] = min(max(alloc[c], 0), counts[c])
    while sum(alloc.values()) > target:
        c = max(alloc, key=lambda c: (alloc[c] - exact[c], c))  # most over-allocated
        alloc[c] -= 1
    while sum(alloc.values()) < target:
        c = min(alloc, key=lambda c: (alloc[c] - exact[c], c))  # most under-allocated
        alloc[c] += 1

    rng = np.random.default_rng(seed)
    folds: list[Split] = []
    for _ in range(k):
        train_parts, test_parts = [], []
        for c in sorted(counts):
            members = np.flatnonzero(y == c)
            perm = rng.permutation(members)
            train_parts.append(perm[: alloc[c]])
            test_parts.append(perm[alloc[c]:])
        folds.append(
            Split(np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts)))
        )
    return folds


@dataclass(frozen=True)
class FoldPlan:
    """Outer and inner split indices; inner indices live inside their outer train set."""

    outer_folds: tuple[Split, ...]
    inner_folds: tuple[tuple[Split, ...], ...]
    seed: int


def build_fold_plan(
    labels: np.ndarray,
    seed: int,
    outer_k: int = OUTER_FOLDS,
    outer_train_fraction: float = OUTER_TRAIN_FRACTION,
    inner_k: int = INNER_FOLDS,
    inner_train_fraction: float = INNER_TRAIN_FRACTION,
) -> FoldPlan:
    y = np.asarray(labels).astype(int)
    outer = stratified_shuffle_split(y, outer_k, outer_train_fraction, derive_seed(seed, "outer"))
    inner_all = []
    for i, fold in enumerate(outer):
        pool = fold.train
        local = stratified_shuffle_split(
            y[pool], inner_k, inner_train_fraction, derive_seed(seed, "inner", i)
        )
        inner_all.append(tuple(Split(pool[s.train], pool[s.test]) for s in local))
    return FoldPlan(outer_folds=tuple(outer), inner_folds=tuple(inner_all), seed=seed)


def fold_plan_violations(plan: FoldPlan, labels: np.ndarray) -> list[str]:
    """Exhaustive audit: disjointness, containment and per-class stratification."""
    y = np.asarray(labels).astype(int)
    problems: list[str] = []

    def check_split(split: Split, pool: np.ndarray, tag: str) -> None:
        tr, te = set(split.train.tolist()), set(split.test.tolist())
        if tr & te:
            problems.append(f"{tag}: train and test overlap")
        if not (tr | te) <= set(pool.tolist()):
            problems.append(f"{tag}: indices escape the parent pool")
        if len(tr) + len(te) != len(pool):
            problems.append(f"{tag}: split does not cover the pool")
        frac = len(tr) / len(pool)
        for c in np.unique(y[pool]):
            pool_c = int((y[pool] == c).sum())
            got = int((y[split.train] == c).sum())
            if abs(got - frac * pool_c) > 1.0:
                problems.append(
                    f"{tag}: class {c} train count {got} deviates from "
                    f"proportional {frac * pool_c:.2f} by more than 1"
                )

    everything = np.arange(len(y))
    for i, fold in enumerate(plan.outer_folds):
        check_split(fold, everything, f"outer fold {i}")
        outer_train = set(fold.train.tolist())
        outer_test = set(fold.test.tolist())
        for j, inner in enumerate(plan.inner_folds[i]):
            check_split(inner, fold.train, f"inner fold {i}.{j}")
            inner_all = set(inner.train.tolist()) | set(inner.test.tolist())
            if not inner_all <= outer_train:
                problems.append(f"inner fold {i}.{j}: indices outside outer train")
            if inner_all & outer_test:
                problems.append(f"inner fold {i}.{j}: touches the outer test set")
    return problems


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    auc: float | None
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def concordance_auc(y_true: np.ndarray, y_prob: np.ndarray) -> float:
    """P(random positive outscores random negative), ties counting 1/2."""
    y = np.asarray(y_true).astype(int)
    p = np.asarray(y_prob, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = stats.rankdata(p)  # average ranks resolve ties as 1/2
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(y_true: np.ndarray, y_prob: np.ndarray, threshold: float = 0.5) -> Metrics:
    """Confusion-matrix metrics at a strict probability threshold, plus AUC.

    Undefined entries (single-class AUC, empty sensitivity/specificity
    denominators) are reported as None.
    """
    y = np.asarray(y_true).astype(int)
    p = np.asarray(y_prob, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("y_true and y_prob must align")
    pred = p > threshold
    tp = int(np.sum(pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    n = len(y)
    accuracy = (tp + tn) / n if n else None
    sensitivity = tp / (tp + fn) if (tp + fn) else None
    specificity = tn / (tn + fp) if (tn + fp) else None
    try:
        auc = concordance_auc(y, p)
    except ValueError:
        auc = None
    return Metrics(auc=auc, accuracy=accuracy, sensitivity=sensitivity, specificity=specificity)


def roc_points(y_true: np.ndarray, y_prob: np.ndarray) -> np.ndarray:
    """ROC polyline from (0,0) to (1,1), one vertex per distinct score.

    The trapezoidal area under these points equals concordance_auc exactly
    (ties form diagonal segments).
    """
    y = np.asarray(y_true).astype(int)
    p = np.asarray(y_prob, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-p, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(y):
        j = i
        while j < len(y) and p[order[j]] == p[order[i]]:
            if y[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return np.array(points, dtype=np.float64)


def trapezoid_auc(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def aggregate_metrics(per_fold: Sequence[Metrics]) -> dict[str, tuple[float | None, float | None]]:
    """Mean and (k-1)-denominator SD per metric over folds with defined values."""
    out: dict[str, tuple[float | None, float | None]] = {}
    for name in METRIC_NAMES:
        vals = [getattr(m, name) for m in per_fold if getattr(m, name) is not None]
        if not vals:
            out[name] = (None, None)
        elif len(vals) == 1:
            out[name] = (float(vals[0]), None)
        else:
            arr = np.array(vals, dtype=np.float64)
            out[name] = (float(arr.mean()), float(arr.std(ddof=1)))
    return out


@dataclass
class FoldResult:
    fold_index: int
    metrics: Metrics
    roc: np.ndarray
    best_params: dict
    model: TrainedModel | None = None


@dataclass
class EvaluationReport:
    model_kind: ModelKind
    per_fold: tuple[FoldResult, ...]
    aggregate: dict[str, tuple[float | None, float | None]]

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind.value,
            "per_fold": [
                {
                    "fold_index": f.fold_index,
                    "metrics": f.metrics.as_dict(),
                    "best_params": f.best_params,
                    "roc": [[float(a), float(b)] for a, b in f.roc],
                }
                for f in self.per_fold
            ],
            "aggregate": {
                name: {"mean": m, "sd": s} for name, (m, s) in self.aggregate.items()
            },
        }


# ---------------------------------------------------------------------------
# Evaluation data and model families
# ---------------------------------------------------------------------------

@dataclass
class EvaluationData:
    """Labeled cohort rows plus (optionally) precomputed backbone inputs."""

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    records: tuple[PatientRecord, ...]
    patient_ids: tuple[str, ...]
    images: np.ndarray | None = None  # (n, 128, 128, 3) centered backbone inputs
    composites: np.ndarray | None = None  # (n, 128, 128) raw composite pixels

    @classmethod
    def from_cohort(cls, cohort: CohortTable, polarmaps: dict | None = None) -> "EvaluationData":
        idx = cohort.labeled_indices()
        if len(idx) == 0:
            raise ValueError("cohort has no labeled patients")
        records = tuple(cohort.records[i] for i in idx)
        images = composites = None
        if polarmaps is not None:
            comp_list, img_list = [], []
            for r in records:
                composite = compose_quadrants(polarmaps[r.patient_id])
                comp_list.append(composite.pixels)
                img_list.append(prepare_for_backbone(composite).tensor.astype(np.float32))
            composites = np.stack(comp_list)
            images = np.stack(img_list)
        return cls(
            feature_names=cohort.feature_names,
            X=cohort.feature_matrix(idx),
            y=cohort.label_array(idx),
            records=records,
            patient_ids=tuple(r.patient_id for r in records),
            images=images,
            composites=composites,
        )


class ModelFamily:
    """One tunable model kind: search space, per-fold fit, prediction."""

    kind: ModelKind

    def search_space(self) -> SearchSpace:
        return default_search_space(self.kind)

    def fit(
        self,
        params: dict,
        data: EvaluationData,
        train_idx: np.ndarray,
        pipe: FeaturePipelineState,
        seed: int,
    ) -> TrainedModel:
        raise NotImplementedError

    def predict(self, model: TrainedModel, data: EvaluationData, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class TabularBaselineFamily(ModelFamily):
    def __init__(self, kind: ModelKind):
        if kind not in (ModelKind.ENET, ModelKind.SVM, ModelKind.ADA, ModelKind.RF):
            raise ValueError(f"{kind} is not a tabular baseline")
        self.kind = kind

    def fit(self, params, data, train_idx, pipe, seed):
        return train_baseline(
            self.kind,
            params,
            pipe.transform(data.X[train_idx]),
            data.y[train_idx],
            seed=seed,
            pipeline_state=pipe,
        )

    def predict(self, model, data, idx):
        return model.predict_proba_batch(tabular=model.pipeline_state.transform(data.X[idx]))


class DeepModelFamily(ModelFamily):
    """Multi-input deep model with a shared backbone and frozen-feature cache."""

    kind = ModelKind.MULTI_INPUT_DL

    def __init__(self, base_config: ModelConfig, data: EvaluationData):
        if data.images is None:
            raise ValueError("deep model evaluation requires polarmap images")
        self.base_config = base_config
        self.backbone = build_backbone(base_config.image_branch)
        self._frozen: np.ndarray | None = None
        self._template = build_multi_input_model(base_config, 1, backbone=self.backbone)

    def frozen_features(self, data: EvaluationData) -> np.ndarray:
        if self._frozen is None:
            self._frozen = compute_frozen_features(self._template, data.images)
        return self._frozen

    def fit(self, params, data, train_idx, pipe, seed):
        config = apply_dl_params(self.base_config, params, seed=seed)
        Xs = pipe.transform(data.X[train_idx])
        net = clone_net_for_training(config, Xs.shape[1], self.backbone)
        frozen = self.frozen_features(data)
        td = TrainingData(
            tabular=Xs, labels=data.y[train_idx], frozen_features=frozen[train_idx]
        )
        return train(net, td, config, pipeline_state=pipe)

    def predict(self, model, data, idx):
        Xs = model.pipeline_state.transform(data.X[idx])
        return model.predict_proba_batch(
            tabular=Xs, frozen_features=self.frozen_features(data)[idx]
        )


def make_families(
    kinds: Sequence[ModelKind], data: EvaluationData, dl_config: ModelConfig
) -> list[ModelFamily]:
    families: list[ModelFamily] = []
    for kind in kinds:
        if kind == ModelKind.GUIDELINE:
            continue  # rule-based; evaluated on the whole cohort, not per fold
        if kind == ModelKind.MULTI_INPUT_DL:
            families.append(DeepModelFamily(dl_config, data))
        else:
            families.append(TabularBaselineFamily(kind))
    return families


# ---------------------------------------------------------------------------
# Nested cross-validation
# ---------------------------------------------------------------------------

def fit_fold_pipelines(
    data: EvaluationData, plan: FoldPlan, master_seed: int
) -> list[FeaturePipelineState]:
    """Fit the feature cascade once per outer training fold."""
    pipes = []
    for i, fold in enumerate(plan.outer_folds):
        pipes.append(
            fit_feature_pipeline(
                data.X[fold.train],
                data.y[fold.train],
                data.feature_names,
                seed=derive_seed(master_seed, "pipeline", i),
                fold_id=f"outer-{i}",
            )
        )
    return pipes


def nested_cv_evaluate(
    model_family: ModelFamily,
    data: EvaluationData,
    fold_plan: FoldPlan,
    tuner_budget: int,
    master_seed: int,
    pipelines: Sequence[FeaturePipelineState] | None = None,
) -> EvaluationReport:
    """Full nested protocol for one model family.

    Per outer fold: tune on mean inner-validation AUC, retrain on the whole
    outer training fold with the winning hyperparameters, score the untouched
    test fold.  Any fold failure aborts with the fold index.
    """
    if pipelines is None:
        pipelines = fit_fold_pipelines(data, fold_plan, master_seed)
    kind = model_family.kind
    fold_results: list[FoldResult] = []
    for i, fold in enumerate(fold_plan.outer_folds):
        try:
            pipe = pipelines[i]

            def objective(params: dict) -> float:
                aucs = []
                for j, inner in enumerate(fold_plan.inner_folds[i]):
                    try:
                        m = model_family.fit(
                            params, data, inner.train, pipe,
                            seed=derive_seed(master_seed, "inner", kind.value, i, j),
                        )
                    except TrainingDivergedError:
                        return float("nan")
                    probs = model_family.predict(m, data, inner.test)
                    aucs.append(concordance_auc(data.y[inner.test], probs))
                return float(np.mean(aucs))

            result = bayesian_tune(
                objective,
                model_family.search_space(),
                budget=tuner_budget,
                seed=derive_seed(master_seed, "tune", kind.value, i),
            )
            model = model_family.fit(
                result.best_params, data, fold.train, pipe,
                seed=derive_seed(master_seed, "final", kind.value, i),
            )
            probs = model_family.predict(model, data, fold.test)
            fold_results.append(
                FoldResult(
                    fold_index=i,
                    metrics=compute_metrics(data.y[fold.test], probs),
                    roc=roc_points(data.y[fold.test], probs),
                    best_params=result.best_params,
                    model=model,
                )
            )
        except Exception as exc:
            raise FoldEvaluationError(kind, i) from exc
    return EvaluationReport(
        model_kind=kind,
        per_fold=tuple(fold_results),
        aggregate=aggregate_metrics([f.metrics for f in fold_results]),
    )


def evaluate_model_families(
    data: EvaluationData,
    fold_plan: FoldPlan,
    families: Sequence[ModelFamily],
    tuner_budget: int,
    master_seed: int,
    jobs: int = 1,
) -> dict[ModelKind, EvaluationReport]:
    """Evaluate several families over one fold plan, sharing fitted pipelines.

    All randomness is keyed on (master seed, family, fold), so any schedule
    yields identical results; jobs > 1 runs families concurrently.
    """
    pipelines = fit_fold_pipelines(data, fold_plan, master_seed)

    def run(family: ModelFamily):
        return family.kind, nested_cv_evaluate(
            family, data, fold_plan, tuner_budget, master_seed, pipelines=pipelines
        )

    if jobs <= 1 or len(families) <= 1:
        results = [run(f) for f in families]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, families))
    return dict(results)


# ---------------------------------------------------------------------------
# Guideline evaluation and cohort statistics
# ---------------------------------------------------------------------------

def guideline_metrics(records: Sequence[PatientRecord], labels: np.ndarray) -> Metrics:
    """Accuracy/sensitivity/specificity of the rule classifier; AUC undefined."""
    y = np.asarray(labels).astype(int)
    preds = np.array(
        [guideline_classify(r).predicted_responder for r in records], dtype=bool
    )
    tp = int(np.sum(preds & (y == 1)))
    tn = int(np.sum(~preds & (y == 0)))
    fp = int(np.sum(preds & (y == 0)))
    fn = int(np.sum(~preds & (y == 1)))
    return Metrics(
        auc=None,
        accuracy=(tp + tn) / len(y) if len(y) else None,
        sensitivity=tp / (tp + fn) if (tp + fn) else None,
        specificity=tn / (tn + fp) if (tn + fp) else None,
    )


def welch_t_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample unequal-variance t-test p-value (degenerate cases defined)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.std(ddof=1) == 0 and b.std(ddof=1) == 0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def chi_square_pvalue(table: np.ndarray) -> tuple[float | None, str]:
    """Chi-square test of independence without continuity correction.

    Returns (None, reason) when any expected cell count is zero.
    """
    obs = np.asarray(table, dtype=np.float64)
    row = obs.sum(axis=1, keepdims=True)
    col = obs.sum(axis=0, keepdims=True)
    total = obs.sum()
    if total == 0 or np.any(row == 0) or np.any(col == 0):
        return None, "not applicable (zero expected count)"
    expected = row @ col / total
    if np.any(expected == 0):
        return None, "not applicable (zero expected count)"
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    p = float(stats.chi2.sf(chi2, df=(obs.shape[0] - 1) * (obs.shape[1] - 1)))
    return p, ""


@dataclass(frozen=True)
class VariableSummary:
    name: str
    binary: bool
    overall: str
    responders: str
    nonresponders: str
    p_value: float | None
    note: str = ""


def _mean_sd(values: np.ndarray) -> str:
    return f"{values.mean():.1f} ± {values.std(ddof=1):.1f}"


def _count_pct(flags: np.ndarray) -> str:
    n = int(flags.sum())
    return f"{n} ({100.0 * n / len(flags):.1f}%)"


def baseline_table(cohort: CohortTable, labels: Sequence | None = None) -> list[VariableSummary]:
    """Per-variable class comparison: mean±SD + t-test, or count(%) + chi-square."""
    if labels is None:
        idx = cohort.labeled_indices()
        y = cohort.label_array(idx)
    else:
        idx = np.arange(len(cohort))
        y = np.array([int(lab.responder) for lab in labels])
    if int((y == 1).sum()) < 2 or int((y == 0).sum()) < 2:
        raise ValueError("need at least 2 samples per class")

    X = cohort.feature_matrix(idx)
    rows: list[VariableSummary] = []
    for j, name in enumerate(cohort.feature_names):
        col = X[:, j]
        resp, non = col[y == 1], col[y == 0]
        if FEATURE_BY_NAME[name].binary:
            flags = col.astype(bool)
            table = np.array(
                [
                    [int(flags[y == 1].sum()), int((~flags[y == 1]).sum())],
                    [int(flags[y == 0].sum()), int((~flags[y == 0]).sum())],
                ]
            )
            p, note = chi_square_pvalue(table)
            rows.append(
                VariableSummary(
                    name=name,
                    binary=True,
                    overall=_count_pct(flags),
                    responders=_count_pct(flags[y == 1]),
                    nonresponders=_count_pct(flags[y == 0]),
                    p_value=p,
                    note=note,
                )
            )
        else:
            rows.append(
                VariableSummary(
                    name=name,
                    binary=False,
                    overall=_mean_sd(col),
                    responders=_mean_sd(resp),
                    nonresponders=_mean_sd(non),
                    p_value=welch_t_pvalue(resp, non),
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _fmt_metric(mean: float | None, sd: float | None) -> str:
    if mean is None:
        return "N/A"
    if sd is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} ({sd:.2f})"


def render_performance_table(
    reports: dict[ModelKind, EvaluationReport],
    guideline: Metrics | None = None,
) -> str:
    """Combined performance table, one row per model, best value per column marked *."""
    order = [
        ModelKind.MULTI_INPUT_DL,
        ModelKind.ENET,
        ModelKind.SVM,
        ModelKind.ADA,
        ModelKind.RF,
    ]
    rows: list[tuple[str, dict[str, tuple[float | None, float | None]]]] = []
    for kind in order:
        if kind in reports:
            rows.append((DISPLAY_NAMES[kind], reports[kind].aggregate))
    if guideline is not None:
        rows.append(
            (
                DISPLAY_NAMES[ModelKind.GUIDELINE],
                {name: (getattr(guideline, name), None) for name in METRIC_NAMES},
            )
        )
    if not rows:
        return "(no models evaluated)\n"

    best: dict[str, float] = {}
    for name in METRIC_NAMES:
        vals = [agg[name][0] for _, agg in rows if agg[name][0] is not None]
        if vals:
            best[name] = max(vals)

    header = ["Model", "AUC", "Accuracy", "Sensitivity", "Specificity"]
    table_rows = [header]
    for label, agg in rows:
        cells = [label]
        for name in METRIC_NAMES:
            mean, sd = agg[name]
            cell = _fmt_metric(mean, sd)
            if mean is not None and name in best and mean == best[name]:
                cell += "*"
            cells.append(cell)
        table_rows.append(cells)

    widths = [max(len(r[c]) for r in table_rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table_rows]
    lines.insert(1, "-" * len(lines[0]))
    lines.append("")
    lines.append("Metrics are mean (standard deviation) across outer folds; * marks the")
    lines.append("best value in each column; N/A = not applicable.")
    return "\n".join(lines) + "\n"


def _fmt_p(p: float | None, note: str) -> str:
    if p is None:
        return f"N/A {note}".strip()
    if p < 0.001:
        return "<0.001"
    return f"{p:.3f}"


def render_baseline_table(rows: Sequence[VariableSummary]) -> str:
    header = ["Variable", "Overall", "Responders", "Non-responders", "P-value"]
    table = [header]
    for r in rows:
        table.append([r.name, r.overall, r.responders, r.nonresponders, _fmt_p(r.p_value, r.note)])
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
