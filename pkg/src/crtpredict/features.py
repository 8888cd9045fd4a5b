"""Tabular feature selection and scaling, fit on training folds only.

The cascade runs in the order: recursive feature elimination (subset size
chosen by cross-validated AUC), then the pairwise correlation filter, then
the near-zero variance filter, then centering/scaling.  Every stage's output
is a subset of its input, and nothing here ever sees held-out rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import StratifiedKFold

NZV_THRESHOLD = 0.01
CORRELATION_CUTOFF = 0.80
RFE_FOLDS = 7


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class FeaturePipelineState:
    """Fitted selection + scaling state for one training fold."""

    selected_features: tuple[str, ...]
    scaler_means: np.ndarray
    scaler_sds: np.ndarray
    fit_fold_id: str
    feature_names: tuple[str, ...]  # full input vocabulary the state indexes into

    def __post_init__(self) -> None:
        means = np.asarray(self.scaler_means, dtype=np.float64).copy()
        sds = np.asarray(self.scaler_sds, dtype=np.float64).copy()
        if means.shape != (len(self.selected_features),) or sds.shape != means.shape:
            raise ValueError("scaler arrays must align with selected_features")
        if np.any(sds <= 0):
            raise ValueError("scaler sds must be strictly positive")
        means.flags.writeable = False
        sds.flags.writeable = False
        object.__setattr__(self, "scaler_means", means)
        object.__setattr__(self, "scaler_sds", sds)
        object.__setattr__(self, "selected_features", tuple(self.selected_features))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def column_indices(self) -> np.ndarray:
        pos = {n: j for j, n in enumerate(self.feature_names)}
        return np.array([pos[n] for n in self.selected_features], dtype=int)

    def transform(self, table: np.ndarray) -> np.ndarray:
        """Standardize rows of the full-vocabulary matrix with training statistics."""
        table = np.atleast_2d(np.asarray(table, dtype=np.float64))
        return (table[:, self.column_indices] - self.scaler_means) / self.scaler_sds


def _as_matrix(table: np.ndarray, names: list[str] | tuple[str, ...]) -> np.ndarray:
    X = np.asarray(table, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError(f"table must be 2-D with {len(names)} columns, got {X.shape}")
    return X


def near_zero_variance_filter(
    table: np.ndarray, names: list[str] | tuple[str, ...], threshold: float = NZV_THRESHOLD
) -> list[str]:
    """Retain features whose sample variance exceeds the threshold."""
    X = _as_matrix(table, names)
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows to estimate variance")
    variances = X.var(axis=0, ddof=1)
    return [n for n, v in zip(names, variances) if v > threshold]


def correlation_filter(
    table: np.ndarray, names: list[str] | tuple[str, ...], cutoff: float = CORRELATION_CUTOFF
) -> list[str]:
    """Drop features until no retained pair has |Pearson r| above the cutoff.

    Offending pairs are visited in descending |r| (ties by lexicographic name
    pair); within a pair, the member with the larger mean absolute correlation
    to the other retained features is dropped (ties drop the lexicographically
    later name).
    """
    X = _as_matrix(table, names)
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows to estimate correlations")
    if np.any(X.std(axis=0, ddof=1) == 0):
        bad = [n for n, s in zip(names, X.std(axis=0, ddof=1)) if s == 0]
        raise ValueError(f"zero-variance columns present (run the variance filter first): {bad}")

    corr = np.corrcoef(X, rowvar=False)
    corr = np.atleast_2d(corr)
    p = len(names)
    pairs = []
    for i in range(p):
        for j in range(i + 1, p):
            r = abs(corr[i, j])
            if r > cutoff:
                a, b = sorted((names[i], names[j]))
                pairs.append((-r, a, b, i if names[i] == a else j, j if names[j] == b else i))
    pairs.sort(key=lambda t: (t[0], t[1], t[2]))

    retained = set(range(p))
    for _, name_a, name_b, ia, ib in pairs:
        if ia not in retained or ib not in retained:
            continue
        others = sorted(retained)

        def mean_abs(k: int) -> float:
            rest = [o for o in others if o != k]
            return float(np.mean(np.abs(corr[k, rest]))) if rest else 0.0

        ma, mb = mean_abs(ia), mean_abs(ib)
        if ma > mb:
            retained.discard(ia)
        elif mb > ma:
            retained.discard(ib)
        else:  # tie: drop the lexicographically later name
            retained.discard(ib if name_b > name_a else ia)
    return [names[i] for i in range(p) if i in retained]


def _elastic_net_logreg(seed: int) -> LogisticRegression:
    return LogisticRegression(
        penalty="elasticnet",
        solver="saga",
        l1_ratio=0.5,
        C=1.0,
        max_iter=300,
        tol=1e-3,
        random_state=seed,
    )


def _standardize_guarded(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)  # constant columns get coefficient 0 anyway
    return (X - mu) / sd


def _elimination_path(X: np.ndarray, y: np.ndarray, seed: int) -> dict[int, list[int]]:
    """Map subset size -> surviving column indices, eliminating one per step.

    The feature with the smallest absolute coefficient on standardized inputs
    is removed at each step; ties drop the earliest column.
    """
    cols = list(range(X.shape[1]))
    path = {len(cols): list(cols)}
    while len(cols) > 1:
        model = _elastic_net_logreg(seed).fit(_standardize_guarded(X[:, cols]), y)
        drop = int(np.argmin(np.abs(model.coef_[0])))
        cols.pop(drop)
        path[len(cols)] = list(cols)
    return path


def rfe_select(
    table: np.ndarray,
    names: list[str] | tuple[str, ...],
    labels: np.ndarray,
    folds: int = RFE_FOLDS,
    seed: int = 0,
) -> list[str]:
    """Cross-validated recursive feature elimination.

    Per fold, the full elimination path is computed on the training part and
    every subset size is scored by validation AUC; the size with the best mean
    AUC across folds wins, and the final subset is the elimination path on the
    whole table cut at that size.
    """
    X = _as_matrix(table, names)
    y = np.asarray(labels, dtype=int)
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("labels are single-class; RFE needs both classes")
    if n_pos < folds or n_neg < folds:
        raise InsufficientDataError(
            f"need at least {folds} samples of each class, got {n_pos}/{n_neg}"
        )

    p = X.shape[1]
    scores = np.full((folds, p + 1), np.nan)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for f, (tr, va) in enumerate(splitter.split(X, y)):
        path = _elimination_path(X[tr], y[tr], seed)
        for size, cols in path.items():
            Xtr, Xva = X[np.ix_(tr, cols)], X[np.ix_(va, cols)]
            mu = Xtr.mean(axis=0)
            sd = Xtr.std(axis=0, ddof=1)
            sd = np.where(sd > 0, sd, 1.0)
            model = _elastic_net_logreg(seed).fit((Xtr - mu) / sd, y[tr])
            probs = model.predict_proba((Xva - mu) / sd)[:, 1]
            scores[f, size] = roc_auc_score(y[va], probs)

    mean_auc = np.nanmean(scores[:, 1:], axis=0)
    best_size = int(np.nanargmax(mean_auc) + 1)  # first maximum = smallest size
    final_cols = _elimination_path(X, y, seed)[best_size]
    keep = set(final_cols)
    return [n for j, n in enumerate(names) if j in keep]


def fit_scaler(
    table: np.ndarray, names: list[str] | tuple[str, ...], fold_id: str = "",
    feature_names: tuple[str, ...] | None = None,
) -> FeaturePipelineState:
    """Center/scale statistics (mean, sd with n-1 denominator) from training rows."""
    X = _as_matrix(table, names)
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows to fit the scaler")
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    zero = [n for n, s in zip(names, sds) if s == 0]
    if zero:
        raise ValueError(f"zero standard deviation for {zero} (variance filter missed them?)")
    return FeaturePipelineState(
        selected_features=tuple(names),
        scaler_means=means,
        scaler_sds=sds,
        fit_fold_id=fold_id,
        feature_names=tuple(feature_names) if feature_names is not None else tuple(names),
    )


def apply_scaler(state: FeaturePipelineState, row: np.ndarray) -> np.ndarray:
    """Standardize one already-selected row with training-fold statistics."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape[-1] != len(state.selected_features):
        raise ValueError(
            f"row has {row.shape[-1]} values, expected {len(state.selected_features)}"
        )
    return (row - state.scaler_means) / state.scaler_sds


def fit_feature_pipeline(
    table: np.ndarray,
    labels: np.ndarray,
    names: list[str] | tuple[str, ...],
    seed: int = 0,
    fold_id: str = "",
    rfe_folds: int = RFE_FOLDS,
    correlation_cutoff: float = CORRELATION_CUTOFF,
    nzv_threshold: float = NZV_THRESHOLD,
) -> FeaturePipelineState:
    """Run the full cascade (RFE -> correlation -> NZV -> scaler) on training rows."""
    X = _as_matrix(table, names)
    names = list(names)

    selected = rfe_select(X, names, labels, folds=rfe_folds, seed=seed)
    idx = [names.index(n) for n in selected]
    X_sel = X[:, idx]

    # Constant columns have no defined correlation; they pass through here and
    # the variance filter removes them next, so the final set is unchanged.
    sds = X_sel.std(axis=0, ddof=1)
    varying = [n for n, s in zip(selected, sds) if s > 0]
    constant = [n for n, s in zip(selected, sds) if s == 0]
    if len(varying) >= 2:
        kept = correlation_filter(
            X_sel[:, [selected.index(n) for n in varying]], varying, cutoff=correlation_cutoff
        )
    else:
        kept = varying
    after_corr = [n for n in selected if n in set(kept) | set(constant)]

    idx2 = [names.index(n) for n in after_corr]
    final = near_zero_variance_filter(X[:, idx2], after_corr, threshold=nzv_threshold)
    if not final:
        raise ValueError(f"feature pipeline ({fold_id or 'fit'}) eliminated every feature")

    idx3 = [names.index(n) for n in final]
    return fit_scaler(X[:, idx3], final, fold_id=fold_id, feature_names=tuple(names))
