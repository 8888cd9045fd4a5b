"""Model zoo: the multi-input deep model, four tabular baselines, and the
rule-based guideline classifier.

The deep model fuses a VGG16-topology convolutional branch (pretrained
weights loadable from a file, otherwise seeded random init; convolutional
blocks frozen except the last ``trainable_blocks``) with an MLP over the
standardized tabular features, through a concatenation + hidden-layer fusion
head ending in a single sigmoid output.

Training exploits frozen-prefix caching: outputs of the frozen part of the
backbone are computed once per image and reused across epochs (and, by the
evaluation driver, across folds and tuning trials).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
import torch
import torch.nn as nn
import torchvision
from sklearn.ensemble import AdaBoostClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from .domain import PatientRecord
from .features import FeaturePipelineState
from .polarmap import BackboneInput
from .seeding import derive_seed
from .tuning import ChoiceParam, FloatParam, IntParam, SearchSpace

# VGG16 convolutional stack layout: (start, end) module slices of the five
# blocks inside torchvision's `features` Sequential.
VGG_BLOCK_SLICES: tuple[tuple[int, int], ...] = ((0, 5), (5, 10), (10, 17), (17, 24), (24, 31))
VGG_NUM_MODULES = 31
VGG_EMBED_DIM = 512

# Conv layer names -> module index of the conv; its activation is index + 1.
VGG_CONV_LAYERS: dict[str, int] = {
    "block1_conv1": 0, "block1_conv2": 2,
    "block2_conv1": 5, "block2_conv2": 7,
    "block3_conv1": 10, "block3_conv2": 12, "block3_conv3": 14,
    "block4_conv1": 17, "block4_conv2": 19, "block4_conv3": 21,
    "block5_conv1": 24, "block5_conv2": 26, "block5_conv3": 28,
}
DEFAULT_CAM_LAYER = "block5_conv3"


class ModelKind(str, Enum):
    MULTI_INPUT_DL = "DL"
    ENET = "ENET"
    SVM = "SVM"
    ADA = "ADA"
    RF = "RF"
    GUIDELINE = "GUIDELINE"


class WeightsLoadError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class ImageBranchConfig:
    weights_source: str = "random"  # path to a state-dict file, or "random"
    trainable_blocks: int = 0
    init_seed: int = 0  # backbone init seed when weights_source == "random"

    def __post_init__(self) -> None:
        if not (0 <= self.trainable_blocks <= 5):
            raise ValueError("trainable_blocks must lie in 0..5")


@dataclass(frozen=True)
class TabularBranchConfig:
    hidden_layers: tuple[int, ...] = (32,)
    dropout: float = 0.2

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        if any(u < 1 for u in self.hidden_layers):
            raise ValueError("hidden layer sizes must be >= 1")
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))


@dataclass(frozen=True)
class FusionHeadConfig:
    hidden_units: int = 16
    dropout: float = 0.2

    def __post_init__(self) -> None:
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 60
    early_stop_patience: int = 8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_patience < 0:
            raise ValueError("batch_size/max_epochs must be >= 1, patience >= 0")


@dataclass(frozen=True)
class ModelConfig:
    image_branch: ImageBranchConfig = field(default_factory=ImageBranchConfig)
    tabular_branch: TabularBranchConfig = field(default_factory=TabularBranchConfig)
    fusion_head: FusionHeadConfig = field(default_factory=FusionHeadConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0


def config_to_dict(config: ModelConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        image_branch=ImageBranchConfig(**{**d["image_branch"]}),
        tabular_branch=TabularBranchConfig(
            hidden_layers=tuple(d["tabular_branch"]["hidden_layers"]),
            dropout=d["tabular_branch"]["dropout"],
        ),
        fusion_head=FusionHeadConfig(**d["fusion_head"]),
        optimizer=OptimizerConfig(**d["optimizer"]),
        seed=d["seed"],
    )


def build_backbone(image_config: ImageBranchConfig) -> nn.Sequential:
    """VGG16 conv stack; pretrained weights from file or seeded random init."""
    if image_config.weights_source == "random":
        torch.manual_seed(image_config.init_seed)
        backbone = torchvision.models.vgg16(weights=None).features
    else:
        backbone = torchvision.models.vgg16(weights=None).features
        _load_backbone_weights(backbone, image_config.weights_source)
    frozen_blocks = 5 - image_config.trainable_blocks
    for start, end in VGG_BLOCK_SLICES[:frozen_blocks]:
        for module in list(backbone)[start:end]:
            for p in module.parameters():
                p.requires_grad_(False)
    return backbone


def _load_backbone_weights(backbone: nn.Sequential, path: str) -> None:
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise WeightsLoadError(f"cannot read weights file {path!r}: {exc}") from exc
    if not isinstance(state, dict):
        raise WeightsLoadError(f"weights file {path!r} does not hold a state dict")
    # Accept either a bare `features` state dict or a full-network dict.
    state = {k.removeprefix("features."): v for k, v in state.items() if not k.startswith("classifier.")}
    own = backbone.state_dict()
    for key, tensor in own.items():
        if key not in state:
            raise WeightsLoadError(f"weights file {path!r}: missing layer {key!r}")
        if state[key].shape != tensor.shape:
            raise WeightsLoadError(
                f"weights file {path!r}: layer {key!r} has shape "
                f"{tuple(state[key].shape)}, expected {tuple(tensor.shape)}"
            )
    backbone.load_state_dict({k: state[k] for k in own})


class MultiInputNet(nn.Module):
    """Image branch + tabular MLP fused into a single pre-sigmoid logit."""

    def __init__(self, config: ModelConfig, n_tabular_features: int, backbone: nn.Sequential):
        super().__init__()
        self.config = config
        self.n_tabular_features = n_tabular_features
        self.backbone = backbone
        tb = config.image_branch.trainable_blocks
        self.split_index = VGG_NUM_MODULES if tb == 0 else VGG_BLOCK_SLICES[5 - tb][0]
        self.pool = nn.AdaptiveAvgPool2d(1)

        layers: list[nn.Module] = []
        width = n_tabular_features
        for units in config.tabular_branch.hidden_layers:
            layers += [nn.Linear(width, units), nn.ReLU(), nn.Dropout(config.tabular_branch.dropout)]
            width = units
        self.tabular_branch = nn.Sequential(*layers)

        self.fusion_head = nn.Sequential(
            nn.Linear(VGG_EMBED_DIM + width, config.fusion_head.hidden_units),
            nn.ReLU(),
            nn.Dropout(config.fusion_head.dropout),
            nn.Linear(config.fusion_head.hidden_units, 1),
        )

    def embed_frozen(self, images: torch.Tensor) -> torch.Tensor:
        """Output of the frozen backbone prefix (the cacheable part)."""
        x = self.backbone[: self.split_index](images)
        if self.split_index == VGG_NUM_MODULES:
            x = self.pool(x).flatten(1)
        return x

    def embed_from_frozen(self, frozen: torch.Tensor) -> torch.Tensor:
        if self.split_index == VGG_NUM_MODULES:
            return frozen
        x = self.backbone[self.split_index:](frozen)
        return self.pool(x).flatten(1)

    def image_embedding(self, images: torch.Tensor) -> torch.Tensor:
        return self.embed_from_frozen(self.embed_frozen(images))

    def logits_from_parts(self, image_embedding: torch.Tensor, tabular: torch.Tensor) -> torch.Tensor:
        tab = self.tabular_branch(tabular)
        return self.fusion_head(torch.cat([image_embedding, tab], dim=1)).squeeze(1)

    def forward(self, images: torch.Tensor, tabular: torch.Tensor) -> torch.Tensor:
        return self.logits_from_parts(self.image_embedding(images), tabular)


def build_multi_input_model(
    config: ModelConfig, n_tabular_features: int, backbone: nn.Sequential | None = None
) -> MultiInputNet:
    """Construct the untrained net; init is deterministic given config seeds."""
    if n_tabular_features < 1:
        raise ValueError("n_tabular_features must be >= 1")
    if backbone is None:
        backbone = build_backbone(config.image_branch)
    torch.manual_seed(derive_seed(config.seed, "net-init"))
    return MultiInputNet(config, n_tabular_features, backbone)


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """(B, 128, 128, 3) channels-last float array -> float32 NCHW tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def compute_frozen_features(
    model: MultiInputNet, images: np.ndarray, batch_size: int = 16
) -> np.ndarray:
    """Run the frozen backbone prefix over a stack of backbone inputs."""
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            outs.append(model.embed_frozen(images_to_tensor(images[i : i + batch_size])))
    return torch.cat(outs).numpy()


@dataclass
class TrainingData:
    """Aligned training arrays; frozen_features short-circuits the backbone prefix."""

    tabular: np.ndarray
    labels: np.ndarray
    images: np.ndarray | None = None
    frozen_features: np.ndarray | None = None


@dataclass
class TrainedModel:
    """A trained predictor plus the preprocessing state it expects."""

    kind: ModelKind
    predictor: object | None
    pipeline_state: FeaturePipelineState | None
    config: dict
    fingerprint: str
    n_tabular_features: int | None = None
    training_summary: dict = field(default_factory=dict)

    def predict_proba_batch(
        self,
        tabular: np.ndarray | None = None,
        images: np.ndarray | None = None,
        records: list[PatientRecord] | None = None,
        frozen_features: np.ndarray | None = None,
    ) -> np.ndarray:
        if self.kind == ModelKind.GUIDELINE:
            if records is None:
                raise ValueError("guideline predictions require patient records")
            return np.array(
                [1.0 if guideline_classify(r).predicted_responder else 0.0 for r in records]
            )
        if tabular is None:
            raise ValueError(f"{self.kind.value} predictions require tabular inputs")
        tabular = np.atleast_2d(np.asarray(tabular, dtype=np.float64))
        if self.kind == ModelKind.MULTI_INPUT_DL:
            net: MultiInputNet = self.predictor  # type: ignore[assignment]
            net.eval()
            with torch.no_grad():
                if frozen_features is not None:
                    frozen = torch.as_tensor(np.asarray(frozen_features, dtype=np.float32))
                elif images is not None:
                    frozen = torch.as_tensor(
                        compute_frozen_features(net, np.atleast_3d(images))
                    )
                else:
                    raise ValueError("deep-model predictions require images")
                emb = net.embed_from_frozen(frozen)
                logits = net.logits_from_parts(emb, torch.as_tensor(tabular, dtype=torch.float32))
                return torch.sigmoid(logits).numpy().astype(np.float64)
        return self.predictor.predict_proba(tabular)[:, 1]  # type: ignore[union-attr]


def _fingerprint(kind: ModelKind, config: dict, seed: int | None = None) -> str:
    payload = json.dumps({"kind": kind.value, "config": config, "seed": seed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _check_two_classes(labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    if len(np.unique(y)) < 2:
        raise ValueError("training labels are single-class")
    return y


def _stratified_holdout(y: np.ndarray, fraction: float, rng: np.random.Generator):
    """Plain stratified holdout used for early stopping when no val set is given."""
    val_idx: list[int] = []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if len(members) < 2:
            raise ValueError("need >= 2 samples per class to hold out a validation split")
        k = max(1, int(np.floor(len(members) * fraction + 0.5)))
        k = min(k, len(members) - 1)
        val_idx.extend(rng.permutation(members)[:k].tolist())
    val = np.array(sorted(val_idx), dtype=int)
    train = np.setdiff1d(np.arange(len(y)), val)
    return train, val


def train(
    model: MultiInputNet,
    train_data: TrainingData,
    config: ModelConfig,
    val_data: TrainingData | None = None,
    pipeline_state: FeaturePipelineState | None = None,
) -> TrainedModel:
    """Adam + binary cross-entropy with early stopping on validation loss.

    Deterministic given config.seed: batch order, dropout and the holdout
    split all derive from it.  The checkpoint with the lowest validation loss
    is restored before returning.
    """
    y = _check_two_classes(train_data.labels)
    rng = np.random.default_rng(derive_seed(config.seed, "train", "shuffle"))
    torch.manual_seed(derive_seed(config.seed, "train", "torch"))

    def frozen_of(data: TrainingData) -> np.ndarray:
        if data.frozen_features is not None:
            return np.asarray(data.frozen_features, dtype=np.float32)
        if data.images is None:
            raise ValueError("training data needs images or precomputed frozen features")
        return compute_frozen_features(model, data.images, config.optimizer.batch_size)

    frozen_all = frozen_of(train_data)
    tab_all = np.asarray(train_data.tabular, dtype=np.float32)

    if val_data is None:
        tr_idx, va_idx = _stratified_holdout(y, 0.1, rng)
        frozen_tr, tab_tr, y_tr = frozen_all[tr_idx], tab_all[tr_idx], y[tr_idx]
        frozen_va, tab_va, y_va = frozen_all[va_idx], tab_all[va_idx], y[va_idx]
    else:
        frozen_tr, tab_tr, y_tr = frozen_all, tab_all, y
        frozen_va = frozen_of(val_data)
        tab_va = np.asarray(val_data.tabular, dtype=np.float32)
        y_va = np.asarray(val_data.labels, dtype=int)

    t_frozen = torch.as_tensor(frozen_tr)
    t_tab = torch.as_tensor(tab_tr)
    t_y = torch.as_tensor(y_tr, dtype=torch.float32)
    v_frozen = torch.as_tensor(frozen_va)
    v_tab = torch.as_tensor(tab_va)
    v_y = torch.as_tensor(np.asarray(y_va), dtype=torch.float32)

    opt = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=config.optimizer.learning_rate
    )
    loss_fn = nn.BCEWithLogitsLoss()

    def val_loss() -> float:
        model.eval()
        with torch.no_grad():
            return float(loss_fn(model.logits_from_parts(model.embed_from_frozen(v_frozen), v_tab), v_y))

    def snapshot() -> dict:
        return {k: v.detach().clone() for k, v in model.state_dict().items()}

    best_val = val_loss()
    best_state = snapshot()
    best_epoch = -1
    stale = 0
    n = len(y_tr)
    history: list[float] = []

    for epoch in range(config.optimizer.max_epochs):
        model.train()
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.optimizer.batch_size):
            idx = perm[start : start + config.optimizer.batch_size]
            opt.zero_grad()
            logits = model.logits_from_parts(
                model.embed_from_frozen(t_frozen[idx]), t_tab[idx]
            )
            loss = loss_fn(logits, t_y[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch)
            loss.backward()
            opt.step()
            epoch_loss += loss.detach().item() * len(idx)
        history.append(epoch_loss / n)

        vl = val_loss()
        if not np.isfinite(vl):
            raise TrainingDivergedError(epoch)
        if vl < best_val:
            best_val = vl
            best_state = snapshot()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > config.optimizer.early_stop_patience:
                break

    model.load_state_dict(best_state)
    model.eval()
    cfg = config_to_dict(config)
    return TrainedModel(
        kind=ModelKind.MULTI_INPUT_DL,
        predictor=model,
        pipeline_state=pipeline_state,
        config=cfg,
        fingerprint=_fingerprint(ModelKind.MULTI_INPUT_DL, cfg, config.seed),
        n_tabular_features=model.n_tabular_features,
        training_summary={
            "epochs_run": len(history),
            "best_epoch": best_epoch,
            "best_val_loss": best_val,
            "train_loss_history": history,
        },
    )


# ---------------------------------------------------------------------------
# Tabular baselines
# ---------------------------------------------------------------------------

class CalibratedSVC:
    """RBF SVM with a monotone (Platt-style) score-to-probability map fit on
    the training scores; AUC is invariant to the calibration."""

    def __init__(self, C: float = 1.0, gamma: float | str = "scale", random_state: int = 0):
        self.svc = SVC(kernel="rbf", C=C, gamma=gamma, random_state=random_state)
        self.calibrator = LogisticRegression(C=1e6, solver="lbfgs", max_iter=1000)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "CalibratedSVC":
        self.svc.fit(X, y)
        scores = self.svc.decision_function(X)
        self.calibrator.fit(scores[:, None], y)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.svc.decision_function(X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p1 = self.calibrator.predict_proba(self.decision_function(X)[:, None])[:, 1]
        return np.column_stack([1.0 - p1, p1])


def build_baseline(kind: ModelKind, hyperparams: dict | None = None, seed: int = 0):
    """Untrained baseline estimator consuming standardized tabular rows."""
    hp = dict(hyperparams or {})
    if kind == ModelKind.ENET:
        return LogisticRegression(
            penalty="elasticnet",
            solver="saga",
            C=hp.get("C", 1.0),
            l1_ratio=hp.get("l1_ratio", 0.5),
            max_iter=2000,
            tol=1e-4,
            random_state=seed,
        )
    if kind == ModelKind.SVM:
        return CalibratedSVC(C=hp.get("C", 1.0), gamma=hp.get("gamma", "scale"), random_state=seed)
    if kind == ModelKind.ADA:
        return AdaBoostClassifier(
            estimator=DecisionTreeClassifier(max_depth=1, random_state=seed),
            n_estimators=hp.get("n_estimators", 50),
            learning_rate=hp.get("learning_rate", 1.0),
            random_state=seed,
        )
    if kind == ModelKind.RF:
        return RandomForestClassifier(
            n_estimators=hp.get("n_estimators", 100),
            max_depth=hp.get("max_depth", None),
            min_samples_leaf=hp.get("min_samples_leaf", 1),
            random_state=seed,
        )
    raise ValueError(f"unknown baseline kind: {kind!r}")


def train_baseline(
    kind: ModelKind,
    hyperparams: dict,
    tabular: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    pipeline_state: FeaturePipelineState | None = None,
) -> TrainedModel:
    y = _check_two_classes(labels)
    estimator = build_baseline(kind, hyperparams, seed=seed)
    estimator.fit(np.asarray(tabular, dtype=np.float64), y)
    cfg = {"hyperparams": hyperparams}
    return TrainedModel(
        kind=kind,
        predictor=estimator,
        pipeline_state=pipeline_state,
        config=cfg,
        fingerprint=_fingerprint(kind, cfg, seed),
    )


def default_search_space(kind: ModelKind) -> SearchSpace:
    """Documented hyperparameter search spaces for the Bayesian tuner."""
    if kind == ModelKind.MULTI_INPUT_DL:
        return {
            "learning_rate": FloatParam(1e-5, 1e-2, log=True),
            "hidden_layers": IntParam(1, 3),
            "hidden_units": IntParam(8, 128),
            "dropout": FloatParam(0.0, 0.5),
            "batch_size": ChoiceParam((8, 16, 32)),
        }
    if kind == ModelKind.ENET:
        return {"C": FloatParam(1e-3, 1e2, log=True), "l1_ratio": FloatParam(0.0, 1.0)}
    if kind == ModelKind.SVM:
        return {"C": FloatParam(1e-2, 1e2, log=True), "gamma": FloatParam(1e-4, 1.0, log=True)}
    if kind == ModelKind.ADA:
        return {"n_estimators": IntParam(25, 200), "learning_rate": FloatParam(1e-2, 1.0, log=True)}
    if kind == ModelKind.RF:
        return {
            "n_estimators": IntParam(50, 300),
            "max_depth": IntParam(2, 10),
            "min_samples_leaf": IntParam(1, 8),
        }
    raise ValueError(f"no search space for kind {kind!r}")


def apply_dl_params(base: ModelConfig, params: dict, seed: int | None = None) -> ModelConfig:
    """Overlay tuned hyperparameters (and optionally a seed) onto a base config."""
    tab = base.tabular_branch
    fusion = base.fusion_head
    optim = base.optimizer
    if "hidden_layers" in params or "hidden_units" in params:
        n_layers = int(params.get("hidden_layers", len(tab.hidden_layers)))
        units = int(params.get("hidden_units", tab.hidden_layers[0] if tab.hidden_layers else 32))
        tab = replace(tab, hidden_layers=tuple([units] * n_layers))
    if "dropout" in params:
        tab = replace(tab, dropout=float(params["dropout"]))
        fusion = replace(fusion, dropout=float(params["dropout"]))
    if "learning_rate" in params:
        optim = replace(optim, learning_rate=float(params["learning_rate"]))
    if "batch_size" in params:
        optim = replace(optim, batch_size=int(params["batch_size"]))
    return ModelConfig(
        image_branch=base.image_branch,
        tabular_branch=tab,
        fusion_head=fusion,
        optimizer=optim,
        seed=base.seed if seed is None else seed,
    )


# ---------------------------------------------------------------------------
# Guideline classifier
# ---------------------------------------------------------------------------

class GuidelineClass(str, Enum):
    CLASS_I = "class_i"
    CLASS_IIA = "class_iia"
    NONE = "none"


class GuidelineUnavailableError(ValueError):
    pass


@dataclass(frozen=True)
class GuidelineAssessment:
    recommendation: GuidelineClass
    predicted_responder: bool


def guideline_classify(record: PatientRecord) -> GuidelineAssessment:
    """Device-therapy recommendation classes from LVEF, LBBB, QRSd and NYHA.

    Class I: LVEF <= 35, LBBB, QRSd >= 150 ms, NYHA II-IV.
    Class IIa: LVEF <= 35 and either (LBBB, 120 <= QRSd < 150, NYHA II-IV) or
    (no LBBB, QRSd >= 150, NYHA III-IV).  Patients in either class are
    predicted responders.
    """
    required = {
        "LVEF": record.lvef,
        "LBBB": record.lbbb,
        "QRSd": record.qrsd,
        "NYHA 2": record.nyha_2,
        "NYHA 3": record.nyha_3,
        "NYHA 4": record.nyha_4,
    }
    missing = [name for name, v in required.items() if v is None]
    if missing:
        raise GuidelineUnavailableError(
            f"patient {record.patient_id!r}: missing {', '.join(missing)}"
        )
    lvef, lbbb, qrsd = record.lvef, bool(record.lbbb), record.qrsd
    nyha = record.nyha_class()
    nyha_2_to_4 = nyha in (2, 3, 4)
    nyha_3_to_4 = nyha in (3, 4)

    class_i = lvef <= 35.0 and lbbb and qrsd >= 150.0 and nyha_2_to_4
    class_iia = (
        not class_i
        and lvef <= 35.0
        and (
            (lbbb and 120.0 <= qrsd < 150.0 and nyha_2_to_4)
            or (not lbbb and qrsd >= 150.0 and nyha_3_to_4)
        )
    )
    if class_i:
        rec = GuidelineClass.CLASS_I
    elif class_iia:
        rec = GuidelineClass.CLASS_IIA
    else:
        rec = GuidelineClass.NONE
    return GuidelineAssessment(recommendation=rec, predicted_responder=class_i or class_iia)


def make_guideline_model() -> TrainedModel:
    return TrainedModel(
        kind=ModelKind.GUIDELINE,
        predictor=None,
        pipeline_state=None,
        config={},
        fingerprint=_fingerprint(ModelKind.GUIDELINE, {}),
    )


def predict_proba(model: TrainedModel, sample) -> float:
    """Single-sample probability; dispatches on the model kind.

    DL models take (BackboneInput, standardized vector); tabular baselines a
    standardized vector; the guideline model a PatientRecord.
    """
    if model.kind == ModelKind.GUIDELINE:
        if not isinstance(sample, PatientRecord):
            raise ValueError("guideline model expects a PatientRecord")
        return float(model.predict_proba_batch(records=[sample])[0])
    if model.kind == ModelKind.MULTI_INPUT_DL:
        if not (isinstance(sample, tuple) and len(sample) == 2 and isinstance(sample[0], BackboneInput)):
            raise ValueError("deep model expects a (BackboneInput, tabular vector) pair")
        image, vector = sample
        vector = np.asarray(vector, dtype=np.float64)
        if model.n_tabular_features is not None and vector.shape[-1] != model.n_tabular_features:
            raise ValueError(
                f"tabular vector has {vector.shape[-1]} values, "
                f"expected {model.n_tabular_features}"
            )
        return float(
            model.predict_proba_batch(tabular=vector[None], images=image.tensor[None])[0]
        )
    vector = np.asarray(sample, dtype=np.float64)
    if model.pipeline_state is not None and vector.shape[-1] != len(
        model.pipeline_state.selected_features
    ):
        raise ValueError(
            f"sample has {vector.shape[-1]} values, expected "
            f"{len(model.pipeline_state.selected_features)}"
        )
    return float(model.predict_proba_batch(tabular=vector[None])[0])


def clone_net_for_training(
    config: ModelConfig, n_tabular_features: int, backbone: nn.Sequential
) -> MultiInputNet:
    """Fresh trainable branches over a (possibly shared) backbone.

    When conv blocks are trainable the backbone is deep-copied so concurrent
    or sequential trainings cannot interfere through shared conv weights.
    """
    if config.image_branch.trainable_blocks > 0:
        backbone = copy.deepcopy(backbone)
    return build_multi_input_model(config, n_tabular_features, backbone=backbone)
