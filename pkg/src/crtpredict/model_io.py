"""Self-describing, byte-deterministic trained-model container.

Format (version 1): a ZIP archive (stored, fixed timestamps) holding
  manifest.json   kind, config, fingerprint, tabular width, training summary
  pipeline.json   fitted feature-pipeline state (or null)
  params/*.npy    trainable parameter arrays (deep model; sorted by name)
  estimator.pkl   pickled sklearn estimator (tabular baselines)

Deep-model files store only the trainable parameters: the frozen backbone is
reconstructed from the saved config (seeded random init, or the recorded
weights file), so identical training runs produce byte-identical files.
"""

from __future__ import annotations

import io
import json
import pickle
import zipfile
from pathlib import Path

import numpy as np
import torch

from .features import FeaturePipelineState
from .models import (
    ModelKind,
    TrainedModel,
    build_multi_input_model,
    config_from_dict,
)

MODEL_FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class ModelFormatError(RuntimeError):
    pass


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, indent=1).encode("utf-8")


def _array_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr))
    return buf.getvalue()


def _pipeline_payload(state: FeaturePipelineState | None):
    if state is None:
        return None
    return {
        "selected_features": list(state.selected_features),
        "scaler_means": state.scaler_means.tolist(),
        "scaler_sds": state.scaler_sds.tolist(),
        "fit_fold_id": state.fit_fold_id,
        "feature_names": list(state.feature_names),
    }


def _pipeline_from_payload(payload) -> FeaturePipelineState | None:
    if payload is None:
        return None
    return FeaturePipelineState(
        selected_features=tuple(payload["selected_features"]),
        scaler_means=np.array(payload["scaler_means"], dtype=np.float64),
        scaler_sds=np.array(payload["scaler_sds"], dtype=np.float64),
        fit_fold_id=payload["fit_fold_id"],
        feature_names=tuple(payload["feature_names"]),
    )


def save_model(model: TrainedModel, path: str | Path) -> None:
    path = Path(path)
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "fingerprint": model.fingerprint,
        "config": model.config,
        "n_tabular_features": model.n_tabular_features,
        "training_summary": model.training_summary,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_entry(zf, "manifest.json", _json_bytes(manifest))
        _write_entry(zf, "pipeline.json", _json_bytes(_pipeline_payload(model.pipeline_state)))
        if model.kind == ModelKind.MULTI_INPUT_DL:
            net = model.predictor
            trainable = {
                name: p.detach().numpy()
                for name, p in net.named_parameters()
                if p.requires_grad
            }
            for name in sorted(trainable):
                _write_entry(zf, f"params/{name}.npy", _array_bytes(trainable[name]))
        elif model.kind != ModelKind.GUIDELINE:
            _write_entry(zf, "estimator.pkl", pickle.dumps(model.predictor, protocol=5))


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    with zipfile.ZipFile(path) as zf:
        names = set(zf.namelist())
        if "manifest.json" not in names:
            raise ModelFormatError(f"{path}: missing manifest.json")
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: unsupported format version {manifest.get('format_version')!r}"
            )
        kind = ModelKind(manifest["kind"])
        pipeline = _pipeline_from_payload(json.loads(zf.read("pipeline.json")))

        predictor = None
        if kind == ModelKind.MULTI_INPUT_DL:
            config = config_from_dict(manifest["config"])
            net = build_multi_input_model(config, manifest["n_tabular_features"])
            updates = {}
            for entry in sorted(n for n in names if n.startswith("params/")):
                key = entry[len("params/"):-len(".npy")]
                updates[key] = torch.from_numpy(np.load(io.BytesIO(zf.read(entry))))
            state = net.state_dict()
            unknown = set(updates) - set(state)
            if unknown:
                raise ModelFormatError(f"{path}: unexpected parameter entries {sorted(unknown)}")
            state.update(updates)
            net.load_state_dict(state)
            net.eval()
            predictor = net
        elif kind != ModelKind.GUIDELINE:
            if "estimator.pkl" not in names:
                raise ModelFormatError(f"{path}: missing estimator.pkl")
            predictor = pickle.loads(zf.read("estimator.pkl"))

    return TrainedModel(
        kind=kind,
        predictor=predictor,
        pipeline_state=pipeline,
        config=manifest["config"],
        fingerprint=manifest["fingerprint"],
        n_tabular_features=manifest["n_tabular_features"],
        training_summary=manifest["training_summary"],
    )
