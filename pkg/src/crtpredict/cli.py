"""Command-line entry point: synth / evaluate / explain / report.

Configuration is a YAML document; every key can be overridden on the command
line with --set dotted.key=value.  A single master seed fans out to all
component seeds, so repeated runs are byte-identical.

Exit codes: 0 success, 1 usage, 2 data error, 3 training error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .evaluation import (
    EvaluationData,
    EvaluationReport,
    FoldEvaluationError,
    Metrics,
    build_fold_plan,
    evaluate_model_families,
    guideline_metrics,
    INNER_FOLDS,
    INNER_TRAIN_FRACTION,
    make_families,
    OUTER_FOLDS,
    OUTER_TRAIN_FRACTION,
    baseline_table,
    render_baseline_table,
    render_performance_table,
)
from .explain import grad_cam, overlay, quadrant_importance, save_rgb_png
from .ingest import (
    CohortError,
    SyntheticSpec,
    generate_synthetic_cohort,
    load_cohort,
    write_cohort,
)
from .model_io import load_model, save_model
from .models import (
    ImageBranchConfig,
    ModelConfig,
    ModelKind,
    OptimizerConfig,
    TrainingDivergedError,
    guideline_classify,
)
from .polarmap import compose_quadrants, prepare_for_backbone
from .seeding import derive_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


DEFAULT_CONFIG: dict = {
    "master_seed": 0,
    "output_dir": "out",
    "jobs": 1,
    "tuner_budget": 8,
    "models": ["DL", "ENET", "SVM", "ADA", "RF", "GUIDELINE"],
    "map_format": "txt",
    "data": {"tabular_path": None, "polarmap_dir": None},
    "synthetic": None,
    "folds": {
        "outer_k": OUTER_FOLDS,
        "outer_train_fraction": OUTER_TRAIN_FRACTION,
        "inner_k": INNER_FOLDS,
        "inner_train_fraction": INNER_TRAIN_FRACTION,
    },
    "dl": {
        "weights_source": "random",
        "trainable_blocks": 0,
        "max_epochs": 60,
        "early_stop_patience": 8,
    },
}

DEFAULT_SYNTHETIC: dict = {
    "n_patients": 218,
    "responder_fraction": 0.555,
    "image_signal_quadrant": "none",
    "image_signal_strength": 0.0,
    "tabular_signal_features": [],
    "tabular_signal_strength": 0.0,
    "seed": None,  # derived from master_seed when absent
}


@dataclass
class RunConfig:
    master_seed: int
    output_dir: Path
    jobs: int
    tuner_budget: int
    models: tuple[ModelKind, ...]
    map_format: str
    tabular_path: Path | None
    polarmap_dir: Path | None
    synthetic: SyntheticSpec | None
    folds: dict
    dl: dict
    resolved: dict = field(default_factory=dict)  # raw dict for the manifest


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def build_run_config(args: argparse.Namespace) -> RunConfig:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"config file must hold a mapping: {path}")
        config = _deep_merge(config, loaded)
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.seed is not None:
        config["master_seed"] = args.seed
    if args.out is not None:
        config["output_dir"] = args.out
    if args.jobs is not None:
        config["jobs"] = args.jobs

    try:
        kinds = tuple(ModelKind(str(k)) for k in config["models"])
    except ValueError as exc:
        raise UsageError(f"unknown model kind in config: {exc}")

    data_cfg = config.get("data") or {}
    tabular = data_cfg.get("tabular_path")
    maps_dir = data_cfg.get("polarmap_dir")
    if (tabular is None) != (maps_dir is None):
        raise UsageError("data.tabular_path and data.polarmap_dir must be set together")

    synth_cfg = config.get("synthetic")
    synthetic = None
    if synth_cfg is not None:
        merged = _deep_merge(DEFAULT_SYNTHETIC, synth_cfg)
        seed = merged.pop("seed")
        if seed is None:
            seed = derive_seed(int(config["master_seed"]), "synthetic")
        try:
            synthetic = SyntheticSpec(
                n_patients=int(merged["n_patients"]),
                responder_fraction=float(merged["responder_fraction"]),
                image_signal_quadrant=str(merged["image_signal_quadrant"]),
                image_signal_strength=float(merged["image_signal_strength"]),
                tabular_signal_features=tuple(merged["tabular_signal_features"]),
                tabular_signal_strength=float(merged["tabular_signal_strength"]),
                seed=int(seed),
            )
        except ValueError as exc:
            raise UsageError(f"invalid synthetic spec: {exc}")

    if synthetic is not None and tabular is not None:
        raise UsageError("config must set exactly one of data paths or a synthetic spec")

    return RunConfig(
        master_seed=int(config["master_seed"]),
        output_dir=Path(config["output_dir"]),
        jobs=int(config["jobs"]),
        tuner_budget=int(config["tuner_budget"]),
        models=kinds,
        map_format=str(config["map_format"]),
        tabular_path=Path(tabular) if tabular else None,
        polarmap_dir=Path(maps_dir) if maps_dir else None,
        synthetic=synthetic,
        folds=dict(config["folds"]),
        dl=dict(config["dl"]),
        resolved=config,
    )


def _dl_base_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        image_branch=ImageBranchConfig(
            weights_source=str(cfg.dl.get("weights_source", "random")),
            trainable_blocks=int(cfg.dl.get("trainable_blocks", 0)),
            init_seed=derive_seed(cfg.master_seed, "dl", "backbone"),
        ),
        optimizer=OptimizerConfig(
            max_epochs=int(cfg.dl.get("max_epochs", 60)),
            early_stop_patience=int(cfg.dl.get("early_stop_patience", 8)),
        ),
        seed=derive_seed(cfg.master_seed, "dl", "base"),
    )


def _load_data(cfg: RunConfig):
    if cfg.synthetic is not None:
        return generate_synthetic_cohort(cfg.synthetic)
    if cfg.tabular_path is None:
        raise UsageError("no input data: set data paths or a synthetic spec")
    return load_cohort(cfg.tabular_path, cfg.polarmap_dir)


def _input_fingerprint(cfg: RunConfig) -> dict:
    if cfg.synthetic is not None:
        spec = {k: v for k, v in vars(cfg.synthetic).items()}
        spec["tabular_signal_features"] = list(cfg.synthetic.tabular_signal_features)
        blob = json.dumps(spec, sort_keys=True).encode()
        return {"synthetic_spec_sha256": hashlib.sha256(blob).hexdigest()}
    digest = hashlib.sha256()
    digest.update(cfg.tabular_path.read_bytes())
    names = sorted(p.name for p in cfg.polarmap_dir.iterdir() if p.is_file())
    for name in names:
        digest.update(name.encode())
        digest.update((cfg.polarmap_dir / name).read_bytes())
    return {
        "tabular_path": str(cfg.tabular_path),
        "polarmap_dir": str(cfg.polarmap_dir),
        "inputs_sha256": digest.hexdigest(),
    }


def _write_manifest(cfg: RunConfig, command: str, outputs: list[str]) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "master_seed": cfg.master_seed,
        "config": cfg.resolved,
        "inputs": _input_fingerprint(cfg) if command != "report" else {},
        "outputs": sorted(outputs),
    }
    path = cfg.output_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synthetic is None:
        raise UsageError("synth requires a synthetic spec (config key `synthetic`)")
    cohort, polarmaps = generate_synthetic_cohort(cfg.synthetic)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    tab = cfg.output_dir / "cohort.csv"
    maps_dir = cfg.output_dir / "polarmaps"
    write_cohort(cohort, polarmaps, tab, maps_dir, map_format=cfg.map_format)
    outputs = ["cohort.csv"] + [f"polarmaps/{p.name}" for p in sorted(maps_dir.iterdir())]
    _write_manifest(cfg, "synth", outputs)
    print(f"wrote {len(cohort)} patients to {tab} and {maps_dir}/")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    cohort, polarmaps = _load_data(cfg)
    data = EvaluationData.from_cohort(cohort, polarmaps)
    plan = build_fold_plan(
        data.y,
        seed=derive_seed(cfg.master_seed, "folds"),
        outer_k=int(cfg.folds["outer_k"]),
        outer_train_fraction=float(cfg.folds["outer_train_fraction"]),
        inner_k=int(cfg.folds["inner_k"]),
        inner_train_fraction=float(cfg.folds["inner_train_fraction"]),
    )
    families = make_families(cfg.models, data, _dl_base_config(cfg))
    reports = evaluate_model_families(
        data, plan, families, cfg.tuner_budget, cfg.master_seed, jobs=cfg.jobs
    )
    guideline = (
        guideline_metrics(data.records, data.y)
        if ModelKind.GUIDELINE in cfg.models
        else None
    )

    out = cfg.output_dir
    outputs: list[str] = []
    (out / "reports").mkdir(parents=True, exist_ok=True)
    (out / "roc").mkdir(exist_ok=True)
    (out / "models").mkdir(exist_ok=True)

    for kind, report in reports.items():
        rp = out / "reports" / f"{kind.value}.json"
        rp.write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        outputs.append(f"reports/{kind.value}.json")
        for fold in report.per_fold:
            roc_path = out / "roc" / f"{kind.value}_fold{fold.fold_index}.txt"
            lines = [f"{fpr!r} {tpr!r}" for fpr, tpr in fold.roc]
            roc_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            outputs.append(f"roc/{roc_path.name}")
            model_path = out / "models" / f"{kind.value}_fold{fold.fold_index}.crtmodel"
            save_model(fold.model, model_path)
            outputs.append(f"models/{model_path.name}")

    if guideline is not None:
        gp = out / "reports" / "GUIDELINE.json"
        gp.write_text(
            json.dumps(
                {"model_kind": "GUIDELINE", "metrics": guideline.as_dict()},
                sort_keys=True,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        outputs.append("reports/GUIDELINE.json")

    pipelines_path = out / "selected_features.csv"
    with open(pipelines_path, "w", encoding="utf-8") as fh:
        fh.write("fold,n_features,features\n")
        seen: dict[int, tuple[str, ...]] = {}
        for kind, report in reports.items():
            for fold in report.per_fold:
                if fold.model is not None and fold.model.pipeline_state is not None:
                    seen[fold.fold_index] = fold.model.pipeline_state.selected_features
        for i in sorted(seen):
            feats = ";".join(seen[i])
            fh.write(f"{i},{len(seen[i])},{feats}\n")
    outputs.append("selected_features.csv")

    table = render_performance_table(reports, guideline)
    (out / "performance_table.txt").write_text(table, encoding="utf-8")
    outputs.append("performance_table.txt")

    characteristics = render_baseline_table(baseline_table(cohort))
    (out / "cohort_characteristics.txt").write_text(characteristics, encoding="utf-8")
    outputs.append("cohort_characteristics.txt")

    _write_manifest(cfg, "evaluate", outputs)
    print(table)
    return EXIT_OK


def cmd_explain(cfg: RunConfig, model_path: str, patient_id: str, layer: str | None, alpha: float) -> int:
    model = load_model(model_path)
    if model.kind != ModelKind.MULTI_INPUT_DL:
        raise UsageError(f"explain requires a DL model file, got kind {model.kind.value}")
    cohort, polarmaps = _load_data(cfg)
    try:
        record = next(r for r in cohort.records if r.patient_id == patient_id)
    except StopIteration:
        raise CohortError(f"unknown patient_id {patient_id!r}")

    composite = compose_quadrants(polarmaps[patient_id])
    backbone_input = prepare_for_backbone(composite)
    vector = model.pipeline_state.transform(record.feature_vector()[None])[0]
    from .models import predict_proba  # local import keeps module load light

    prob = predict_proba(model, (backbone_input, vector))
    assessment = guideline_classify(record)

    kwargs = {} if layer is None else {"layer": layer}
    heatmap = grad_cam(model, (backbone_input, vector), **kwargs)
    blended = overlay(heatmap, composite, alpha=alpha)
    tl, tr, bl, br = quadrant_importance(heatmap)

    out = cfg.output_dir / "explain"
    out.mkdir(parents=True, exist_ok=True)
    image_path = out / f"{patient_id}_overlay.png"
    save_rgb_png(blended, image_path)
    scores_path = out / f"{patient_id}_quadrants.txt"
    scores_path.write_text(
        "quadrant mean_heat\n"
        f"TL {tl!r}\nTR {tr!r}\nBL {bl!r}\nBR {br!r}\n",
        encoding="utf-8",
    )
    print(f"patient {patient_id}: p(responder)={prob:.4f} "
          f"guideline={assessment.recommendation.value} "
          f"layer={heatmap.source_layer}")
    print(f"wrote {image_path} and {scores_path}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    reports_dir = cfg.output_dir / "reports"
    if not reports_dir.is_dir():
        raise CohortError(f"no reports directory under {cfg.output_dir}")
    reports: dict[ModelKind, EvaluationReport] = {}
    guideline = None
    for path in sorted(reports_dir.glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        kind = ModelKind(payload["model_kind"])
        if kind == ModelKind.GUIDELINE:
            m = payload["metrics"]
            guideline = Metrics(**{k: m.get(k) for k in ("auc", "accuracy", "sensitivity", "specificity")})
            continue
        aggregate = {
            name: (entry["mean"], entry["sd"])
            for name, entry in payload["aggregate"].items()
        }
        reports[kind] = EvaluationReport(model_kind=kind, per_fold=(), aggregate=aggregate)
    table = render_performance_table(reports, guideline)
    (cfg.output_dir / "performance_table.txt").write_text(table, encoding="utf-8")
    print(table)
    return EXIT_OK


def _make_parser() -> _Parser:
    parser = _Parser(prog="crtpredict", description=__doc__)
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--jobs", type=int, help="parallel model evaluations (default 1)")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override any config key, e.g. --set synthetic.n_patients=100",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate a synthetic cohort on disk")
    sub.add_parser("evaluate", help="run the nested cross-validated evaluation")
    explain = sub.add_parser("explain", help="Grad-CAM overlay for one patient")
    explain.add_argument("--model", required=True, help="trained DL model file")
    explain.add_argument("--patient", required=True, help="patient id")
    explain.add_argument("--layer", default=None, help="backbone activation layer")
    explain.add_argument("--alpha", type=float, default=0.4, help="overlay blend weight")
    sub.add_parser("report", help="re-render the combined table from stored reports")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        cfg = build_run_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "explain":
            return cmd_explain(cfg, args.model, args.patient, args.layer, args.alpha)
        if args.command == "report":
            return cmd_report(cfg)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CohortError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, FoldEvaluationError) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
