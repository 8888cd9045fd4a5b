#!/usr/bin/env python3
"""Train one deep model on an image-signal cohort and emit Grad-CAM overlays
for every correctly classified responder in a held-out split."""

import argparse
import sys
from pathlib import Path

import numpy as np

from crtpredict.domain import CompositePolarmap
from crtpredict.evaluation import EvaluationData, stratified_shuffle_split
from crtpredict.explain import grad_cam, overlay, quadrant_importance, save_rgb_png
from crtpredict.features import fit_feature_pipeline
from crtpredict.ingest import SyntheticSpec, generate_synthetic_cohort
from crtpredict.models import (
    ImageBranchConfig,
    ModelConfig,
    OptimizerConfig,
    TrainingData,
    build_multi_input_model,
    compute_frozen_features,
    train,
)
from crtpredict.polarmap import BackboneInput


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/gallery")
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--patients", type=int, default=200)
    parser.add_argument("--quadrant", default="TR")
    parser.add_argument("--strength", type=float, default=0.8)
    parser.add_argument("--limit", type=int, default=12, help="max overlays to write")
    args = parser.parse_args()

    spec = SyntheticSpec(
        n_patients=args.patients,
        responder_fraction=0.5,
        image_signal_quadrant=args.quadrant,
        image_signal_strength=args.strength,
        seed=args.seed,
    )
    cohort, maps = generate_synthetic_cohort(spec)
    data = EvaluationData.from_cohort(cohort, maps)
    split = stratified_shuffle_split(data.y, 1, 0.8, seed=args.seed)[0]

    pipe = fit_feature_pipeline(
        data.X[split.train], data.y[split.train], data.feature_names, seed=args.seed
    )
    config = ModelConfig(
        image_branch=ImageBranchConfig(init_seed=args.seed),
        optimizer=OptimizerConfig(max_epochs=40, early_stop_patience=6),
        seed=args.seed,
    )
    net = build_multi_input_model(config, len(pipe.selected_features))
    frozen = compute_frozen_features(net, data.images)
    model = train(
        net,
        TrainingData(
            tabular=pipe.transform(data.X[split.train]),
            labels=data.y[split.train],
            frozen_features=frozen[split.train],
        ),
        config,
        pipeline_state=pipe,
    )

    Xs_test = pipe.transform(data.X[split.test])
    probs = model.predict_proba_batch(tabular=Xs_test, frozen_features=frozen[split.test])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for row, idx in enumerate(split.test):
        if written >= args.limit:
            break
        if data.y[idx] != 1 or probs[row] <= 0.5:
            continue
        pid = data.patient_ids[idx]
        bi = BackboneInput(tensor=data.images[idx].astype(np.float64))
        heat = grad_cam(model, (bi, Xs_test[row]))
        composite = CompositePolarmap(pixels=data.composites[idx])
        save_rgb_png(overlay(heat, composite), out / f"{pid}_overlay.png")
        tl, tr, bl, br = quadrant_importance(heat)
        print(f"{pid}: p={probs[row]:.3f} TL={tl:.3f} TR={tr:.3f} BL={bl:.3f} BR={br:.3f}")
        written += 1
    print(f"wrote {written} overlays to {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
