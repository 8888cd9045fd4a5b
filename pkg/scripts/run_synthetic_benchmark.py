#!/usr/bin/env python3
"""Full synthetic benchmark: generate a cohort, evaluate every model, report.

Writes the cohort, per-model reports, ROC points, trained models, the combined
performance table and the cohort characteristics table under --out.
"""

import argparse
import sys

from crtpredict.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/benchmark")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--patients", type=int, default=218)
    parser.add_argument("--budget", type=int, default=8)
    parser.add_argument("--quadrant", default="TR", help="image signal quadrant or 'none'")
    parser.add_argument("--image-strength", type=float, default=0.8)
    parser.add_argument("--tabular-strength", type=float, default=1.0)
    args = parser.parse_args()

    common = [
        "--seed", str(args.seed),
        "--out", args.out,
        "--set", f"synthetic.n_patients={args.patients}",
        "--set", "synthetic.responder_fraction=0.555",
        "--set", f"synthetic.image_signal_quadrant={args.quadrant}",
        "--set", f"synthetic.image_signal_strength={args.image_strength}",
        "--set", "synthetic.tabular_signal_features=[QRSd,EDV]",
        "--set", f"synthetic.tabular_signal_strength={args.tabular_strength}",
        "--set", f"tuner_budget={args.budget}",
    ]
    code = cli_main([*common, "synth"])
    if code != 0:
        return code
    return cli_main([*common, "evaluate"])


if __name__ == "__main__":
    sys.exit(main())
