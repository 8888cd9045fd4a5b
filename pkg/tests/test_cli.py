import json
from pathlib import Path

import pytest

from crtpredict.cli import EXIT_DATA, EXIT_OK, EXIT_TRAINING, EXIT_USAGE, main


def run_cli(*args: str) -> int:
    return main(list(args))


def synth_args(out: Path, n: int = 30, seed: int = 5, extra: tuple[str, ...] = ()):
    return (
        "--seed", str(seed), "--out", str(out),
        "--set", "synthetic.n_patients=%d" % n,
        "--set", "synthetic.responder_fraction=0.5",
        *extra,
        "synth",
    )


class TestSynth:
    def test_writes_cohort_and_maps(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli(*synth_args(out)) == EXIT_OK
        assert (out / "cohort.csv").is_file()
        maps = list((out / "polarmaps").glob("*.txt"))
        assert len(maps) == 90  # 3 per patient
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["master_seed"] == 5

    def test_repeat_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(*synth_args(a)) == EXIT_OK
        assert run_cli(*synth_args(b)) == EXIT_OK
        assert (a / "cohort.csv").read_bytes() == (b / "cohort.csv").read_bytes()
        for pa in sorted((a / "polarmaps").iterdir()):
            pb = b / "polarmaps" / pa.name
            assert pa.read_bytes() == pb.read_bytes()

    def test_zero_patients_is_usage_error(self, tmp_path):
        assert run_cli(*synth_args(tmp_path / "x", n=0)) == EXIT_USAGE

    def test_requires_synthetic_spec(self, tmp_path, capsys):
        code = run_cli("--out", str(tmp_path), "--set", "synthetic=null", "synth")
        assert code == EXIT_USAGE


@pytest.fixture(scope="module")
def eval_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    code = run_cli(
        "--seed", "3", "--out", str(out),
        "--set", "synthetic.n_patients=60",
        "--set", "synthetic.responder_fraction=0.5",
        "--set", "synthetic.tabular_signal_features=[QRSd,EDV]",
        "--set", "synthetic.tabular_signal_strength=3.0",
        "--set", "models=[ENET,GUIDELINE]",
        "--set", "tuner_budget=2",
        "--set", "folds.outer_k=2",
        "--set", "folds.inner_k=2",
        "evaluate",
    )
    assert code == EXIT_OK
    return out


class TestEvaluate:
    def test_outputs_exist(self, eval_out):
        assert (eval_out / "reports" / "ENET.json").is_file()
        assert (eval_out / "reports" / "GUIDELINE.json").is_file()
        assert (eval_out / "performance_table.txt").is_file()
        assert (eval_out / "cohort_characteristics.txt").is_file()
        assert (eval_out / "selected_features.csv").is_file()
        assert len(list((eval_out / "roc").glob("ENET_fold*.txt"))) == 2
        assert len(list((eval_out / "models").glob("ENET_fold*.crtmodel"))) == 2

    def test_table_contains_guideline_row_with_na_auc(self, eval_out):
        table = (eval_out / "performance_table.txt").read_text()
        line = next(l for l in table.splitlines() if l.startswith("Guideline"))
        assert "N/A" in line

    def test_report_rerenders_table(self, eval_out, capsys):
        assert run_cli("--out", str(eval_out), "report") == EXIT_OK
        printed = capsys.readouterr().out
        assert "ENET" in printed and "Guideline" in printed

    def test_saved_models_reload_and_predict(self, eval_out):
        import numpy as np

        from crtpredict.model_io import load_model

        model = load_model(next((eval_out / "models").glob("ENET_fold*.crtmodel")))
        assert model.pipeline_state is not None
        probs = model.predict_proba_batch(
            tabular=np.zeros((2, len(model.pipeline_state.selected_features)))
        )
        assert probs.shape == (2,)

    def test_missing_polarmap_dir_is_data_error(self, tmp_path):
        code = run_cli(
            "--out", str(tmp_path / "o"),
            "--set", "data.tabular_path=%s" % (tmp_path / "nope.csv"),
            "--set", "data.polarmap_dir=%s" % (tmp_path / "nope"),
            "--set", "models=[DL]",
            "evaluate",
        )
        assert code == EXIT_DATA

    def test_usage_error_for_unknown_model(self, tmp_path):
        code = run_cli("--out", str(tmp_path), "--set", "models=[XGB]", "evaluate")
        assert code == EXIT_USAGE


@pytest.fixture(scope="module")
def dl_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("dl")
    code = run_cli(
        "--seed", "4", "--out", str(out),
        "--set", "synthetic.n_patients=36",
        "--set", "synthetic.responder_fraction=0.5",
        "--set", "synthetic.image_signal_quadrant=TR",
        "--set", "synthetic.image_signal_strength=0.8",
        "--set", "models=[DL]",
        "--set", "tuner_budget=1",
        "--set", "folds.outer_k=2",
        "--set", "folds.inner_k=2",
        "--set", "dl.max_epochs=5",
        "evaluate",
    )
    assert code == EXIT_OK
    return out


class TestExplain:
    def test_explain_writes_overlay_and_scores(self, dl_run, capsys):
        model_file = sorted((dl_run / "models").glob("DL_fold*.crtmodel"))[0]
        code = run_cli(
            "--seed", "4", "--out", str(dl_run),
            "--set", "synthetic.n_patients=36",
            "--set", "synthetic.responder_fraction=0.5",
            "--set", "synthetic.image_signal_quadrant=TR",
            "--set", "synthetic.image_signal_strength=0.8",
            "explain", "--model", str(model_file), "--patient", "SYN-0003",
        )
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "p(responder)" in printed and "guideline=" in printed
        assert (dl_run / "explain" / "SYN-0003_overlay.png").is_file()
        scores = (dl_run / "explain" / "SYN-0003_quadrants.txt").read_text()
        assert scores.startswith("quadrant mean_heat")

    def test_explain_rerun_byte_identical(self, dl_run):
        model_file = sorted((dl_run / "models").glob("DL_fold*.crtmodel"))[0]
        args = (
            "--seed", "4", "--out", str(dl_run),
            "--set", "synthetic.n_patients=36",
            "--set", "synthetic.responder_fraction=0.5",
            "--set", "synthetic.image_signal_quadrant=TR",
            "--set", "synthetic.image_signal_strength=0.8",
            "explain", "--model", str(model_file), "--patient", "SYN-0005",
        )
        assert run_cli(*args) == EXIT_OK
        png = (dl_run / "explain" / "SYN-0005_overlay.png").read_bytes()
        txt = (dl_run / "explain" / "SYN-0005_quadrants.txt").read_bytes()
        assert run_cli(*args) == EXIT_OK
        assert (dl_run / "explain" / "SYN-0005_overlay.png").read_bytes() == png
        assert (dl_run / "explain" / "SYN-0005_quadrants.txt").read_bytes() == txt

    def test_unknown_patient_is_data_error(self, dl_run):
        model_file = sorted((dl_run / "models").glob("DL_fold*.crtmodel"))[0]
        code = run_cli(
            "--seed", "4", "--out", str(dl_run),
            "--set", "synthetic.n_patients=36",
            "--set", "synthetic.responder_fraction=0.5",
            "explain", "--model", str(model_file), "--patient", "NOPE",
        )
        assert code == EXIT_DATA


class TestUsage:
    def test_missing_command(self):
        assert run_cli("--seed", "1") == EXIT_USAGE

    def test_bad_set_syntax(self, tmp_path):
        assert run_cli("--set", "oops", "--out", str(tmp_path), "synth") == EXIT_USAGE

    def test_config_file_roundtrip(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(
            "master_seed: 9\n"
            "synthetic:\n  n_patients: 10\n  responder_fraction: 0.5\n"
        )
        out = tmp_path / "o"
        assert run_cli("--config", str(cfg), "--out", str(out), "synth") == EXIT_OK
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["master_seed"] == 9

    def test_conflicting_data_sources(self, tmp_path):
        code = run_cli(
            "--out", str(tmp_path),
            "--set", "data.tabular_path=x.csv",
            "--set", "data.polarmap_dir=maps",
            "--set", "synthetic.n_patients=5",
            "evaluate",
        )
        assert code == EXIT_USAGE
