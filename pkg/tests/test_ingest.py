import numpy as np
import pytest

from crtpredict.domain import FEATURE_BY_NAME, FEATURE_NAMES
from crtpredict.ingest import (
    CohortError,
    EmptyCohortError,
    PolarmapFilesMissingError,
    RowFormatError,
    SyntheticSpec,
    generate_synthetic_cohort,
    load_cohort,
    round_half_up,
    write_cohort,
)


def test_round_half_up():
    assert round_half_up(198.18) == 198
    assert round_half_up(178.2) == 178
    assert round_half_up(110.0) == 110
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2  # no banker's rounding


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(n_patients=0)
    with pytest.raises(ValueError):
        SyntheticSpec(responder_fraction=1.0)
    with pytest.raises(ValueError):
        SyntheticSpec(image_signal_quadrant="XY")
    with pytest.raises(ValueError):
        SyntheticSpec(tabular_signal_features=("NotAFeature",))


def test_generate_exact_responder_count():
    cohort, _ = generate_synthetic_cohort(SyntheticSpec(n_patients=218, responder_fraction=0.555, seed=1))
    assert sum(lab.responder for lab in cohort.labels) == 121
    assert len(cohort) == 218


def test_generate_deterministic():
    spec = SyntheticSpec(n_patients=15, responder_fraction=0.4, image_signal_quadrant="BL",
                         image_signal_strength=0.6, seed=9)
    c1, m1 = generate_synthetic_cohort(spec)
    c2, m2 = generate_synthetic_cohort(spec)
    assert c1.records == c2.records
    assert c1.labels == c2.labels
    for pid in c1.patient_ids:
        np.testing.assert_array_equal(m1[pid].perfusion, m2[pid].perfusion)
        np.testing.assert_array_equal(m1[pid].systolic_dyssynchrony, m2[pid].systolic_dyssynchrony)
        np.testing.assert_array_equal(m1[pid].wall_thickening, m2[pid].wall_thickening)


def test_generate_null_signal_class_means_close():
    spec = SyntheticSpec(n_patients=1000, responder_fraction=0.5, seed=4)
    cohort, _ = generate_synthetic_cohort(spec)
    X = cohort.feature_matrix()
    y = cohort.label_array()
    for j, name in enumerate(FEATURE_NAMES):
        if FEATURE_BY_NAME[name].binary:
            continue
        col = X[:, j]
        delta = abs(col[y == 1].mean() - col[y == 0].mean())
        assert delta < 0.2 * col.std(ddof=1), f"{name}: class means differ by {delta}"


def test_generate_signal_shifts_means_and_stays_in_range():
    spec = SyntheticSpec(
        n_patients=400, responder_fraction=0.5, image_signal_quadrant="TR",
        image_signal_strength=5.0, tabular_signal_features=("QRSd",),
        tabular_signal_strength=3.0, seed=2,
    )
    cohort, maps = generate_synthetic_cohort(spec)
    X = cohort.feature_matrix()
    y = cohort.label_array()
    j = FEATURE_NAMES.index("QRSd")
    shift = X[y == 1, j].mean() - X[y == 0, j].mean()
    assert shift > 2.0 * X[y == 0, j].std(ddof=1)
    for pid in cohort.patient_ids:
        for grid in (maps[pid].perfusion, maps[pid].systolic_dyssynchrony, maps[pid].wall_thickening):
            assert grid.min() >= 0.0 and grid.max() <= 1.0


def test_labels_match_lvef_rule():
    cohort, _ = generate_synthetic_cohort(SyntheticSpec(n_patients=60, responder_fraction=0.5, seed=3))
    for record, label in zip(cohort.records, cohort.labels):
        assert label.responder == ((record.lvef_6mo - record.lvef) > 5.0)


@pytest.mark.parametrize("map_format", ["txt", "png"])
def test_write_load_round_trip(tmp_path, map_format):
    spec = SyntheticSpec(n_patients=8, responder_fraction=0.5, seed=7)
    cohort, maps = generate_synthetic_cohort(spec)
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps", map_format=map_format)
    loaded, loaded_maps = load_cohort(tab, tmp_path / "maps")

    assert loaded.records == cohort.records  # text reals round-trip exactly
    assert loaded.labels == cohort.labels
    atol = 1e-6 if map_format == "txt" else 1.0 / 255.0
    for pid in cohort.patient_ids:
        np.testing.assert_allclose(loaded_maps[pid].perfusion, maps[pid].perfusion, atol=atol)

    # writing what was loaded reproduces the files byte for byte
    tab2 = tmp_path / "cohort2.csv"
    write_cohort(loaded, loaded_maps, tab2, tmp_path / "maps2", map_format=map_format)
    assert tab2.read_bytes() == tab.read_bytes()
    one = sorted((tmp_path / "maps").iterdir())[0]
    two = sorted((tmp_path / "maps2").iterdir())[0]
    assert two.read_bytes() == one.read_bytes()


def test_load_missing_followup_gives_unlabeled_row(tmp_path):
    cohort, maps = generate_synthetic_cohort(SyntheticSpec(n_patients=5, responder_fraction=0.4, seed=5))
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps")
    lines = tab.read_text().splitlines()
    cells = lines[1].split(",")
    cells[-1] = ""  # blank follow-up LVEF
    lines[1] = ",".join(cells)
    tab.write_text("\n".join(lines) + "\n")

    loaded, _ = load_cohort(tab, tmp_path / "maps")
    assert loaded.labels[0] is None
    assert list(loaded.labeled_indices()) == [1, 2, 3, 4]


def test_load_empty_file(tmp_path):
    tab = tmp_path / "cohort.csv"
    tab.write_text("")
    (tmp_path / "maps").mkdir()
    with pytest.raises(EmptyCohortError):
        load_cohort(tab, tmp_path / "maps")


def test_load_header_only_file(tmp_path):
    cohort, maps = generate_synthetic_cohort(SyntheticSpec(n_patients=2, responder_fraction=0.5, seed=6))
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps")
    header = tab.read_text().splitlines()[0]
    tab.write_text(header + "\n")
    with pytest.raises(EmptyCohortError):
        load_cohort(tab, tmp_path / "maps")


def test_load_non_numeric_qrsd_names_field_and_line(tmp_path):
    cohort, maps = generate_synthetic_cohort(SyntheticSpec(n_patients=3, responder_fraction=0.5, seed=6))
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps")
    lines = tab.read_text().splitlines()
    qrsd_col = lines[0].split(",").index("QRSd")
    cells = lines[2].split(",")
    cells[qrsd_col] = "abc"
    lines[2] = ",".join(cells)
    tab.write_text("\n".join(lines) + "\n")

    with pytest.raises(RowFormatError, match="QRSd") as err:
        load_cohort(tab, tmp_path / "maps")
    assert "line 3" in str(err.value)


def test_load_missing_polarmap_file_lists_maps(tmp_path):
    cohort, maps = generate_synthetic_cohort(SyntheticSpec(n_patients=3, responder_fraction=0.5, seed=6))
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps")
    victim = sorted((tmp_path / "maps").glob("*_dys.txt"))[0]
    victim.unlink()
    with pytest.raises(PolarmapFilesMissingError) as err:
        load_cohort(tab, tmp_path / "maps")
    assert err.value.missing == ["dys"]


def test_load_invalid_record_rejected(tmp_path):
    cohort, maps = generate_synthetic_cohort(SyntheticSpec(n_patients=2, responder_fraction=0.5, seed=6))
    tab = tmp_path / "cohort.csv"
    write_cohort(cohort, maps, tab, tmp_path / "maps")
    lines = tab.read_text().splitlines()
    ese_col = lines[0].split(",").index("ESE")
    cells = lines[1].split(",")
    cells[ese_col] = "1.4"
    lines[1] = ",".join(cells)
    tab.write_text("\n".join(lines) + "\n")
    with pytest.raises(RowFormatError, match="ESE"):
        load_cohort(tab, tmp_path / "maps")


def test_load_rejects_missing_dir(tmp_path):
    with pytest.raises(CohortError):
        load_cohort(tmp_path / "nope.csv", tmp_path)
