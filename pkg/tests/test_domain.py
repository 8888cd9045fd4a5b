import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crtpredict.domain import (
    FEATURE_NAMES,
    FEATURES,
    CompositePolarmap,
    LabelUnavailableError,
    PatientRecord,
    PolarmapSet,
    derive_label,
    validate_record,
)


def make_record(**overrides) -> PatientRecord:
    values = {
        "Age": 60.0, "Gender": True, "Race African": False, "Race Asian": False,
        "Race Caucasian": True, "Race Hispanic": False, "Race Indian": False,
        "Smoking": False, "DM": False, "HTN": True, "MI": False, "CAD": False,
        "CABG": False, "PCI": False, "LBBB": True, "NYHA 2": False, "NYHA 3": True,
        "NYHA 4": False, "ACEI/ARB": True, "QRSd": 158.0, "SRS": 18.0, "ESV": 190.0,
        "EDV": 255.0, "LVEF": 27.7, "Mass": 215.0, "Stroke Volume": 63.0,
        "WT %": 22.0, "WT Sum": 11.0, "Scar %": 22.0, "Concordance": False,
        "Systolic PBW": 158.0, "Systolic PSD": 50.0, "Systolic PK": 8.0,
        "Systolic PS": 2.5, "Systolic PP": 132.0, "Diastolic PBW": 169.0,
        "Diastolic PSD": 52.0, "Diastolic PK": 8.0, "Diastolic PS": 2.5,
        "Diastolic PP": 221.0, "EDE": 0.6, "ESE": 0.6, "EDSI": 0.8, "ESSI": 0.8,
    }
    lvef_6mo = overrides.pop("lvef_6mo", 35.0)
    values.update(overrides)
    return PatientRecord.from_features("P-1", values, lvef_6mo=lvef_6mo)


def test_feature_vocabulary_has_44_unique_names():
    assert len(FEATURE_NAMES) == 44
    assert len(set(FEATURE_NAMES)) == 44
    assert len({f.attr for f in FEATURES}) == 44


def test_derive_label_examples():
    assert derive_label(28.0, 34.0).responder is True
    assert derive_label(28.0, 33.0).responder is False  # delta == 5 fails strict >
    assert derive_label(40.0, 39.0).responder is False


def test_derive_label_missing_followup():
    with pytest.raises(LabelUnavailableError):
        derive_label(28.0, None)


def test_derive_label_range_check():
    with pytest.raises(ValueError):
        derive_label(-1.0, 30.0)
    with pytest.raises(ValueError):
        derive_label(30.0, 101.0)


@given(
    baseline=st.floats(0, 100),
    b=st.floats(0, 100),
    bump=st.floats(0, 100),
)
def test_derive_label_monotone_in_followup(baseline, b, bump):
    b_higher = min(100.0, b + bump)
    if derive_label(baseline, b).responder:
        assert derive_label(baseline, b_higher).responder


def test_validate_record_accepts_valid():
    assert validate_record(make_record()) == []


def test_validate_record_nyha_exclusivity():
    bad = make_record(**{"NYHA 2": True, "NYHA 3": True})
    violations = validate_record(bad)
    assert len(violations) == 1
    assert "NYHA" in violations[0]


def test_validate_record_ese_out_of_range():
    violations = validate_record(make_record(ESE=1.4))
    assert any("ESE" in v for v in violations)


def test_validate_record_strictly_positive_fields():
    violations = validate_record(make_record(QRSd=0.0))
    assert any("QRSd" in v for v in violations)


def test_validate_record_race_exclusivity():
    bad = make_record(**{"Race Asian": True, "Race Caucasian": True})
    assert any("Race" in v for v in validate_record(bad))


def test_validate_record_absent_values_allowed():
    rec = make_record(SRS=None)
    assert validate_record(rec) == []
    with pytest.raises(ValueError, match="SRS"):
        rec.feature_vector()


def test_record_is_immutable():
    rec = make_record()
    with pytest.raises(dataclasses.FrozenInstanceError):
        rec.age = 70.0


def test_polarmap_set_validates_shape_and_range():
    ok = np.zeros((64, 64))
    with pytest.raises(ValueError, match="perfusion"):
        PolarmapSet(perfusion=np.zeros((32, 64)), systolic_dyssynchrony=ok, wall_thickening=ok)
    with pytest.raises(ValueError, match="wall_thickening"):
        PolarmapSet(perfusion=ok, systolic_dyssynchrony=ok, wall_thickening=ok + 2.0)
    maps = PolarmapSet(perfusion=ok, systolic_dyssynchrony=ok, wall_thickening=ok)
    assert not maps.perfusion.flags.writeable


def test_composite_validates_and_slices():
    comp = CompositePolarmap(pixels=np.zeros((128, 128)))
    assert comp.quadrant("TR").shape == (64, 64)
    with pytest.raises(ValueError):
        CompositePolarmap(pixels=np.zeros((64, 64)))
    with pytest.raises(KeyError):
        comp.quadrant("XX")
