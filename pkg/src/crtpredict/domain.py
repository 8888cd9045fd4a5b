"""Shared domain types: patient records, response labels, polarmaps.

The feature vocabulary (44 modeling variables) is defined here once and
used by ingestion, feature selection, model training and reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable

import numpy as np

POLARMAP_SIZE = 64
COMPOSITE_SIZE = 128

# Composite quadrant layout: which source map fills each 64x64 quadrant.
QUADRANT_LAYOUT = {
    "TL": "perfusion",
    "TR": "systolic_dyssynchrony",
    "BL": "wall_thickening",
    "BR": "thresholded_perfusion",
}
QUADRANT_ORDER = ("TL", "TR", "BL", "BR")


class LabelUnavailableError(ValueError):
    """Raised when a response label is requested but follow-up LVEF is absent."""


@dataclass(frozen=True)
class FeatureSpec:
    """One modeling variable: canonical column name, record attribute, bounds."""

    name: str
    attr: str
    binary: bool = False
    lo: float | None = None
    hi: float | None = None
    strict_lo: bool = False  # lower bound exclusive (strictly positive fields)


# Canonical vocabulary. Order is the column order of the tabular file and of
# every feature matrix built from it.
FEATURES: tuple[FeatureSpec, ...] = (
    FeatureSpec("Age", "age", lo=0.0),
    FeatureSpec("Gender", "gender", binary=True),  # 1 = male
    FeatureSpec("Race African", "race_african", binary=True),
    FeatureSpec("Race Asian", "race_asian", binary=True),
    FeatureSpec("Race Caucasian", "race_caucasian", binary=True),
    FeatureSpec("Race Hispanic", "race_hispanic", binary=True),
    FeatureSpec("Race Indian", "race_indian", binary=True),
    FeatureSpec("Smoking", "smoking", binary=True),
    FeatureSpec("DM", "dm", binary=True),
    FeatureSpec("HTN", "htn", binary=True),
    FeatureSpec("MI", "mi", binary=True),
    FeatureSpec("CAD", "cad", binary=True),
    FeatureSpec("CABG", "cabg", binary=True),
    FeatureSpec("PCI", "pci", binary=True),
    FeatureSpec("LBBB", "lbbb", binary=True),
    FeatureSpec("NYHA 2", "nyha_2", binary=True),
    FeatureSpec("NYHA 3", "nyha_3", binary=True),
    FeatureSpec("NYHA 4", "nyha_4", binary=True),
    FeatureSpec("ACEI/ARB", "acei_arb", binary=True),
    FeatureSpec("QRSd", "qrsd", lo=0.0, strict_lo=True),
    FeatureSpec("SRS", "srs", lo=0.0),
    FeatureSpec("ESV", "esv", lo=0.0, strict_lo=True),
    FeatureSpec("EDV", "edv", lo=0.0, strict_lo=True),
    FeatureSpec("LVEF", "lvef", lo=0.0, hi=100.0),
    FeatureSpec("Mass", "mass", lo=0.0, strict_lo=True),
    FeatureSpec("Stroke Volume", "stroke_volume", lo=0.0, strict_lo=True),
    FeatureSpec("WT %", "wt_pct", lo=0.0, hi=100.0),
    FeatureSpec("WT Sum", "wt_sum", lo=0.0),
    FeatureSpec("Scar %", "scar_pct", lo=0.0, hi=100.0),
    FeatureSpec("Concordance", "concordance", binary=True),
    FeatureSpec("Systolic PBW", "systolic_pbw"),
    FeatureSpec("Systolic PSD", "systolic_psd"),
    FeatureSpec("Systolic PK", "systolic_pk"),
    FeatureSpec("Systolic PS", "systolic_ps"),
    FeatureSpec("Systolic PP", "systolic_pp"),
    FeatureSpec("Diastolic PBW", "diastolic_pbw"),
    FeatureSpec("Diastolic PSD", "diastolic_psd"),
    FeatureSpec("Diastolic PK", "diastolic_pk"),
    FeatureSpec("Diastolic PS", "diastolic_ps"),
    FeatureSpec("Diastolic PP", "diastolic_pp"),
    FeatureSpec("EDE", "ede", lo=0.0, hi=1.0),
    FeatureSpec("ESE", "ese", lo=0.0, hi=1.0),
    FeatureSpec("EDSI", "edsi", lo=0.0, hi=1.0),
    FeatureSpec("ESSI", "essi", lo=0.0, hi=1.0),
)

FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES)
FEATURE_BY_NAME = {f.name: f for f in FEATURES}

FOLLOWUP_LVEF_COLUMN = "LVEF 6mo"

_NYHA_ATTRS = ("nyha_2", "nyha_3", "nyha_4")
_RACE_ATTRS = (
    "race_african",
    "race_asian",
    "race_caucasian",
    "race_hispanic",
    "race_indian",
)


@dataclass(frozen=True)
class PatientRecord:
    """Tabular clinical/ECG/SPECT-derived variables for one patient.

    Numeric fields use None as the explicit absent marker.  Construction does
    not enforce invariants; use validate_record to obtain violations as data.
    """

    patient_id: str
    age: float | None
    gender: bool | None
    race_african: bool | None
    race_asian: bool | None
    race_caucasian: bool | None
    race_hispanic: bool | None
    race_indian: bool | None
    smoking: bool | None
    dm: bool | None
    htn: bool | None
    mi: bool | None
    cad: bool | None
    cabg: bool | None
    pci: bool | None
    lbbb: bool | None
    nyha_2: bool | None
    nyha_3: bool | None
    nyha_4: bool | None
    acei_arb: bool | None
    qrsd: float | None
    srs: float | None
    esv: float | None
    edv: float | None
    lvef: float | None
    mass: float | None
    stroke_volume: float | None
    wt_pct: float | None
    wt_sum: float | None
    scar_pct: float | None
    concordance: bool | None
    systolic_pbw: float | None
    systolic_psd: float | None
    systolic_pk: float | None
    systolic_ps: float | None
    systolic_pp: float | None
    diastolic_pbw: float | None
    diastolic_psd: float | None
    diastolic_pk: float | None
    diastolic_ps: float | None
    diastolic_pp: float | None
    ede: float | None
    ese: float | None
    edsi: float | None
    essi: float | None
    lvef_6mo: float | None = None

    @classmethod
    def from_features(
        cls,
        patient_id: str,
        values: dict[str, float | bool | None],
        lvef_6mo: float | None = None,
    ) -> "PatientRecord":
        """Build a record from a canonical-name -> value mapping."""
        unknown = set(values) - set(FEATURE_NAMES)
        if unknown:
            raise KeyError(f"unknown feature names: {sorted(unknown)}")
        kwargs: dict[str, object] = {}
        for spec in FEATURES:
            v = values.get(spec.name)
            if v is None:
                kwargs[spec.attr] = None
            elif spec.binary:
                kwargs[spec.attr] = bool(v)
            else:
                kwargs[spec.attr] = float(v)
        return cls(patient_id=patient_id, lvef_6mo=lvef_6mo, **kwargs)

    def feature_values(self) -> dict[str, float | bool | None]:
        """Return the 44 modeling values keyed by canonical name."""
        return {spec.name: getattr(self, spec.attr) for spec in FEATURES}

    def feature_vector(self) -> np.ndarray:
        """Return the numeric feature row; raises if any value is absent."""
        row = np.empty(len(FEATURES), dtype=np.float64)
        for j, spec in enumerate(FEATURES):
            v = getattr(self, spec.attr)
            if v is None:
                raise ValueError(
                    f"patient {self.patient_id!r}: feature {spec.name!r} is absent"
                )
            row[j] = float(v)
        return row

    def nyha_class(self) -> int | None:
        """Return 2, 3 or 4 for the active NYHA flag, None if no flag is set."""
        for level, attr in zip((2, 3, 4), _NYHA_ATTRS):
            if getattr(self, attr):
                return level
        return None


@dataclass(frozen=True)
class ResponseLabel:
    responder: bool


RESPONSE_LVEF_GAIN = 5.0  # percentage points; strict ">"


def derive_label(lvef_baseline: float, lvef_6mo: float | None) -> ResponseLabel:
    """Response = follow-up LVEF exceeding baseline by more than 5 points."""
    if lvef_6mo is None:
        raise LabelUnavailableError("follow-up LVEF is absent; label unavailable")
    if not (0.0 <= lvef_baseline <= 100.0) or not (0.0 <= lvef_6mo <= 100.0):
        raise ValueError("LVEF values must lie in [0, 100]")
    return ResponseLabel(responder=(lvef_6mo - lvef_baseline) > RESPONSE_LVEF_GAIN)


def validate_record(record: PatientRecord) -> list[str]:
    """Check record invariants; returns one message per violation (empty = valid)."""
    violations: list[str] = []

    for spec in FEATURES:
        v = getattr(record, spec.attr)
        if v is None or spec.binary:
            continue
        if not math.isfinite(v):
            violations.append(f"{spec.name}: value {v!r} is not finite")
            continue
        if spec.lo is not None:
            if spec.strict_lo and v <= spec.lo:
                violations.append(f"{spec.name}: must be > {spec.lo}, got {v}")
            elif not spec.strict_lo and v < spec.lo:
                violations.append(f"{spec.name}: must be >= {spec.lo}, got {v}")
        if spec.hi is not None and v > spec.hi:
            violations.append(f"{spec.name}: must be <= {spec.hi}, got {v}")

    if record.lvef_6mo is not None and not (0.0 <= record.lvef_6mo <= 100.0):
        violations.append(
            f"{FOLLOWUP_LVEF_COLUMN}: must lie in [0, 100], got {record.lvef_6mo}"
        )

    nyha_set = sum(bool(getattr(record, a)) for a in _NYHA_ATTRS)
    if nyha_set > 1:
        violations.append(f"NYHA: flags must be mutually exclusive, {nyha_set} set")
    races_set = sum(bool(getattr(record, a)) for a in _RACE_ATTRS)
    if races_set > 1:
        violations.append(f"Race: flags must be mutually exclusive, {races_set} set")

    return violations


def _check_map(name: str, grid: np.ndarray, size: int) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.shape != (size, size):
        raise ValueError(f"{name}: expected shape ({size}, {size}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values must lie in [0, 1]")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PolarmapSet:
    """The three raw 64x64 rest polarmaps for one patient, values in [0, 1]."""

    perfusion: np.ndarray
    systolic_dyssynchrony: np.ndarray
    wall_thickening: np.ndarray

    def __post_init__(self) -> None:
        for f in fields(self):
            object.__setattr__(
                self, f.name, _check_map(f.name, getattr(self, f.name), POLARMAP_SIZE)
            )


@dataclass(frozen=True)
class CompositePolarmap:
    """The 128x128 four-quadrant image fed to the image branch.

    Layout is fixed: TL=perfusion, TR=systolic dyssynchrony, BL=wall
    thickening, BR=thresholded perfusion (see QUADRANT_LAYOUT).
    """

    pixels: np.ndarray
    layout: tuple[tuple[str, str], ...] = tuple(QUADRANT_LAYOUT.items())

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "pixels", _check_map("pixels", self.pixels, COMPOSITE_SIZE)
        )

    def quadrant(self, tag: str) -> np.ndarray:
        h = COMPOSITE_SIZE // 2
        slices = {
            "TL": (slice(0, h), slice(0, h)),
            "TR": (slice(0, h), slice(h, None)),
            "BL": (slice(h, None), slice(0, h)),
            "BR": (slice(h, None), slice(h, None)),
        }
        if tag not in slices:
            raise KeyError(f"unknown quadrant {tag!r}; expected one of {QUADRANT_ORDER}")
        return self.pixels[slices[tag]]


def continuous_feature_names() -> list[str]:
    return [f.name for f in FEATURES if not f.binary]


def binary_feature_names() -> list[str]:
    return [f.name for f in FEATURES if f.binary]


def validate_cohort_ids(ids: Iterable[str]) -> None:
    seen: set[str] = set()
    for pid in ids:
        if pid in seen:
            raise ValueError(f"duplicate patient_id {pid!r}")
        seen.add(pid)
