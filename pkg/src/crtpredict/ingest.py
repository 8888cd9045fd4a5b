"""Cohort ingestion and synthetic cohort generation.

On-disk formats
---------------
Tabular file: UTF-8 CSV with a header row.  Columns: ``patient_id``, the 44
canonical feature names (see domain.FEATURE_NAMES), and ``LVEF 6mo``.  Binary
variables are written as 0/1, reals with full round-trip precision, absent
values as empty cells.

Polarmap files: one file per patient and map type named
``<patient_id>_<perf|dys|wt>.<ext>``.  Supported encodings: ``.txt`` (64 rows
of 64 decimals in [0, 1], 6-decimal precision) and ``.png`` (8-bit grayscale,
value = pixel / 255).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .domain import (
    FEATURE_NAMES,
    FEATURES,
    FOLLOWUP_LVEF_COLUMN,
    POLARMAP_SIZE,
    PatientRecord,
    PolarmapSet,
    ResponseLabel,
    derive_label,
    validate_cohort_ids,
    validate_record,
)
from .seeding import derive_seed

MAP_SUFFIXES = {"perfusion": "perf", "systolic_dyssynchrony": "dys", "wall_thickening": "wt"}
MAP_TEXT_PRECISION = 6  # decimals kept by the .txt polarmap encoding


class CohortError(Exception):
    """Base class for ingestion failures."""


class EmptyCohortError(CohortError):
    pass


class RowFormatError(CohortError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PolarmapFilesMissingError(CohortError):
    def __init__(self, patient_id: str, missing: list[str]):
        super().__init__(
            f"patient {patient_id!r}: missing polarmap file(s) for {', '.join(missing)}"
        )
        self.patient_id = patient_id
        self.missing = missing


@dataclass(frozen=True)
class CohortTable:
    """Ordered patient records with derived labels (None = label unavailable)."""

    records: tuple[PatientRecord, ...]
    labels: tuple[ResponseLabel | None, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        if len(self.records) != len(self.labels):
            raise ValueError("records and labels must have equal length")
        validate_cohort_ids(r.patient_id for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return tuple(r.patient_id for r in self.records)

    def labeled_indices(self) -> np.ndarray:
        """Indices of patients with an available response label."""
        return np.array([i for i, lab in enumerate(self.labels) if lab is not None], dtype=int)

    def feature_matrix(self, indices: np.ndarray | None = None) -> np.ndarray:
        idx = range(len(self)) if indices is None else indices
        return np.stack([self.records[i].feature_vector() for i in idx])

    def label_array(self, indices: np.ndarray | None = None) -> np.ndarray:
        idx = range(len(self)) if indices is None else indices
        out = []
        for i in idx:
            lab = self.labels[i]
            if lab is None:
                raise ValueError(
                    f"patient {self.records[i].patient_id!r} has no response label"
                )
            out.append(int(lab.responder))
        return np.array(out, dtype=int)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic cohort generator.

    image_signal_quadrant selects which composite quadrant carries the planted
    responder pattern (the bump is added to that quadrant's source map; BR
    plants into perfusion, whose thresholded copy fills BR).
    """

    n_patients: int = 218
    responder_fraction: float = 0.555
    image_signal_quadrant: str = "none"  # TL | TR | BL | BR | none
    image_signal_strength: float = 0.0
    tabular_signal_features: tuple[str, ...] = ()
    tabular_signal_strength: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if not (0.0 < self.responder_fraction < 1.0):
            raise ValueError("responder_fraction must lie in (0, 1)")
        if self.image_signal_quadrant not in ("TL", "TR", "BL", "BR", "none"):
            raise ValueError(f"invalid quadrant {self.image_signal_quadrant!r}")
        if self.image_signal_strength < 0 or self.tabular_signal_strength < 0:
            raise ValueError("signal strengths must be >= 0")
        unknown = set(self.tabular_signal_features) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown tabular signal features: {sorted(unknown)}")
        object.__setattr__(
            self, "tabular_signal_features", tuple(self.tabular_signal_features)
        )


# Marginal distributions for the synthetic generator.  Continuous variables:
# (mean, sd, lo, hi) for a clipped normal; binary variables: base probability.
# NYHA and race are drawn as single categorical choices.
CONTINUOUS_MARGINALS: dict[str, tuple[float, float, float | None, float | None]] = {
    "Age": (62.0, 11.8, 18.0, 95.0),
    "QRSd": (158.6, 27.2, 80.0, 260.0),
    "SRS": (18.2, 12.2, 0.0, 69.0),
    "ESV": (192.6, 108.0, 20.0, 700.0),
    "EDV": (255.5, 118.0, 40.0, 900.0),
    "LVEF": (27.7, 11.0, 5.0, 80.0),
    "Mass": (215.2, 58.4, 60.0, 600.0),
    "Stroke Volume": (62.9, 23.2, 10.0, 200.0),
    "WT %": (22.0, 16.9, 0.0, 100.0),
    "WT Sum": (11.2, 8.7, 0.0, 60.0),
    "Scar %": (22.7, 14.0, 0.0, 100.0),
    "Systolic PBW": (158.3, 77.5, 0.0, 360.0),
    "Systolic PSD": (50.0, 20.6, 0.0, 180.0),
    "Systolic PK": (8.4, 8.1, None, None),
    "Systolic PS": (2.5, 0.9, None, None),
    "Systolic PP": (132.5, 37.2, 0.0, 360.0),
    "Diastolic PBW": (169.4, 80.5, 0.0, 360.0),
    "Diastolic PSD": (52.3, 20.7, 0.0, 180.0),
    "Diastolic PK": (8.4, 7.3, None, None),
    "Diastolic PS": (2.5, 0.8, None, None),
    "Diastolic PP": (221.0, 39.0, 0.0, 360.0),
    "EDE": (0.6, 0.2, 0.0, 1.0),
    "ESE": (0.6, 0.2, 0.0, 1.0),
    "EDSI": (0.8, 0.1, 0.0, 1.0),
    "ESSI": (0.8, 0.1, 0.0, 1.0),
}

BINARY_MARGINALS: dict[str, float] = {
    "Gender": 0.610,
    "Smoking": 0.188,
    "DM": 0.243,
    "HTN": 0.537,
    "MI": 0.156,
    "CAD": 0.312,
    "CABG": 0.014,
    "PCI": 0.055,
    "LBBB": 0.700,
    "ACEI/ARB": 0.821,
    "Concordance": 0.225,
}

RACE_CATEGORIES: tuple[tuple[str, float], ...] = (
    ("Race African", 0.069),
    ("Race Asian", 0.349),
    ("Race Caucasian", 0.096),
    ("Race Hispanic", 0.349),
    ("Race Indian", 0.137),
)

NYHA_CATEGORIES: tuple[tuple[str, float], ...] = (
    ("NYHA 2", 0.271),
    ("NYHA 3", 0.583),
    ("NYHA 4", 0.146),
)

# Responder LVEF change in points: strictly above the +5 rule for responders,
# strictly below for non-responders, with margin so float noise cannot flip a
# label. Follow-up stays within [0, 100] given the baseline clip range.
_RESPONDER_DELTA = (5.5, 15.0)
_NONRESPONDER_DELTA = (-10.0, 4.5)

BUMP_SIGMA_PX = 12.0  # spatial scale of the planted Gaussian pattern
FIELD_COARSE_CELLS = 8  # low-frequency background resolution before upsampling
FIELD_RANGE = (0.2, 0.6)  # background maps occupy this value range

_QUADRANT_SOURCE = {
    "TL": "perfusion",
    "TR": "systolic_dyssynchrony",
    "BL": "wall_thickening",
    "BR": "perfusion",  # BR shows thresholded perfusion
}


def round_half_up(x: float) -> int:
    """Deterministic rounding used for all count arithmetic (0.5 rounds up)."""
    return int(np.floor(x + 0.5))


def _smooth_field(rng: np.random.Generator) -> np.ndarray:
    coarse = rng.normal(size=(FIELD_COARSE_CELLS, FIELD_COARSE_CELLS))
    zoom = POLARMAP_SIZE / FIELD_COARSE_CELLS
    up = ndimage.zoom(coarse, zoom, order=1, mode="nearest", grid_mode=True)
    lo, hi = up.min(), up.max()
    unit = (up - lo) / (hi - lo) if hi > lo else np.zeros_like(up)
    a, b = FIELD_RANGE
    return unit * (b - a) + a


def _gaussian_bump(strength: float, sigma: float = BUMP_SIGMA_PX) -> np.ndarray:
    c = (POLARMAP_SIZE - 1) / 2.0
    yy, xx = np.mgrid[0:POLARMAP_SIZE, 0:POLARMAP_SIZE]
    return strength * np.exp(-((yy - c) ** 2 + (xx - c) ** 2) / (2.0 * sigma**2))


def _draw_features(rng: np.random.Generator, responder: bool, spec: SyntheticSpec) -> dict:
    shift = spec.tabular_signal_strength if responder else 0.0
    signal = set(spec.tabular_signal_features)
    values: dict[str, float | bool] = {}

    race_names = [n for n, _ in RACE_CATEGORIES]
    race_pick = rng.choice(len(race_names), p=[p for _, p in RACE_CATEGORIES])
    nyha_names = [n for n, _ in NYHA_CATEGORIES]
    nyha_pick = rng.choice(len(nyha_names), p=[p for _, p in NYHA_CATEGORIES])

    for spec_f in FEATURES:
        name = spec_f.name
        if name in race_names:
            values[name] = name == race_names[race_pick]
        elif name in nyha_names:
            values[name] = name == nyha_names[nyha_pick]
        elif spec_f.binary:
            p = BINARY_MARGINALS[name]
            if name in signal:
                p = float(np.clip(p + shift * np.sqrt(p * (1 - p)), 0.01, 0.99))
            values[name] = bool(rng.random() < p)
        else:
            mean, sd, lo, hi = CONTINUOUS_MARGINALS[name]
            if name in signal:
                mean = mean + shift * sd
            v = rng.normal(mean, sd)
            if lo is not None or hi is not None:
                v = float(np.clip(v, lo if lo is not None else -np.inf,
                                  hi if hi is not None else np.inf))
            values[name] = float(v)
    return values


def _draw_maps(rng: np.random.Generator, responder: bool, spec: SyntheticSpec) -> PolarmapSet:
    maps = {
        "perfusion": _smooth_field(rng),
        "systolic_dyssynchrony": _smooth_field(rng),
        "wall_thickening": _smooth_field(rng),
    }
    if responder and spec.image_signal_quadrant != "none" and spec.image_signal_strength > 0:
        target = _QUADRANT_SOURCE[spec.image_signal_quadrant]
        bumped = maps[target] + _gaussian_bump(spec.image_signal_strength)
        maps[target] = np.clip(bumped, 0.0, 1.0)
    return PolarmapSet(**maps)


def generate_synthetic_cohort(
    spec: SyntheticSpec,
) -> tuple[CohortTable, dict[str, PolarmapSet]]:
    """Generate a deterministic cohort with optional planted tabular/image signal."""
    n_resp = round_half_up(spec.n_patients * spec.responder_fraction)
    label_flags = np.zeros(spec.n_patients, dtype=bool)
    label_flags[:n_resp] = True
    order_rng = np.random.default_rng(derive_seed(spec.seed, "synth", "label-order"))
    label_flags = label_flags[order_rng.permutation(spec.n_patients)]

    records: list[PatientRecord] = []
    labels: list[ResponseLabel | None] = []
    polarmaps: dict[str, PolarmapSet] = {}
    width = max(4, len(str(spec.n_patients)))

    for i in range(spec.n_patients):
        rng = np.random.default_rng(derive_seed(spec.seed, "synth", "patient", i))
        responder = bool(label_flags[i])
        values = _draw_features(rng, responder, spec)
        lvef = float(values["LVEF"])
        lo, hi = _RESPONDER_DELTA if responder else _NONRESPONDER_DELTA
        lvef_6mo = float(np.clip(lvef + rng.uniform(lo, hi), 0.0, 100.0))
        pid = f"SYN-{i:0{width}d}"
        record = PatientRecord.from_features(pid, values, lvef_6mo=lvef_6mo)
        problems = validate_record(record)
        if problems:  # generator bug, not a data error
            raise AssertionError(f"generated invalid record {pid}: {problems}")
        records.append(record)
        labels.append(derive_label(lvef, lvef_6mo))
        polarmaps[pid] = _draw_maps(rng, responder, spec)

    cohort = CohortTable(records=tuple(records), labels=tuple(labels))
    return cohort, polarmaps


# ---------------------------------------------------------------------------
# Disk round trip
# ---------------------------------------------------------------------------

def _format_cell(value: float | bool | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    return repr(float(value))


def write_cohort(
    cohort: CohortTable,
    polarmaps: dict[str, PolarmapSet],
    tabular_path: str | Path,
    polarmap_dir: str | Path,
    map_format: str = "txt",
) -> None:
    """Write the cohort CSV and one file per (patient, map type)."""
    if map_format not in ("txt", "png"):
        raise ValueError(f"unsupported map format {map_format!r}")
    tabular_path = Path(tabular_path)
    polarmap_dir = Path(polarmap_dir)
    polarmap_dir.mkdir(parents=True, exist_ok=True)

    with open(tabular_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", *FEATURE_NAMES, FOLLOWUP_LVEF_COLUMN])
        for record in cohort.records:
            values = record.feature_values()
            row = [record.patient_id]
            row.extend(_format_cell(values[name]) for name in FEATURE_NAMES)
            row.append(_format_cell(record.lvef_6mo))
            writer.writerow(row)

    for record in cohort.records:
        pid = record.patient_id
        if pid not in polarmaps:
            raise PolarmapFilesMissingError(pid, list(MAP_SUFFIXES.values()))
        maps = polarmaps[pid]
        for attr, suffix in MAP_SUFFIXES.items():
            grid = getattr(maps, attr)
            path = polarmap_dir / f"{pid}_{suffix}.{map_format}"
            if map_format == "txt":
                _write_map_txt(grid, path)
            else:
                _write_map_png(grid, path)


def _write_map_txt(grid: np.ndarray, path: Path) -> None:
    lines = [
        " ".join(f"{v:.{MAP_TEXT_PRECISION}f}" for v in row) for row in np.asarray(grid)
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_map_png(grid: np.ndarray, path: Path) -> None:
    img = Image.fromarray(np.rint(np.asarray(grid) * 255.0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def _read_map_file(path: Path) -> np.ndarray:
    if path.suffix == ".txt":
        rows = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rows.append([float(tok) for tok in line.split()])
        return np.array(rows, dtype=np.float64)
    if path.suffix == ".png":
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64)
        return arr / 255.0
    raise CohortError(f"unsupported polarmap file type: {path.name}")


def _parse_cell(name: str, text: str, binary: bool, line: int) -> float | bool | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise RowFormatError(line, f"non-numeric value for {name!r}: {text!r}") from None
    if binary:
        if value not in (0.0, 1.0):
            raise RowFormatError(line, f"binary field {name!r} must be 0 or 1, got {text!r}")
        return bool(value)
    return value


def load_cohort(
    tabular_path: str | Path, polarmap_dir: str | Path
) -> tuple[CohortTable, dict[str, PolarmapSet]]:
    """Load a cohort CSV plus the three polarmaps of every patient.

    Rows failing record invariants raise RowFormatError with their line
    number; patients lacking any of the three map files raise
    PolarmapFilesMissingError naming the absent maps.
    """
    tabular_path = Path(tabular_path)
    polarmap_dir = Path(polarmap_dir)
    if not tabular_path.is_file():
        raise CohortError(f"tabular file not found: {tabular_path}")
    if not polarmap_dir.is_dir():
        raise CohortError(f"polarmap directory not found: {polarmap_dir}")

    with open(tabular_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCohortError(f"{tabular_path}: file is empty") from None
        expected = ["patient_id", *FEATURE_NAMES, FOLLOWUP_LVEF_COLUMN]
        if header != expected:
            missing = [c for c in expected if c not in header]
            raise RowFormatError(1, f"bad header; missing/misordered columns: {missing or header}")

        records: list[PatientRecord] = []
        labels: list[ResponseLabel | None] = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise RowFormatError(line, f"expected {len(expected)} cells, got {len(row)}")
            pid = row[0].strip()
            if not pid:
                raise RowFormatError(line, "empty patient_id")
            values: dict[str, float | bool | None] = {}
            for j, spec in enumerate(FEATURES, start=1):
                values[spec.name] = _parse_cell(spec.name, row[j], spec.binary, line)
            lvef_6mo = _parse_cell(FOLLOWUP_LVEF_COLUMN, row[-1], False, line)
            record = PatientRecord.from_features(pid, values, lvef_6mo=lvef_6mo)
            problems = validate_record(record)
            if problems:
                raise RowFormatError(line, f"invalid record {pid!r}: {'; '.join(problems)}")
            records.append(record)
            if record.lvef is not None and lvef_6mo is not None:
                labels.append(derive_label(record.lvef, lvef_6mo))
            else:
                labels.append(None)  # label unavailable; excluded from supervised splits

    if not records:
        raise EmptyCohortError(f"{tabular_path}: no patient rows")
    cohort = CohortTable(records=tuple(records), labels=tuple(labels))

    polarmaps: dict[str, PolarmapSet] = {}
    for record in cohort.records:
        pid = record.patient_id
        loaded: dict[str, np.ndarray] = {}
        missing: list[str] = []
        for attr, suffix in MAP_SUFFIXES.items():
            candidates = sorted(polarmap_dir.glob(f"{pid}_{suffix}.*"))
            if not candidates:
                missing.append(suffix)
                continue
            loaded[attr] = _read_map_file(candidates[0])
        if missing:
            raise PolarmapFilesMissingError(pid, missing)
        try:
            polarmaps[pid] = PolarmapSet(**loaded)
        except ValueError as exc:
            raise CohortError(f"patient {pid!r}: {exc}") from exc

    return cohort, polarmaps
