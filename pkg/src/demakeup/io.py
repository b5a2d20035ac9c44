"""Image files, pair manifests, age metadata and CSV interchange.

All tabular files are UTF-8 CSV with one header row.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from PIL import Image

from .types import ImageTensor, MakeupPair

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


class MetadataError(ValueError):
    pass


def read_image(path) -> ImageTensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(arr, "unit")


def write_image(img: ImageTensor, path) -> Path:
    if img.range_tag != "unit":
        raise ValueError("write_image expects a unit-range image")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(np.clip(img.values, 0, 1) * 255).astype(np.uint8)).save(path)
    return path


def _rows(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            yield lineno, {k.strip(): (v or "").strip() for k, v in row.items() if k}


def _require_columns(row: dict, columns, path, lineno):
    missing = [c for c in columns if c not in row]
    if missing:
        raise ManifestError(f"{path}: missing column(s) {missing} (row {lineno})")


def _parse_age(text: str, where: str) -> float:
    try:
        age = float(text)
    except ValueError:
        raise ManifestError(f"{where}: cannot parse age {text!r}") from None
    if not (math.isfinite(age) and 0 <= age <= 120):
        raise ManifestError(f"{where}: age {age} outside [0, 120]")
    return age


@dataclass(frozen=True)
class PairRecord:
    clean_path: Path
    madeup_path: Path
    age_years: float
    subject_id: str
    style: str = ""


@dataclass(frozen=True)
class PairManifest:
    records: tuple[PairRecord, ...]
    root: Path
    split_tag: str = "train"

    def __len__(self):
        return len(self.records)

    def load_pairs(self) -> list[MakeupPair]:
        return [MakeupPair(read_image(r.clean_path), read_image(r.madeup_path), r.age_years, r.subject_id, r.style)
                for r in self.records]


def load_pair_manifest(path, split_tag: str = "train") -> PairManifest:
    """CSV with columns clean_path, madeup_path, age, subject_id[, style].

    Relative image paths resolve against the manifest's directory.
    """
    path = Path(path)
    root = path.parent
    records = []
    for lineno, row in _rows(path):
        _require_columns(row, ("clean_path", "madeup_path", "age", "subject_id"), path, lineno)
        where = f"{path.name} row {lineno}"
        paths = []
        for col in ("clean_path", "madeup_path"):
            p = Path(row[col])
            p = p if p.is_absolute() else root / p
            if not p.exists():
                raise ManifestError(f"{where}: {col} {p} does not exist")
            paths.append(p)
        records.append(PairRecord(paths[0], paths[1], _parse_age(row["age"], where), row["subject_id"],
                                  row.get("style", "")))
    return PairManifest(tuple(records), root, split_tag)


def pairs_check(manifest: PairManifest) -> dict:
    """Dimension agreement and per-style counts for a manifest."""
    mismatched = []
    for r in manifest.records:
        with Image.open(r.clean_path) as a, Image.open(r.madeup_path) as b:
            if a.size != b.size:
                mismatched.append(r.subject_id)
    return {
        "pairs": len(manifest),
        "mismatched": mismatched,
        "styles": dict(Counter(r.style or "unspecified" for r in manifest.records)),
    }


@dataclass(frozen=True)
class AgeMetadata(Mapping):
    ages: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, image_id: str) -> float:
        try:
            return self.ages[image_id]
        except KeyError:
            raise KeyError(f"no age recorded for image id {image_id!r}") from None

    def __iter__(self):
        return iter(self.ages)

    def __len__(self):
        return len(self.ages)


def load_age_metadata(path) -> AgeMetadata:
    """Ages keyed by image id, from JSON (object or list of {id, age}) or CSV (id, age)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict):
            items = list(data.items())
        elif isinstance(data, list):
            try:
                items = [(d["id"], d["age"]) for d in data]
            except (KeyError, TypeError) as exc:
                raise MetadataError(f"{path}: list records need 'id' and 'age' ({exc})") from None
        else:
            raise MetadataError(f"{path}: expected an object or a list of records")
    else:
        items = []
        for lineno, row in _rows(path):
            if "id" not in row or "age" not in row:
                raise MetadataError(f"{path}: row {lineno} needs id and age columns")
            items.append((row["id"], row["age"]))
    ages = {}
    for key, val in items:
        try:
            age = float(val)
        except (TypeError, ValueError):
            raise MetadataError(f"{path}: malformed age {val!r} for id {key!r}") from None
        if not (math.isfinite(age) and 0 <= age <= 120):
            raise MetadataError(f"{path}: age {age} for id {key!r} outside [0, 120]")
        ages[str(key)] = age
    return AgeMetadata(ages)


def load_age_dataset(path, max_age: float | None = None) -> list[tuple[ImageTensor, float]]:
    """CSV with columns path, age; rows with age >= max_age are dropped."""
    path = Path(path)
    out = []
    for lineno, row in _rows(path):
        _require_columns(row, ("path", "age"), path, lineno)
        age = _parse_age(row["age"], f"{path.name} row {lineno}")
        if max_age is not None and age >= max_age:
            continue
        p = Path(row["path"])
        out.append((read_image(p if p.is_absolute() else path.parent / p), age))
    return out


@dataclass(frozen=True)
class PredictionRecord:
    id: str
    prediction: float
    truth: float
    group: str = ""


def read_predictions(path) -> list[PredictionRecord]:
    out = []
    for lineno, row in _rows(path):
        _require_columns(row, ("id", "prediction", "truth"), path, lineno)
        try:
            out.append(PredictionRecord(row["id"], float(row["prediction"]), float(row["truth"]), row.get("group", "")))
        except ValueError:
            raise ManifestError(f"{path} row {lineno}: non-numeric prediction or truth") from None
    return out


GENUINE_LABELS = {"genuine", "1", "true", "mate"}
IMPOSTOR_LABELS = {"impostor", "0", "false", "nonmate"}


def read_scores(path):
    """CSV with columns score, label (genuine/impostor or 1/0)."""
    from .evaluation import ScoreSet

    gen, imp = [], []
    for lineno, row in _rows(path):
        _require_columns(row, ("score", "label"), path, lineno)
        label = row["label"].lower()
        try:
            s = float(row["score"])
        except ValueError:
            raise ManifestError(f"{path} row {lineno}: non-numeric score") from None
        if label in GENUINE_LABELS:
            gen.append(s)
        elif label in IMPOSTOR_LABELS:
            imp.append(s)
        else:
            raise ManifestError(f"{path} row {lineno}: unknown label {row['label']!r}")
    return ScoreSet(np.array(gen), np.array(imp))


def write_rows(path, rows: list[dict], header: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = header or (list(rows[0]) if rows else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, quoting=csv.QUOTE_MINIMAL)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path
