"""Dataset schema, subject-disjoint splits, face cropping, and batching.

Images on disk are 8-bit RGB PNGs; Pillow is used only to decode and for
the bilinear resize inside crop_face. Everything else is plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

import numpy as np
from PIL import Image

from .errors import DataError, ShapeError
from .model import ATTACK, ATTACK_INDEX, BONA_FIDE, BONA_FIDE_INDEX

INPUT_HW = 32
NO_ATTACK = "none"
ATTACK_TYPES = ("normal_print", "glossy_print", "video_replay",
                "normal_print_mask", "glossy_print_mask")
DISTANCES = ("mid", "close")
SPLITS = ("train", "dev", "test")
DEFAULT_PADDING = 0.3
MANIFEST_NAME = "manifest.tsv"
_MANIFEST_FIELDS = ("path", "label", "attack_type", "subject", "distance", "padded")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned face box in frame pixel coordinates."""
    x: float
    y: float
    width: float
    height: float

    def validate(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise DataError(f"bbox must have positive size, got {self}")
        for v in (self.x, self.y, self.width, self.height):
            if not np.isfinite(v):
                raise DataError(f"bbox has non-finite field: {self}")


def _check_metadata(label: str, attack_type: str, subject_id: str, distance: str) -> None:
    if label not in (BONA_FIDE, ATTACK):
        raise DataError(f"unknown label {label!r}")
    if attack_type not in (NO_ATTACK,) + ATTACK_TYPES:
        raise DataError(f"unknown attack_type {attack_type!r}")
    if (label == BONA_FIDE) != (attack_type == NO_ATTACK):
        raise DataError(
            f"label {label!r} inconsistent with attack_type {attack_type!r}")
    if not subject_id:
        raise DataError("subject_id must be non-empty")
    if distance not in DISTANCES:
        raise DataError(f"unknown distance {distance!r}")


@dataclass
class FaceSample:
    image: np.ndarray
    label: str
    attack_type: str
    subject_id: str
    distance: str
    padded: bool

    def __post_init__(self):
        _check_metadata(self.label, self.attack_type, self.subject_id, self.distance)
        if self.image.ndim != 3 or self.image.shape[2] != 3 or self.image.dtype != np.uint8:
            raise ShapeError(
                f"sample image must be HxWx3 uint8, got {self.image.shape} {self.image.dtype}")


@dataclass(frozen=True)
class SampleRecord:
    """One manifest line; path is relative to the corpus root, POSIX style."""
    path: str
    label: str
    attack_type: str
    subject_id: str
    distance: str
    padded: bool

    @property
    def split(self) -> str:
        return PurePosixPath(self.path).parts[0]


@dataclass
class CorpusManifest:
    root: Path
    records: list[SampleRecord] = field(default_factory=list)

    def split_of_subject(self) -> dict[str, str]:
        assignment: dict[str, str] = {}
        for rec in self.records:
            prev = assignment.setdefault(rec.subject_id, rec.split)
            if prev != rec.split:
                raise DataError(
                    f"subject {rec.subject_id} appears in splits {prev} and {rec.split}")
        return assignment

    def select(self, split: str, padded: bool | None = None) -> list[SampleRecord]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [rec for rec in self.records
                if rec.split == split and (padded is None or rec.padded == padded)]


def split_by_subject(subjects, ratios=(3, 2, 1), seed: int = 0):
    """Deterministic subject-disjoint split; leftover subjects go to train, then dev."""
    subjects = sorted(subjects)
    if len(set(subjects)) != len(subjects):
        raise DataError("duplicate subject ids")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"ratios must be three positive numbers, got {ratios}")
    if len(subjects) < len(ratios):
        raise DataError(
            f"need at least {len(ratios)} subjects to fill every split, got {len(subjects)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    total = sum(ratios)
    counts = [len(subjects) * r // total for r in ratios]
    for i in range(len(subjects) - sum(counts)):
        counts[i % 3] += 1
    train = sorted(order[:counts[0]])
    dev = sorted(order[counts[0]:counts[0] + counts[1]])
    test = sorted(order[counts[0] + counts[1]:])
    return train, dev, test


def _check_frame(frame: np.ndarray) -> None:
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ShapeError(f"frame must be HxWx3 uint8, got {frame.shape} {frame.dtype}")


def crop_face(frame: np.ndarray, bbox: BBox, padding_fraction: float = DEFAULT_PADDING,
              out_hw: int = INPUT_HW) -> np.ndarray:
    """Expand bbox by padding_fraction*max(w,h) per side, clamp, crop, resize.

    Returns an out_hw x out_hw x 3 uint8 image (bilinear resample).
    """
    _check_frame(frame)
    bbox.validate()
    if padding_fraction < 0:
        raise DataError(f"padding_fraction must be >= 0, got {padding_fraction}")
    h, w = frame.shape[:2]
    if bbox.x >= w or bbox.y >= h or bbox.x + bbox.width <= 0 or bbox.y + bbox.height <= 0:
        raise DataError(f"bbox {bbox} lies fully outside the {w}x{h} frame")
    pad = padding_fraction * max(bbox.width, bbox.height)
    x0 = max(0, int(np.floor(bbox.x - pad)))
    y0 = max(0, int(np.floor(bbox.y - pad)))
    x1 = min(w, int(np.ceil(bbox.x + bbox.width + pad)))
    y1 = min(h, int(np.ceil(bbox.y + bbox.height + pad)))
    region = frame[y0:y1, x0:x1]
    resized = Image.fromarray(region).resize((out_hw, out_hw), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def normalize_face(image: np.ndarray, divisor: float = 255.0) -> np.ndarray:
    """8-bit HxWx3 image -> float32 [3, H, W] scaled by 1/divisor."""
    if image.shape != (INPUT_HW, INPUT_HW, 3) or image.dtype != np.uint8:
        raise ShapeError(
            f"expected {INPUT_HW}x{INPUT_HW}x3 uint8 image, got {image.shape} {image.dtype}")
    return np.ascontiguousarray(
        image.transpose(2, 0, 1).astype(np.float32) / np.float32(divisor))


def label_to_index(label: str) -> int:
    if label == BONA_FIDE:
        return BONA_FIDE_INDEX
    if label == ATTACK:
        return ATTACK_INDEX
    raise DataError(f"unknown label {label!r}")


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def load_sample(manifest: CorpusManifest, record: SampleRecord) -> FaceSample:
    image = load_image(Path(manifest.root) / record.path)
    return FaceSample(image=image, label=record.label, attack_type=record.attack_type,
                      subject_id=record.subject_id, distance=record.distance,
                      padded=record.padded)


def batch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """The canonical shuffle order for (seed, epoch); shared by every consumer."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    return rng.permutation(n)


def iterate_batches(manifest: CorpusManifest, split: str, batch_size: int = 32,
                    seed: int = 0, epoch: int = 0, divisor: float = 255.0):
    """One shuffled pass over a split: yields (images [N,3,32,32] f32, labels [N] i64)."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    records = manifest.select(split)
    order = batch_permutation(len(records), seed, epoch)
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        images = np.stack([
            normalize_face(load_image(Path(manifest.root) / rec.path), divisor=divisor)
            for rec in chunk])
        labels = np.array([label_to_index(rec.label) for rec in chunk], dtype=np.int64)
        yield images, labels


def load_split_arrays(manifest: CorpusManifest, split: str, padded: bool | None = None,
                      divisor: float = 255.0):
    """Eagerly load a split: (images [N,3,32,32] f32, labels [N] i64, records)."""
    records = manifest.select(split, padded=padded)
    if not records:
        raise DataError(f"split {split!r} has no samples")
    images = np.stack([
        normalize_face(load_image(Path(manifest.root) / rec.path), divisor=divisor)
        for rec in records])
    labels = np.array([label_to_index(rec.label) for rec in records], dtype=np.int64)
    return images, labels, records


def write_manifest(manifest: CorpusManifest) -> Path:
    path = Path(manifest.root) / MANIFEST_NAME
    lines = ["\t".join(_MANIFEST_FIELDS)]
    for rec in manifest.records:
        lines.append("\t".join([rec.path, rec.label, rec.attack_type, rec.subject_id,
                                rec.distance, "1" if rec.padded else "0"]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(root, check_files: bool = True) -> CorpusManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"no manifest at {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != _MANIFEST_FIELDS:
        raise DataError(f"manifest header mismatch in {path}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(_MANIFEST_FIELDS):
            raise DataError(f"{path}:{lineno}: expected {len(_MANIFEST_FIELDS)} fields")
        rel, label, attack_type, subject, distance, padded = parts
        _check_metadata(label, attack_type, subject, distance)
        if padded not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: padded must be 0 or 1, got {padded!r}")
        split = PurePosixPath(rel).parts[0]
        if split not in SPLITS:
            raise DataError(f"{path}:{lineno}: path must start with a split, got {rel!r}")
        if check_files and not (root / rel).is_file():
            raise DataError(f"{path}:{lineno}: missing file {rel}")
        records.append(SampleRecord(path=rel, label=label, attack_type=attack_type,
                                    subject_id=subject, distance=distance,
                                    padded=padded == "1"))
    manifest = CorpusManifest(root=root, records=records)
    manifest.split_of_subject()
    return manifest
