"""Procedural spoof corpus: parametric faces plus per-class capture artifacts.

Bona fide scenes put a rendered face on a natural-ish background. Attack
scenes re-photograph the same face through a presentation medium and add
its artifacts: paper margin and halftone raster for prints, a specular
streak for glossy stock, bezel/moire/scanlines for screen replays, and a
warped face with a paper ring for cut-out masks. The artifacts, not the
face identities, are what a detector can transfer across subject-disjoint
splits.

Everything is deterministic per (seed, subject, class, index).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import (
    ATTACK_TYPES,
    DEFAULT_PADDING,
    DISTANCES,
    NO_ATTACK,
    BBox,
    CorpusManifest,
    SampleRecord,
    crop_face,
    split_by_subject,
    write_manifest,
)
from .errors import DataError
from .model import ATTACK, BONA_FIDE

SCENE_HW = 96


@dataclass(frozen=True)
class SubjectParams:
    skin: tuple
    hair: tuple
    aspect: float
    eye_spacing: float
    eye_size: float
    mouth_width: float


def subject_params(seed: int, subject_index: int) -> SubjectParams:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFACE, subject_index]))
    skin = (float(rng.uniform(150, 225)), float(rng.uniform(105, 180)),
            float(rng.uniform(85, 150)))
    hair = tuple(float(v) for v in rng.uniform(15, 95, size=3))
    return SubjectParams(
        skin=skin, hair=hair,
        aspect=float(rng.uniform(0.70, 0.84)),
        eye_spacing=float(rng.uniform(0.36, 0.50)),
        eye_size=float(rng.uniform(0.07, 0.11)),
        mouth_width=float(rng.uniform(0.30, 0.46)),
    )


def _grids(hw: int = SCENE_HW):
    yy, xx = np.mgrid[0:hw, 0:hw].astype(np.float32)
    return yy, xx


def _soft_ellipse(yy, xx, cy, cx, ry, rx, sharp: float = 2.0):
    d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    return np.clip((1.0 - d) * sharp * max(ry, rx) * 0.5, 0.0, 1.0).astype(np.float32)


def _paint(canvas, alpha, color):
    canvas += alpha[:, :, None] * (np.asarray(color, dtype=np.float32) - canvas)


def render_face_layer(params: SubjectParams, cy, cx, face_h, rng):
    """Face on a transparent layer. Returns (layer HxWx3, alpha HxW, BBox)."""
    yy, xx = _grids()
    layer = np.zeros((SCENE_HW, SCENE_HW, 3), dtype=np.float32)
    ry = face_h / 2.0
    rx = ry * params.aspect

    face_a = _soft_ellipse(yy, xx, cy, cx, ry, rx)
    shade = 1.0 - 0.10 * np.clip((yy - cy) / ry, -1, 1)
    skin = np.asarray(params.skin, dtype=np.float32)
    layer += face_a[:, :, None] * skin * shade[:, :, None]

    hair_a = _soft_ellipse(yy, xx, cy - 0.72 * ry, cx, 0.48 * ry, rx * 1.06)
    hair_a = np.clip(hair_a - face_a * (yy > cy - 0.55 * ry), 0, 1)
    _paint(layer, np.where(face_a + hair_a > 0, hair_a, 0), params.hair)

    eye_y = cy - 0.16 * face_h
    eye_dx = params.eye_spacing * rx
    eye_r = max(1.3, params.eye_size * face_h)
    for sx in (-1, 1):
        eye_a = _soft_ellipse(yy, xx, eye_y, cx + sx * eye_dx, eye_r * 0.7, eye_r)
        _paint(layer, eye_a * face_a, (35.0, 30.0, 32.0))

    mouth_a = _soft_ellipse(yy, xx, cy + 0.52 * ry, cx,
                            0.055 * face_h, params.mouth_width * rx)
    _paint(layer, mouth_a * face_a, (155.0, 62.0, 70.0))

    alpha = np.clip(face_a + hair_a, 0.0, 1.0)
    jagg = rng.uniform(-0.8, 0.8)
    bbox = BBox(x=float(cx - rx * 1.12 + jagg), y=float(cy - ry * 1.14),
                width=float(rx * 2.24), height=float(ry * 2.22))
    return layer, alpha, bbox


def _natural_background(rng):
    yy, xx = _grids()
    c0 = rng.uniform(45, 165, size=3).astype(np.float32)
    c1 = rng.uniform(45, 165, size=3).astype(np.float32)
    t = ((xx * np.cos(rng.uniform(0, np.pi)) + yy * np.sin(rng.uniform(0, np.pi)))
         / SCENE_HW)
    t = (t - t.min()) / max(1e-6, t.max() - t.min())
    bg = c0 + t[:, :, None] * (c1 - c0)
    for _ in range(3):
        bcy, bcx = rng.uniform(0, SCENE_HW, size=2)
        sigma = rng.uniform(10, 28)
        blob = np.exp(-((yy - bcy) ** 2 + (xx - bcx) ** 2) / (2 * sigma ** 2))
        bg += blob[:, :, None] * rng.uniform(-26, 26, size=3).astype(np.float32)
    return bg


def _flat_background(rng, lo=165, hi=215):
    yy, _ = _grids()
    base = rng.uniform(lo, hi, size=3).astype(np.float32)
    return base + (yy[:, :, None] / SCENE_HW) * rng.uniform(-14, 14)


def _halftone(region_shape_grids, rng, period):
    """Rotated dot raster in [0,1]; 1 where ink lands."""
    yy, xx = region_shape_grids
    theta = rng.uniform(0, np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    v = -xx * np.sin(theta) + yy * np.cos(theta)
    wave = np.sin(2 * np.pi * u / period) * np.sin(2 * np.pi * v / period)
    return (wave > 0.15).astype(np.float32)


def _specular_streak(rng, amp):
    yy, xx = _grids()
    theta = rng.uniform(0.3, np.pi - 0.3)
    c = rng.uniform(0.25, 0.75) * SCENE_HW
    d = xx * np.cos(theta) + yy * np.sin(theta) - c
    sigma = rng.uniform(5, 9)
    return (amp * np.exp(-(d ** 2) / (2 * sigma ** 2))).astype(np.float32)


def _moire(rng, amp):
    yy, xx = _grids()
    a1, a2 = rng.uniform(0, np.pi, size=2)
    p1 = rng.uniform(2.8, 3.4)
    p2 = p1 * rng.uniform(1.12, 1.3)
    g1 = np.sin(2 * np.pi * (xx * np.cos(a1) + yy * np.sin(a1)) / p1)
    g2 = np.sin(2 * np.pi * (xx * np.cos(a2) + yy * np.sin(a2)) / p2)
    return (amp * 0.5 * (g1 + g2)).astype(np.float32)


def _row_warp(img, alpha, rng):
    """Horizontal sinusoidal row shift of the face layer (mask wobble)."""
    h, w = alpha.shape
    amp = rng.uniform(1.4, 2.6)
    lam = rng.uniform(9, 15)
    phase = rng.uniform(0, 2 * np.pi)
    rows = np.arange(h, dtype=np.float32)
    dx = np.rint(amp * np.sin(2 * np.pi * rows / lam + phase)).astype(int)
    cols = np.arange(w)
    src = np.clip(cols[None, :] - dx[:, None], 0, w - 1)
    rows_idx = np.arange(h)[:, None]
    return img[rows_idx, src], alpha[rows_idx, src]


def _face_geometry(distance: str, rng):
    face_h = rng.uniform(50, 60) if distance == "close" else rng.uniform(30, 38)
    jitter = 5 if distance == "close" else 8
    cy = SCENE_HW / 2 + rng.uniform(-jitter, jitter)
    cx = SCENE_HW / 2 + rng.uniform(-jitter, jitter)
    return cy, cx, face_h


def _wash(img, rng):
    """Reprint color response: lifted blacks, mild desaturation."""
    gray = img.mean(axis=2, keepdims=True)
    mixed = 0.62 * img + 0.38 * gray
    return mixed * 0.82 + rng.uniform(18, 30)


def render_scene(attack_type: str, params: SubjectParams, distance: str, rng):
    """One full scene; returns (uint8 HxWx3 image, face BBox)."""
    yy_xx = _grids()
    cy, cx, face_h = _face_geometry(distance, rng)
    face, alpha, bbox = render_face_layer(params, cy, cx, face_h, rng)

    if attack_type == NO_ATTACK:
        scene = _natural_background(rng)
        scene = scene * (1 - alpha[:, :, None]) + face * alpha[:, :, None]

    elif attack_type in ("normal_print", "glossy_print"):
        content = _flat_background(rng)
        content = content * (1 - alpha[:, :, None]) + face * alpha[:, :, None]
        content = _wash(content, rng)
        period = 3.0 if attack_type == "glossy_print" else 4.2
        dots = _halftone(yy_xx, rng, period * rng.uniform(0.9, 1.1))
        content = content - dots[:, :, None] * rng.uniform(20, 30)
        if attack_type == "glossy_print":
            content = content * 1.06 + _specular_streak(rng, rng.uniform(55, 90))[:, :, None]
        # blank paper margin around the printed photo
        margin = int(rng.uniform(7, 12))
        paper = np.full((SCENE_HW, SCENE_HW, 3), rng.uniform(234, 248), dtype=np.float32)
        paper += rng.standard_normal(paper.shape).astype(np.float32) * 2.0
        scene = paper
        scene[margin:-margin, margin:-margin] = content[margin:-margin, margin:-margin]

    elif attack_type == "video_replay":
        content = _flat_background(rng, lo=70, hi=150)
        content = content * (1 - alpha[:, :, None]) + face * alpha[:, :, None]
        cast = np.asarray([-12.0, 2.0, 18.0], dtype=np.float32)
        content = content + cast + _moire(rng, rng.uniform(12, 18))[:, :, None]
        content[::3] *= 0.86
        content += _specular_streak(rng, rng.uniform(25, 45))[:, :, None]
        bezel = int(rng.uniform(6, 10))
        screen = np.full((SCENE_HW, SCENE_HW, 3), rng.uniform(14, 34), dtype=np.float32)
        screen += rng.standard_normal(screen.shape).astype(np.float32) * 1.5
        scene = screen
        scene[bezel:-bezel, bezel:-bezel] = content[bezel:-bezel, bezel:-bezel]

    elif attack_type in ("normal_print_mask", "glossy_print_mask"):
        scene = _natural_background(rng)
        warped_face, warped_alpha = _row_warp(face, alpha, rng)
        period = 3.0 if attack_type == "glossy_print_mask" else 4.2
        dots = _halftone(yy_xx, rng, period * rng.uniform(0.9, 1.1))
        warped_face = warped_face - dots[:, :, None] * rng.uniform(20, 30)
        if attack_type == "glossy_print_mask":
            streak = _specular_streak(rng, rng.uniform(55, 90))
            warped_face = warped_face * 1.06 + streak[:, :, None]
        # paper ring: the cut-out sheet edge around the mask
        yy, xx = yy_xx
        ry, rx = face_h / 2.0, face_h / 2.0 * params.aspect
        outer = _soft_ellipse(yy, xx, cy, cx, ry * 1.30, rx * 1.34)
        ring = np.clip(outer - warped_alpha, 0, 1)
        _paint(scene, ring, (rng.uniform(228, 244),) * 3)
        scene = scene * (1 - warped_alpha[:, :, None]) + warped_face * warped_alpha[:, :, None]

    else:
        raise DataError(f"unknown attack_type {attack_type!r}")

    scene += rng.standard_normal(scene.shape).astype(np.float32) * 2.2
    return np.clip(scene, 0, 255).astype(np.uint8), bbox


_CLASS_CODES = {name: i + 1 for i, name in enumerate(ATTACK_TYPES)}
_CLASS_CODES[NO_ATTACK] = 0


def scene_rng(seed: int, subject_index: int, attack_type: str, index: int):
    return np.random.default_rng(
        np.random.SeedSequence([seed, subject_index, _CLASS_CODES[attack_type], index]))


def synth_corpus(root, seed: int = 0, n_subjects: int = 20,
                 per_class: int = 25) -> CorpusManifest:
    """Write a full corpus under root and return its manifest.

    Per subject: per_class bona fide scenes and per_class attack scenes
    cycling the five attack types; each scene yields a padded and a tight
    crop, so files = n_subjects * 2 * per_class * 2.
    """
    if n_subjects <= 0:
        raise DataError(f"n_subjects must be positive, got {n_subjects}")
    if per_class <= 0:
        raise DataError(f"per_class must be positive, got {per_class}")
    root = Path(root)
    subject_ids = [f"s{i:03d}" for i in range(n_subjects)]
    train, dev, test = split_by_subject(subject_ids, seed=seed)
    split_of = {s: "train" for s in train}
    split_of.update({s: "dev" for s in dev})
    split_of.update({s: "test" for s in test})

    records = []
    for subj_idx, sid in enumerate(subject_ids):
        split = split_of[sid]
        params = subject_params(seed, subj_idx)
        for is_attack in (False, True):
            label = ATTACK if is_attack else BONA_FIDE
            class_dir = "attack" if is_attack else "bona_fide"
            for i in range(per_class):
                attack_type = ATTACK_TYPES[i % len(ATTACK_TYPES)] if is_attack else NO_ATTACK
                rng = scene_rng(seed, subj_idx, attack_type, i)
                distance = DISTANCES[i % 2]
                scene, bbox = render_scene(attack_type, params, distance, rng)
                for padded in (True, False):
                    fraction = DEFAULT_PADDING if padded else 0.0
                    crop = crop_face(scene, bbox, padding_fraction=fraction)
                    variant = "padded" if padded else "tight"
                    rel = f"{split}/{sid}/{class_dir}/{attack_type}/{i:04d}_{variant}.png"
                    out_path = root / rel
                    out_path.parent.mkdir(parents=True, exist_ok=True)
                    Image.fromarray(crop).save(out_path)
                    records.append(SampleRecord(
                        path=rel, label=label, attack_type=attack_type,
                        subject_id=sid, distance=distance, padded=padded))

    manifest = CorpusManifest(root=root, records=records)
    write_manifest(manifest)
    return manifest
