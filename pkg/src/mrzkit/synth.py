"""Synthetic passport-page rendering, stage-specific geometric augmentation,
dense supervision maps, and dataset manifests.

Rendered pages are upright (angle 0); all rotation enters through the
augmentation ops.  Every augmentation is an affine transform, recorded in the
sample's provenance chain, so ground-truth quads and angles stay exact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np
from PIL import Image, ImageDraw, ImageFont

from . import codec
from .geometry import (
    RotatedBox,
    TransformRecord,
    axes_from_angle,
    normalize_angle_deg,
    quad_to_rbox,
    rotation_about,
    scaling,
    translation,
    warp_image,
)

_MONO_FONT_CANDIDATES = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf",
    "/usr/share/fonts/truetype/dejavu/DejaVuSansMono-Bold.ttf",
    "/usr/share/fonts/TTF/DejaVuSansMono.ttf",
]
_SANS_FONT_CANDIDATES = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
]


def _find_font(candidates: list[str]) -> str:
    for path in candidates:
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no usable TTF font among {candidates}")


_FONT_CACHE: dict[tuple[str, int], ImageFont.FreeTypeFont] = {}


def _font(path: str, size: int) -> ImageFont.FreeTypeFont:
    key = (path, size)
    if key not in _FONT_CACHE:
        _FONT_CACHE[key] = ImageFont.truetype(path, size)
    return _FONT_CACHE[key]


@dataclass
class RenderStyle:
    """Knobs for the synthetic page renderer.  Defaults are frozen here for
    reproducibility; override fields to explore harder or cleaner regimes."""

    long_side: tuple[int, int] = (1024, 2048)
    aspect: tuple[float, float] = (0.62, 0.95)  # short/long; orientation randomized
    card_width_frac: tuple[float, float] = (0.52, 0.92)
    card_aspect: tuple[float, float] = (1.36, 1.50)  # width/height
    mrz_side_margin: tuple[float, float] = (0.02, 0.05)  # x card width
    mrz_bottom_margin: tuple[float, float] = (0.025, 0.06)  # x card height
    mrz_line_gap: tuple[float, float] = (0.25, 0.65)  # extra gap, x char height
    quad_pad: tuple[float, float] = (0.18, 0.38)  # x char height, per side
    noise_sigma: tuple[float, float] = (0.0, 6.0)
    blur_sigma: tuple[float, float] = (0.0, 0.6)
    jpeg_prob: float = 0.5
    jpeg_quality: tuple[int, int] = (62, 92)
    decoration_lines: tuple[int, int] = (4, 9)


@dataclass
class AugmentConfig:
    stage: str  # "coarse" | "fine"
    rotation_range: tuple[float, float]
    pad_scale_range: tuple[float, float] = (1.0, 2.0)
    fine_border_range: tuple[float, float] = (0.05, 0.25)
    crop_prob: float = 0.5
    out_size: int | None = None  # fine stage: resize crop to this square size
    rng_seed: int = 0

    @classmethod
    def coarse(cls, **kw) -> "AugmentConfig":
        return cls(stage="coarse", rotation_range=(-180.0, 180.0), **kw)

    @classmethod
    def fine(cls, **kw) -> "AugmentConfig":
        return cls(stage="fine", rotation_range=(-20.0, 20.0), **kw)


@dataclass
class SynthSample:
    image: np.ndarray  # H x W x 3 uint8, RGB
    quad: np.ndarray  # (4, 2) float, [TL, TR, BR, BL] of the MRZ block
    angle: float  # degrees; rotating by -angle about the quad center uprights the MRZ
    record: codec.MrzRecord
    provenance: list[TransformRecord] = field(default_factory=list)


@dataclass
class DenseTargets:
    """Stride-4 supervision: score/mask (g, g), distances (4, g, g) in
    top/right/bottom/left order, orientation (2, g, g) as (sin, cos)."""

    score: np.ndarray
    distances: np.ndarray
    orientation: np.ndarray
    valid_mask: np.ndarray


# ---------------------------------------------------------------------------
# rendering


def _mono_advance(font_path: str, size: int) -> float:
    return _font(font_path, size).getlength("0")


def render_mrz_block(line1: str, line2: str, font_path: str, font_size: int,
                     advance: float, line_gap: float) -> tuple[Image.Image, tuple[int, int, int, int]]:
    """Render the two MRZ lines as an anti-aliased alpha mask with exact
    per-character advances.  Returns the mask and its ink bbox."""
    ascent, descent = _font(font_path, font_size).getmetrics()
    line_step = ascent + descent + line_gap
    w = int(math.ceil(advance * codec.LINE_LENGTH)) + 4
    h = int(math.ceil(line_step + ascent + descent)) + 4
    mask = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(mask)
    fnt = _font(font_path, font_size)
    for row, line in enumerate((line1, line2)):
        y = 2 + row * line_step
        for k, ch in enumerate(line):
            draw.text((2 + k * advance, y), ch, font=fnt, fill=255)
    bbox = mask.getbbox()
    return mask, bbox


def _rand_text(rng: np.random.Generator, n: int) -> str:
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    return "".join(letters[rng.integers(0, 26)] for _ in range(n))


def render_passport(record: codec.MrzRecord, style: RenderStyle,
                    rng: np.random.Generator) -> SynthSample:
    """Render a passport-like page containing the record's MRZ at a known quad."""
    mono_path = _find_font(_MONO_FONT_CANDIDATES)
    sans_path = _find_font(_SANS_FONT_CANDIDATES)

    long_side = int(rng.integers(style.long_side[0], style.long_side[1] + 1))
    short_side = int(long_side * rng.uniform(*style.aspect))
    if rng.random() < 0.5:
        width, height = long_side, short_side
    else:
        width, height = short_side, long_side

    # card dimensions; clamp so it fits with a margin
    card_w = int(width * rng.uniform(*style.card_width_frac))
    card_h = int(card_w / rng.uniform(*style.card_aspect))
    card_w = min(card_w, int(width * 0.94))
    card_h = min(card_h, int(height * 0.94))
    card_x = int(rng.uniform(0.02 * width, width - card_w - 0.02 * width))
    card_y = int(rng.uniform(0.02 * height, height - card_h - 0.02 * height))

    # background: tinted gradient
    base = rng.uniform(45, 205, size=3)
    slope = rng.uniform(-28, 28, size=3)
    yy = np.linspace(0.0, 1.0, height)[:, None, None]
    bg = np.clip(base[None, None, :] + slope[None, None, :] * yy
                 + rng.normal(0.0, 2.0, size=(height, width, 3)), 0, 255).astype(np.uint8)
    canvas = Image.fromarray(bg, "RGB")
    draw = ImageDraw.Draw(canvas)

    card_color = tuple(int(v) for v in rng.uniform(212, 252, size=3))
    radius = int(0.03 * card_w)
    draw.rounded_rectangle([card_x, card_y, card_x + card_w, card_y + card_h],
                           radius=radius, fill=card_color,
                           outline=tuple(int(v * 0.75) for v in card_color), width=2)

    ink = tuple(int(v) for v in rng.uniform(15, 70, size=3))
    faint = tuple(int(v) for v in rng.uniform(80, 150, size=3))

    # header band + photo box + visual-zone gibberish
    header_h = int(card_h * rng.uniform(0.06, 0.11))
    draw.rectangle([card_x, card_y, card_x + card_w, card_y + header_h],
                   fill=tuple(int(v * 0.88) for v in card_color))
    hdr_font = _font(sans_path, max(10, int(header_h * 0.55)))
    draw.text((card_x + int(0.04 * card_w), card_y + int(header_h * 0.18)),
              _rand_text(rng, int(rng.integers(8, 16))), font=hdr_font, fill=faint)

    photo_w = int(card_w * rng.uniform(0.18, 0.26))
    photo_h = int(photo_w * rng.uniform(1.2, 1.4))
    photo_x = card_x + int(0.04 * card_w)
    photo_y = card_y + header_h + int(0.04 * card_h)
    photo_shade = tuple(int(v) for v in rng.uniform(120, 190, size=3))
    draw.rectangle([photo_x, photo_y, photo_x + photo_w, photo_y + photo_h],
                   fill=photo_shade, outline=faint, width=2)

    n_lines = int(rng.integers(*style.decoration_lines))
    text_x = photo_x + photo_w + int(0.05 * card_w)
    line_font = _font(sans_path, max(9, int(card_h * rng.uniform(0.028, 0.042))))
    ty = photo_y
    for _ in range(n_lines):
        label = _rand_text(rng, int(rng.integers(4, 10)))
        value = _rand_text(rng, int(rng.integers(5, 14)))
        draw.text((text_x, ty), label, font=line_font, fill=faint)
        draw.text((text_x + int(0.22 * card_w), ty), value, font=line_font, fill=ink)
        ty += int(line_font.size * rng.uniform(1.35, 1.8))
        if ty > card_y + card_h * 0.62:
            break

    # MRZ block
    side_margin = card_w * rng.uniform(*style.mrz_side_margin)
    advance = (card_w - 2.0 * side_margin) / codec.LINE_LENGTH
    ref_size = 100
    font_size = max(8, int(round(advance / (_mono_advance(mono_path, ref_size) / ref_size))))
    advance_used = advance  # exact per-character placement
    char_h = _font(mono_path, font_size).getmetrics()[0]
    line_gap = char_h * rng.uniform(*style.mrz_line_gap)
    mask, bbox = render_mrz_block(record.line1, record.line2, mono_path, font_size,
                                  advance_used, line_gap)

    bottom_margin = card_h * rng.uniform(*style.mrz_bottom_margin)
    block_x = int(round(card_x + side_margin)) - 2
    block_y = int(round(card_y + card_h - bottom_margin)) - mask.height + 2
    if block_y < card_y + header_h:
        raise ValueError("MRZ block does not fit on the card; reduce font or margins")
    mrz_ink = tuple(int(v) for v in rng.uniform(12, 55, size=3))
    canvas.paste(Image.new("RGB", mask.size, mrz_ink), (block_x, block_y), mask)

    pad = char_h * rng.uniform(*style.quad_pad)
    x0 = block_x + bbox[0] - pad
    y0 = block_y + bbox[1] - pad
    x1 = block_x + bbox[2] + pad
    y1 = block_y + bbox[3] + pad
    quad = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)

    image = np.asarray(canvas, dtype=np.uint8).copy()

    # photometric degradation
    sigma = rng.uniform(*style.noise_sigma)
    if sigma > 0.05:
        image = np.clip(image.astype(np.float32)
                        + rng.normal(0.0, sigma, size=image.shape).astype(np.float32),
                        0, 255).astype(np.uint8)
    blur = rng.uniform(*style.blur_sigma)
    if blur > 0.05:
        image = cv2.GaussianBlur(image, (0, 0), blur)
    if rng.random() < style.jpeg_prob:
        quality = int(rng.integers(style.jpeg_quality[0], style.jpeg_quality[1] + 1))
        ok, buf = cv2.imencode(".jpg", image[:, :, ::-1], [cv2.IMWRITE_JPEG_QUALITY, quality])
        if ok:
            image = cv2.imdecode(buf, cv2.IMREAD_COLOR)[:, :, ::-1].copy()

    return SynthSample(image=image, quad=quad, angle=0.0, record=record)


# ---------------------------------------------------------------------------
# augmentation


def _rotate_expand(image_shape: tuple[int, int], angle: float) -> tuple[TransformRecord, tuple[int, int]]:
    """Affine rotating an image about its center with the canvas grown to hold
    the rotated content, plus the resulting canvas size."""
    h, w = image_shape[:2]
    rot = rotation_about((w / 2.0, h / 2.0), angle)
    corners = rot.apply(np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64))
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    fwd = rot.then(translation(-lo[0], -lo[1]))
    out_w = int(math.ceil(hi[0] - lo[0]))
    out_h = int(math.ceil(hi[1] - lo[1]))
    return fwd, (out_w, out_h)


def coarse_transform(image_shape: tuple[int, int], quad: np.ndarray,
                     config: AugmentConfig, rng: np.random.Generator
                     ) -> tuple[TransformRecord, tuple[int, int], float]:
    """Draw one coarse-stage augmentation: full-range rotation followed by
    either black padding (height x 1..2) or a random MRZ-preserving crop.
    Returns (forward affine, output (w, h), rotation drawn)."""
    angle = rng.uniform(*config.rotation_range)
    fwd, (w1, h1) = _rotate_expand(image_shape, angle)
    q1 = fwd.apply(quad)

    if rng.random() >= config.crop_prob:
        scale = rng.uniform(*config.pad_scale_range)
        new_h = int(round(h1 * scale))
        top = int(rng.uniform(0, new_h - h1 + 1))
        fwd = fwd.then(translation(0, top))
        return fwd, (w1, new_h), angle

    # crop: uniform box that keeps the quad intact
    qx0, qy0 = q1.min(axis=0)
    qx1, qy1 = q1.max(axis=0)
    x0 = rng.uniform(0, max(0.0, qx0))
    y0 = rng.uniform(0, max(0.0, qy0))
    x1 = rng.uniform(min(w1, qx1), w1)
    y1 = rng.uniform(min(h1, qy1), h1)
    out_w = max(8, int(round(x1 - x0)))
    out_h = max(8, int(round(y1 - y0)))
    fwd = fwd.then(translation(-x0, -y0))
    return fwd, (out_w, out_h), angle


def augment_coarse(sample: SynthSample, config: AugmentConfig,
                   rng: np.random.Generator) -> SynthSample:
    if config.stage != "coarse":
        raise ValueError("augment_coarse requires a coarse-stage config")
    fwd, out_size, angle = coarse_transform(sample.image.shape, sample.quad, config, rng)
    image = warp_image(sample.image, fwd, out_size)
    return SynthSample(
        image=image,
        quad=fwd.apply(sample.quad),
        angle=normalize_angle_deg(sample.angle + angle),
        record=sample.record,
        provenance=sample.provenance + [fwd],
    )


def fine_transform(quad: np.ndarray, angle: float, config: AugmentConfig,
                   rng: np.random.Generator) -> tuple[TransformRecord, tuple[int, int], float]:
    """Draw one fine-stage augmentation: upright the MRZ, rotate by a small
    angle, and crop a square around the MRZ with random side borders."""
    delta = rng.uniform(*config.rotation_range)
    border_l = rng.uniform(*config.fine_border_range)
    border_r = rng.uniform(*config.fine_border_range)
    box = quad_to_rbox(quad)
    fwd = rotation_about(box.center, -angle + delta)
    side = box.width * (1.0 + border_l + border_r)
    x0 = box.cx - box.width * (0.5 + border_l)
    y0 = box.cy - side / 2.0
    fwd = fwd.then(translation(-x0, -y0))
    out = int(round(side))
    if config.out_size is not None:
        fwd = fwd.then(scaling(config.out_size / side))
        out = config.out_size
    return fwd, (out, out), delta


def augment_fine(sample: SynthSample, config: AugmentConfig,
                 rng: np.random.Generator) -> SynthSample:
    if config.stage != "fine":
        raise ValueError("augment_fine requires a fine-stage config")
    fwd, out_size, delta = fine_transform(sample.quad, sample.angle, config, rng)
    image = warp_image(sample.image, fwd, out_size)
    return SynthSample(
        image=image,
        quad=fwd.apply(sample.quad),
        angle=normalize_angle_deg(delta),
        record=sample.record,
        provenance=sample.provenance + [fwd],
    )


# ---------------------------------------------------------------------------
# dense supervision


def make_dense_targets(sample: SynthSample, input_size: int,
                       shrink_ratio: float = 0.3) -> DenseTargets:
    """Stride-4 maps for one model-input-sized sample.

    Positive pixels are those whose centers fall inside the quad shrunk by
    ``shrink_ratio`` x the short edge per side; each carries its perpendicular
    distances to the unshrunk rectangle's edges and the sample orientation.
    If the shrunk rectangle is too thin to cover any stride-4 pixel center,
    the single center nearest the rectangle center is used so every sample
    supervises geometry.
    """
    if input_size % 4 != 0:
        raise ValueError("input_size must be divisible by 4")
    h, w = sample.image.shape[:2]
    if (h, w) != (input_size, input_size):
        raise ValueError(f"sample image is {w}x{h}, expected {input_size}x{input_size}")
    box = quad_to_rbox(sample.quad)
    if box.area() < 1.0:
        raise ValueError("degenerate quad (area < 1 px^2)")

    g = input_size // 4
    xs = (np.arange(g, dtype=np.float64) + 0.5) * 4.0
    px, py = np.meshgrid(xs, xs)  # px varies along columns, py along rows
    u, n = axes_from_angle(sample.angle)
    dx = px - box.cx
    dy = py - box.cy
    along_u = dx * u[0] + dy * u[1]
    along_n = dx * n[0] + dy * n[1]

    m = min(box.width, box.height) * shrink_ratio
    half_w = box.width / 2.0 - m
    half_h = box.height / 2.0 - m
    positive = (np.abs(along_u) <= half_w) & (np.abs(along_n) <= half_h)
    if not positive.any():
        idx = np.unravel_index(np.argmin(dx * dx + dy * dy), dx.shape)
        positive[idx] = True

    d_top = box.height / 2.0 - along_n
    d_bottom = box.height / 2.0 + along_n
    d_left = box.width / 2.0 + along_u
    d_right = box.width / 2.0 - along_u
    distances = np.stack([d_top, d_right, d_bottom, d_left]).clip(min=0.0)
    distances *= positive[None].astype(np.float64)

    theta = math.radians(sample.angle)
    orientation = np.zeros((2, g, g), dtype=np.float64)
    orientation[0][positive] = math.sin(theta)
    orientation[1][positive] = math.cos(theta)

    score = positive.astype(np.float32)
    return DenseTargets(
        score=score,
        distances=distances.astype(np.float32),
        orientation=orientation.astype(np.float32),
        valid_mask=score.copy(),
    )


# ---------------------------------------------------------------------------
# dataset manifest


def split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Largest-remainder apportionment of n samples into train/val/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    raw = [n * r for r in ratios]
    counts = [int(math.floor(v)) for v in raw]
    rem = n - sum(counts)
    order = sorted(range(3), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in range(rem):
        counts[order[i % 3]] += 1
    return counts[0], counts[1], counts[2]


def build_manifest(entries: list[dict], split_ratios=(0.7, 0.15, 0.15),
                   seed: int = 0) -> list[dict]:
    """Assign deterministic train/val/test splits to manifest entries."""
    if not entries:
        raise ValueError("empty dataset")
    n_train, n_val, _ = split_counts(len(entries), tuple(split_ratios))
    order = np.random.default_rng(seed).permutation(len(entries))
    out = []
    for rank, idx in enumerate(order):
        entry = dict(entries[idx])
        entry["split"] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
        out.append(entry)
    out.sort(key=lambda e: e["image"])
    return out


def sample_to_entry(sample: SynthSample, image_path: str) -> dict:
    return {
        "image": image_path,
        "quad": [[float(x), float(y)] for x, y in sample.quad],
        "angle_deg": float(sample.angle),
        "line1": sample.record.line1,
        "line2": sample.record.line2,
    }


def write_manifest(path: str, entries: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry) + "\n")


def read_manifest(path: str) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def render_one(base_seed: int, index: int, style: RenderStyle) -> tuple[SynthSample, int]:
    """Deterministic sample for (base_seed, index); safe for parallel fan-out."""
    seed = np.random.SeedSequence([base_seed, index])
    rng = np.random.default_rng(seed)
    record = codec.generate_record(int(rng.integers(0, 2**31 - 1)))
    for _ in range(4):
        try:
            return render_passport(record, style, rng), index
        except ValueError:
            continue
    raise RuntimeError(f"could not render sample {index} with the given style")


def generate_dataset(out_dir: str, count: int, seed: int, style: RenderStyle | None = None,
                     split_ratios=(0.7, 0.15, 0.15)) -> str:
    """Render ``count`` samples under out_dir/images and write manifest.jsonl.
    Returns the manifest path."""
    if count <= 0:
        raise ValueError("count must be positive")
    style = style or RenderStyle()
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    entries = []
    for i in range(count):
        sample, _ = render_one(seed, i, style)
        rel = f"images/img_{i:06d}.png"
        cv2.imwrite(os.path.join(out_dir, rel), sample.image[:, :, ::-1])
        entries.append(sample_to_entry(sample, rel))
    entries = build_manifest(entries, split_ratios, seed=seed)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest_path, entries)
    return manifest_path
