"""Rotated-box algebra: offset<->box conversion, polygon IoU, NMS, bilinear
sampling, and the affine warps used to standardize images between stages.

Conventions
-----------
Coordinates are pixels, origin top-left, y down.  Angles are degrees in
(-180, 180] at module boundaries and radians internally.  ``angle`` is the
rotation that was applied to upright content (counterclockwise-positive in
the usual on-screen sense); rotating an image by ``-angle`` about the box
center makes the text upright with line 1 on top.

For angle theta the text-direction unit vector is ``u = (cos t, -sin t)`` and
the toward-top normal is ``n = (-sin t, -cos t)`` (t in radians).  Quads are
float arrays of shape (4, 2) ordered clockwise on screen starting at the
text's top-left corner: [TL, TR, BR, BL].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
import torch


def normalize_angle_deg(angle: float) -> float:
    """Wrap into (-180, 180]."""
    a = float(angle) % 360.0
    if a > 180.0:
        a -= 360.0
    if a == -180.0:
        a = 180.0
    return a


def axes_from_angle(angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (u, n): text direction and toward-top normal for an angle."""
    t = math.radians(angle_deg)
    u = np.array([math.cos(t), -math.sin(t)], dtype=np.float64)
    n = np.array([-math.sin(t), -math.cos(t)], dtype=np.float64)
    return u, n


@dataclass
class RotatedBox:
    cx: float
    cy: float
    width: float  # along the text direction
    height: float
    angle: float  # degrees in (-180, 180]
    score: float = 0.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"degenerate box: width={self.width}, height={self.height}")
        self.angle = normalize_angle_deg(self.angle)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy], dtype=np.float64)

    def to_quad(self) -> np.ndarray:
        u, n = axes_from_angle(self.angle)
        c = self.center
        hw, hh = self.width / 2.0, self.height / 2.0
        return np.stack([
            c + hh * n - hw * u,  # TL
            c + hh * n + hw * u,  # TR
            c - hh * n + hw * u,  # BR
            c - hh * n - hw * u,  # BL
        ])

    def area(self) -> float:
        return self.width * self.height


def quad_to_rbox(quad: np.ndarray, score: float = 0.0) -> RotatedBox:
    """Fit a RotatedBox to a (near-)rectangular quad in [TL, TR, BR, BL] order."""
    q = np.asarray(quad, dtype=np.float64)
    c = q.mean(axis=0)
    top = q[1] - q[0]
    bottom = q[2] - q[3]
    width = (np.linalg.norm(top) + np.linalg.norm(bottom)) / 2.0
    height = (np.linalg.norm(q[3] - q[0]) + np.linalg.norm(q[2] - q[1])) / 2.0
    d = (top + bottom) / 2.0
    angle = normalize_angle_deg(-math.degrees(math.atan2(d[1], d[0])))
    return RotatedBox(c[0], c[1], width, height, angle, score)


def rbox_from_offsets(pixel, d_top: float, d_right: float, d_bottom: float,
                      d_left: float, sin_t: float, cos_t: float,
                      score: float = 0.0) -> RotatedBox:
    """Rotated rectangle whose edges lie at the given perpendicular distances
    from ``pixel``, rotated by the angle encoded as (sin, cos)."""
    for name, d in (("d_top", d_top), ("d_right", d_right),
                    ("d_bottom", d_bottom), ("d_left", d_left)):
        if d < 0:
            raise ValueError(f"{name} must be >= 0, got {d}")
    w = d_left + d_right
    h = d_top + d_bottom
    if w <= 0 or h <= 0:
        raise ValueError("all-zero distances give a degenerate box")
    angle = math.degrees(math.atan2(sin_t, cos_t))
    u, n = axes_from_angle(angle)
    p = np.asarray(pixel, dtype=np.float64)
    c = p + ((d_top - d_bottom) / 2.0) * n + ((d_right - d_left) / 2.0) * u
    return RotatedBox(c[0], c[1], w, h, normalize_angle_deg(angle), score)


def offsets_from_quad(pixel, quad: np.ndarray, angle_deg: float) -> tuple[float, float, float, float]:
    """Perpendicular distances (top, right, bottom, left) from a pixel to a
    rectangle's edges; the inverse of :func:`rbox_from_offsets`."""
    box = quad_to_rbox(quad)
    u, n = axes_from_angle(angle_deg)
    p = np.asarray(pixel, dtype=np.float64) - box.center
    along_n = float(p @ n)
    along_u = float(p @ u)
    return (box.height / 2.0 - along_n, box.width / 2.0 - along_u,
            box.height / 2.0 + along_n, box.width / 2.0 + along_u)


def _as_quad(poly) -> np.ndarray:
    if isinstance(poly, RotatedBox):
        return poly.to_quad()
    q = np.asarray(poly, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 2:
        raise ValueError(f"polygon must have shape (N, 2), got {q.shape}")
    return q


def polygon_area(poly: np.ndarray) -> float:
    """Absolute shoelace area."""
    x, y = poly[:, 0], poly[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return (float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject polygon by a convex clip
    polygon.  Returns the intersection polygon (possibly empty)."""
    if _signed_area(clip) < 0:
        clip = clip[::-1]
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        input_pts = output
        output = []
        if not input_pts:
            break
        prev = input_pts[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in input_pts:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0:  # interior is the positive side for this winding
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append((prev[0] + t * (cur[0] - prev[0]),
                                   prev[1] + t * (cur[1] - prev[1])))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append((prev[0] + t * (cur[0] - prev[0]),
                               prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def rotated_iou(a, b) -> float:
    """Intersection over union of two convex polygons / rotated boxes."""
    qa, qb = _as_quad(a), _as_quad(b)
    area_a, area_b = polygon_area(qa), polygon_area(qb)
    if area_a < 1e-12 or area_b < 1e-12:
        raise ValueError("degenerate polygon with ~zero area")
    inter_poly = clip_convex(qa, qb)
    inter = polygon_area(inter_poly) if len(inter_poly) >= 3 else 0.0
    union = area_a + area_b - inter
    return float(inter / union)


def nms(boxes: list[RotatedBox], iou_threshold: float) -> list[RotatedBox]:
    """Greedy NMS over rotated boxes; ties broken by (score desc, cy, cx)."""
    if not boxes:
        return []
    order = sorted(range(len(boxes)),
                   key=lambda i: (-boxes[i].score, boxes[i].cy, boxes[i].cx))
    centers = np.array([[boxes[i].cx, boxes[i].cy] for i in order])
    radii = np.array([math.hypot(boxes[i].width, boxes[i].height) / 2.0 for i in order])
    alive = np.ones(len(order), dtype=bool)
    kept: list[RotatedBox] = []
    for k in range(len(order)):
        if not alive[k]:
            continue
        box = boxes[order[k]]
        kept.append(box)
        alive[k] = False
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        # boxes whose bounding circles do not touch cannot overlap
        dist = np.linalg.norm(centers[idx] - [box.cx, box.cy], axis=1)
        near = idx[dist < radii[idx] + radii[k]]
        for j in near:
            if rotated_iou(box, boxes[order[j]]) > iou_threshold:
                alive[j] = False
    return kept


def select_best(boxes: list[RotatedBox]) -> RotatedBox | None:
    """Highest-score box, or None for an empty list."""
    if not boxes:
        return None
    return max(boxes, key=lambda b: (b.score, -b.cy, -b.cx))


# ---------------------------------------------------------------------------
# differentiable sampling


def bilinear_sample(feature_map: torch.Tensor, point) -> torch.Tensor:
    """Sample a C x H x W map at one continuous (x, y) point.

    Out-of-bounds points clamp to the edge so the operation stays total and
    differentiable near borders.
    """
    pts = torch.as_tensor(point, dtype=feature_map.dtype).reshape(1, 2)
    return sample_points(feature_map, pts)[:, 0]


def sample_points(feature_map: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Vectorized bilinear sampling: (C, H, W) map at (N, 2) xy points -> (C, N)."""
    c, h, w = feature_map.shape
    x = points[:, 0].clamp(0.0, w - 1.0)
    y = points[:, 1].clamp(0.0, h - 1.0)
    x0 = x.detach().floor().clamp(0, w - 2).long()
    y0 = y.detach().floor().clamp(0, h - 2).long()
    fx = x - x0.to(x.dtype)
    fy = y - y0.to(y.dtype)
    flat = feature_map.reshape(c, h * w)
    i00 = y0 * w + x0
    v00 = flat[:, i00]
    v01 = flat[:, i00 + 1]
    v10 = flat[:, i00 + w]
    v11 = flat[:, i00 + w + 1]
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    return v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11


def grid_points(quad, rows: int, cols: int, dtype=torch.float32) -> torch.Tensor:
    """(rows*cols, 2) sample points: bilinear interpolation of the quad corners
    at fractional positions ((i+0.5)/rows, (j+0.5)/cols)."""
    q = torch.as_tensor(np.asarray(quad), dtype=dtype).reshape(4, 2)
    v = (torch.arange(rows, dtype=dtype) + 0.5) / rows
    u = (torch.arange(cols, dtype=dtype) + 0.5) / cols
    vv, uu = torch.meshgrid(v, u, indexing="ij")
    tl, tr, br, bl = q[0], q[1], q[2], q[3]
    top = tl[None, None, :] * (1 - uu[..., None]) + tr[None, None, :] * uu[..., None]
    bot = bl[None, None, :] * (1 - uu[..., None]) + br[None, None, :] * uu[..., None]
    pts = top * (1 - vv[..., None]) + bot * vv[..., None]
    return pts.reshape(rows * cols, 2)


def sample_grid(feature_map: torch.Tensor, quad, rows: int = 16, cols: int = 352) -> torch.Tensor:
    """Bilinearly sample a C x rows x cols grid spanning a quad, rows running
    top->bottom of the text and cols left->right along the line direction."""
    pts = grid_points(quad, rows, cols, dtype=feature_map.dtype)
    sampled = sample_points(feature_map, pts)
    return sampled.reshape(feature_map.shape[0], rows, cols)


# ---------------------------------------------------------------------------
# affine transforms and standardization warps


@dataclass
class TransformRecord:
    """A 2x3 affine map from one image frame to another (row-major)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(2, 3)

    @classmethod
    def identity(cls) -> "TransformRecord":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = pts.reshape(-1, 2)
        out = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        return out[0] if single else out

    def inverse(self) -> "TransformRecord":
        a = self.matrix[:, :2]
        t = self.matrix[:, 2]
        ainv = np.linalg.inv(a)
        return TransformRecord(np.hstack([ainv, (-ainv @ t).reshape(2, 1)]))

    def then(self, other: "TransformRecord") -> "TransformRecord":
        """Composition: first self, then other."""
        a = np.vstack([self.matrix, [0.0, 0.0, 1.0]])
        b = np.vstack([other.matrix, [0.0, 0.0, 1.0]])
        return TransformRecord((b @ a)[:2])

    @property
    def scale(self) -> float:
        return float(math.sqrt(abs(np.linalg.det(self.matrix[:, :2]))))

    def to_json(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.matrix]

    @classmethod
    def from_json(cls, data) -> "TransformRecord":
        return cls(np.asarray(data, dtype=np.float64))


def rotation_about(center, angle_deg: float) -> TransformRecord:
    """Point transform of an on-screen counterclockwise rotation about a center."""
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    a = np.array([[c, s], [-s, c]])
    cx, cy = float(center[0]), float(center[1])
    tvec = np.array([cx, cy]) - a @ np.array([cx, cy])
    return TransformRecord(np.hstack([a, tvec.reshape(2, 1)]))


def translation(dx: float, dy: float) -> TransformRecord:
    return TransformRecord(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]]))


def scaling(s: float) -> TransformRecord:
    return TransformRecord(np.array([[s, 0.0, 0.0], [0.0, s, 0.0]]))


def warp_image(image: np.ndarray, record: TransformRecord,
               out_size: tuple[int, int]) -> np.ndarray:
    """Apply a forward affine to an image with black borders and antialiased
    downsampling (the source is area-prescaled while the net scale is < 0.5)."""
    m = record.matrix.copy()
    src = image
    scale = record.scale
    while scale < 0.5 and min(src.shape[0], src.shape[1]) > 8:
        src = cv2.resize(src, (max(1, src.shape[1] // 2), max(1, src.shape[0] // 2)),
                         interpolation=cv2.INTER_AREA)
        m[:, :2] *= 2.0
        scale *= 2.0
    return cv2.warpAffine(src, m, out_size, flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0))


def rotate_and_crop(image: np.ndarray, box: RotatedBox, border_fraction: float,
                    out_size: int) -> tuple[np.ndarray, TransformRecord]:
    """Rotate the image by -box.angle about the box center, crop a square of
    side (1 + 2*border_fraction) * box.width, and resize to out_size.

    Returns the standardized square image and the exact affine mapping
    standardized coordinates back to original-image coordinates.
    """
    h, w = image.shape[:2]
    image_rect = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64)
    inter = clip_convex(box.to_quad(), image_rect)
    if len(inter) < 3 or polygon_area(inter) <= 0.0:
        raise ValueError("box lies fully outside the image")

    side = (1.0 + 2.0 * border_fraction) * box.width
    fwd = (rotation_about(box.center, -box.angle)
           .then(translation(side / 2.0 - box.cx, side / 2.0 - box.cy))
           .then(scaling(out_size / side)))
    warped = warp_image(image, fwd, (out_size, out_size))
    return warped, fwd.inverse()


def transform_quad(quad: np.ndarray, record: TransformRecord) -> np.ndarray:
    return record.apply(np.asarray(quad, dtype=np.float64))


def transform_rbox(box: RotatedBox, record: TransformRecord) -> RotatedBox:
    """Map a rotated box through a similarity transform (rotation+scale+shift)."""
    q = transform_quad(box.to_quad(), record)
    out = quad_to_rbox(q, score=box.score)
    return out
