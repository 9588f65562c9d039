"""Teat segmentation masks and mask-driven point extraction.

A mask is a closed integer-pixel contour polygon. Membership is the even-odd
(crossing-number) rule with the half-open edge convention, evaluated on the
pinhole projection of each 3D point. Subsampling the contour at a stride
reduces the polygon before the test; stride 1 is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .camera import CameraModel
from .cloud import PointCloud
from .errors import EmptyMaskError, InvalidInputError

_CHUNK = 4096


def polygon_area(contour: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon (last edge implicit)."""
    x = contour[:, 0]
    y = contour[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(contour: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the closed polygon intersect.

    Integer coordinates make every orientation test exact.
    """
    n = len(contour)
    p1 = contour
    p2 = np.roll(contour, -1, axis=0)
    for i in range(n - 2):
        # Skip the two neighbours of edge i (shared-endpoint contact is legal).
        js = np.arange(i + 2, n - 1 if i == 0 else n)
        if len(js) == 0:
            continue
        a1, a2 = p1[i], p2[i]
        b1, b2 = p1[js], p2[js]
        d = a2 - a1
        e = b2 - b1
        d1 = e[:, 0] * (a1[1] - b1[:, 1]) - e[:, 1] * (a1[0] - b1[:, 0])
        d2 = e[:, 0] * (a2[1] - b1[:, 1]) - e[:, 1] * (a2[0] - b1[:, 0])
        d3 = d[0] * (b1[:, 1] - a1[1]) - d[1] * (b1[:, 0] - a1[0])
        d4 = d[0] * (b2[:, 1] - a1[1]) - d[1] * (b2[:, 0] - a1[0])
        proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))
        if np.any(proper):
            return True

        def on_seg(s1, s2, q, dz):
            lo = np.minimum(s1, s2)
            hi = np.maximum(s1, s2)
            return (dz == 0) & np.all((q >= lo) & (q <= hi), axis=-1)

        touch = (on_seg(b1, b2, a1, d1) | on_seg(b1, b2, a2, d2)
                 | on_seg(a1, a2, b1, d3) | on_seg(a1, a2, b2, d4))
        if np.any(touch):
            return True
    return False


def _validate_simple(contour: np.ndarray) -> None:
    n = len(contour)
    nxt = np.roll(contour, -1, axis=0)
    if np.any(np.all(contour == nxt, axis=1)):
        raise InvalidInputError("contour has a zero-length edge")
    uniq = np.unique(contour, axis=0)
    if len(uniq) != n:
        raise InvalidInputError("contour revisits a vertex (polygon not simple)")
    edges = nxt - contour
    prev = np.roll(edges, 1, axis=0)
    cross = prev[:, 0] * edges[:, 1] - prev[:, 1] * edges[:, 0]
    dot = prev[:, 0] * edges[:, 0] + prev[:, 1] * edges[:, 1]
    if np.any((cross == 0) & (dot < 0)):
        raise InvalidInputError("contour folds back on itself (polygon not simple)")
    # Unit axis-aligned edges with distinct vertices cannot cross; skip O(n^2).
    if np.all(np.abs(edges).sum(axis=1) == 1):
        return
    if _segments_cross(contour):
        raise InvalidInputError("contour is self-intersecting (polygon not simple)")


@dataclass(frozen=True)
class TeatMask:
    """One teat's segmentation contour for one image.

    Attributes:
        teat_id: Opaque identifier from the segmentation stage.
        stamp_us: Timestamp of the source image in microseconds.
        contour: (M, 2) integer pixel vertices of a simple closed polygon
            (closing edge implicit).
    """

    teat_id: str
    stamp_us: int
    contour: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.contour)
        if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
            raise InvalidInputError("contour must be (M, 2) with M >= 3")
        if not np.all(np.isfinite(np.asarray(c, dtype=float))):
            raise InvalidInputError("contour contains non-finite values")
        ci = np.asarray(np.rint(c), dtype=np.int64)
        if not np.all(np.asarray(c, dtype=float) == ci):
            raise InvalidInputError("contour vertices must be integer pixels")
        _validate_simple(ci)
        object.__setattr__(self, "contour", ci)
        ci.flags.writeable = False

    def __len__(self) -> int:
        return len(self.contour)

    def subsampled(self, stride: int = 1) -> np.ndarray:
        """Every stride-th contour vertex; raises if the result is degenerate."""
        if stride < 1 or int(stride) != stride:
            raise InvalidInputError(f"stride must be an integer >= 1, got {stride}")
        sub = self.contour[::int(stride)]
        if len(sub) < 3 or polygon_area(sub) == 0.0:
            raise EmptyMaskError(
                f"mask {self.teat_id!r}: contour degenerate at stride {stride}")
        return sub

    def bounds_ok(self, width: int, height: int) -> bool:
        c = self.contour
        return bool(np.all((c[:, 0] >= 0) & (c[:, 0] <= width)
                           & (c[:, 1] >= 0) & (c[:, 1] <= height)))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"teat_id": self.teat_id, "stamp_us": int(self.stamp_us),
                "contour": self.contour.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TeatMask":
        return cls(teat_id=d["teat_id"], stamp_us=int(d["stamp_us"]),
                   contour=np.asarray(d["contour"]))


def save_masks(masks, path) -> None:
    with open(path, "w") as f:
        json.dump([m.to_dict() for m in masks], f)
        f.write("\n")


def load_masks(path) -> list[TeatMask]:
    with open(path) as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    return [TeatMask.from_dict(d) for d in data]


# -- membership ----------------------------------------------------------------


def points_in_polygon(uv: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd membership of 2D points in a closed polygon.

    Half-open crossing rule: an edge counts when exactly one endpoint lies
    strictly above the query row, and the crossing is strictly right of the
    point. Vertices and edge interiors therefore resolve deterministically.
    """
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    x1 = poly[:, 0]
    y1 = poly[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    dy = y2 - y1
    inside = np.zeros(len(uv), dtype=bool)
    for lo in range(0, len(uv), _CHUNK):
        pu = uv[lo:lo + _CHUNK, 0][:, None]
        pv = uv[lo:lo + _CHUNK, 1][:, None]
        cond = (y1 > pv) != (y2 > pv)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (pv - y1) * (x2 - x1) / dy
        cross = cond & (pu < xint)
        inside[lo:lo + _CHUNK] = (cross.sum(axis=1) % 2).astype(bool)
    return inside


def extract_masked_points(cloud: PointCloud, mask: TeatMask, camera: CameraModel,
                          stride: int = 1) -> PointCloud:
    """Keep the cloud points whose projection falls inside the mask contour.

    The contour is subsampled at `stride` first (the candidate polygon the
    frustum is built from); stride 1 uses every vertex and is exact. Points
    with z <= 0 cannot project and are never kept. Input order is preserved.

    Args:
        cloud: Camera-frame cloud.
        mask: Contour to test against; vertices must lie inside the image.
        camera: Intrinsics used for the projection.
        stride: Contour subsampling step, >= 1.

    Returns:
        The in-mask subset as a new PointCloud.
    """
    cloud.require_frame("camera", "extract_masked_points")
    if not mask.bounds_ok(camera.width, camera.height):
        raise InvalidInputError(
            f"mask {mask.teat_id!r} has vertices outside the image")
    poly = mask.subsampled(stride)

    keep = np.zeros(len(cloud), dtype=bool)
    z = cloud.points[:, 2]
    front = z > 0
    if not np.any(front):
        return cloud.select(keep)
    p = cloud.points[front]
    uv = np.empty((len(p), 2))
    uv[:, 0] = camera.fx * p[:, 0] / p[:, 2] + camera.cx
    uv[:, 1] = camera.fy * p[:, 1] / p[:, 2] + camera.cy

    # Bounding-box prefilter is exact: nothing outside the hull can be inside.
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    cand = np.all((uv >= lo) & (uv <= hi), axis=1)
    inside = np.zeros(len(p), dtype=bool)
    if np.any(cand):
        inside[cand] = points_in_polygon(uv[cand], poly)
    keep[front] = inside
    return cloud.select(keep)


def rasterize_mask(mask: TeatMask, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) image of pixels whose center is inside the mask."""
    c = mask.contour
    u0 = max(int(c[:, 0].min()), 0)
    u1 = min(int(c[:, 0].max()), width)
    v0 = max(int(c[:, 1].min()), 0)
    v1 = min(int(c[:, 1].max()), height)
    out = np.zeros((height, width), dtype=bool)
    if u1 <= u0 or v1 <= v0:
        return out
    uu, vv = np.meshgrid(np.arange(u0, u1) + 0.5, np.arange(v0, v1) + 0.5)
    uv = np.column_stack([uu.ravel(), vv.ravel()])
    hit = points_in_polygon(uv, c).reshape(v1 - v0, u1 - u0)
    out[v0:v1, u0:u1] = hit
    return out
