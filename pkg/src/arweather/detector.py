"""Tag detection pipeline: threshold, quad extraction, decode.

Stages mirror the classic fiducial pipeline:

    grayscale -> adaptive per-tile threshold (low-contrast tiles excluded)
              -> connected components (union-find over row runs)
              -> outer-boundary corner fit + sub-pixel refinement
              -> homography + data-cell sampling -> codebook match

Both polarities are segmented, so families with a light border interior
(the standard reversed-border layout) and dark-interior families both
work; bogus quads are rejected by the codebook match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArWeatherError
from .families import TagFamily, bits_to_code
from .geometry import GrayImage

BLACK, WHITE, AMBIGUOUS = 0, 1, 2

DUPLICATE_CENTER_DIST_PX = 5.0


class ImageTooSmall(ArWeatherError):
    """Image is smaller than one threshold tile."""


class DegenerateCorners(ArWeatherError):
    """Corner configuration does not determine a homography."""


@dataclass(frozen=True)
class DetectorParams:
    threshold_tile: int = 4
    min_contrast: int = 20
    quad_min_area: float = 64.0
    quad_max_cos: float = 0.95
    max_hamming: int = 2
    refine_corners: bool = True

    def __post_init__(self):
        if self.threshold_tile < 2:
            raise ValueError("threshold_tile must be >= 2")
        if self.max_hamming < 0:
            raise ValueError("max_hamming must be >= 0")

    def validate_for(self, family: TagFamily) -> None:
        limit = (family.min_hamming - 1) // 2
        if self.max_hamming > limit:
            raise ValueError(
                f"max_hamming {self.max_hamming} exceeds correction capacity "
                f"{limit} of family {family.name}"
            )


@dataclass
class QuadCandidate:
    """Convex quadrilateral candidate; corners counter-clockwise in tag sense."""

    corners: np.ndarray  # (4, 2) pixel coordinates
    area: float
    polarity: int  # interior class: BLACK or WHITE


@dataclass
class TagDetection:
    family: str
    id: int
    corners: np.ndarray  # (4, 2), CCW starting at the tag-frame bottom-left
    center: np.ndarray  # (2,)
    homography: np.ndarray  # (3, 3) canonical [-1/2,1/2]^2 -> pixels
    hamming: int
    decision_margin: float

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "id": int(self.id),
            "corners": [[float(u), float(v)] for u, v in self.corners],
            "center": [float(self.center[0]), float(self.center[1])],
            "homography": [float(v) for v in self.homography.reshape(-1)],
            "hamming": int(self.hamming),
            "decision_margin": float(self.decision_margin),
        }


def adaptive_threshold(img: GrayImage, params: DetectorParams) -> np.ndarray:
    """Classify pixels as BLACK / WHITE / AMBIGUOUS by per-tile statistics.

    The threshold is the midpoint of min/max pooled over the 3x3 tile
    neighborhood, so tiles lying wholly inside a uniform cell still see
    the local black/white range. The ambiguity test uses pooled tile
    *quartiles* instead of extrema: unlike the min-max range, the
    inter-quartile spread of pure sensor noise does not grow with sample
    count, so uniform noisy regions stay excluded. Individual pixels
    closer than a quarter of ``min_contrast`` to the threshold are also
    excluded, which keeps mid-gray background off both segments.

    Raises:
        ImageTooSmall: either dimension is smaller than one tile.
    """
    from scipy import ndimage

    h, w = img.height, img.width
    t = params.threshold_tile
    if h < t or w < t:
        raise ImageTooSmall(f"{w}x{h} image is smaller than one {t}px tile")

    px = img.pixels
    th, tw = (h + t - 1) // t, (w + t - 1) // t
    pad_h, pad_w = th * t - h, tw * t - w
    padded = np.pad(px, ((0, pad_h), (0, pad_w)), mode="edge")
    tiles = np.sort(padded.reshape(th, t, tw, t).swapaxes(1, 2).reshape(th, tw, t * t), axis=2)
    n = t * t
    q_lo_idx = round(0.2 * (n - 1))
    q_hi_idx = round(0.8 * (n - 1))

    lo = ndimage.minimum_filter(tiles[:, :, 0], size=3, mode="nearest").astype(np.int16)
    hi = ndimage.maximum_filter(tiles[:, :, -1], size=3, mode="nearest").astype(np.int16)
    q_lo = ndimage.minimum_filter(tiles[:, :, q_lo_idx], size=3, mode="nearest").astype(np.int16)
    q_hi = ndimage.maximum_filter(tiles[:, :, q_hi_idx], size=3, mode="nearest").astype(np.int16)

    thresh = ((lo.astype(np.int32) + hi.astype(np.int32)) // 2).astype(np.int16)
    ambiguous = (q_hi - q_lo) < params.min_contrast

    thresh_full = np.repeat(np.repeat(thresh, t, axis=0), t, axis=1)[:h, :w]
    ambiguous_full = np.repeat(np.repeat(ambiguous, t, axis=0), t, axis=1)[:h, :w]

    signed = px.astype(np.int16) - thresh_full
    margin = max(1, params.min_contrast // 4)
    out = np.where(signed > 0, WHITE, BLACK).astype(np.uint8)
    out[np.abs(signed) < margin] = AMBIGUOUS
    out[ambiguous_full] = AMBIGUOUS
    return out


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]  # path halving
            i = p[i]
        return int(i)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _row_runs(classes: np.ndarray):
    """Row runs of constant non-ambiguous class: arrays (row, c0, c1, cls)."""
    h, w = classes.shape
    rows, starts, ends, vals = [], [], [], []
    for r in range(h):
        line = classes[r]
        change = np.flatnonzero(line[1:] != line[:-1]) + 1
        bounds = np.concatenate(([0], change, [w]))
        for i in range(len(bounds) - 1):
            c0, c1 = int(bounds[i]), int(bounds[i + 1]) - 1
            v = int(line[c0])
            if v == AMBIGUOUS:
                continue
            rows.append(r)
            starts.append(c0)
            ends.append(c1)
            vals.append(v)
    return (
        np.array(rows, dtype=np.int64),
        np.array(starts, dtype=np.int64),
        np.array(ends, dtype=np.int64),
        np.array(vals, dtype=np.int64),
    )


def _connected_components(classes: np.ndarray):
    """Union-find labeling of same-class runs (4-connectivity).

    Returns (components, runs) where components maps a root id to the list
    of run indices and runs is the (rows, starts, ends, vals) tuple.
    """
    rows, starts, ends, vals = _row_runs(classes)
    n = len(rows)
    uf = _UnionFind(n)
    row_first: dict[int, int] = {}
    # Runs are emitted row-major, so consecutive row groups are contiguous.
    idx = 0
    while idx < n:
        r = int(rows[idx])
        row_first[r] = idx
        while idx < n and rows[idx] == r:
            idx += 1
    for r in sorted(row_first):
        if r - 1 not in row_first:
            continue
        # Two-pointer sweep over the run lists of rows r-1 and r.
        i, j = row_first[r - 1], row_first[r]
        while i < n and rows[i] == r - 1 and j < n and rows[j] == r:
            if ends[i] < starts[j]:
                i += 1
            elif ends[j] < starts[i]:
                j += 1
            else:
                if vals[i] == vals[j]:
                    uf.union(i, j)
                if ends[i] <= ends[j]:
                    i += 1
                else:
                    j += 1
    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(uf.find(i), []).append(i)
    return components, (rows, starts, ends, vals)


def _boundary_points(run_idx, rows, starts, ends):
    """Pixel centers on the component's outer boundary (unordered).

    Interior holes (data cells, ambiguous pockets) are filled first so
    only the outer silhouette contributes.
    """
    from scipy import ndimage

    r0 = int(rows[run_idx].min())
    r1 = int(rows[run_idx].max())
    c0 = int(starts[run_idx].min())
    c1 = int(ends[run_idx].max())
    mask = np.zeros((r1 - r0 + 3, c1 - c0 + 3), dtype=bool)
    for i in run_idx:
        mask[rows[i] - r0 + 1, starts[i] - c0 + 1 : ends[i] - c0 + 2] = True
    mask = ndimage.binary_fill_holes(mask)
    interior = (
        mask
        & np.roll(mask, 1, axis=0)
        & np.roll(mask, -1, axis=0)
        & np.roll(mask, 1, axis=1)
        & np.roll(mask, -1, axis=1)
    )
    br, bc = np.nonzero(mask & ~interior)
    return np.column_stack([bc + c0 - 1, br + r0 - 1]).astype(np.float64)  # (u, v)


def _corner_candidates(boundary: np.ndarray):
    """Maximal-distance corner fit: two diagonal extremes, two lateral."""
    centroid = boundary.mean(axis=0)
    a = boundary[np.argmax(((boundary - centroid) ** 2).sum(axis=1))]
    b = boundary[np.argmax(((boundary - a) ** 2).sum(axis=1))]
    ab = b - a
    norm = np.linalg.norm(ab)
    if norm < 1e-9:
        return None
    n = np.array([-ab[1], ab[0]]) / norm
    signed = (boundary - a) @ n
    if signed.max() < 1.0 or signed.min() > -1.0:
        return None  # everything on one side: not a quad
    c = boundary[np.argmax(signed)]
    d = boundary[np.argmin(signed)]
    return _order_ccw(np.array([a, b, c, d]))


def _order_ccw(corners: np.ndarray) -> np.ndarray:
    """Counter-clockwise in tag sense (clockwise in image coords, v down).

    Deterministic start: the bottom-most corner (largest v, then smallest u).
    """
    centroid = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - centroid[1], corners[:, 0] - centroid[0])
    order = np.argsort(-ang, kind="stable")
    ordered = corners[order]
    start = np.lexsort((ordered[:, 0], -ordered[:, 1]))[0]
    return np.roll(ordered, -start, axis=0)


def _polygon_area(corners: np.ndarray) -> float:
    x, y = corners[:, 0], corners[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def _corner_cosines(corners: np.ndarray) -> np.ndarray:
    out = np.empty(4)
    for i in range(4):
        v1 = corners[i - 1] - corners[i]
        v2 = corners[(i + 1) % 4] - corners[i]
        denom = np.linalg.norm(v1) * np.linalg.norm(v2)
        out[i] = 1.0 if denom < 1e-12 else float(np.dot(v1, v2) / denom)
    return out


def _boundary_fit_deviation(boundary: np.ndarray, corners: np.ndarray) -> tuple[float, float]:
    """(mean, max) distance from boundary points to the nearest quad edge line.

    A genuine quad silhouette hugs its fitted polygon to within pixel
    quantization; staircase outlines of merged cell blobs deviate by a
    full cell and are rejected on this measure.
    """
    dists = np.full(len(boundary), np.inf)
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        edge = b - a
        norm = np.linalg.norm(edge)
        if norm < 1e-9:
            continue
        n = np.array([-edge[1], edge[0]]) / norm
        d = np.abs((boundary - a) @ n)
        np.minimum(dists, d, out=dists)
    return float(dists.mean()), float(dists.max())


def _is_convex(corners: np.ndarray) -> bool:
    cross = []
    for i in range(4):
        v1 = corners[(i + 1) % 4] - corners[i]
        v2 = corners[(i + 2) % 4] - corners[(i + 1) % 4]
        cross.append(v1[0] * v2[1] - v1[1] * v2[0])
    cross = np.array(cross)
    return bool(np.all(cross > 0) or np.all(cross < 0))


def bilinear_sample(gray: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at (u, v) positions; coordinates are clipped."""
    h, w = gray.shape
    u = np.clip(pts[:, 0], 0.0, w - 1.000001)
    v = np.clip(pts[:, 1], 0.0, h - 1.000001)
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = u - x0
    fy = v - y0
    g = gray.astype(np.float64)
    return (
        g[y0, x0] * (1 - fx) * (1 - fy)
        + g[y0, x0 + 1] * fx * (1 - fy)
        + g[y0 + 1, x0] * (1 - fx) * fy
        + g[y0 + 1, x0 + 1] * fx * fy
    )


def _refine_edge(gray: np.ndarray, pa: np.ndarray, pb: np.ndarray):
    """Gradient-weighted sub-pixel line fit along one quad edge.

    Returns (point_on_line, direction) or None if the edge has no gradient.
    """
    n_samples = 16
    ts = np.linspace(0.12, 0.88, n_samples)
    base = pa[None, :] + ts[:, None] * (pb - pa)[None, :]
    edge = (pb - pa) / np.linalg.norm(pb - pa)
    normal = np.array([-edge[1], edge[0]])

    offsets = np.arange(-2.5, 3.0, 1.0)  # 6 taps spanning +-2.5 px
    pts = base[:, None, :] + offsets[None, :, None] * normal[None, None, :]
    vals = bilinear_sample(gray, pts.reshape(-1, 2)).reshape(n_samples, len(offsets))
    grads = np.abs(np.diff(vals, axis=1))  # at half-offsets
    mids = (offsets[:-1] + offsets[1:]) / 2.0
    strength = grads.sum(axis=1)
    ok = strength > 1e-6
    if ok.sum() < 2:
        return None
    delta = (grads[ok] @ mids) / strength[ok]
    pts_on_edge = base[ok] + delta[:, None] * normal[None, :]
    weights = strength[ok]

    mu = (weights[:, None] * pts_on_edge).sum(axis=0) / weights.sum()
    centered = pts_on_edge - mu
    cov = (weights[:, None, None] * centered[:, :, None] * centered[:, None, :]).sum(axis=0)
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, int(np.argmax(eigvals))]
    return mu, direction


def _intersect_lines(p1, d1, p2, d2):
    a = np.column_stack([d1, -d2])
    if abs(np.linalg.det(a)) < 1e-12:
        return None
    st = np.linalg.solve(a, p2 - p1)
    return p1 + st[0] * d1


def refine_quad_corners(gray: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Sub-pixel corners from intersections of gradient-fitted edge lines."""
    lines = []
    for i in range(4):
        fit = _refine_edge(gray, corners[i], corners[(i + 1) % 4])
        if fit is None:
            return corners
        lines.append(fit)
    refined = np.empty_like(corners)
    for i in range(4):
        prev_line = lines[(i - 1) % 4]
        this_line = lines[i]
        pt = _intersect_lines(prev_line[0], prev_line[1], this_line[0], this_line[1])
        if pt is None or np.linalg.norm(pt - corners[i]) > 3.0:
            return corners
        refined[i] = pt
    return refined


def find_quads(classes: np.ndarray, params: DetectorParams, gray: np.ndarray | None = None):
    """Quad candidates from both polarities of the thresholded map.

    ``gray`` enables sub-pixel corner refinement when
    ``params.refine_corners`` is set.
    """
    components, (rows, starts, ends, vals) = _connected_components(classes)
    quads: list[QuadCandidate] = []
    for root, run_list in components.items():
        run_idx = np.array(run_list, dtype=np.int64)
        pixel_count = int((ends[run_idx] - starts[run_idx] + 1).sum())
        if pixel_count < 0.5 * params.quad_min_area:
            continue
        boundary = _boundary_points(run_idx, rows, starts, ends)
        if len(boundary) < 4:
            continue
        corners = _corner_candidates(boundary)
        if corners is None:
            continue
        area = _polygon_area(corners)
        if area < params.quad_min_area:
            continue
        if np.max(np.abs(_corner_cosines(corners))) > params.quad_max_cos:
            continue
        if not _is_convex(corners):
            continue
        mean_dev, max_dev = _boundary_fit_deviation(boundary, corners)
        if mean_dev > 1.0 or max_dev > 3.0:
            continue
        if params.refine_corners and gray is not None:
            corners = _order_ccw(refine_quad_corners(gray, corners))
        quads.append(
            QuadCandidate(
                corners=corners,
                area=_polygon_area(corners),
                polarity=int(vals[run_idx[0]]),
            )
        )
    return quads


CANONICAL_CORNERS = np.array(
    [
        [-0.5, 0.5],  # bottom-left in tag frame (+y down)
        [0.5, 0.5],
        [0.5, -0.5],
        [-0.5, -0.5],
    ]
)


def homography_from_corners(corners: np.ndarray) -> np.ndarray:
    """DLT homography mapping the canonical border square to image corners.

    Raises:
        DegenerateCorners: the four points do not determine a projective map.
    """
    corners = np.asarray(corners, dtype=np.float64)
    # Hartley normalization of the pixel side for conditioning.
    mean = corners.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(corners - mean, axis=1)), 1e-12)
    t = np.array(
        [
            [scale, 0.0, -scale * mean[0]],
            [0.0, scale, -scale * mean[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    normed = (corners - mean) * scale

    a = np.zeros((8, 9))
    for i, ((x, y), (u, v)) in enumerate(zip(CANONICAL_CORNERS, normed)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]
    u_, s, vt = np.linalg.svd(a)
    if s[7] / s[0] < 1e-10:
        raise DegenerateCorners("corner configuration is rank-deficient")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t) @ h
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return h


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return hom[:, :2] / hom[:, 2:3]


def decode(
    img: GrayImage,
    quad: QuadCandidate,
    family: TagFamily,
    params: DetectorParams,
) -> TagDetection | None:
    """Decode one quad against the family codebook; None when no id fits."""
    params.validate_for(family)
    gray = img.pixels.astype(np.float64)
    try:
        h = homography_from_corners(quad.corners)
    except DegenerateCorners:
        return None

    layout = family.layout
    data_pts = apply_homography(h, layout.cell_centers(layout.data_cells))
    black_pts = apply_homography(h, layout.cell_centers(layout.black_border_cells))
    white_pts = apply_homography(h, layout.cell_centers(layout.white_border_cells))

    all_pts = np.vstack([data_pts, black_pts, white_pts])
    if (
        all_pts[:, 0].min() < 0
        or all_pts[:, 1].min() < 0
        or all_pts[:, 0].max() > img.width - 1
        or all_pts[:, 1].max() > img.height - 1
    ):
        return None

    black_model = float(bilinear_sample(gray, black_pts).mean())
    white_model = float(bilinear_sample(gray, white_pts).mean())
    if white_model - black_model < params.min_contrast:
        return None
    threshold = (black_model + white_model) / 2.0

    samples = bilinear_sample(gray, data_pts)
    bits = (samples > threshold).astype(np.uint8)
    observed = bits_to_code(bits)

    codes = np.array(family.codebook, dtype=np.uint64)
    best = None  # (hamming, id, k)
    rotated = observed
    for k in range(4):
        if k:
            rotated = family.rotate_code(rotated)
        d = np.bitwise_count(codes ^ np.uint64(rotated))
        i = int(d.argmin())
        cand = (int(d[i]), i, k)
        if best is None or cand < best:
            best = cand
    hamming, tag_id, k = best
    if hamming > params.max_hamming:
        return None

    # rotate_code(observed, k) matched, so the image shows the codeword
    # rotated (4-k)%4 quarter turns CCW; its bottom-left corner sits at
    # canonical corner index rho.
    rho = (4 - k) % 4
    corners = np.roll(quad.corners, -rho, axis=0)
    h_final = homography_from_corners(corners)
    center = apply_homography(h_final, np.array([[0.0, 0.0]]))[0]
    margin = float(np.abs(samples - threshold).mean())
    return TagDetection(
        family=family.name,
        id=tag_id,
        corners=corners,
        center=center,
        homography=h_final,
        hamming=hamming,
        decision_margin=margin,
    )


def detect(img: GrayImage, family: TagFamily, params: DetectorParams | None = None):
    """Full pipeline; detections sorted by id, best decision margin first."""
    if params is None:
        params = DetectorParams()
    params.validate_for(family)
    classes = adaptive_threshold(img, params)
    gray = img.pixels.astype(np.float64)
    quads = find_quads(classes, params, gray=gray)
    detections = []
    for quad in quads:
        det = decode(img, quad, family, params)
        if det is not None:
            detections.append(det)

    # Deduplicate re-detections of one physical tag.
    detections.sort(key=lambda d: (d.id, -d.decision_margin))
    kept: list[TagDetection] = []
    for det in detections:
        dup = any(
            k.id == det.id
            and np.linalg.norm(k.center - det.center) < DUPLICATE_CENTER_DIST_PX
            for k in kept
        )
        if not dup:
            kept.append(det)
    return kept
