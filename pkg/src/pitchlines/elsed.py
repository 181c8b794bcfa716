"""Edge-drawing line segment detector.

Walks high-gradient pixel chains out of anchor points, fitting a line
incrementally while drawing. Orientation changes and gradient gaps are
treated as discontinuities: the branch point is pushed onto a stack and
the walk extends straight ahead (Bresenham along the fitted direction)
for a bounded number of pixels, resuming at the first supported pixel
on the far side. Chains are closed when a pixel breaks the line fit,
and finished segments must pass an angular-alignment validation before
detect() returns them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParam
from .imaging import (
    GradientField,
    HORIZONTAL_EDGE,
    VERTICAL_EDGE,
    gaussian_smooth,
    sobel_gradients,
    to_gray,
)

# Pixels needed before the incremental fit is trusted for gating and skips.
_FIT_MIN = 8
# Supported pixels a skip must lead to, or the bridged extension is trimmed.
_MIN_RESUME = 3


@dataclass(frozen=True)
class Anchor:
    """Local gradient maximum that seeds edge drawing."""

    x: int
    y: int
    orient: int


@dataclass(frozen=True)
class Segment:
    """A drawn line segment: sub-pixel endpoints plus the traversed chain."""

    x1: float
    y1: float
    x2: float
    y2: float
    pixels: np.ndarray  # (n, 2) int32, columns (x, y), 8-connected, no duplicates
    length: float

    @property
    def direction(self) -> tuple[float, float]:
        if self.length == 0:
            return (1.0, 0.0)
        return ((self.x2 - self.x1) / self.length, (self.y2 - self.y1) / self.length)


@dataclass(frozen=True)
class DetectorParams:
    """Tunable knobs of the detector.

    min_line_length of None resolves to round(0.05 * image diagonal)
    inside detect(). skip_budget bounds how many pixels a discontinuity
    skip may bridge; fit_tol is the perpendicular distance at which a
    new pixel closes the current chain.
    """

    gradient_threshold: int = 30
    anchor_threshold: int = 8
    scan_interval: int = 2
    min_line_length: int | None = None
    validation_angle_tol: float = 15.0
    aligned_fraction: float = 0.5
    kernel_size: int = 5
    sigma: float = 1.0
    skip_budget: int = 5
    fit_tol: float = 2.0

    def resolve_min_length(self, width: int, height: int) -> int:
        if self.min_line_length is not None:
            return self.min_line_length
        return max(2, round(0.05 * math.hypot(width, height)))


def extract_anchors(field: GradientField, scan_interval: int = 2, anchor_threshold: int = 8) -> list[Anchor]:
    """Find anchor pixels on every scan_interval-th row and column.

    A pixel is an anchor when its magnitude is positive and exceeds both
    neighbors perpendicular to its edge orientation by at least
    anchor_threshold. Returned sorted by descending magnitude (ties by
    row, then column, for determinism).
    """
    if scan_interval < 1:
        raise InvalidParam(f"scan_interval must be >= 1, got {scan_interval}")
    mag = field.mag.astype(np.int32)
    h, w = mag.shape
    up = np.zeros_like(mag)
    down = np.zeros_like(mag)
    left = np.zeros_like(mag)
    right = np.zeros_like(mag)
    up[1:, :] = mag[:-1, :]
    down[:-1, :] = mag[1:, :]
    left[:, 1:] = mag[:, :-1]
    right[:, :-1] = mag[:, 1:]

    positive = mag > 0
    horiz = (field.orient == HORIZONTAL_EDGE) & positive
    vert = (field.orient == VERTICAL_EDGE) & positive
    is_anchor = (horiz & (mag - up >= anchor_threshold) & (mag - down >= anchor_threshold)) | (
        vert & (mag - left >= anchor_threshold) & (mag - right >= anchor_threshold)
    )

    scan = np.zeros((h, w), dtype=bool)
    scan[::scan_interval, :] = True
    scan[:, ::scan_interval] = True
    ys, xs = np.nonzero(is_anchor & scan)
    if len(ys) == 0:
        return []
    mags = mag[ys, xs]
    order = np.lexsort((xs, ys, -mags))
    xs_sorted = xs[order].tolist()
    ys_sorted = ys[order].tolist()
    orients_sorted = field.orient[ys, xs][order].tolist()
    return [Anchor(x, y, o) for x, y, o in zip(xs_sorted, ys_sorted, orients_sorted)]


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer midpoint line rasterization, inclusive of both endpoints."""
    points = []
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points


def _walk(magv, orientv, visited, w, h, x0, y0, sense, walk_orient, params: DetectorParams):
    """Walk one direction from a start pixel, collecting straight sub-chains.

    The start pixel must already be claimed by the caller; it becomes the
    first element of the first sub-chain. Returns (sub-chains, stack of
    discontinuity branch points).

    The incremental orthogonal least-squares fit lives in local
    accumulators (fn, fsx, ...) because this loop runs once per chain
    pixel and method dispatch dominates its cost otherwise.
    """
    budget = params.skip_budget
    fit_tol = params.fit_tol
    vertical = walk_orient == VERTICAL_EDGE

    subchains: list[list[tuple[int, int]]] = []
    disc_stack: list[tuple[int, int]] = []
    chain: list[tuple[int, int]] = [(x0, y0)]
    fn = 1
    fsx = 0.0 + x0
    fsy = 0.0 + y0
    fsxx = 0.0 + x0 * x0
    fsyy = 0.0 + y0 * y0
    fsxy = 0.0 + x0 * y0
    x, y = x0, y0
    dx, dy = sense
    drive = dy if vertical else dx  # sign of motion along the walking axis
    trim_at = -1  # chain index where the last committed skip began
    supported_since_skip = _MIN_RESUME

    while True:
        # Candidate pixels ahead: 3 after an axis step, 2 after a diagonal.
        if vertical:
            ny = y + dy
            if dx == 0:
                cands = ((x - 1, ny), (x, ny), (x + 1, ny))
            else:
                cands = ((x, ny), (x + dx, ny))
        else:
            nx = x + dx
            if dy == 0:
                cands = ((nx, y - 1), (nx, y), (nx, y + 1))
            else:
                cands = ((nx, y), (nx, y + dy))

        cont = (x + dx, y + dy)
        best = None
        best_m = -1
        for cand in cands:
            m = magv[cand[1] * w + cand[0]]
            if m > best_m or (m == best_m and cand == cont):
                best = cand
                best_m = m

        bx, by = best
        bidx = by * w + bx
        if best_m > 0 and not visited[bidx] and orientv[bidx] == walk_orient:
            if fn >= _FIT_MIN:
                mx = fsx / fn
                my = fsy / fn
                fa = fsxx / fn - mx * mx
                fc = fsyy / fn - my * my
                fb = fsxy / fn - mx * my
                theta = 0.5 * math.atan2(2.0 * fb, fa - fc)
                ux = math.cos(theta)
                uy = math.sin(theta)
                if abs(-uy * (bx - mx) + ux * (by - my)) > fit_tol:
                    # Pixel breaks the line hypothesis: close the chain
                    # and start a fresh one at this pixel.
                    subchains.append(chain)
                    chain = []
                    fn = 0
                    fsx = fsy = fsxx = fsyy = fsxy = 0.0
                    trim_at = -1
                    supported_since_skip = _MIN_RESUME
            visited[bidx] = 1
            chain.append(best)
            fn += 1
            fsx += bx
            fsy += by
            fsxx += bx * bx
            fsyy += by * by
            fsxy += bx * by
            supported_since_skip += 1
            dx, dy = bx - x, by - y
            drive = dy if vertical else dx
            x, y = bx, by
            continue

        # Discontinuity: gradient gap, orientation change, or claimed pixel.
        # Extend straight along the fitted direction and look for a
        # supported pixel of the walking orientation to resume from.
        if fn >= _FIT_MIN:
            mx = fsx / fn
            my = fsy / fn
            fa = fsxx / fn - mx * mx
            fc = fsyy / fn - my * my
            fb = fsxy / fn - mx * my
            theta = 0.5 * math.atan2(2.0 * fb, fa - fc)
            ux = math.cos(theta)
            uy = math.sin(theta)
            if ux * dx + uy * dy < 0:
                ux, uy = -ux, -uy
        else:
            norm = math.hypot(dx, dy)
            ux, uy = dx / norm, dy / norm
        reach = budget + 2
        tx = int(math.floor(x + ux * reach + 0.5))
        ty = int(math.floor(y + uy * reach + 0.5))
        ray = bresenham(x, y, tx, ty)[1:]

        bridge: list[tuple[int, int]] = []
        resume = None
        for px, py in ray:
            if len(bridge) >= budget:
                break
            if px < 0 or py < 0 or px >= w or py >= h:
                break
            pidx = py * w + px
            if visited[pidx]:
                break
            if magv[pidx] > 0 and orientv[pidx] == walk_orient:
                resume = (px, py)
                break
            bridge.append((px, py))
        if resume is None:
            break

        disc_stack.append((x, y))
        new_trim = len(chain)
        prev = (x, y)
        for p in bridge:
            visited[p[1] * w + p[0]] = 1
            chain.append(p)
            prev = p
        visited[resume[1] * w + resume[0]] = 1
        chain.append(resume)
        rx, ry = resume
        fn += 1
        fsx += rx
        fsy += ry
        fsxx += rx * rx
        fsyy += ry * ry
        fsxy += rx * ry
        trim_at = new_trim
        supported_since_skip = 1
        dx, dy = resume[0] - prev[0], resume[1] - prev[1]
        # A resume step can be purely lateral; keep the walk advancing
        # along its axis so the candidate window stays ahead of us.
        if vertical:
            dy = dy if dy != 0 else drive
            drive = dy
        else:
            dx = dx if dx != 0 else drive
            drive = dx
        x, y = resume

    # A skip that never led anywhere solid is an unsupported extension:
    # drop it rather than let the segment overshoot the discontinuity.
    if trim_at >= 0 and supported_since_skip < _MIN_RESUME:
        chain = chain[:trim_at]
    if chain:
        subchains.append(chain)
    return subchains, disc_stack


def _chain_fit(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """TLS fit of a chain: (mean, unit direction, per-pixel perpendicular distances)."""
    mean = pts.mean(axis=0)
    d = pts - mean
    a = (d[:, 0] * d[:, 0]).mean()
    c = (d[:, 1] * d[:, 1]).mean()
    b = (d[:, 0] * d[:, 1]).mean()
    theta = 0.5 * math.atan2(2.0 * b, a - c)
    u = np.array([math.cos(theta), math.sin(theta)])
    dist = np.abs(d[:, 1] * u[0] - d[:, 0] * u[1])
    return mean, u, dist


def _split_to_straight(pts: np.ndarray, fit_tol: float) -> list[np.ndarray]:
    """Split a chain until every piece keeps all pixels within fit_tol of its fit."""
    if len(pts) < 3:
        return [pts]
    _, _, dist = _chain_fit(pts)
    worst = int(np.argmax(dist))
    if dist[worst] <= fit_tol:
        return [pts]
    k = min(max(worst, 1), len(pts) - 1)
    return _split_to_straight(pts[:k], fit_tol) + _split_to_straight(pts[k:], fit_tol)


def _make_segment(pts: np.ndarray) -> Segment:
    mean, u, _ = _chain_fit(pts)
    t0 = float((pts[0] - mean) @ u)
    t1 = float((pts[-1] - mean) @ u)
    p0 = mean + t0 * u
    p1 = mean + t1 * u
    length = float(math.hypot(p1[0] - p0[0], p1[1] - p0[1]))
    return Segment(
        x1=float(p0[0]), y1=float(p0[1]), x2=float(p1[0]), y2=float(p1[1]),
        pixels=pts.astype(np.int32), length=length,
    )


def draw_segments(field: GradientField, anchors: list[Anchor], params: DetectorParams) -> list[Segment]:
    """Draw edge chains from anchors and cut them into straight segments.

    Anchors must arrive sorted by descending magnitude. Every pixel is
    claimed by at most one segment; chains shorter than min_line_length
    (which must be resolved to an int here) are discarded.
    """
    h, w = field.shape
    min_len = params.resolve_min_length(w, h)
    magv = memoryview(np.ascontiguousarray(field.mag).reshape(-1))
    orientv = memoryview(np.ascontiguousarray(field.orient).reshape(-1))
    visited = bytearray(h * w)

    segments: list[Segment] = []
    for anchor in anchors:
        idx = anchor.y * w + anchor.x
        if visited[idx]:
            continue
        visited[idx] = 1
        if anchor.orient == VERTICAL_EDGE:
            senses = ((0, -1), (0, 1))
        else:
            senses = ((-1, 0), (1, 0))
        sub_a, _ = _walk(magv, orientv, visited, w, h, anchor.x, anchor.y, senses[0], anchor.orient, params)
        sub_b, _ = _walk(magv, orientv, visited, w, h, anchor.x, anchor.y, senses[1], anchor.orient, params)

        chains: list[list[tuple[int, int]]] = []
        core_a = sub_a[0] if sub_a else [(anchor.x, anchor.y)]
        core_b = sub_b[0] if sub_b else [(anchor.x, anchor.y)]
        core = core_a[::-1] + core_b[1:]
        chains.append(core)
        chains.extend(sub_a[1:])
        chains.extend(sub_b[1:])

        for chain in chains:
            if len(chain) < min_len:
                continue
            pts = np.asarray(chain, dtype=np.float64)
            for piece in _split_to_straight(pts, params.fit_tol):
                if len(piece) >= min_len:
                    segments.append(_make_segment(piece))
    return segments


def validate_segment(seg: Segment, field: GradientField, params: DetectorParams) -> bool:
    """Angular validation: enough chain pixels must have their gradient
    aligned with the segment normal.

    Per-pixel angular error is the absolute difference between the
    gradient direction atan2(gy, gx) and the segment's normal, folded
    into [0, 90] degrees; zero-gradient pixels count as fully misaligned.
    """
    pts = seg.pixels
    if len(pts) == 0 or seg.length <= 0:
        return False
    xs = pts[:, 0]
    ys = pts[:, 1]
    gx = field.gx[ys, xs].astype(np.float64)
    gy = field.gy[ys, xs].astype(np.float64)
    mag = field.mag[ys, xs]

    dirx, diry = seg.direction
    normal_deg = math.degrees(math.atan2(dirx, -diry))  # direction rotated +90°
    grad_deg = np.degrees(np.arctan2(gy, gx))
    err = np.abs(grad_deg - normal_deg) % 180.0
    err = np.minimum(err, 180.0 - err)
    aligned = (err < params.validation_angle_tol) & (mag > 0)
    return bool(aligned.sum() / len(pts) >= params.aligned_fraction)


def detect(img: np.ndarray, params: DetectorParams | None = None) -> list[Segment]:
    """Full detection pipeline for one RGB image.

    to_gray -> gaussian_smooth -> sobel_gradients -> extract_anchors ->
    draw_segments -> validation filter. Deterministic for fixed inputs.
    """
    if params is None:
        params = DetectorParams()
    h, w = img.shape[:2]
    if h < 16 or w < 16:
        raise InvalidParam(f"detect needs at least a 16x16 image, got {w}x{h}")
    gray = to_gray(img)
    smooth = gaussian_smooth(gray, params.kernel_size, params.sigma)
    field = sobel_gradients(smooth, params.gradient_threshold)
    anchors = extract_anchors(field, params.scan_interval, params.anchor_threshold)
    resolved = dataclasses.replace(params, min_line_length=params.resolve_min_length(w, h))
    segments = draw_segments(field, anchors, resolved)
    return [s for s in segments if validate_segment(s, field, resolved)]
