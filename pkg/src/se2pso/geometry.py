"""Polygons, circle footprints and signed distances.

Signed distance convention: negative inside a polygon, positive outside,
magnitude is the Euclidean distance to the boundary. Insideness uses the
winding number so simple non-convex polygons (grid contours) work.

The ``EdgeSet`` kernels evaluate many points against many polygons at once
and are what the optimizer uses; the scalar functions are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .control_space import Pose
from .errors import ValidationError

INF = math.inf


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


class Polygon:
    """Simple polygon with counter-clockwise vertices."""

    def __init__(self, vertices, check_simple: bool = True):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValidationError(f"polygon vertices must have shape (k, 2), got {v.shape}")
        if len(v) >= 2 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise ValidationError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("polygon vertices must be finite")
        step = np.roll(v, -1, axis=0) - v
        if np.any(np.all(step == 0.0, axis=1)):
            raise ValidationError("polygon has coinciding consecutive vertices")
        area = _signed_area(v)
        if not area > 0.0:
            raise ValidationError(
                f"polygon must be counter-clockwise with positive area, signed area is {area:.6g}"
            )
        if check_simple and not _is_simple(v):
            raise ValidationError("polygon is self-intersecting")
        v.flags.writeable = False
        self.vertices = v

    @classmethod
    def from_any_orientation(cls, vertices, check_simple: bool = True) -> "Polygon":
        v = np.array(vertices, dtype=float)
        if len(v) >= 3 and _signed_area(v) < 0:
            v = v[::-1]
        return cls(v, check_simple)

    @classmethod
    def rectangle(cls, xmin, ymin, xmax, ymax) -> "Polygon":
        return cls([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"Polygon({len(self.vertices)} vertices)"

    def __eq__(self, other):
        if not isinstance(other, Polygon):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    __hash__ = None

    @cached_property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @cached_property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross(v[:, 0], v[:, 1], w[:, 0], w[:, 1])
        return np.array([((v[:, 0] + w[:, 0]) * c).sum(), ((v[:, 1] + w[:, 1]) * c).sum()]) / (
            6.0 * self.area
        )

    def transformed(self, pose: Pose) -> "Polygon":
        """Body-frame polygon placed at ``pose`` (rigid motions keep it valid)."""
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        v = self.vertices
        out = np.column_stack([pose.x + c * v[:, 0] - s * v[:, 1], pose.y + s * v[:, 0] + c * v[:, 1]])
        return Polygon(out, check_simple=False)

    def signed_distance(self, points) -> np.ndarray:
        return EdgeSet([self]).signed_distances(np.asarray(points, dtype=float))[..., 0]

    def field(self, cap: float) -> "PolygonField":
        """Cell-indexed distance field, built once per cap value."""
        cache = self.__dict__.setdefault("_fields", {})
        if cap not in cache:
            cache[cap] = PolygonField(self, cap)
        return cache[cap]


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(_cross(v[:, 0], v[:, 1], w[:, 0], w[:, 1])))


def _is_simple(v: np.ndarray) -> bool:
    k = len(v)
    if k == 3:
        return True
    a = v
    b = np.roll(v, -1, axis=0)
    i, j = np.triu_indices(k, 2)
    keep = ~((i == 0) & (j == k - 1))
    i, j = i[keep], j[keep]
    p1, p2, q1, q2 = a[i], b[i], a[j], b[j]

    def orient(p, q, r):
        return _cross(q[:, 0] - p[:, 0], q[:, 1] - p[:, 1], r[:, 0] - p[:, 0], r[:, 1] - p[:, 1])

    def on_seg(p, q, r):
        return (
            (np.minimum(p[:, 0], q[:, 0]) <= r[:, 0]) & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
            & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1]) & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1]))
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    touch = (
        ((o1 == 0) & on_seg(p1, p2, q1))
        | ((o2 == 0) & on_seg(p1, p2, q2))
        | ((o3 == 0) & on_seg(q1, q2, p1))
        | ((o4 == 0) & on_seg(q1, q2, p2))
    )
    return not bool(np.any(proper | touch))


class EdgeSet:
    """Edges of several polygons packed into flat arrays for batch queries.

    Edge arrays may carry leading batch dimensions (e.g. one polygon
    placement per time step); queries broadcast points against them.
    """

    def __init__(self, polygons: Sequence[Polygon] = (), starts=None, a=None, b=None):
        if a is not None:
            self.a, self.b, self.starts = np.asarray(a, float), np.asarray(b, float), np.asarray(starts)
        else:
            polygons = list(polygons)
            if polygons:
                self.a = np.vstack([p.vertices for p in polygons])
                self.b = np.vstack([np.roll(p.vertices, -1, axis=0) for p in polygons])
                self.starts = np.cumsum([0] + [len(p) for p in polygons[:-1]])
            else:
                self.a = self.b = np.zeros((0, 2))
                self.starts = np.zeros(0, dtype=int)
        # per-edge terms reused by every query, shaped (..., E, 1): points run along the last axis
        ax, ay = self.a[..., 0], self.a[..., 1]
        ex, ey = self.b[..., 0] - ax, self.b[..., 1] - ay
        len2 = ex * ex + ey * ey
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(len2 > 0, 1.0 / len2, 0.0)
            slope = np.where(ey != 0, ex / ey, 0.0)
        self._ax, self._ay = ax[..., None], ay[..., None]
        self._by = self.b[..., 1, None]
        self._ex, self._ey = ex[..., None], ey[..., None]
        self._inv, self._slope = inv[..., None], slope[..., None]

    @property
    def n_polygons(self) -> int:
        return len(self.starts)

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of every point to every polygon.

        ``points`` has shape (..., N, 2) and edges (..., E, 2) with matching
        leading dimensions (or none). Returns shape (..., N, K).
        Inside/outside comes from ray-crossing parity, exact for simple polygons.
        """
        if self.n_polygons == 0:
            return np.full(points.shape[:-1] + (0,), INF)
        px = np.ascontiguousarray(points[..., 0])[..., None, :]
        py = np.ascontiguousarray(points[..., 1])[..., None, :]
        ex, ey = self._ex, self._ey
        rx = px - self._ax
        ry = py - self._ay
        t = rx * ex
        t += ry * ey
        t *= self._inv
        np.clip(t, 0.0, 1.0, out=t)
        dx = t * ex
        np.subtract(rx, dx, out=dx)
        dy = t * ey
        np.subtract(ry, dy, out=dy)
        dx *= dx
        dy *= dy
        dx += dy
        cross = (self._ay > py) != (self._by > py)
        ry *= self._slope
        ry += self._ax
        cross &= px < ry
        if self.n_polygons == 1:
            d2 = dx.min(axis=-2, keepdims=True)
            odd = np.logical_xor.reduce(cross, axis=-2, keepdims=True)
        else:
            d2 = np.minimum.reduceat(dx, self.starts, axis=-2)
            odd = np.add.reduceat(cross.view(np.int8), self.starts, axis=-2) & 1
        d = np.sqrt(d2)
        return np.swapaxes(np.where(odd, -d, d), -1, -2)

    def clearance(self, points: np.ndarray) -> np.ndarray:
        """Minimum signed distance over all polygons; +inf when empty."""
        if self.n_polygons == 0:
            return np.full(points.shape[:-1], INF)
        return self.signed_distances(points).min(axis=-1)


class ObstacleField:
    """Static polygons with a bounding-box prefilter for clearance queries.

    Distances below ``cap`` are exact; anything farther is reported as
    ``cap``. A polygon is only evaluated for points inside its bounding box
    grown by ``cap``.
    """

    # below this many edges a plain all-pairs query is cheaper than the prefilter
    BRUTE_FORCE_EDGES = 24

    def __init__(self, polygons: Sequence[Polygon], cap: float):
        self.cap = float(cap)
        self.count = len(polygons)
        self.edges = EdgeSet(polygons)
        self.brute = len(self.edges.a) <= self.BRUTE_FORCE_EDGES
        if not polygons:
            return
        # bounding circles: a point this far from every circle is beyond the cap
        self.circle_c = np.array([p.centroid for p in polygons])[:, :, None]
        self.circle_r = np.array([np.max(np.hypot(*(p.vertices - p.centroid).T)) for p in polygons])[:, None]
        emax = max(len(p) for p in polygons)
        a = np.empty((len(polygons), emax, 2))
        b = np.empty_like(a)
        for i, p in enumerate(polygons):
            v = p.vertices
            a[i, :len(v)] = v
            b[i, :len(v)] = np.roll(v, -1, axis=0)
            # padding edges collapse onto the first vertex: no length, no crossings
            a[i, len(v):] = v[0]
            b[i, len(v):] = v[0]
        lo = np.array([p.vertices.min(axis=0) for p in polygons]) - cap
        hi = np.array([p.vertices.max(axis=0) for p in polygons]) + cap
        self.box = [c[:, None] for c in (lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1])]
        # per-edge terms stored (E, K) so gathers by polygon give contiguous rows
        a, b = a.transpose(1, 0, 2).copy(), b.transpose(1, 0, 2).copy()
        ex, ey = b[..., 0] - a[..., 0], b[..., 1] - a[..., 1]
        len2 = ex * ex + ey * ey
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv = np.where(len2 > 0, 1.0 / len2, 0.0)
            self.slope = np.where(ey != 0, ex / ey, 0.0)
        self.ax, self.ay, self.by = a[..., 0].copy(), a[..., 1].copy(), b[..., 1].copy()
        self.ex, self.ey = ex, ey

    def __len__(self) -> int:
        return self.count

    def clearance(self, points: np.ndarray) -> np.ndarray:
        """Minimum signed distance of points (..., 2), capped at ``cap``."""
        shape = points.shape[:-1]
        pts = points.reshape(-1, 2)
        out = np.full(len(pts), self.cap)
        if not self.count:
            return out.reshape(shape)
        if self.brute:
            gap = np.hypot(pts[:, 0] - self.circle_c[:, 0], pts[:, 1] - self.circle_c[:, 1]) - self.circle_r
            idx = np.flatnonzero(gap.min(axis=0) < self.cap)
            if len(idx):
                out[idx] = np.minimum(self.edges.clearance(pts[idx]), self.cap)
            return out.reshape(shape)
        x, y = pts[:, 0], pts[:, 1]
        x0, x1, y0, y1 = self.box
        cand = np.flatnonzero((x0[:, 0] <= x.max()) & (x1[:, 0] >= x.min())
                              & (y0[:, 0] <= y.max()) & (y1[:, 0] >= y.min()))
        if len(cand) == 0:
            return out.reshape(shape)
        x0, x1, y0, y1 = x0[cand], x1[cand], y0[cand], y1[cand]
        near = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)      # (K', M)
        pi, ki = np.nonzero(near.T)
        ki = cand[ki]
        if len(pi) == 0:
            return out.reshape(shape)
        # (E, pairs) layout keeps the long axis innermost
        px, py = x[pi], y[pi]
        ax, ay, ex, ey = self.ax[:, ki], self.ay[:, ki], self.ex[:, ki], self.ey[:, ki]
        rx = px - ax
        ry = py - ay
        t = rx * ex
        t += ry * ey
        t *= self.inv[:, ki]
        np.clip(t, 0.0, 1.0, out=t)
        dx = rx - t * ex
        dy = ry - t * ey
        dx *= dx
        dy *= dy
        dx += dy
        d2 = dx.min(axis=0)
        cross = (ay > py) != (self.by[:, ki] > py)
        ry *= self.slope[:, ki]
        ry += ax
        cross &= px < ry
        odd = np.logical_xor.reduce(cross, axis=0)
        d = np.sqrt(d2)
        d = np.where(odd, -d, d)
        # pairs come sorted by point index
        first = np.flatnonzero(np.r_[True, pi[1:] != pi[:-1]])
        out[pi[first]] = np.minimum(np.minimum.reduceat(d, first), self.cap)
        return out.reshape(shape)


# grid offset as a fraction of a cell, chosen so cell centres avoid round coordinates
_GRID_SHIFT = 0.3183098861837907


class PolygonField:
    """Signed distance to one polygon through a uniform cell index.

    Values with magnitude below ``cap`` are exact; the rest are clipped to
    ``[-cap, cap]``. Every cell keeps the edges that can come within ``cap``
    of any of its points and whether its centre is inside. A query point
    takes its sign from the centre's, flipped once per edge crossing the
    segment between point and centre.
    """

    def __init__(self, poly: Polygon, cap: float, cell: float | None = None):
        self.cap = float(cap)
        h = self.h = float(cell or cap)
        v = poly.vertices
        w = np.roll(v, -1, axis=0)
        self.lo = v.min(axis=0) - cap - h * (1.0 + _GRID_SHIFT)
        hi = v.max(axis=0) + cap + h
        self.nx, self.ny = (np.ceil((hi - self.lo) / h).astype(int) + 1).tolist()
        gx, gy = np.meshgrid(self.lo[0] + h * (np.arange(self.nx) + 0.5),
                             self.lo[1] + h * (np.arange(self.ny) + 0.5), indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        self.centers = centers
        self.inside = EdgeSet([poly]).signed_distances(centers)[:, 0] < 0

        # distance of every cell centre to every edge
        e = w - v
        len2 = np.sum(e * e, axis=1)
        r = centers[:, None, :] - v[None, :, :]
        t = np.clip(np.sum(r * e, axis=2) / len2, 0.0, 1.0)
        dist = np.hypot(r[..., 0] - t * e[:, 0], r[..., 1] - t * e[:, 1])
        near = dist <= cap + h * math.sqrt(0.5) + 1e-9
        kmax = self.kmax = max(int(near.sum(axis=1).max()), 1)
        n_edges = len(v)
        table = np.full((len(centers), kmax), n_edges)
        for c in np.flatnonzero(near.any(axis=1)):
            idx = np.flatnonzero(near[c])
            table[c, :len(idx)] = idx
        self.table = table
        # slot n_edges is a degenerate far-away edge: huge distance, never crossed
        far = np.full((1, 2), 1e12)
        a = np.vstack([v, far])
        b = np.vstack([w, far])
        ex, ey = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
        l2 = ex * ex + ey * ey
        self.ax, self.ay, self.ex, self.ey = a[:, 0], a[:, 1], ex, ey
        self.inv = np.where(l2 > 0, 1.0 / np.where(l2 > 0, l2, 1.0), 0.0)
        # side of each candidate edge on which the cell centre lies
        ca = centers[:, None, :] - a[table]
        self.center_side = (ex[table] * ca[..., 1] - ey[table] * ca[..., 0]) > 0
        self.table_t = np.ascontiguousarray(table.T)
        self.side_t = np.ascontiguousarray(self.center_side.T)
        # the index only pays off once cells see far fewer edges than the polygon has
        self.edges = EdgeSet([poly])
        self.indexed = 2 * kmax + 4 <= n_edges

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        shape = points.shape[:-1]
        pts = points.reshape(-1, 2)
        if not self.indexed:
            return np.clip(self.edges.signed_distances(pts)[:, 0], -self.cap, self.cap).reshape(shape)
        px, py = pts[:, 0], pts[:, 1]
        ix = np.floor((px - self.lo[0]) / self.h).astype(np.intp)
        iy = np.floor((py - self.lo[1]) / self.h).astype(np.intp)
        inside_grid = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        cell = np.where(inside_grid, ix * self.ny + iy, 0)
        k = self.table_t[:, cell]                                 # (K, M)
        ax, ay, ex, ey = self.ax[k], self.ay[k], self.ex[k], self.ey[k]
        rx = px - ax
        ry = py - ay
        t = rx * ex
        t += ry * ey
        t *= self.inv[k]
        np.clip(t, 0.0, 1.0, out=t)
        dx = rx - t * ex
        dy = ry - t * ey
        dx *= dx
        dy *= dy
        dx += dy
        d = np.sqrt(dx.min(axis=0))
        # segment point -> cell centre against each candidate edge
        qx = self.centers[cell, 0] - px
        qy = self.centers[cell, 1] - py
        side_p = (ex * ry - ey * rx) > 0
        o3 = qy * rx - qx * ry
        o4 = qx * ey
        o4 -= qy * ex
        o4 += o3
        cross = (side_p != self.side_t[:, cell]) & ((o3 > 0) != (o4 > 0))
        odd = np.logical_xor.reduce(cross, axis=0) ^ self.inside[cell]
        out = np.where(odd, -d, d)
        np.clip(out, -self.cap, self.cap, out=out)
        out[~inside_grid] = self.cap
        return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class FootprintModel:
    """Vehicle collision model as circles in the body frame."""

    offsets: np.ndarray
    radii: np.ndarray
    length: float | None = None
    width: float | None = None

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=float).reshape(-1, 2)
        radii = np.array(self.radii, dtype=float).reshape(-1)
        if len(radii) < 1 or len(radii) != len(offsets):
            raise ValidationError("footprint needs at least one circle with one radius each")
        if np.any(radii <= 0):
            raise ValidationError("footprint radii must be positive")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "radii", radii)
        if self.length is not None and self.width is not None:
            if not self.covers_rectangle(self.length, self.width):
                raise ValidationError(
                    f"circles do not cover the {self.length} x {self.width} m vehicle rectangle"
                )

    @classmethod
    def for_vehicle(cls, length: float, width: float, n_circles: int = 3) -> "FootprintModel":
        """Equal circles on the longitudinal axis covering a centred length x width box."""
        if length <= 0 or width <= 0:
            raise ValidationError("vehicle length and width must be positive")
        part = length / n_circles
        r = math.hypot(0.5 * width, 0.5 * part)
        xs = -0.5 * length + part * (np.arange(n_circles) + 0.5)
        return cls(np.column_stack([xs, np.zeros(n_circles)]), np.full(n_circles, r), length, width)

    def covers_rectangle(self, length: float, width: float, samples: int = 41) -> bool:
        gx, gy = np.meshgrid(np.linspace(-length / 2, length / 2, samples),
                             np.linspace(-width / 2, width / 2, samples))
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        d = np.hypot(pts[:, None, 0] - self.offsets[:, 0], pts[:, None, 1] - self.offsets[:, 1])
        return bool(np.all(np.any(d <= self.radii + 1e-9, axis=1)))

    @property
    def front_extent(self) -> float:
        """Distance from the reference point to the foremost covered point."""
        return float(np.max(self.offsets[:, 0] + self.radii))

    def centers(self, poses: np.ndarray) -> np.ndarray:
        """World circle centres for poses (..., 3) -> (..., C, 2)."""
        c = np.cos(poses[..., 2])[..., None]
        s = np.sin(poses[..., 2])[..., None]
        ox, oy = self.offsets[:, 0], self.offsets[:, 1]
        x = poses[..., 0:1] + c * ox - s * oy
        y = poses[..., 1:2] + s * ox + c * oy
        return np.stack([x, y], axis=-1)

    def centers_by_circle(self, poses: np.ndarray) -> np.ndarray:
        """Like :meth:`centers` but circle-major: (B, n, 3) -> (B, C, n, 2)."""
        c = np.cos(poses[..., 2])[:, None, :]
        s = np.sin(poses[..., 2])[:, None, :]
        ox, oy = self.offsets[:, 0, None], self.offsets[:, 1, None]
        out = np.empty(poses.shape[:1] + (len(self.radii),) + poses.shape[1:2] + (2,))
        out[..., 0] = poses[:, None, :, 0] + c * ox - s * oy
        out[..., 1] = poses[:, None, :, 1] + s * ox + c * oy
        return out


def point_polygon_distance(p, poly: Polygon) -> float:
    return float(poly.signed_distance(np.asarray(p, dtype=float).reshape(1, 2))[0])


def footprint_clearance(pose: Pose, fp: FootprintModel, obstacles: Sequence[Polygon]) -> float:
    """Smallest gap between any footprint circle and any obstacle (negative on penetration)."""
    if not obstacles:
        return INF
    centers = fp.centers(pose.as_array())
    d = EdgeSet(obstacles).clearance(centers)
    return float(np.min(d - fp.radii))


def containment_margin(pose: Pose, fp: FootprintModel, area: Polygon) -> float:
    """How far every circle stays inside ``area``; negative once any circle pokes out."""
    centers = fp.centers(pose.as_array())
    d = area.signed_distance(centers)
    return float(np.min(-d - fp.radii))


class Centerline:
    """Polyline through the middle of a driving area, with station/offset projection.

    The driving area polygon is read as two chains: its first half of
    vertices is the right boundary in driving direction, the second half
    (reversed) the left boundary. Matching vertices are averaged.
    """

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
        pts = pts[keep]
        if len(pts) < 2:
            raise ValidationError("centerline needs at least two distinct points")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.seg_dir = seg / self.seg_len[:, None]
        self.seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
        self.stations = np.concatenate([[0.0], np.cumsum(self.seg_len)])

    @classmethod
    def from_driving_area(cls, area: Polygon) -> "Centerline":
        v = area.vertices
        if len(v) % 2:
            raise ValidationError(
                "driving area needs an even vertex count (right chain, then left chain reversed)"
            )
        half = len(v) // 2
        right = v[:half]
        left = v[half:][::-1]
        return cls(0.5 * (right + left))

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    def project(self, points: np.ndarray):
        """Return (station, lateral offset with left positive, heading) of the nearest segment."""
        points = np.asarray(points, dtype=float)
        rx = points[..., 0:1] - self.points[:-1, 0]
        ry = points[..., 1:2] - self.points[:-1, 1]
        ux, uy = self.seg_dir[:, 0], self.seg_dir[:, 1]
        t = np.clip(rx * ux + ry * uy, 0.0, self.seg_len)
        if len(self.seg_len) == 1:
            return self.stations[0] + t[..., 0], (ux * ry - uy * rx)[..., 0], \
                np.broadcast_to(self.seg_heading[0], t.shape[:-1]).copy()
        fx = rx - t * ux
        fy = ry - t * uy
        k = np.argmin(fx * fx + fy * fy, axis=-1)[..., None]
        tk = np.take_along_axis(t, k, axis=-1)[..., 0]
        lat = np.take_along_axis(ux * ry - uy * rx, k, axis=-1)[..., 0]
        k = k[..., 0]
        return self.stations[k] + tk, lat, self.seg_heading[k]

    def point_at(self, station):
        """Position and heading at the given station(s), clamped to the ends."""
        s = np.clip(station, 0.0, self.length)
        k = np.clip(np.searchsorted(self.stations, s, side="right") - 1, 0, len(self.seg_len) - 1)
        t = s - self.stations[k]
        xy = self.points[k] + t[..., None] * self.seg_dir[k]
        return xy, self.seg_heading[k]
