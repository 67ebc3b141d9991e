"""Convex polygons, centroidal Voronoi meshes of the unit square, mesh I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree


class GeometryError(ValueError):
    """Invalid polygon or mesh geometry."""


class EmptyCellError(GeometryError):
    """Half-plane clipping left nothing of the domain."""


class MeshFormatError(ValueError):
    """Mesh file could not be parsed."""


UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    a = 0.5 * np.sum(c)
    return np.array([np.sum((x + xn) * c), np.sum((y + yn) * c)]) / (6.0 * a)


@dataclass(frozen=True, eq=False)
class Polygon:
    """A strictly convex polygon with counter-clockwise vertices.

    Derived geometric quantities are computed lazily and cached.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError(f"polygon needs >= 3 planar vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        e = np.roll(v, -1, axis=0) - v
        h = max(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)), 0.0)
        if np.min(np.linalg.norm(e, axis=1)) <= 1e-12 * h:
            raise GeometryError("polygon has repeated vertices")
        turn = _cross(e, np.roll(e, -1, axis=0))
        if np.any(turn <= 0.0):
            raise GeometryError("polygon is not strictly convex and counter-clockwise")
        if polygon_area(v) <= 0.0:
            raise GeometryError("polygon has non-positive area")

    def __len__(self):
        return len(self.vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def complex_vertices(self) -> np.ndarray:
        return self.vertices[:, 0] + 1j * self.vertices[:, 1]

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    @cached_property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @cached_property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        """Edge vectors; edge k runs from vertex k to vertex k+1."""
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normals, one per edge."""
        t = self.edges / self.edge_lengths[:, None]
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def bisectors(self) -> np.ndarray:
        """Unit exterior bisector directions at each corner."""
        t = self.edges / self.edge_lengths[:, None]
        b = np.roll(t, 1, axis=0) - t  # incoming minus outgoing tangent
        return b / np.linalg.norm(b, axis=1)[:, None]

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        """Closed point-in-polygon test; `tol` is a signed distance slack."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = p[:, None, :] - self.vertices[None, :, :]
        dist = np.einsum("qkd,kd->qk", rel, self.normals)
        return np.all(dist <= tol, axis=1)

    def boundary_distance(self, pts) -> np.ndarray:
        """Distance from each point to the polygon boundary."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.vertices[None, :, :]
        e = self.edges[None, :, :]
        s = np.einsum("qkd,qkd->qk", p[:, None, :] - a, np.broadcast_to(e, (len(p),) + e.shape[1:]))
        s = np.clip(s / self.edge_lengths**2, 0.0, 1.0)
        closest = a + s[..., None] * e
        return np.min(np.linalg.norm(p[:, None, :] - closest, axis=-1), axis=1)


def clip_cell(halfplanes, domain) -> Polygon:
    """Intersect a convex domain with half-planes ``{p : n . p <= c}``.

    ``halfplanes`` is a sequence of ``(normal, offset)`` pairs. Clipping is
    done one half-plane at a time (Sutherland-Hodgman).
    """
    poly = np.asarray(domain.vertices if isinstance(domain, Polygon) else domain, dtype=float)
    for normal, offset in halfplanes:
        poly = _clip_once(poly, np.asarray(normal, dtype=float), float(offset))
        if len(poly) < 3:
            raise EmptyCellError("half-plane intersection is empty")
    poly = _drop_short_edges(poly)
    if len(poly) < 3 or polygon_area(poly) <= 0.0:
        raise EmptyCellError("half-plane intersection is degenerate")
    return Polygon(poly)


def _clip_once(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    d = poly @ normal - offset
    scale = max(np.max(np.abs(poly)), 1.0)
    inside = d <= 1e-14 * scale
    if np.all(inside):
        return poly
    if not np.any(inside):
        return poly[:0]
    out = []
    n = len(poly)
    for k in range(n):
        j = (k + 1) % n
        if inside[k]:
            out.append(poly[k])
        if inside[k] != inside[j]:
            t = d[k] / (d[k] - d[j])
            out.append(poly[k] + t * (poly[j] - poly[k]))
    return np.array(out)


def _drop_short_edges(poly: np.ndarray, rel: float = 1e-9) -> np.ndarray:
    if len(poly) < 3:
        return poly
    h = np.max(np.linalg.norm(poly[:, None] - poly[None], axis=-1))
    keep = [poly[0]]
    for p in poly[1:]:
        if np.linalg.norm(p - keep[-1]) > rel * h:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[-1] - keep[0]) <= rel * h:
        keep.pop()
    return np.array(keep)


@dataclass(eq=False)
class Mesh:
    """Conforming polygonal mesh of the unit square.

    Cells are lists of vertex indices in counter-clockwise order.
    """

    vertices: np.ndarray
    cells: list[np.ndarray]
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        if self.validate:
            self.check()

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def polygon(self, k: int) -> Polygon:
        return self.polygons[k]

    @cached_property
    def polygons(self) -> list[Polygon]:
        return [Polygon(self.vertices[c]) for c in self.cells]

    @cached_property
    def edges(self) -> dict[tuple[int, int], list[int]]:
        """Map from sorted vertex pair to the adjacent cell indices."""
        out: dict[tuple[int, int], list[int]] = {}
        for k, c in enumerate(self.cells):
            for a, b in zip(c, np.roll(c, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                out.setdefault(key, []).append(k)
        return out

    @cached_property
    def boundary_vertex(self) -> np.ndarray:
        v = self.vertices
        tol = 1e-12
        return (np.abs(v[:, 0]) < tol) | (np.abs(v[:, 0] - 1) < tol) | (np.abs(v[:, 1]) < tol) | (
            np.abs(v[:, 1] - 1) < tol
        )

    @cached_property
    def h_max(self) -> float:
        return max(p.diameter for p in self.polygons)

    def interior_edges(self):
        return [e for e, adj in self.edges.items() if len(adj) == 2]

    def check(self):
        nv = len(self.vertices)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise GeometryError("vertices must be an (n, 2) array")
        for k, c in enumerate(self.cells):
            if len(c) < 3:
                raise GeometryError(f"cell {k} has fewer than 3 vertices")
            if np.any(c < 0) or np.any(c >= nv):
                raise GeometryError(f"cell {k} references a vertex index outside [0, {nv})")
        try:
            polys = self.polygons
        except GeometryError as exc:
            raise GeometryError(f"invalid cell: {exc}") from exc
        total = sum(p.area for p in polys)
        if abs(total - 1.0) > 1e-10:
            raise GeometryError(f"cell areas sum to {total!r}, expected 1")
        bnd = self.boundary_vertex
        for (a, b), adj in self.edges.items():
            if len(adj) > 2:
                raise GeometryError(f"edge ({a}, {b}) has {len(adj)} adjacent cells")
            if len(adj) == 1:
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                on_side = min(mid[0], 1 - mid[0], mid[1], 1 - mid[1]) < 1e-12
                if not (bnd[a] and bnd[b] and on_side):
                    raise GeometryError(f"edge ({a}, {b}) has one cell but is not on the boundary")

    def locate(self, point) -> int:
        """Index of a cell containing `point`, or -1."""
        p = np.asarray(point, dtype=float)
        for k, poly in enumerate(self.polygons):
            if poly.contains(p, tol=1e-14)[0]:
                return k
        return -1


def unit_square_mesh(nx: int, ny: int | None = None) -> Mesh:
    """Structured mesh of the unit square by nx * ny axis-aligned rectangles."""
    ny = nx if ny is None else ny
    xs, ys = np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            cells.append([a, a + 1, a + nx + 2, a + nx + 1])
    return Mesh(verts, cells)


def _clip_coords(poly, nx, ny, c):
    """One Sutherland-Hodgman pass on a list of (x, y) tuples."""
    d = [nx * x + ny * y - c for x, y in poly]
    if max(d) <= 1e-14:
        return poly
    out = []
    n = len(poly)
    for k in range(n):
        j = k + 1 if k + 1 < n else 0
        dk, dj = d[k], d[j]
        ink, inj = dk <= 1e-14, dj <= 1e-14
        if ink:
            out.append(poly[k])
        if ink != inj:
            t = dk / (dk - dj)
            (xk, yk), (xj, yj) = poly[k], poly[j]
            out.append((xk + t * (xj - xk), yk + t * (yj - yk)))
    return out


def _centroid_coords(poly):
    a = cx = cy = 0.0
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[k + 1 if k + 1 < n else 0]
        w = x0 * y1 - x1 * y0
        a += w
        cx += (x0 + x1) * w
        cy += (y0 + y1) * w
    return cx / (3.0 * a), cy / (3.0 * a)


def _neighbours(seeds):
    n = len(seeds)
    if n <= 16:
        return [[j for j in range(n) if j != i] for i in range(n)]
    indptr, idx = Delaunay(seeds).vertex_neighbor_vertices
    return [sorted(idx[indptr[i] : indptr[i + 1]].tolist()) for i in range(n)]


def _voronoi_coords(seeds):
    """Clipped Voronoi cells as coordinate lists (fast path used by Lloyd)."""
    pts = [tuple(p) for p in seeds.tolist()]
    square = [tuple(p) for p in UNIT_SQUARE.tolist()]
    cells = []
    for i, nb in enumerate(_neighbours(seeds)):
        xi, yi = pts[i]
        poly = square
        for j in nb:
            xj, yj = pts[j]
            nx, ny = xj - xi, yj - yi
            c = nx * 0.5 * (xi + xj) + ny * 0.5 * (yi + yj)
            poly = _clip_coords(poly, nx, ny, c)
            if len(poly) < 3:
                raise EmptyCellError(f"Voronoi cell {i} is empty")
        cells.append(poly)
    return cells


def voronoi_cells(seeds: np.ndarray) -> list[Polygon]:
    """Voronoi cells of `seeds` clipped to the unit square, in seed order.

    Only Delaunay neighbours contribute bisector half-planes.
    """
    seeds = np.asarray(seeds, dtype=float)
    out = []
    for i, poly in enumerate(_voronoi_coords(seeds)):
        v = _drop_short_edges(np.array(poly))
        if len(v) < 3:
            raise EmptyCellError(f"Voronoi cell {i} is degenerate")
        out.append(Polygon(v))
    return out


def cvt_energy(seeds: np.ndarray, cells: list[Polygon]) -> float:
    """Sum over cells of the integral of |p - seed|^2 (exact, via triangle fans)."""
    total = 0.0
    for s, cell in zip(seeds, cells):
        v = np.asarray(getattr(cell, "vertices", cell)) - s
        a, b = v, np.roll(v, -1, axis=0)
        area = 0.5 * _cross(a, b)
        # integral of |x|^2 over the triangle (0, a, b)
        total += float(np.sum(area / 6.0 * (np.sum(a * a, 1) + np.sum(b * b, 1) + np.sum(a * b, 1))))
    return total


def _perturb_coincident(seeds, rng, attempts=10):
    for _ in range(attempts):
        tree = cKDTree(seeds)
        pairs = tree.query_pairs(1e-12)
        if not pairs:
            return seeds
        bad = sorted({j for _, j in pairs})
        seeds[bad] = np.clip(seeds[bad] + 1e-6 * (rng.random((len(bad), 2)) - 0.5), 0.0, 1.0)
    if cKDTree(seeds).query_pairs(1e-12):
        raise GeometryError(f"coincident seeds persist after {attempts} reseed attempts")
    return seeds


def generate_cvt(
    n_cells: int,
    rng_seed: int = 0,
    lloyd_iters: int = 100,
    move_tol: float = 1e-8,
    seeds=None,
    energy_log: list | None = None,
) -> Mesh:
    """Centroidal Voronoi tessellation of the unit square by Lloyd iteration.

    Seeds are drawn uniformly from ``numpy.random.default_rng(rng_seed)``
    unless given explicitly. If `energy_log` is a list, the CVT energy of
    every Voronoi diagram visited is appended to it.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if seeds is None:
        seeds = rng.random((n_cells, 2))
    else:
        seeds = np.array(seeds, dtype=float)
        if seeds.shape != (n_cells, 2):
            raise ValueError(f"expected seeds of shape ({n_cells}, 2), got {seeds.shape}")
    seeds = _perturb_coincident(seeds, rng)
    for _ in range(lloyd_iters):
        coords = _voronoi_coords(seeds)
        if energy_log is not None:
            energy_log.append(cvt_energy(seeds, [np.array(c) for c in coords]))
        new = np.array([_centroid_coords(c) for c in coords])
        moved = np.max(np.linalg.norm(new - seeds, axis=1))
        seeds = new
        if moved < move_tol:
            break
    cells = voronoi_cells(seeds)
    if energy_log is not None:
        energy_log.append(cvt_energy(seeds, cells))
    return mesh_from_polygons(cells)


def mesh_from_polygons(polys: list[Polygon], merge_tol: float = 1e-6) -> Mesh:
    """Glue independently computed cells into an indexed mesh.

    Vertices closer than ``merge_tol * min(h_K)`` are identified; vertices
    within 1e-12 of the square's sides are snapped onto them.
    """
    pts = np.concatenate([p.vertices for p in polys])
    pts = np.where(np.abs(pts) < 1e-12, 0.0, pts)
    pts = np.where(np.abs(pts - 1.0) < 1e-12, 1.0, pts)
    tol = merge_tol * min(p.diameter for p in polys)
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(cKDTree(pts).query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(pts))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    verts = pts[uniq]
    cells, start = [], 0
    for p in polys:
        idx = inverse[start : start + len(p)]
        start += len(p)
        c = [int(idx[0])]
        for k in idx[1:]:
            if k != c[-1]:
                c.append(int(k))
        if len(c) > 1 and c[-1] == c[0]:
            c.pop()
        cells.append(c)
    return Mesh(verts, cells)


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh as JSON text with 17 significant digits per coordinate."""
    vert_lines = ",\n    ".join(f"[{x:.17g}, {y:.17g}]" for x, y in mesh.vertices)
    cell_lines = ",\n    ".join("[" + ", ".join(str(int(i)) for i in c) + "]" for c in mesh.cells)
    text = f'{{\n  "vertices": [\n    {vert_lines}\n  ],\n  "cells": [\n    {cell_lines}\n  ]\n}}\n'
    Path(path).write_text(text)


def load_mesh(path) -> Mesh:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise MeshFormatError(f"{path}: top level must be an object")
    for key in ("vertices", "cells"):
        if key not in data:
            raise MeshFormatError(f"{path}: missing key {key!r}")
    verts = []
    for k, v in enumerate(data["vertices"]):
        if not (isinstance(v, list) and len(v) == 2 and all(_is_number(t) for t in v)):
            raise MeshFormatError(f"{path}: vertices[{k}] must be a pair of numbers, got {v!r}")
        verts.append(v)
    cells = []
    for k, c in enumerate(data["cells"]):
        if not isinstance(c, list):
            raise MeshFormatError(f"{path}: cells[{k}] must be a list")
        for m, i in enumerate(c):
            if not isinstance(i, int) or isinstance(i, bool):
                raise MeshFormatError(f"{path}: cells[{k}][{m}] must be an integer, got {i!r}")
        cells.append(c)
    return Mesh(np.array(verts, dtype=float).reshape(-1, 2), cells)


def _is_number(t) -> bool:
    return isinstance(t, (int, float)) and not isinstance(t, bool)
