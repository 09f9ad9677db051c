"""Polygonal meshes: topology, shape audit and file I/O."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvariantViolation, ParseError
from .quadrature import polygon_area, polygon_centroid

FORMAT_VERSION = 1


class PolyMesh:
    """Conforming polygonal tessellation.

    Cells are counter-clockwise vertex loops. Edges are stored with the
    orientation in which their first (left) cell traverses them, so a
    boundary edge ``(a, b)`` has the domain on its left and its outward
    normal is ``(dy, -dx) / |e|``.

    Attributes:
        vertices: ``(N_V, 2)`` coordinates.
        cells: list of vertex index arrays.
        edges: ``(N_E, 2)`` vertex pairs.
        edge_cells: ``(N_E, 2)`` left cell, right cell (``-1`` on the boundary).
        cell_edges: per cell, the edge index of local edge ``i`` (``v_i -> v_{i+1}``).
        cell_edge_flip: per cell, whether local edge ``i`` runs against the stored edge.
        boundary_edges: indices of edges with a single cell.
    """

    def __init__(self, vertices, cells: Sequence[Sequence[int]]):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvariantViolation(f"vertices must have shape (n, 2), got {self.vertices.shape}")
        self.cells = [np.asarray(c, dtype=np.intp) for c in cells]
        self._build_topology()

    def _build_topology(self) -> None:
        nv = len(self.vertices)
        index: dict = {}
        edges, edge_cells = [], []
        self.cell_edges, self.cell_edge_flip = [], []
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise InvariantViolation(f"cell {c} has fewer than 3 vertices")
            if cell.min() < 0 or cell.max() >= nv:
                raise InvariantViolation(f"cell {c} references a missing vertex")
            ce, cf = [], []
            for a, b in zip(cell, np.roll(cell, -1)):
                key = (a, b) if a < b else (b, a)
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append((a, b))
                    edge_cells.append([c, -1])
                    ce.append(e)
                    cf.append(False)
                else:
                    if edge_cells[e][1] != -1:
                        raise InvariantViolation(f"edge {key} is shared by more than two cells")
                    if edges[e] != (b, a):
                        raise InvariantViolation(
                            f"cells {edge_cells[e][0]} and {c} traverse edge {key} in the same direction"
                        )
                    edge_cells[e][1] = c
                    ce.append(e)
                    cf.append(True)
            self.cell_edges.append(np.array(ce, dtype=np.intp))
            self.cell_edge_flip.append(np.array(cf, dtype=bool))
        self.edges = np.array(edges, dtype=np.intp).reshape(-1, 2)
        self.edge_cells = np.array(edge_cells, dtype=np.intp).reshape(-1, 2)
        self.boundary_edges = np.nonzero(self.edge_cells[:, 1] < 0)[0]
        self.is_boundary_vertex = np.zeros(nv, dtype=bool)
        self.is_boundary_vertex[self.edges[self.boundary_edges].ravel()] = True
        self.areas = np.array([polygon_area(self.vertices[c]) for c in self.cells])
        self.centroids = np.array([
            polygon_centroid(self.vertices[c]) if a > 0 else self.vertices[c].mean(axis=0)
            for c, a in zip(self.cells, self.areas)
        ]).reshape(-1, 2)
        self.diameters = np.array([_diameter(self.vertices[c]) for c in self.cells])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        """Mesh size parameter ``N_V ** -0.5``."""
        return self.n_vertices ** -0.5

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def edge_geometry(self, edge_ids=None):
        """Start points, end points, lengths and outward normals of edges."""
        e = self.edges if edge_ids is None else self.edges[edge_ids]
        p0 = self.vertices[e[:, 0]]
        p1 = self.vertices[e[:, 1]]
        d = p1 - p0
        length = np.hypot(d[:, 0], d[:, 1])
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        return p0, p1, length, normal

    def boundary_loops(self) -> list:
        """Boundary edges chained into closed vertex loops."""
        nxt = {}
        for e in self.boundary_edges:
            a, b = self.edges[e]
            if a in nxt:
                raise InvariantViolation(f"boundary vertex {a} starts two boundary edges")
            nxt[a] = b
        loops, seen = [], set()
        for start in nxt:
            if start in seen:
                continue
            loop, v = [], start
            while v not in seen:
                seen.add(v)
                loop.append(v)
                if v not in nxt:
                    raise InvariantViolation(f"boundary chain is open at vertex {v}")
                v = nxt[v]
            if v != start:
                raise InvariantViolation("boundary edges do not form closed loops")
            loops.append(np.array(loop))
        return loops

    def validate(self, domain=None, tol: float = 1e-10) -> None:
        """Run the incidence and orientation audit.

        Raises:
            InvariantViolation: naming the first offending cell or edge.
        """
        for c, a in enumerate(self.areas):
            if not a > 0.0:
                raise InvariantViolation(f"cell {c} is not counter-clockwise (signed area {a:.3e})")
        for c, cell in enumerate(self.cells):
            if len(np.unique(cell)) != len(cell):
                raise InvariantViolation(f"cell {c} repeats a vertex")
            if not _is_simple(self.vertices[cell]):
                raise InvariantViolation(f"cell {c} is not a simple polygon")
        self.boundary_loops()
        if domain is not None:
            bv = np.nonzero(self.is_boundary_vertex)[0]
            dist = domain.boundary_distance(self.vertices[bv])
            bad = np.nonzero(dist > tol * domain.diameter)[0]
            if len(bad):
                raise InvariantViolation(
                    f"boundary vertex {bv[bad[0]]} lies {dist[bad[0]]:.3e} away from the curved boundary"
                )

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_cells

    def boundary_polygon_area(self) -> float:
        return sum(polygon_area(self.vertices[loop]) for loop in self.boundary_loops())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
        )

    def __repr__(self) -> str:
        return f"PolyMesh(N_V={self.n_vertices}, N_E={self.n_edges}, N_C={self.n_cells})"


def _diameter(pts: np.ndarray) -> float:
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def _segments_cross(p, q, r, s) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(r, s, p), orient(r, s, q)
    d3, d4 = orient(p, q, r), orient(p, q, s)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(pts: np.ndarray) -> bool:
    n = len(pts)
    if n <= 3:
        return True
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


# ---------------------------------------------------------------------------
# shape audit

@dataclass
class ShapeReport:
    diameters: np.ndarray
    star_centers: np.ndarray
    inradius: np.ndarray
    min_vertex_distance: np.ndarray
    inradius_ratio: float  # min over cells of inradius / h_K
    vertex_distance_ratio: float  # min over cells of min vertex distance / h_K
    quasi_uniformity: float  # max h_K / min h_K


def _cell_shape(pts: np.ndarray):
    hK = _diameter(pts)
    area = polygon_area(pts)
    if not area > 0 or hK == 0:
        return hK, pts.mean(axis=0), 0.0, 0.0
    c = polygon_centroid(pts)
    d = np.roll(pts, -1, axis=0) - pts
    length = np.hypot(d[:, 0], d[:, 1])
    # signed distance of the centroid to each supporting line, positive inside
    sd = (d[:, 0] * (c[1] - pts[:, 1]) - d[:, 1] * (c[0] - pts[:, 0])) / np.where(length > 0, length, 1.0)
    rho = max(0.0, float(sd.min()))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.diag_indices(len(pts))] = np.inf
    return hK, c, rho, float(dist.min())


def audit_shape(mesh: PolyMesh) -> ShapeReport:
    """Shape-regularity proxies per cell and their global minima.

    The inradius is the radius of the largest disk around the centroid that
    stays on the inner side of every edge line, which is a disk the cell is
    star-shaped with respect to (zero when the centroid is not in the kernel).
    """
    rows = [_cell_shape(mesh.cell_vertices(c)) for c in range(mesh.n_cells)]
    hK = np.array([r[0] for r in rows])
    centers = np.array([r[1] for r in rows]).reshape(-1, 2)
    rho = np.array([r[2] for r in rows])
    vd = np.array([r[3] for r in rows])
    safe = np.where(hK > 0, hK, 1.0)
    return ShapeReport(
        diameters=hK,
        star_centers=centers,
        inradius=rho,
        min_vertex_distance=vd,
        inradius_ratio=float(np.min(np.where(hK > 0, rho / safe, 0.0))),
        vertex_distance_ratio=float(np.min(np.where(hK > 0, vd / safe, 0.0))),
        quasi_uniformity=float(hK.max() / hK.min()) if hK.min() > 0 else float("inf"),
    )


# ---------------------------------------------------------------------------
# file I/O

def mesh_to_dict(mesh: PolyMesh) -> dict:
    marker = np.zeros(mesh.n_edges, dtype=int)
    marker[mesh.boundary_edges] = 1
    return {
        "version": FORMAT_VERSION,
        "vertices": mesh.vertices.tolist(),
        "cells": [c.tolist() for c in mesh.cells],
        "edges": mesh.edges.tolist(),
        "boundary_marker": marker.tolist(),
    }


def save_mesh(mesh: PolyMesh, path) -> None:
    """Write a mesh as JSON. Floats are written with ``repr`` precision, so
    loading returns bit-identical coordinates."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(mesh_to_dict(mesh)))
    tmp.replace(path)


def _require(data: dict, key: str, kind):
    if key not in data:
        raise ParseError(f"missing field {key!r}")
    if not isinstance(data[key], kind):
        raise ParseError(f"field {key!r} must be a {kind.__name__}")
    return data[key]


def mesh_from_dict(data: dict) -> PolyMesh:
    if not isinstance(data, dict):
        raise ParseError("mesh file must contain a JSON object")
    version = _require(data, "version", int)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported mesh format version {version}")
    raw_v = _require(data, "vertices", list)
    raw_c = _require(data, "cells", list)
    verts = np.empty((len(raw_v), 2))
    for i, v in enumerate(raw_v):
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
            raise ParseError(f"vertices[{i}]: expected a pair of numbers, got {v!r}")
        verts[i] = v
    cells = []
    for i, c in enumerate(raw_c):
        if not (isinstance(c, list) and all(isinstance(x, int) for x in c)):
            raise ParseError(f"cells[{i}]: expected a list of vertex indices")
        bad = [x for x in c if x < 0 or x >= len(verts)]
        if bad:
            raise ParseError(f"cells[{i}]: vertex index {bad[0]} out of range (N_V={len(verts)})")
        cells.append(c)
    mesh = PolyMesh(verts, cells)
    if "edges" in data and "boundary_marker" in data:
        edges = np.asarray(data["edges"], dtype=np.intp).reshape(-1, 2)
        marker = np.asarray(data["boundary_marker"], dtype=int)
        if len(edges) != mesh.n_edges or len(marker) != mesh.n_edges:
            raise ParseError("edges/boundary_marker length does not match the cell topology")
        if not np.array_equal(edges, mesh.edges):
            raise ParseError("edge list does not match the edges implied by the cells")
        expected = np.zeros(mesh.n_edges, dtype=int)
        expected[mesh.boundary_edges] = 1
        if not np.array_equal(marker, expected):
            raise ParseError("boundary_marker disagrees with the cell topology")
    mesh.validate()
    return mesh


def load_mesh(path) -> PolyMesh:
    """Read a JSON mesh written by :func:`save_mesh`.

    Raises:
        ParseError: malformed file, with the offending field.
        InvariantViolation: the mesh fails the incidence audit.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return mesh_from_dict(data)


def structured_quad_mesh(nx: int, ny: Optional[int] = None, lower=(0.0, 0.0), upper=(1.0, 1.0)) -> PolyMesh:
    """Uniform ``nx`` by ``ny`` quadrilateral mesh of a rectangle."""
    ny = nx if ny is None else ny
    xs = np.linspace(lower[0], upper[0], nx + 1)
    ys = np.linspace(lower[1], upper[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            cells.append([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    return PolyMesh(verts, cells)
