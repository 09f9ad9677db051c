"""Lloyd-relaxed Voronoi meshes clipped to a curved domain."""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Voronoi, cKDTree

from .exceptions import DegenerateCell, MeshInvalid
from .geometry import DomainSpec
from .mesh import PolyMesh

log = logging.getLogger(__name__)


def _domain_polygon(domain: DomainSpec, n_seeds: int, spacing: Optional[float]):
    s = domain.sampler
    perimeter = float(s.lengths.sum())
    if spacing is None:
        area = abs(domain.signed_area())
        cell = np.sqrt(area / n_seeds)
        spacing = min(perimeter / (32.0 * np.sqrt(n_seeds)), 0.2 * cell)
    pts, corner = domain.polyline(spacing=spacing)
    poly = shapely.Polygon(pts)
    if not poly.is_valid:
        raise MeshInvalid(f"boundary polyline is not simple: {shapely.is_valid_reason(poly)}")
    return poly, pts, corner


def _sample_seeds(poly, n_seeds: int, rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = poly.bounds
    out = []
    count = 0
    while count < n_seeds:
        cand = rng.uniform((x0, y0), (x1, y1), size=(max(2 * (n_seeds - count), 16), 2))
        cand = cand[shapely.contains_xy(poly, cand[:, 0], cand[:, 1])]
        out.append(cand[: n_seeds - count])
        count += len(out[-1])
    return np.vstack(out)


def _voronoi_cells(seeds: np.ndarray, bounds) -> list:
    x0, y0, x1, y1 = bounds
    w = max(x1 - x0, y1 - y0)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    far = np.array([[cx - 10 * w, cy - 10 * w], [cx + 10 * w, cy - 10 * w],
                    [cx + 10 * w, cy + 10 * w], [cx - 10 * w, cy + 10 * w]])
    vor = Voronoi(np.vstack([seeds, far]))
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshInvalid(f"Voronoi region of seed {i} is unbounded")
        cells.append(vor.vertices[region])
    return cells


class _TiledDomain:
    """Domain polygon cut into overlapping local pieces.

    Tiles of side ``size`` each own the piece ``domain & window`` where the
    window is the tile grown by ``size`` on every side. A cell whose seed
    lies in a tile and whose bounding box fits in the window is clipped
    against that small piece instead of the whole polygon.
    """

    def __init__(self, poly, size: float):
        self.poly = poly
        self.prepared = shapely.Polygon(poly.exterior)
        shapely.prepare(self.prepared)
        x0, y0, x1, y1 = poly.bounds
        self.origin = np.array([x0, y0])
        self.size = float(size)
        self.nx = max(1, int(np.ceil((x1 - x0) / size)))
        self.ny = max(1, int(np.ceil((y1 - y0) / size)))
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        lo = self.origin + size * np.column_stack([ix.ravel(), iy.ravel()]) - size
        hi = lo + 3 * size
        self.lo, self.hi = lo, hi
        windows = shapely.box(lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1])
        hit = shapely.intersects(poly.exterior, windows)
        self.pieces = np.full(len(windows), None, dtype=object)
        idx = np.flatnonzero(hit)
        if len(idx):
            self.pieces[idx] = shapely.intersection(windows[idx], poly)

    def clip(self, polys: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        inside = shapely.contains(self.prepared, polys)
        out = polys.copy()
        todo = np.flatnonzero(~inside)
        if not len(todo):
            return out
        t = np.floor((seeds[todo] - self.origin) / self.size).astype(int)
        t[:, 0] = np.clip(t[:, 0], 0, self.nx - 1)
        t[:, 1] = np.clip(t[:, 1], 0, self.ny - 1)
        tile = t[:, 0] * self.ny + t[:, 1]
        b = shapely.bounds(polys[todo])
        fits = np.all(b[:, :2] >= self.lo[tile], axis=1) & np.all(b[:, 2:] <= self.hi[tile], axis=1)
        pieces = self.pieces[tile]
        local = fits & np.array([p is not None for p in pieces], dtype=bool)
        if local.any():
            out[todo[local]] = shapely.intersection(polys[todo[local]], pieces[local])
        if (~local).any():
            out[todo[~local]] = shapely.intersection(polys[todo[~local]], self.poly)
        return out


def _clip(seeds: np.ndarray, tiles: _TiledDomain, local: bool = False) -> np.ndarray:
    """Voronoi cells of ``seeds`` intersected with the domain polygon.

    With ``local`` each raw cell is first cut to a box of half-width one tile
    around its seed. That drops far-away pieces, which is harmless for Lloyd
    centroids but not a partition of the domain.
    """
    raw = _voronoi_cells(seeds, tiles.poly.bounds)
    polys = np.asarray(shapely.polygons([shapely.linearrings(c) for c in raw]), dtype=object)
    if local:
        r = tiles.size
        boxes = shapely.box(seeds[:, 0] - r, seeds[:, 1] - r, seeds[:, 0] + r, seeds[:, 1] + r)
        polys = np.asarray(shapely.intersection(polys, boxes), dtype=object)
    return tiles.clip(polys, seeds)


def _largest_part(geom, seed):
    parts = [g for g in shapely.get_parts(geom) if isinstance(g, shapely.Polygon) and g.area > 0]
    if not parts:
        return None, []
    pt = shapely.Point(seed)
    main = min(parts, key=lambda g: (not g.covers(pt), -g.area))
    return main, [g for g in parts if g is not main]


def _lloyd(seeds, tiles: _TiledDomain, iters: int) -> np.ndarray:
    for _ in range(iters):
        cells = _clip(seeds, tiles, local=True)
        simple = shapely.get_type_id(cells) == 3
        new = seeds.copy()
        ctr = shapely.get_coordinates(shapely.centroid(cells[simple]))
        new[simple] = ctr
        for i in np.flatnonzero(~simple):
            main, _ = _largest_part(cells[i], seeds[i])
            if main is not None:
                new[i] = (main.centroid.x, main.centroid.y)
        seeds = new
    return seeds


def _merge_orphans(mains: list, orphans: list) -> list:
    """Attach each stray piece to the cell sharing the longest boundary with it."""
    if not orphans:
        return mains
    tree = shapely.STRtree(mains)
    extra = {}
    for piece in orphans:
        cand = tree.query(piece, predicate="intersects")
        best, best_len = None, 0.0
        for j in cand:
            length = piece.boundary.intersection(mains[j].boundary).length
            if length > best_len:
                best, best_len = int(j), length
        if best is None:
            raise MeshInvalid("a clipped Voronoi piece touches no other cell")
        extra.setdefault(best, []).append(piece)
    out = list(mains)
    for j, pieces in extra.items():
        merged = shapely.union_all([mains[j]] + pieces)
        if not isinstance(merged, shapely.Polygon):
            raise MeshInvalid("merging a stray piece produced a disconnected cell")
        out[j] = merged
    return out


def _merge_vertices(coords: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    tree = cKDTree(coords)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(coords)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    _, labels = connected_components(g, directed=False)
    # representative: first occurrence keeps its coordinates
    first = np.full(labels.max() + 1, -1)
    for i in range(n - 1, -1, -1):
        first[labels[i]] = i
    return coords[first], labels


def _dedupe_loop(loop: list) -> list:
    out = []
    for v in loop:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _insert_hanging(vertices: np.ndarray, cells: list, tol: float) -> list:
    """Split cell edges that pass through another cell's vertex."""
    count = {}
    for cell in cells:
        for a, b in zip(cell, cell[1:] + cell[:1]):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    single = {k for k, c in count.items() if c == 1}
    if not single:
        return cells
    tree = cKDTree(vertices)
    out = []
    for cell in cells:
        new = []
        for a, b in zip(cell, cell[1:] + cell[:1]):
            new.append(a)
            if (min(a, b), max(a, b)) not in single:
                continue
            pa, pb = vertices[a], vertices[b]
            d = pb - pa
            L = float(np.hypot(*d))
            cand = tree.query_ball_point(0.5 * (pa + pb), 0.5 * L + tol)
            hits = []
            for v in cand:
                if v in (a, b):
                    continue
                w = vertices[v] - pa
                t = float(np.dot(w, d)) / (L * L)
                dist = abs(d[0] * w[1] - d[1] * w[0]) / L
                if 0.0 < t < 1.0 and dist <= tol:
                    hits.append((t, v))
            new.extend(v for _, v in sorted(hits))
        out.append(new)
    return out


def _chain_keep(pts: np.ndarray, rel_tol: float) -> np.ndarray:
    """Douglas-Peucker on an open chain: mask of points to keep (ends always kept)."""
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        d = b - a
        L = float(np.hypot(*d))
        w = pts[i + 1 : j] - a
        dev = np.abs(d[0] * w[:, 1] - d[1] * w[:, 0]) / max(L, 1e-300)
        k = int(np.argmax(dev))
        if dev[k] > rel_tol * L:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return keep


def _simplify_boundary(vertices: np.ndarray, cells: list, protected: np.ndarray, rel_tol: float) -> list:
    """Drop boundary vertices that belong to a single cell and carry no shape.

    A vertex is removable when it is used by one cell only and is not
    ``protected`` (domain corners). Runs of removable vertices are thinned by
    Douglas-Peucker relative to the chord between the kept ends.
    """
    use = np.zeros(len(vertices), dtype=int)
    for cell in cells:
        np.add.at(use, cell, 1)
    removable = (use == 1) & ~protected
    out = []
    for cell in cells:
        cell = list(cell)
        n = len(cell)
        rem = removable[cell]
        if not rem.any():
            out.append(cell)
            continue
        if rem.all():
            out.append(cell)
            continue
        start = int(np.flatnonzero(~rem)[0])
        order = cell[start:] + cell[:start]
        rem = removable[order]
        keep_mask = np.ones(n, dtype=bool)
        i = 0
        while i < n:
            if not rem[i]:
                i += 1
                continue
            j = i
            while j < n and rem[j]:
                j += 1
            # run order[i:j] between kept order[i-1] and order[j % n]
            idx = [order[i - 1]] + order[i:j] + [order[j % n]]
            k = _chain_keep(vertices[idx], rel_tol)
            keep_mask[i:j] = k[1:-1]
            i = j
        new = [v for v, k in zip(order, keep_mask) if k]
        if len(new) < 3:
            new = order
        out.append(new)
    return out


def _canonical(vertices: np.ndarray, cells: list) -> tuple[np.ndarray, list]:
    """Sort vertices by (y, x), cells by centroid, and start each cell at its
    smallest vertex so output does not depend on internal processing order."""
    used = np.unique(np.concatenate([np.asarray(c) for c in cells]))
    vertices = vertices[used]
    remap = np.full(used.max() + 1, -1)
    remap[used] = np.arange(len(used))
    cells = [remap[np.asarray(c)] for c in cells]
    order = np.lexsort((vertices[:, 0], vertices[:, 1]))
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    vertices = vertices[order]
    cells = [inv[c] for c in cells]
    cells = [np.roll(c, -int(np.argmin(c))) for c in cells]
    ctr = np.array([vertices[c].mean(axis=0) for c in cells])
    corder = np.lexsort((ctr[:, 0], ctr[:, 1]))
    return vertices, [cells[i].tolist() for i in corder]


def generate_voronoi_mesh(
    domain: DomainSpec,
    n_seeds: int,
    lloyd_iters: int = 20,
    rng_seed: int = 0,
    seeds: Optional[np.ndarray] = None,
    polyline_spacing: Optional[float] = None,
    simplify_tol: float = 0.05,
) -> PolyMesh:
    """Voronoi tessellation of ``domain`` with vertices of the boundary on the curve.

    Seeds are drawn uniformly in the bounding box and rejected outside the
    domain, relaxed by ``lloyd_iters`` Lloyd steps, and their Voronoi cells
    are clipped against a fine boundary polyline. Boundary vertices that only
    refine the polyline are then removed where the boundary is flat enough
    (relative chord deviation below ``simplify_tol``), and every remaining
    boundary vertex is projected onto the curve.

    Args:
        domain: curved domain.
        n_seeds: number of Voronoi seeds, at least 4.
        lloyd_iters: Lloyd relaxation steps.
        rng_seed: seed of the random generator.
        seeds: explicit seed coordinates, overriding random sampling.
        polyline_spacing: clipping polyline spacing; by default the smaller of
            ``perimeter / (32 sqrt(n_seeds))`` and a fifth of the mean cell size.
        simplify_tol: relative deviation kept by boundary simplification.

    Raises:
        DegenerateCell: a cell with area below ``1e-12 |Omega|``.
        MeshInvalid: the result fails the incidence audit.
    """
    if seeds is not None:
        seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
        n_seeds = len(seeds)
    if n_seeds < 4:
        raise ValueError(f"n_seeds must be at least 4, got {n_seeds}")
    poly, ppts, corner = _domain_polygon(domain, n_seeds, polyline_spacing)
    area = poly.area
    tiles = _TiledDomain(poly, 3.0 * np.sqrt(area / n_seeds))
    if seeds is None:
        rng = np.random.default_rng(rng_seed)
        seeds = _sample_seeds(tiles.prepared, n_seeds, rng)
    seeds = _lloyd(seeds, tiles, lloyd_iters)
    clipped = _clip(seeds, tiles)

    mains, orphans = [], []
    for i, g in enumerate(clipped):
        main, rest = _largest_part(g, seeds[i])
        if main is None:
            raise DegenerateCell(f"seed {i} produced an empty cell")
        mains.append(main)
        orphans.extend(rest)
    cells_geom = _merge_orphans(mains, orphans)

    loops = []
    for g in cells_geom:
        g = shapely.orient_polygons(g) if hasattr(shapely, "orient_polygons") else shapely.geometry.polygon.orient(g)
        loops.append(np.asarray(g.exterior.coords)[:-1])
    sizes = [len(l) for l in loops]
    coords = np.vstack(loops)
    tol = 1e-9 * domain.diameter
    merged, labels = _merge_vertices(coords, tol)
    offsets = np.r_[0, np.cumsum(sizes)]
    cells = [_dedupe_loop(labels[offsets[i] : offsets[i + 1]].tolist()) for i in range(len(loops))]
    cells = _insert_hanging(merged, cells, 10 * tol)

    # domain corners must survive simplification
    protected = np.zeros(len(merged), dtype=bool)
    if corner.any():
        d, j = cKDTree(merged).query(ppts[corner])
        protected[j[d <= 10 * tol]] = True
    if simplify_tol is not None:
        cells = _simplify_boundary(merged, cells, protected, simplify_tol)

    vertices, cells = _canonical(merged, cells)
    mesh = PolyMesh(vertices, cells)
    bv = np.flatnonzero(mesh.is_boundary_vertex)
    vertices = mesh.vertices.copy()
    vertices[bv] = domain.closest_points(vertices[bv])
    mesh = PolyMesh(vertices, mesh.cells)

    small = np.flatnonzero(mesh.areas < 1e-12 * area)
    if len(small):
        raise DegenerateCell(f"cell {small[0]} has area {mesh.areas[small[0]]:.3e}")
    try:
        mesh.validate(domain)
    except Exception as exc:
        raise MeshInvalid(str(exc)) from exc
    if mesh.euler_characteristic() != 1:
        raise MeshInvalid(f"Euler characteristic is {mesh.euler_characteristic()}, expected 1")
    return mesh
