"""Triangulated planar domains: loading, point location, quality audit.

A domain is represented by a conforming triangulation: a list of vertices
and a list of vertex-index triples. Meshes are ingested from CSV files and
validated, never generated or refined here. All operations are pure reads
on an immutable mesh, safe for concurrent use.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTriangle, IndexOutOfRange, MeshError, NonConforming

# Barycentric slack used by point location. Points whose smallest barycentric
# coordinate is >= -TOL_LOCATE count as inside; edge/vertex ties go to the
# lowest-indexed triangle.
TOL_LOCATE = 1e-10


@dataclass(frozen=True)
class MeshQuality:
    """Shape audit of a triangulation.

    mesh_size is the longest edge over all triangles, min_inradius the
    smallest inscribed-disk radius, and beta_ratio their quotient, the
    quasi-uniformity constant of the mesh (>= 2 for any triangle).
    """

    mesh_size: float
    min_inradius: float
    beta_ratio: float
    min_angle_deg: float


class Triangulation:
    """Immutable conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (V, 2) array of finite vertex coordinates.
    triangles : (N, 3) integer array of vertex indices. Triangles are
        reordered counterclockwise on construction; input orientation is
        not preserved.

    Raises
    ------
    IndexOutOfRange, DegenerateTriangle, NonConforming
        If the arrays do not describe a valid edge-to-edge partition.
    """

    def __init__(self, vertices, triangles):
        vertices = np.array(vertices, dtype=float)  # own copy; frozen below
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be a (V, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be a (N, 3) array")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            bad = np.where((triangles < 0) | (triangles >= len(vertices)))[0]
            raise IndexOutOfRange(
                f"triangle rows {sorted(set(bad.tolist()))} reference vertices "
                f"outside 0..{len(vertices) - 1}"
            )
        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")

        self.vertices = vertices
        self.vertices.setflags(write=False)
        self.triangles = self._orient_ccw(triangles)
        self.triangles.setflags(write=False)
        self._validate_triangles()

        corners = self.vertices[self.triangles]  # (N, 3, 2)
        self._corners = corners
        d1 = corners[:, 1] - corners[:, 0]
        d2 = corners[:, 2] - corners[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        self.area = float(self.areas.sum())

        # Affine maps for barycentric coordinates: b12 = M (p - v3).
        t11 = corners[:, 0, 0] - corners[:, 2, 0]
        t12 = corners[:, 1, 0] - corners[:, 2, 0]
        t21 = corners[:, 0, 1] - corners[:, 2, 1]
        t22 = corners[:, 1, 1] - corners[:, 2, 1]
        det = t11 * t22 - t12 * t21
        self._inv_maps = np.empty((len(triangles), 2, 2))
        self._inv_maps[:, 0, 0] = t22 / det
        self._inv_maps[:, 0, 1] = -t12 / det
        self._inv_maps[:, 1, 0] = -t21 / det
        self._inv_maps[:, 1, 1] = t11 / det
        self._v3 = corners[:, 2]

        self.edge_adjacency = self._build_edge_adjacency()
        self._check_conforming()
        self._vertex_to_triangles = {}
        for t, tri in enumerate(self.triangles):
            for v in tri:
                self._vertex_to_triangles.setdefault(int(v), []).append(t)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def bounding_box(self):
        """(xmin, xmax, ymin, ymax) of the vertex set."""
        return (
            float(self.vertices[:, 0].min()),
            float(self.vertices[:, 0].max()),
            float(self.vertices[:, 1].min()),
            float(self.vertices[:, 1].max()),
        )

    def triangle_coords(self, t):
        """Corner coordinates of triangle t as a (3, 2) array."""
        return self._corners[t]

    def _orient_ccw(self, triangles):
        corners = self.vertices[triangles]
        d1 = corners[:, 1] - corners[:, 0]
        d2 = corners[:, 2] - corners[:, 0]
        signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        out = triangles.copy()
        flip = signed < 0
        out[flip, 1], out[flip, 2] = triangles[flip, 2], triangles[flip, 1]
        return out

    def _validate_triangles(self):
        xmin, xmax = self.vertices[:, 0].min(), self.vertices[:, 0].max()
        ymin, ymax = self.vertices[:, 1].min(), self.vertices[:, 1].max()
        scale2 = max((xmax - xmin) ** 2 + (ymax - ymin) ** 2, 1e-300)
        corners = self.vertices[self.triangles]
        d1 = corners[:, 1] - corners[:, 0]
        d2 = corners[:, 2] - corners[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        for t, tri in enumerate(self.triangles):
            if len(set(tri.tolist())) != 3:
                raise DegenerateTriangle(f"triangle {t} repeats a vertex index")
        bad = np.where(signed <= 1e-14 * scale2)[0]
        if bad.size:
            raise DegenerateTriangle(
                f"triangles {bad.tolist()} have zero area (collinear vertices)"
            )

    def _build_edge_adjacency(self):
        adjacency = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (int(min(u, v)), int(max(u, v)))
                adjacency.setdefault(key, []).append(t)
        return adjacency

    def _check_conforming(self):
        for edge, tris in self.edge_adjacency.items():
            if len(tris) > 2:
                raise NonConforming(f"edge {edge} is shared by triangles {tris}")
        # Triangles across a shared edge must lie on opposite sides of it,
        # otherwise they overlap in area.
        for (a, b), tris in self.edge_adjacency.items():
            if len(tris) != 2:
                continue
            pa, pb = self.vertices[a], self.vertices[b]
            sides = []
            for t in tris:
                other = [v for v in self.triangles[t] if v != a and v != b][0]
                po = self.vertices[other]
                cross = (pb[0] - pa[0]) * (po[1] - pa[1]) - (pb[1] - pa[1]) * (po[0] - pa[0])
                sides.append(cross)
            if sides[0] * sides[1] > 0:
                raise NonConforming(
                    f"triangles {tris} overlap across edge ({a}, {b})"
                )
        # No vertex may sit strictly inside another triangle's edge
        # (T-junction). O(E * V) scan; mesh sizes here keep this cheap.
        verts = self.vertices
        scale = math.sqrt(max(
            (verts[:, 0].max() - verts[:, 0].min()) ** 2
            + (verts[:, 1].max() - verts[:, 1].min()) ** 2, 1e-300))
        tol = 1e-12 * scale
        idx = np.arange(len(verts))
        for (a, b), tris in self.edge_adjacency.items():
            pa, pb = verts[a], verts[b]
            d = pb - pa
            L2 = d @ d
            rel = verts - pa
            cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
            proj = (rel @ d) / L2
            on_segment = (
                (np.abs(cross) <= tol * math.sqrt(L2))
                & (proj > 1e-12)
                & (proj < 1 - 1e-12)
                & (idx != a)
                & (idx != b)
            )
            hits = np.where(on_segment)[0]
            # only vertices actually used by some triangle matter
            used = [int(v) for v in hits if np.any(self.triangles == v)]
            if used:
                raise NonConforming(
                    f"vertex {used[0]} lies inside edge ({a}, {b}) of triangles {tris}"
                )

    def barycentric(self, t, points):
        """Barycentric coordinates of points with respect to triangle t.

        Accepts a single (2,) point or an (n, 2) array; returns (3,) or
        (n, 3). Coordinates sum to one by construction; points outside the
        triangle produce negative entries.
        """
        return barycentric(self._corners[t], points)

    def locate(self, points, tol=TOL_LOCATE, index=None):
        """Find the triangle containing each point.

        Scans triangles in index order and returns the first whose
        barycentric coordinates are all >= -tol, so points on shared edges
        resolve to the lowest-indexed adjacent triangle. Returns -1 for
        points outside the domain. A single (2,) point yields an int or
        None; an (n, 2) array yields an int64 array.

        An optional GridIndex accelerates the scan without changing any
        answer: it only prunes triangles that cannot contain the point.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if index is not None:
            found = index.locate(pts, tol=tol)
        else:
            found = self._locate_bruteforce(pts, tol)
        if single:
            return None if found[0] < 0 else int(found[0])
        return found

    def _locate_bruteforce(self, pts, tol):
        found = np.full(len(pts), -1, dtype=np.int64)
        chunk = max(1, int(2_000_000 // max(1, self.n_triangles)))
        for lo in range(0, len(pts), chunk):
            p = pts[lo:lo + chunk]
            rel = p[None, :, :] - self._v3[:, None, :]  # (N, n, 2)
            b1 = self._inv_maps[:, None, 0, 0] * rel[:, :, 0] + self._inv_maps[:, None, 0, 1] * rel[:, :, 1]
            b2 = self._inv_maps[:, None, 1, 0] * rel[:, :, 0] + self._inv_maps[:, None, 1, 1] * rel[:, :, 1]
            b3 = 1.0 - b1 - b2
            inside = (b1 >= -tol) & (b2 >= -tol) & (b3 >= -tol)  # (N, n)
            any_hit = inside.any(axis=0)
            first = inside.argmax(axis=0)  # first True = lowest triangle index
            found[lo:lo + chunk] = np.where(any_hit, first, -1)
        return found


def barycentric(tri_coords, points):
    """Barycentric coordinates of points relative to one triangle.

    tri_coords is a (3, 2) array of corner coordinates. The third
    coordinate is computed as 1 - b1 - b2, so the triple sums to one up
    to rounding and reproduces the point affinely.
    """
    tri_coords = np.asarray(tri_coords, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    t = np.array([
        [tri_coords[0, 0] - tri_coords[2, 0], tri_coords[1, 0] - tri_coords[2, 0]],
        [tri_coords[0, 1] - tri_coords[2, 1], tri_coords[1, 1] - tri_coords[2, 1]],
    ])
    det = t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]
    rel = pts - tri_coords[2]
    b1 = (t[1, 1] * rel[:, 0] - t[0, 1] * rel[:, 1]) / det
    b2 = (-t[1, 0] * rel[:, 0] + t[0, 0] * rel[:, 1]) / det
    out = np.stack([b1, b2, 1.0 - b1 - b2], axis=1)
    return out[0] if single else out


def triangle_area(tri_coords):
    """Unsigned area of a triangle given its (3, 2) corner coordinates."""
    d1 = tri_coords[1] - tri_coords[0]
    d2 = tri_coords[2] - tri_coords[0]
    return abs(d1[0] * d2[1] - d1[1] * d2[0]) / 2.0


def load_mesh(vertices_source, triangles_source):
    """Load and validate a triangulation from two CSV files.

    The vertex file has header ``x,y``, one vertex per row, implicitly
    indexed from zero. The triangle file has header ``v1,v2,v3`` with
    zero-based vertex indices.
    """
    vertices = _read_csv_table(vertices_source, ("x", "y"), float)
    triangles = _read_csv_table(triangles_source, ("v1", "v2", "v3"), int)
    return Triangulation(np.array(vertices, dtype=float).reshape(-1, 2),
                         np.array(triangles, dtype=np.int64).reshape(-1, 3))


def load_points(source):
    """Load scattered points from a CSV file with header ``x,y``."""
    rows = _read_csv_table(source, ("x", "y"), float)
    pts = np.array(rows, dtype=float).reshape(-1, 2)
    bad = np.where(~np.isfinite(pts).all(axis=1))[0]
    if bad.size:
        raise MeshError(f"non-finite coordinates at data rows {bad.tolist()[:10]}")
    return pts


def _read_csv_table(source, expected_header, cast):
    def parse(fh, name):
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MeshError(f"{name}: empty file")
        header = [h.strip().lower() for h in header]
        if header[: len(expected_header)] != list(expected_header):
            raise MeshError(
                f"{name}: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([cast(x) for x in row[: len(expected_header)]])
            except ValueError as exc:
                raise MeshError(f"{name}: line {lineno}: {exc}") from exc
        return rows

    if hasattr(source, "read"):
        return parse(source, getattr(source, "name", "<stream>"))
    with open(source, newline="") as fh:
        return parse(fh, str(source))


def mesh_quality(tr):
    """Compute the MeshQuality audit of a triangulation."""
    corners = tr.vertices[tr.triangles]
    e0 = np.linalg.norm(corners[:, 1] - corners[:, 0], axis=1)
    e1 = np.linalg.norm(corners[:, 2] - corners[:, 1], axis=1)
    e2 = np.linalg.norm(corners[:, 0] - corners[:, 2], axis=1)
    edges = np.stack([e0, e1, e2], axis=1)
    mesh_size = float(edges.max())
    semi = edges.sum(axis=1) / 2.0
    inradius = tr.areas / semi
    min_inradius = float(inradius.min())
    # law of cosines per corner angle
    a, b, c = e1, e2, e0  # opposite side lengths for corners 0, 1, 2
    angles = []
    for opp, s1, s2 in ((a, b, c), (b, c, a), (c, a, b)):
        cosv = np.clip((s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(cosv)))
    min_angle = float(np.min(np.stack(angles)))
    return MeshQuality(
        mesh_size=mesh_size,
        min_inradius=min_inradius,
        beta_ratio=mesh_size / min_inradius,
        min_angle_deg=min_angle,
    )


def vertex_neighborhood(tr, t):
    """Indices of all triangles sharing at least one vertex with triangle t.

    Includes t itself.
    """
    if not 0 <= t < tr.n_triangles:
        raise IndexOutOfRange(f"triangle index {t} out of range 0..{tr.n_triangles - 1}")
    out = set()
    for v in tr.triangles[t]:
        out.update(tr._vertex_to_triangles[int(v)])
    return out


class GridIndex:
    """Uniform-grid bucket index over triangle bounding boxes.

    Purely an accelerator for Triangulation.locate: cells hold candidate
    triangles sorted by index, so the first-containing-triangle answer is
    identical to the brute-force scan.
    """

    def __init__(self, tr, resolution=None):
        self.tr = tr
        xmin, xmax, ymin, ymax = tr.bounding_box()
        self.xmin, self.ymin = xmin, ymin
        n = resolution or max(1, int(math.sqrt(tr.n_triangles)))
        self.nx = self.ny = n
        self.dx = max((xmax - xmin) / n, 1e-300)
        self.dy = max((ymax - ymin) / n, 1e-300)
        self.cells = [[] for _ in range(n * n)]
        corners = tr.vertices[tr.triangles]
        for t in range(tr.n_triangles):
            x0, y0 = corners[t].min(axis=0)
            x1, y1 = corners[t].max(axis=0)
            i0, i1 = self._clip(int((x0 - xmin) / self.dx)), self._clip(int((x1 - xmin) / self.dx))
            j0, j1 = self._clip(int((y0 - ymin) / self.dy)), self._clip(int((y1 - ymin) / self.dy))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.cells[i * n + j].append(t)

    def _clip(self, k):
        return min(max(k, 0), self.nx - 1)

    def locate(self, pts, tol=TOL_LOCATE):
        tr = self.tr
        found = np.full(len(pts), -1, dtype=np.int64)
        for i, p in enumerate(pts):
            ci = self._clip(int((p[0] - self.xmin) / self.dx))
            cj = self._clip(int((p[1] - self.ymin) / self.dy))
            for t in self.cells[ci * self.nx + cj]:
                b = tr.barycentric(t, p)
                if b[0] >= -tol and b[1] >= -tol and b[2] >= -tol:
                    found[i] = t
                    break
        return found
