"""Simplicial meshes of smooth domains: coarse fans, red refinement with
boundary projection, facet connectivity, quality metrics and text I/O.

Meshes satisfy the usual conformity hypotheses for boundary-fitted
approximation of a C^2 domain: cells are closed simplices with pairwise
disjoint interiors, neighboring cells share a full facet, every vertex of
a boundary facet lies on the curved boundary, and the family produced by
`refine` stays shape-regular.
"""

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np

from .quadrature import simplex_rule, map_points

RHO_MIN = 0.15  # shape-regularity floor for min_T rho_T / h_T


class RegularityViolation(Exception):
    """Mesh fails the shape-regularity floor rho_T / h_T >= RHO_MIN."""


class NonManifold(Exception):
    """A facet is shared by more than two cells."""


class ParseError(Exception):
    """Malformed mesh file; carries the 1-based offending line number."""

    def __init__(self, message, line):
        super().__init__("line %d: %s" % (line, message))
        self.line = line


def _cell_dets(vertices, cells):
    edges = vertices[cells[:, 1:]] - vertices[cells[:, :1]]
    return np.linalg.det(edges)


def _pairwise_diameters(points):
    """Max pairwise distance within each simplex; points (m, k, N)."""
    diff = points[:, :, None, :] - points[:, None, :, :]
    return np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))


def _facet_measures(vertices, facet_verts):
    """Measure of (N-1)-simplices given as an (m, N, N) coordinate array."""
    dim = vertices.shape[1]
    if dim == 2:
        return np.linalg.norm(facet_verts[:, 1] - facet_verts[:, 0], axis=1)
    cr = np.cross(facet_verts[:, 1] - facet_verts[:, 0],
                  facet_verts[:, 2] - facet_verts[:, 0])
    return 0.5 * np.linalg.norm(cr, axis=1)


class SimplexMesh:
    """Triangulation by N-simplices, N = 2 or 3.

    Attributes
    ----------
    vertices : (nv, N) float array
    cells : (nc, N+1) int array, positively oriented
    cell_volumes : (nc,) volumes |T|
    h_cells, rho_cells : (nc,) diameters h_T and inball diameters rho_T
    h : float, max_T h_T
    orientation_repaired : True if any input cell had to be reoriented
    """

    def __init__(self, vertices, cells, check_regularity=True):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must be (nv, 2) or (nv, 3)")
        dim = vertices.shape[1]
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise ValueError("cells must be (nc, %d)" % (dim + 1))
        if cells.min(initial=0) < 0 or cells.max(initial=-1) >= len(vertices):
            raise ValueError("cell vertex index out of range")

        dets = _cell_dets(vertices, cells)
        if np.any(dets == 0.0):
            raise ValueError("degenerate (zero-volume) cell")
        flip = dets < 0.0
        if np.any(flip):
            cells = cells.copy()
            cells[flip, -2], cells[flip, -1] = (cells[flip, -1].copy(),
                                                cells[flip, -2].copy())
            dets = np.abs(dets)
        self.orientation_repaired = bool(np.any(flip))

        self.dim = dim
        self.vertices = vertices
        self.cells = cells
        self.cell_volumes = np.abs(dets) / float(factorial(dim))

        pts = vertices[cells]
        self.h_cells = _pairwise_diameters(pts)
        surf = np.zeros(len(cells))
        for i in range(dim + 1):
            keep = [j for j in range(dim + 1) if j != i]
            surf += _facet_measures(vertices, pts[:, keep])
        self.rho_cells = 2.0 * dim * self.cell_volumes / surf
        self.h = float(self.h_cells.max())

        ratio = float((self.rho_cells / self.h_cells).min())
        self.shape_ratio = ratio
        if check_regularity and ratio < RHO_MIN:
            raise RegularityViolation(
                "min rho_T/h_T = %.4f below floor %.2f" % (ratio, RHO_MIN))

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def barycentric_gradients(self):
        """Gradients of the barycentric coordinates, shape (nc, N+1, N)."""
        pts = self.vertices[self.cells]
        edges = pts[:, 1:] - pts[:, :1]            # (nc, N, N)
        inv = np.linalg.inv(edges)                  # columns: grad lambda_j
        grads = np.empty((len(self.cells), self.dim + 1, self.dim))
        grads[:, 1:, :] = np.swapaxes(inv, 1, 2)
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        return grads


def coarse_disk():
    """Hexagon fan: 7 vertices, 6 equilateral triangles around the origin."""
    ang = np.arange(6) * np.pi / 3.0
    vertices = np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])])
    cells = np.array([[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)])
    return SimplexMesh(vertices, cells)


def coarse_ball():
    """Octahedron fan: 7 vertices, 8 tetrahedra around the origin."""
    vertices = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
    ])
    cells = []
    for x in (1, 2):
        for y in (3, 4):
            for z in (5, 6):
                cells.append([0, x, y, z])
    return SimplexMesh(vertices, np.array(cells))


def _cell_edges(cells):
    """Sorted vertex pairs of all cell edges; (nc*n_edges, 2)."""
    npc = cells.shape[1]
    pairs = list(combinations(range(npc), 2))
    e = cells[:, pairs]                 # (nc, n_edges, 2)
    return np.sort(e.reshape(-1, 2), axis=1), pairs


def refine(mesh, domain=None):
    """Uniform red refinement (2^N children per cell).

    New vertices sitting on edges of boundary facets are projected onto the
    curved boundary of `domain` (if given), so that boundary-facet vertices
    stay on it.  Children are reordered to positive orientation.
    """
    cells = mesh.cells
    nv = mesh.num_vertices
    edges_all, pairs = _cell_edges(cells)
    edges, inverse = np.unique(edges_all, axis=0, return_inverse=True)
    mid_id = nv + np.arange(len(edges))
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    if domain is not None:
        bdry_edges = _boundary_facet_edges(mesh)
        if len(bdry_edges):
            key = edges[:, 0] * (nv + 1) + edges[:, 1]
            bkey = bdry_edges[:, 0] * (nv + 1) + bdry_edges[:, 1]
            onb = np.isin(key, bkey)
            midpoints[onb] = domain.project(midpoints[onb])

    vertices = np.vstack([mesh.vertices, midpoints])
    # midpoint vertex id per (cell, local edge)
    m = mid_id[inverse].reshape(len(cells), len(pairs))
    loc = {pair: k for k, pair in enumerate(pairs)}

    if mesh.dim == 2:
        v0, v1, v2 = cells[:, 0], cells[:, 1], cells[:, 2]
        m01, m02, m12 = m[:, loc[(0, 1)]], m[:, loc[(0, 2)]], m[:, loc[(1, 2)]]
        children = [
            (v0, m01, m02), (v1, m12, m01), (v2, m02, m12), (m01, m12, m02),
        ]
    else:
        v = [cells[:, i] for i in range(4)]
        mm = {p: m[:, loc[p]] for p in pairs}
        m01, m02, m03 = mm[(0, 1)], mm[(0, 2)], mm[(0, 3)]
        m12, m13, m23 = mm[(1, 2)], mm[(1, 3)], mm[(2, 3)]
        children = [
            (v[0], m01, m02, m03), (m01, v[1], m12, m13),
            (m02, m12, v[2], m23), (m03, m13, m23, v[3]),
        ]
        # split the inner octahedron along its shortest diagonal
        diag = np.stack([
            np.linalg.norm(vertices[m01] - vertices[m23], axis=1),
            np.linalg.norm(vertices[m02] - vertices[m13], axis=1),
            np.linalg.norm(vertices[m03] - vertices[m12], axis=1),
        ])
        choice = np.argmin(diag, axis=0)
        ends = [(m01, m23), (m02, m13), (m03, m12)]
        cycles = [(m02, m12, m13, m03), (m01, m12, m23, m03), (m01, m13, m23, m02)]
        nc = len(cells)
        for k in range(4):
            a = np.empty(nc, dtype=np.int64)
            b = np.empty(nc, dtype=np.int64)
            r1 = np.empty(nc, dtype=np.int64)
            r2 = np.empty(nc, dtype=np.int64)
            for c, ((p, q), cyc) in enumerate(zip(ends, cycles)):
                sel = choice == c
                a[sel], b[sel] = p[sel], q[sel]
                r1[sel] = cyc[k][sel]
                r2[sel] = cyc[(k + 1) % 4][sel]
            children.append((a, b, r1, r2))

    new_cells = np.vstack([np.column_stack(ch) for ch in children])
    return SimplexMesh(vertices, new_cells)


def _boundary_facet_edges(mesh):
    """Sorted vertex pairs of all edges lying in some boundary facet."""
    fc = build_facets(mesh)
    bf = fc.facet_vertices[fc.boundary_facets]
    if mesh.dim == 2:
        return np.sort(bf, axis=1)
    pairs = []
    for (i, j) in combinations(range(3), 2):
        pairs.append(bf[:, [i, j]])
    out = np.sort(np.vstack(pairs), axis=1)
    return np.unique(out, axis=0)


class FacetComplex:
    """Facet connectivity of a SimplexMesh.

    Attributes
    ----------
    facet_vertices : (nf, N) int, sorted vertex indices per facet
    cells_adj : (nf, 2) int, adjacent cells (second is -1 on the boundary);
        interior facets store (smaller id, larger id)
    cell_facets : (nc, N+1) int, facet id opposite each local vertex
    midpoints : (nf, N) facet barycenters m_e
    measures : (nf,) |e|; diameters : (nf,) h_e
    normals : (nf, N) unit normal n_e, pointing from cells_adj[:,0] into
        cells_adj[:,1] (outward on the boundary)
    is_boundary : (nf,) bool; boundary_facets : indices of boundary facets
    boundary_index : (nf,) position in boundary numbering, -1 if interior
    """

    def __init__(self, mesh):
        self.mesh = mesh
        dim = mesh.dim
        cells = mesh.cells
        nc, npc = cells.shape

        local = np.array([[j for j in range(npc) if j != i] for i in range(npc)])
        fv_all = cells[:, local].reshape(nc * npc, dim)   # (nc*(N+1), N)
        fv_sorted = np.sort(fv_all, axis=1)
        facets, inverse, counts = np.unique(
            fv_sorted, axis=0, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            raise NonManifold("a facet is shared by more than two cells")

        nf = len(facets)
        self.facet_vertices = facets
        self.cell_facets = inverse.reshape(nc, npc)

        cells_adj = np.full((nf, 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(nc), npc)
        order = np.argsort(inverse, kind="stable")
        f_sorted = inverse[order]
        c_sorted = owner[order]
        first = np.searchsorted(f_sorted, np.arange(nf), side="left")
        last = np.searchsorted(f_sorted, np.arange(nf), side="right")
        single = (last - first) == 1
        cells_adj[single, 0] = c_sorted[first[single]]
        double = ~single
        a = c_sorted[first[double]]
        b = c_sorted[last[double] - 1]
        cells_adj[double, 0] = np.minimum(a, b)
        cells_adj[double, 1] = np.maximum(a, b)
        self.cells_adj = cells_adj
        self.is_boundary = cells_adj[:, 1] < 0
        self.boundary_facets = np.flatnonzero(self.is_boundary)
        self.boundary_index = np.full(nf, -1, dtype=np.int64)
        self.boundary_index[self.boundary_facets] = np.arange(
            len(self.boundary_facets))

        pts = mesh.vertices[facets]                    # (nf, N, N)
        self.midpoints = pts.mean(axis=1)
        self.measures = _facet_measures(mesh.vertices, pts)
        self.diameters = (np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
                          if dim == 2 else _pairwise_diameters(pts))

        if dim == 2:
            t = pts[:, 1] - pts[:, 0]
            n = np.column_stack([t[:, 1], -t[:, 0]])
        else:
            n = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
        n /= np.linalg.norm(n, axis=1)[:, None]
        centroid0 = mesh.vertices[cells[cells_adj[:, 0]]].mean(axis=1)
        sign = np.sign(np.einsum("ij,ij->i", n, self.midpoints - centroid0))
        self.normals = n * sign[:, None]

        self.boundary_vertices = np.unique(facets[self.boundary_facets])

    @property
    def num_facets(self):
        return len(self.facet_vertices)

    @property
    def num_boundary_facets(self):
        return len(self.boundary_facets)

    def boundary_facet_neighbors(self):
        """For each boundary facet, the other boundary facets sharing at
        least one vertex, as indices into the boundary numbering."""
        bf = self.facet_vertices[self.boundary_facets]
        nb = len(bf)
        by_vertex = {}
        for i in range(nb):
            for p in bf[i]:
                by_vertex.setdefault(int(p), []).append(i)
        out = []
        for i in range(nb):
            s = set()
            for p in bf[i]:
                s.update(by_vertex[int(p)])
            s.discard(i)
            out.append(np.array(sorted(s), dtype=np.int64))
        return out


def build_facets(mesh):
    return FacetComplex(mesh)


@dataclass
class QualityReport:
    h: float
    min_shape_ratio: float       # min_T rho_T / h_T
    max_skin: float              # max_e max |d| over boundary facet points
    max_skin_ratio: float        # max_e (max |d| on e) / h_e^2
    volume: float                # |Omega_h|
    boundary_measure: float      # |Gamma_h|


def mesh_quality(mesh, facets, domain):
    """Size, shape-regularity and boundary-fit metrics of a mesh."""
    bf = facets.boundary_facets
    verts = mesh.vertices[facets.facet_vertices[bf]]       # (nb, N, N)
    rule = simplex_rule(mesh.dim - 1, 4)
    pts = map_points(rule, verts)                          # (nb, q, N)
    pts = np.concatenate([pts, verts, facets.midpoints[bf][:, None, :]], axis=1)
    dvals = np.abs(domain.signed_distance(pts.reshape(-1, mesh.dim)))
    dvals = dvals.reshape(len(bf), -1).max(axis=1)
    h_e = facets.diameters[bf]
    return QualityReport(
        h=mesh.h,
        min_shape_ratio=float((mesh.rho_cells / mesh.h_cells).min()),
        max_skin=float(dvals.max()) if len(bf) else 0.0,
        max_skin_ratio=float((dvals / h_e ** 2).max()) if len(bf) else 0.0,
        volume=float(mesh.cell_volumes.sum()),
        boundary_measure=float(facets.measures[bf].sum()),
    )


def export_mesh(mesh, path):
    """Write a mesh in the plain text format (DIM/VERTICES/CELLS blocks)."""
    lines = ["DIM %d" % mesh.dim, "VERTICES %d" % mesh.num_vertices]
    for v in mesh.vertices:
        lines.append(" ".join("%.17g" % x for x in v))
    lines.append("CELLS %d" % mesh.num_cells)
    for c in mesh.cells:
        lines.append(" ".join(str(int(i)) for i in c))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_mesh(path):
    """Read a mesh written by `export_mesh`.

    Comment lines starting with '#' and blank lines are ignored.  Raises
    ParseError with the offending 1-based line number on malformed input.
    Inverted cells are repaired; check `orientation_repaired` on the result.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()
    tokens = []  # (line_number, [fields])
    for i, line in enumerate(raw, start=1):
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            tokens.append((i, stripped.split()))

    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of file, expected %s" % what,
                             len(raw) + 1)
        t = tokens[pos]
        pos += 1
        return t

    def header(keyword):
        line, fields = take("'%s <count>'" % keyword)
        if len(fields) != 2 or fields[0] != keyword:
            raise ParseError("expected '%s <count>'" % keyword, line)
        try:
            n = int(fields[1])
        except ValueError:
            raise ParseError("bad count %r" % fields[1], line) from None
        if n < 0:
            raise ParseError("negative count", line)
        return n

    line, fields = take("'DIM <n>'")
    if len(fields) != 2 or fields[0] != "DIM":
        raise ParseError("expected 'DIM <n>'", line)
    try:
        dim = int(fields[1])
    except ValueError:
        raise ParseError("bad dimension %r" % fields[1], line) from None
    if dim not in (2, 3):
        raise ParseError("dimension must be 2 or 3", line)

    nv = header("VERTICES")
    vertices = np.empty((nv, dim))
    seen = {}
    for k in range(nv):
        line, fields = take("vertex coordinates")
        if len(fields) != dim:
            raise ParseError("expected %d coordinates" % dim, line)
        try:
            vertices[k] = [float(x) for x in fields]
        except ValueError:
            raise ParseError("bad coordinate in %r" % " ".join(fields),
                             line) from None
        key = vertices[k].tobytes()
        if key in seen:
            raise ParseError("duplicate vertex (same as line %d)" % seen[key],
                             line)
        seen[key] = line

    nc = header("CELLS")
    cells = np.empty((nc, dim + 1), dtype=np.int64)
    for k in range(nc):
        line, fields = take("cell vertex indices")
        if len(fields) != dim + 1:
            raise ParseError("expected %d vertex indices" % (dim + 1), line)
        try:
            cells[k] = [int(x) for x in fields]
        except ValueError:
            raise ParseError("bad index in %r" % " ".join(fields), line) from None
        if cells[k].min() < 0 or cells[k].max() >= nv:
            raise ParseError("vertex index out of range", line)
        if len(set(cells[k].tolist())) != dim + 1:
            raise ParseError("repeated vertex in cell", line)

    if pos != len(tokens):
        raise ParseError("trailing content", tokens[pos][0])
    return SimplexMesh(vertices, cells)
