"""Conforming triangulations in 2D.

Two refinement mechanisms live here and are deliberately kept apart:

* :func:`uniform_red_refine` splits every triangle into four congruent
  children through its edge midpoints.  It builds the auxiliary fine mesh
  used by the fine-coarse error estimators and records the parent/child
  genealogy in a :class:`RefinementMap`.
* :func:`bisect_marked` performs newest-vertex bisection with conforming
  closure.  It drives the adaptive loop.

Meshes are treated as immutable values; every operation returns a new mesh.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Mesh",
    "RefinementMap",
    "make_structured_square",
    "make_lshape",
    "uniform_red_refine",
    "bisect_marked",
    "vertex_patches",
    "VertexPatches",
    "validate",
    "min_angles",
]

# local edge j is opposite local vertex j
_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with boundary markers.

    Parameters
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array
        Vertex triples, counter-clockwise.
    boundary_edges : (nb, 2) int array
        Vertex pairs of the boundary edges.
    boundary_markers : (nb,) int array
        Marker per boundary edge; 0 means Dirichlet.
    ref_edge : (ne,) int array
        Local index of the refinement edge (edge ``j`` is opposite vertex
        ``j``).  Defaults to the longest edge.
    level : int
        Generation counter, incremented by every refinement.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray = None
    ref_edge: np.ndarray = None
    level: int = 0

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "vertices", _frozen(np.reshape(self.vertices, (-1, 2)), float))
        set_(self, "elements", _frozen(np.reshape(self.elements, (-1, 3)), np.int64))
        be = _frozen(np.reshape(self.boundary_edges, (-1, 2)), np.int64)
        set_(self, "boundary_edges", be)
        if self.boundary_markers is None:
            set_(self, "boundary_markers", _frozen(np.zeros(len(be)), np.int64))
        else:
            set_(self, "boundary_markers", _frozen(self.boundary_markers, np.int64))
        if self.ref_edge is None:
            set_(self, "ref_edge", _frozen(_longest_edge(self.vertices, self.elements), np.int64))
        else:
            set_(self, "ref_edge", _frozen(self.ref_edge, np.int64))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @cached_property
    def _edge_data(self):
        pairs = np.sort(self.elements[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inv = np.unique(pairs, axis=0, return_inverse=True)
        elem_edges = inv.reshape(-1, 3)
        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        flat = elem_edges.ravel()
        owner = np.repeat(np.arange(self.n_elements), 3)
        order = np.argsort(flat, kind="stable")
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[order][1:] != flat[order][:-1]
        edge_elements[flat[order][first], 0] = owner[order][first]
        second = ~first
        edge_elements[flat[order][second], 1] = owner[order][second]
        for a in (edges, elem_edges, edge_elements):
            a.setflags(write=False)
        return edges, elem_edges, edge_elements

    @property
    def edges(self):
        """(n_edges, 2) sorted vertex pairs, lexicographically ordered."""
        return self._edge_data[0]

    @property
    def elem_edges(self):
        """(ne, 3) edge index of local edge ``j`` (opposite vertex ``j``)."""
        return self._edge_data[1]

    @property
    def edge_elements(self):
        """(n_edges, 2) adjacent elements; second entry -1 on the boundary."""
        return self._edge_data[2]

    @cached_property
    def boundary_edge_ids(self):
        """Indices into :attr:`edges` of the listed boundary edges."""
        return _frozen(self.edge_index(self.boundary_edges), np.int64)

    def edge_index(self, pairs):
        """Look up edge ids of vertex pairs; -1 where the pair is not an edge."""
        pairs = np.sort(np.reshape(pairs, (-1, 2)), axis=1)
        nv = max(self.n_vertices, 1)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = pairs[:, 0] * nv + pairs[:, 1]
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        found = keys[pos] == q if len(keys) else np.zeros(len(q), bool)
        return np.where(found, pos, -1)

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def geometry(self):
        """Affine element maps ``x = origin + jac @ xi``.

        Returns ``(origin, jac, det, inv)`` with shapes ``(ne, 2)``,
        ``(ne, 2, 2)``, ``(ne,)`` and ``(ne, 2, 2)``.
        """
        p = self.vertices[self.elements]
        origin = p[:, 0]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        return origin, jac, det, inv

    @property
    def areas(self):
        return 0.5 * self.geometry[2]

    @cached_property
    def diameters(self):
        p = self.vertices[self.elements]
        lengths = np.linalg.norm(p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]], axis=2)
        return lengths.max(axis=1)

    @property
    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, n_elements={self.n_elements}, "
                f"n_boundary_edges={len(self.boundary_edges)}, level={self.level})")


@dataclass(frozen=True, eq=False)
class RefinementMap:
    """Genealogy of a uniform red refinement.

    ``vertex_origin[i] = (a, b)`` gives the coarse vertices whose midpoint is
    fine vertex ``i``; inherited vertices have ``a == b``.
    """

    coarse: Mesh
    fine: Mesh
    parent_of: np.ndarray
    child_rank: np.ndarray
    vertex_origin: np.ndarray = field(repr=False)

    @property
    def n_coarse(self):
        return self.coarse.n_elements


def _longest_edge(vertices, elements):
    if len(elements) == 0:
        return np.zeros(0, dtype=np.int64)
    p = vertices[elements]
    d = p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]]
    lengths = np.einsum("eij,eij->ei", d, d)
    # ties resolved to the lowest local index
    return np.argmax(lengths - 1e-12 * lengths.max(axis=1, keepdims=True) * np.arange(3), axis=1)


def _topological_boundary(elements):
    pairs = elements[:, _LOCAL_EDGES].reshape(-1, 2)
    key = np.sort(pairs, axis=1)
    _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    # keep orientation of the owning element
    return pairs[np.sort(idx[counts == 1])]


def make_structured_square(n):
    """Unit square split into ``n x n`` cells, each cut into two triangles.

    Every cell is cut along its ``(x0, y0)``--``(x1, y1)`` diagonal, so interior
    vertices have valence 6.  All boundary edges carry marker 0.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one subdivision per side, got n={n}")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([a, b, c])
    elements[1::2] = np.column_stack([a, c, d])
    return Mesh(vertices, elements, _topological_boundary(elements))


def make_lshape(n=1):
    """Coarse triangulation of ``(-1,1)^2 minus [0,1) x [-1,0)``.

    The domain is covered by three unit squares, each split into ``n x n``
    cells of two triangles.  The re-entrant corner (0, 0) is a vertex.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one subdivision per unit square, got n={n}")
    unit = make_structured_square(n)
    verts = []
    elems = []
    offset = 0
    for shift in [(-1.0, -1.0), (-1.0, 0.0), (0.0, 0.0)]:
        verts.append(unit.vertices + np.array(shift))
        elems.append(unit.elements + offset)
        offset += unit.n_vertices
    vertices = np.vstack(verts)
    elements = np.vstack(elems)
    # merge duplicated vertices along the shared square sides
    key = np.round(vertices * (4 * n)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    vertices = vertices[first[order]]
    elements = remap[inverse.ravel()][elements]
    return Mesh(vertices, elements, _topological_boundary(elements))


def uniform_red_refine(mesh):
    """Split every triangle into four congruent children.

    Fine vertices are the coarse vertices followed by one midpoint per coarse
    edge (in :attr:`Mesh.edges` order).  Children of element ``t`` occupy
    fine indices ``4t .. 4t+3``; rank 3 is the middle triangle.

    Returns
    -------
    fine : Mesh
    rmap : RefinementMap
    """
    nv = mesh.n_vertices
    edges = mesh.edges
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    m = nv + mesh.elem_edges  # midpoint opposite local vertex j
    v = mesh.elements
    children = np.stack([
        np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([m[:, 2], v[:, 1], m[:, 0]]),
        np.column_stack([m[:, 1], m[:, 0], v[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ], axis=1).reshape(-1, 3)
    bm = nv + mesh.boundary_edge_ids
    be = mesh.boundary_edges
    boundary = np.stack([np.column_stack([be[:, 0], bm]), np.column_stack([bm, be[:, 1]])],
                        axis=1).reshape(-1, 2)
    markers = np.repeat(mesh.boundary_markers, 2)
    fine = Mesh(vertices, children, boundary, markers, level=mesh.level + 1)
    origin = np.vstack([np.column_stack([np.arange(nv), np.arange(nv)]), edges])
    rmap = RefinementMap(
        coarse=mesh,
        fine=fine,
        parent_of=_frozen(np.repeat(np.arange(mesh.n_elements), 4), np.int64),
        child_rank=_frozen(np.tile(np.arange(4), mesh.n_elements), np.int64),
        vertex_origin=_frozen(origin, np.int64),
    )
    return fine, rmap


def bisect_marked(mesh, marked, max_closure_rounds=None):
    """Newest-vertex bisection of the marked elements with conforming closure.

    Each element is rotated so that its refinement edge is opposite local
    vertex 0.  Bisecting ``(v0, v1, v2)`` at the midpoint ``m`` of ``(v1, v2)``
    yields ``(m, v0, v1)`` and ``(m, v2, v0)``; ``m`` is the newest vertex of
    both children.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise IndexError("marked element index out of range")
    if marked.size == 0:
        return mesh

    rot = (np.arange(3)[None, :] + mesh.ref_edge[:, None]) % 3
    elems = np.take_along_axis(mesh.elements, rot, axis=1)
    eids = np.take_along_axis(mesh.elem_edges, rot, axis=1)

    n_edges = len(mesh.edges)
    flag = np.zeros(n_edges, dtype=bool)
    flag[eids[marked, 0]] = True
    cap = max_closure_rounds or (mesh.n_elements + 1)
    for _ in range(cap):
        need = flag[eids].any(axis=1) & ~flag[eids[:, 0]]
        if not need.any():
            break
        flag[eids[need, 0]] = True
    else:
        raise RuntimeError("bisection closure did not terminate")

    split = np.flatnonzero(flag)
    midpoint = np.full(n_edges, -1, dtype=np.int64)
    midpoint[split] = mesh.n_vertices + np.arange(len(split))
    e = mesh.edges[split]
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    # each element is bisected at most three times per call
    for _ in range(3):
        ref = eids[:, 0]
        sel = (ref >= 0) & flag[np.maximum(ref, 0)]
        if not sel.any():
            break
        keep = ~sel
        p = elems[sel]
        ids = eids[sel]
        mvert = midpoint[ids[:, 0]]
        new = -np.ones(len(p), dtype=np.int64)
        c1 = np.column_stack([mvert, p[:, 0], p[:, 1]])
        c2 = np.column_stack([mvert, p[:, 2], p[:, 0]])
        i1 = np.column_stack([ids[:, 2], new, new])
        i2 = np.column_stack([ids[:, 1], new, new])
        elems = np.vstack([elems[keep], c1, c2])
        eids = np.vstack([eids[keep], i1, i2])

    bid = mesh.boundary_edge_ids
    bsplit = flag[bid]
    be = mesh.boundary_edges
    bm = midpoint[bid[bsplit]]
    boundary = np.vstack([
        be[~bsplit],
        np.column_stack([be[bsplit, 0], bm]),
        np.column_stack([bm, be[bsplit, 1]]),
    ])
    markers = np.concatenate([
        mesh.boundary_markers[~bsplit],
        mesh.boundary_markers[bsplit],
        mesh.boundary_markers[bsplit],
    ])
    return Mesh(vertices, elems, boundary, markers, ref_edge=np.zeros(len(elems), np.int64),
                level=mesh.level + 1)


@dataclass(frozen=True)
class VertexPatches:
    """Element stars of all vertices in CSR layout."""

    indptr: np.ndarray
    elements: np.ndarray
    on_boundary: np.ndarray

    def __len__(self):
        return len(self.indptr) - 1

    def __getitem__(self, k):
        return self.elements[self.indptr[k]:self.indptr[k + 1]]


def vertex_patches(mesh):
    """For every vertex, the elements containing it (ascending order)."""
    flat = mesh.elements.ravel()
    owner = np.repeat(np.arange(mesh.n_elements), 3)
    order = np.lexsort((owner, flat))
    counts = np.bincount(flat, minlength=mesh.n_vertices)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return VertexPatches(indptr, owner[order], mesh.boundary_vertex_mask.copy())


def min_angles(mesh):
    """Smallest interior angle (radians) of every element."""
    p = mesh.vertices[mesh.elements]
    out = np.full(mesh.n_elements, np.pi)
    for j in range(3):
        a = p[:, (j + 1) % 3] - p[:, j]
        b = p[:, (j + 2) % 3] - p[:, j]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out = np.minimum(out, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


def validate(mesh):
    """Check the mesh invariants; returns a list of human-readable violations."""
    problems = []
    v, t = mesh.vertices, mesh.elements
    if len(t) == 0:
        return ["mesh has no elements"]
    if t.min() < 0 or t.max() >= len(v):
        return ["element references a nonexistent vertex"]
    if not np.all(np.isfinite(v)):
        problems.append("non-finite vertex coordinates")
    det = mesh.geometry[2]
    scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]), 1e-300) ** 2
    bad = np.flatnonzero(det <= 1e-14 * scale)
    if bad.size:
        problems.append(f"non-positive orientation/area for elements {bad[:10].tolist()}")
    if len(mesh.ref_edge) != len(t) or np.any((mesh.ref_edge < 0) | (mesh.ref_edge > 2)):
        problems.append("refinement edge index outside 0..2")

    _, elem_edges, _ = mesh._edge_data
    counts = np.bincount(elem_edges.ravel(), minlength=len(mesh.edges))
    over = np.flatnonzero(counts > 2)
    if over.size:
        problems.append(f"{over.size} edges shared by more than two elements")
    topo = set(np.flatnonzero(counts == 1).tolist())
    listed_ids = mesh.edge_index(mesh.boundary_edges) if len(mesh.boundary_edges) else np.zeros(0, int)
    if np.any(listed_ids < 0):
        problems.append("boundary_edges lists a pair that is not a mesh edge")
    listed = set(listed_ids[listed_ids >= 0].tolist())
    if len(listed) != len(mesh.boundary_edges):
        problems.append("boundary_edges contains duplicates")
    missing = topo - listed
    if missing:
        problems.append(f"{len(missing)} topological boundary edges missing from boundary_edges "
                        f"(hanging vertex or incomplete boundary)")
    extra = listed - topo
    if extra:
        problems.append(f"{len(extra)} listed boundary edges are interior edges")
    if len(mesh.boundary_markers) != len(mesh.boundary_edges):
        problems.append("boundary_markers length differs from boundary_edges")
    used = np.zeros(len(v), dtype=bool)
    used[t.ravel()] = True
    if not used.all():
        problems.append(f"{np.count_nonzero(~used)} vertices belong to no element")
    return problems
