"""Conforming triangulations of the unit square with newest-vertex bisection.

All meshes created from one initial criss-cross grid share a single
append-only refinement ``Forest``.  A ``Triangulation`` is an immutable view
(a set of leaf triangle ids) into that forest.  Because vertex and triangle
ids are global and append-only, nestedness queries, overlays and
coarse-to-fine transfer reduce to integer operations on the forest.

Triangle storage convention: the vertex triple ``(a, b, c)`` is ordered
peak-first, i.e. the designated refinement edge is ``(b, c)``, the edge
opposite the newest vertex ``a``.  Bisection of ``(a, b, c)`` inserts the
midpoint ``m`` of ``(b, c)`` and creates the children ``(m, a, b)`` and
``(m, c, a)``; both are counterclockwise if the parent is, and their
refinement edges are the two remaining parent edges.
"""

import numpy as np

from .errors import InvalidHierarchyError, InvalidParameterError

__all__ = [
    "Forest",
    "Triangulation",
    "criss_cross_init",
    "bisect",
    "coarsen_once",
    "overlay",
]


class Forest:
    """Append-only store of vertices and triangles for a refinement forest."""

    def __init__(self, descriptor):
        self.descriptor = dict(descriptor)
        self._vx = []
        self._vy = []
        self._corners = []      # per triangle: (a, b, c), peak first
        self._parent = []       # -1 for roots
        self._children = []     # None or (c1, c2)
        self._generation = []
        self._midpoint = {}     # (vmin, vmax) -> vertex id
        self.roots = []

    # -- vertices ----------------------------------------------------------

    def add_vertex(self, x, y):
        self._vx.append(float(x))
        self._vy.append(float(y))
        return len(self._vx) - 1

    @property
    def vertex_count(self):
        return len(self._vx)

    def points(self, ids=None):
        """Coordinates as an (n, 2) array, optionally restricted to ``ids``."""
        pts = np.column_stack([np.asarray(self._vx), np.asarray(self._vy)])
        if ids is None:
            return pts
        return pts[np.asarray(ids)]

    def midpoint(self, a, b):
        """Vertex id of the midpoint of edge (a, b), created on first use."""
        key = (a, b) if a < b else (b, a)
        vid = self._midpoint.get(key)
        if vid is None:
            vid = self.add_vertex(0.5 * (self._vx[a] + self._vx[b]),
                                  0.5 * (self._vy[a] + self._vy[b]))
            self._midpoint[key] = vid
        return vid

    # -- triangles ---------------------------------------------------------

    def add_triangle(self, corners, parent=-1, generation=0):
        self._corners.append(tuple(int(v) for v in corners))
        self._parent.append(int(parent))
        self._children.append(None)
        self._generation.append(int(generation))
        return len(self._corners) - 1

    @property
    def triangle_count(self):
        return len(self._corners)

    def corners(self, t):
        return self._corners[t]

    def parent(self, t):
        return self._parent[t]

    def children(self, t):
        return self._children[t]

    def generation(self, t):
        return self._generation[t]

    def refinement_edge(self, t):
        a, b, c = self._corners[t]
        return (b, c) if b < c else (c, b)

    def bisect_triangle(self, t):
        """Children of ``t``, creating them on first use (idempotent)."""
        kids = self._children[t]
        if kids is not None:
            return kids
        a, b, c = self._corners[t]
        m = self.midpoint(b, c)
        gen = self._generation[t] + 1
        c1 = self.add_triangle((m, a, b), parent=t, generation=gen)
        c2 = self.add_triangle((m, c, a), parent=t, generation=gen)
        self._children[t] = (c1, c2)
        return c1, c2


class Triangulation:
    """Immutable conforming mesh: a leaf set of triangles in a shared forest."""

    def __init__(self, forest, tri_ids):
        self.forest = forest
        self.tri_ids = np.unique(np.asarray(tri_ids, dtype=np.int64))
        self._cache = {}

    # -- basic arrays --------------------------------------------------------

    @property
    def num_triangles(self):
        return len(self.tri_ids)

    @property
    def corners_global(self):
        """(T, 3) global vertex ids, peak first."""
        out = self._cache.get("corners_global")
        if out is None:
            out = np.array([self.forest.corners(t) for t in self.tri_ids],
                           dtype=np.int64)
            self._cache["corners_global"] = out
        return out

    @property
    def vertex_ids(self):
        """Sorted global ids of the vertices used by this mesh."""
        out = self._cache.get("vertex_ids")
        if out is None:
            out = np.unique(self.corners_global)
            self._cache["vertex_ids"] = out
        return out

    @property
    def num_vertices(self):
        return len(self.vertex_ids)

    @property
    def points(self):
        """(V, 2) vertex coordinates in local ordering."""
        out = self._cache.get("points")
        if out is None:
            out = self.forest.points(self.vertex_ids)
            self._cache["points"] = out
        return out

    @property
    def corners_local(self):
        """(T, 3) local vertex indices, peak first."""
        out = self._cache.get("corners_local")
        if out is None:
            out = np.searchsorted(self.vertex_ids, self.corners_global)
            self._cache["corners_local"] = out
        return out

    @property
    def generations(self):
        out = self._cache.get("generations")
        if out is None:
            out = np.array([self.forest.generation(t) for t in self.tri_ids],
                           dtype=np.int64)
            self._cache["generations"] = out
        return out

    # -- edge topology -------------------------------------------------------

    def _edge_table(self):
        """Unique edges and edge-to-triangle incidence.

        Returns (edges, tri_edges, counts): ``edges`` is (E, 2) sorted local
        vertex pairs in lexicographic order, ``tri_edges[t, k]`` is the edge
        index of the edge opposite local corner ``k``, ``counts[e]`` is the
        number of adjacent triangles.
        """
        out = self._cache.get("edge_table")
        if out is None:
            c = self.corners_local
            raw = np.concatenate([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]])
            raw = np.sort(raw, axis=1)
            codes = raw[:, 0] * (self.num_vertices + 1) + raw[:, 1]
            uniq, inv, counts = np.unique(codes, return_inverse=True,
                                          return_counts=True)
            edges = np.column_stack([uniq // (self.num_vertices + 1),
                                     uniq % (self.num_vertices + 1)])
            tri_edges = inv.reshape(3, -1).T
            out = (edges, tri_edges, counts)
            self._cache["edge_table"] = out
        return out

    @property
    def edges(self):
        """(E, 2) local vertex index pairs, each sorted, lexicographic order."""
        return self._edge_table()[0]

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def triangle_edges(self):
        """(T, 3) edge index opposite each local corner."""
        return self._edge_table()[1]

    @property
    def boundary_edge_mask(self):
        """Boolean mask over edges: True where only one triangle is adjacent."""
        return self._edge_table()[2] == 1

    @property
    def boundary_edges(self):
        """Set of global (vmin, vmax) vertex-id pairs on the domain boundary."""
        loc = self.edges[self.boundary_edge_mask]
        glob = self.vertex_ids[loc]
        return {tuple(sorted(pair)) for pair in glob.tolist()}

    @property
    def boundary_vertex_mask(self):
        """Boolean mask over local vertices lying on the boundary."""
        out = self._cache.get("boundary_vertex_mask")
        if out is None:
            out = np.zeros(self.num_vertices, dtype=bool)
            out[self.edges[self.boundary_edge_mask].ravel()] = True
            self._cache["boundary_vertex_mask"] = out
        return out

    # -- geometry ------------------------------------------------------------

    @property
    def areas(self):
        out = self._cache.get("areas")
        if out is None:
            p = self.points[self.corners_local]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            out = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            self._cache["areas"] = out
        return out

    # -- checks ----------------------------------------------------------------

    def check_conforming(self, tol=1e-12):
        """Verify edge incidences and positive areas, raising on violation."""
        _, _, counts = self._edge_table()
        if counts.max(initial=0) > 2:
            raise InvalidHierarchyError("edge shared by more than two triangles")
        if np.any(self.areas <= 0):
            raise InvalidHierarchyError("triangle with non-positive area")
        # incidence-1 edges must lie on the boundary of the unit square
        bed = self.edges[self.boundary_edge_mask]
        pts = self.points
        mids = 0.5 * (pts[bed[:, 0]] + pts[bed[:, 1]])
        on_boundary = (np.abs(mids[:, 0]) < tol) | (np.abs(mids[:, 0] - 1) < tol) \
            | (np.abs(mids[:, 1]) < tol) | (np.abs(mids[:, 1] - 1) < tol)
        if not np.all(on_boundary):
            raise InvalidHierarchyError("hanging node: interior edge with "
                                        "incidence one")
        return True

    def is_conforming(self):
        try:
            self.check_conforming()
        except InvalidHierarchyError:
            return False
        return True

    def ancestor_in(self, tri_id, id_set):
        """Walk up from ``tri_id``; return the first ancestor-or-self found in
        ``id_set``, or -1."""
        t = tri_id
        while t >= 0:
            if t in id_set:
                return t
            t = self.forest.parent(t)
        return -1

    def leaf_set(self):
        return set(self.tri_ids.tolist())


def criss_cross_init(m):
    """Initial criss-cross triangulation of an m-by-m square pattern.

    Each of the m*m squares is split into four triangles by both diagonals.
    The refinement edge of every triangle is the square side it touches,
    which is a compatible labeling for newest vertex bisection.
    """
    if m < 1:
        raise InvalidParameterError(f"cells per side must be >= 1, got {m}")
    forest = Forest({"kind": "criss_cross", "m": int(m)})
    # grid vertices row-major (x fastest), then square centers row-major
    for j in range(m + 1):
        for i in range(m + 1):
            forest.add_vertex(i / m, j / m)
    centers = {}
    for j in range(m):
        for i in range(m):
            centers[(i, j)] = forest.add_vertex((i + 0.5) / m, (j + 0.5) / m)

    def grid(i, j):
        return j * (m + 1) + i

    tri_ids = []
    for j in range(m):
        for i in range(m):
            c = centers[(i, j)]
            p00, p10 = grid(i, j), grid(i + 1, j)
            p11, p01 = grid(i + 1, j + 1), grid(i, j + 1)
            for v1, v2 in ((p00, p10), (p10, p11), (p11, p01), (p01, p00)):
                tri_ids.append(forest.add_triangle((c, v1, v2)))
    forest.roots = list(tri_ids)
    return Triangulation(forest, tri_ids)


def _marked_edge_closure(tri, marked_ids):
    """Fixed point of edge marking: start from the refinement edges of the
    marked triangles; whenever a triangle has any marked edge, its own
    refinement edge is marked too."""
    forest = tri.forest
    glob = tri.corners_global
    ref_edges = []
    all_edges = []
    for row in glob:
        a, b, c = (int(v) for v in row)
        e0 = (b, c) if b < c else (c, b)
        e1 = (c, a) if c < a else (a, c)
        e2 = (a, b) if a < b else (b, a)
        ref_edges.append(e0)
        all_edges.append((e0, e1, e2))
    marked_ids = set(int(t) for t in marked_ids)
    order = {int(t): k for k, t in enumerate(tri.tri_ids)}
    marked_edges = {ref_edges[order[t]] for t in marked_ids}
    changed = True
    while changed:
        changed = False
        for k in range(len(glob)):
            e0, e1, e2 = all_edges[k]
            if e0 in marked_edges:
                continue
            if e1 in marked_edges or e2 in marked_edges:
                marked_edges.add(e0)
                changed = True
    return marked_edges


def bisect(tri, marked):
    """Refine ``tri`` so that every triangle in ``marked`` is bisected at
    least once; conformity is restored by the minimal closure.

    Returns a new Triangulation in the same forest; ``tri`` is unchanged.
    """
    marked = {int(t) for t in marked}
    leaf = tri.leaf_set()
    if not marked:
        return tri
    if not marked <= leaf:
        raise InvalidParameterError("marked set is not a subset of the mesh")
    forest = tri.forest
    marked_edges = _marked_edge_closure(tri, marked)

    new_leaves = []

    def split(t):
        c1, c2 = forest.bisect_triangle(t)
        for c in (c1, c2):
            if forest.refinement_edge(c) in marked_edges:
                split(c)
            else:
                new_leaves.append(c)

    for t in tri.tri_ids:
        t = int(t)
        if forest.refinement_edge(t) in marked_edges:
            split(t)
        else:
            new_leaves.append(t)
    return Triangulation(forest, new_leaves)


def _require_descendant(tri, init):
    if tri.forest is not init.forest:
        raise InvalidHierarchyError("meshes belong to different forests")
    init_set = init.leaf_set()
    for t in tri.tri_ids:
        if tri.ancestor_in(int(t), init_set) < 0:
            raise InvalidHierarchyError("mesh is not a descendant of the "
                                        "given initial mesh")
    return init_set


def coarsen_once(tri, init):
    """Undo one generation of bisection wherever conformity allows, then
    unite the result with ``init`` so it is never coarser than ``init``.

    Sibling leaf pairs are merged into their parent.  A merged pair whose
    bisected edge is interior can only keep the mesh conforming if the pair
    on the other side of that edge merges as well, so merges are carried out
    per newest vertex: all sibling pairs whose peak is that vertex merge
    atomically, provided no other triangle of the current mesh touches the
    vertex.  Vertices are processed in ascending order of the smallest
    parent id, which makes the sweep deterministic.
    """
    _require_descendant(tri, init)
    forest = tri.forest
    working = tri.leaf_set()

    # vertex -> set of working triangles touching it
    star = {}
    for t in working:
        for v in forest.corners(t):
            star.setdefault(v, set()).add(t)

    # candidate sibling pairs grouped by peak (newest) vertex
    pairs_by_peak = {}
    for t in working:
        p = forest.parent(t)
        if p < 0:
            continue
        c1, c2 = forest.children(p)
        if c1 in working and c2 in working:
            peak = forest.corners(c1)[0]
            pairs_by_peak.setdefault(peak, {})[p] = (c1, c2)

    for peak in sorted(pairs_by_peak, key=lambda v: min(pairs_by_peak[v])):
        pairs = pairs_by_peak[peak]
        members = set()
        for c1, c2 in pairs.values():
            members.add(c1)
            members.add(c2)
        touching = star.get(peak, set())
        if touching != members:
            continue  # something else still uses the vertex: merge would hang
        if not members <= working:
            continue
        for p, (c1, c2) in sorted(pairs.items()):
            working.discard(c1)
            working.discard(c2)
            working.add(p)
            for c in (c1, c2):
                for v in forest.corners(c):
                    star[v].discard(c)
            for v in forest.corners(p):
                star.setdefault(v, set()).add(p)

    coarse = Triangulation(forest, sorted(working))
    return overlay(coarse, init)


def overlay(a, b):
    """Smallest common refinement of two meshes from the same forest.

    Every triangle of the result belongs to ``a`` or to ``b``; the result
    refines both inputs.
    """
    if a.forest is not b.forest:
        raise InvalidHierarchyError("meshes belong to different forests")
    a_set = a.leaf_set()
    b_set = b.leaf_set()
    out = []
    for t in a.tri_ids:
        if a.ancestor_in(int(t), b_set) >= 0:
            out.append(int(t))
    for t in b.tri_ids:
        t = int(t)
        if t not in a_set and a.ancestor_in(t, a_set) >= 0:
            out.append(t)
    return Triangulation(a.forest, out)
