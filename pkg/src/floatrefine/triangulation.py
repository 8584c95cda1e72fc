"""Incremental Delaunay triangulation (Bowyer-Watson) with point location.

The bounding super-triangle is realised as a single vertex at infinity: every
hull edge carries a "ghost" triangle that joins it to that vertex. A ghost
conflicts with a new point lying strictly outside its hull edge, or on the
open edge itself. This keeps the convex hull exact even when many hull points
are collinear, which is routine for lattice-derived meshes. Ghosts are
discarded when the structure is frozen.

Triangles are counter-clockwise. ``neighbors[t, k]`` is the triangle across
the edge opposite ``triangles[t, k]``, or -1 on the hull.
"""

from __future__ import annotations

import numpy as np

from .predicates import incircle, orient2d

OUTSIDE = -1


class DegenerateInputError(ValueError):
    """Raised for point sets that admit no triangulation."""


def hilbert_order(x: np.ndarray, y: np.ndarray, bits: int = 16) -> np.ndarray:
    """Indices that sort points along a Hilbert curve over their bounding box."""
    n = len(x)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    side = (1 << bits) - 1
    span = max(float(np.ptp(x)), float(np.ptp(y)), 1e-300)
    xi = np.floor((x - x.min()) / span * side).astype(np.int64)
    yi = np.floor((y - y.min()) / span * side).astype(np.int64)
    d = np.zeros(n, dtype=np.int64)
    s = 1 << (bits - 1)
    while s > 0:
        rx = (xi & s) > 0
        ry = (yi & s) > 0
        d += s * s * ((3 * rx) ^ ry)
        # rotate quadrant
        flip = ~ry
        swap_x = flip & rx
        xi = np.where(swap_x, side - xi, xi)
        yi = np.where(swap_x, side - yi, yi)
        xi, yi = np.where(flip, yi, xi), np.where(flip, xi, yi)
        s >>= 1
    return np.lexsort((np.arange(n), d))


class _Builder:
    """Mutable Bowyer-Watson state over python lists (fast scalar access)."""

    def __init__(self, px, py):
        self.px = px
        self.py = py
        self.ghost = len(px)
        self.tv = []  # vertex triples
        self.tn = []  # neighbor triples
        self.alive = []
        self.free = []
        self.last = 0

    # -- storage -------------------------------------------------------
    def new_tri(self, a, b, c):
        if self.free:
            t = self.free.pop()
            self.tv[t] = [a, b, c]
            self.tn[t] = [-1, -1, -1]
            self.alive[t] = True
        else:
            t = len(self.tv)
            self.tv.append([a, b, c])
            self.tn.append([-1, -1, -1])
            self.alive.append(True)
        return t

    def is_ghost(self, t):
        return self.tv[t][2] == self.ghost

    # -- predicates ----------------------------------------------------
    def conflicts(self, t, x, y) -> bool:
        a, b, c = self.tv[t]
        px, py = self.px, self.py
        if c == self.ghost:
            o = orient2d(px[a], py[a], px[b], py[b], x, y)
            if o > 0:
                return True
            if o < 0:
                return False
            # collinear: conflict only on the open hull edge
            return (min(px[a], px[b]) < x < max(px[a], px[b])) or (
                px[a] == px[b] and min(py[a], py[b]) < y < max(py[a], py[b])
            )
        return incircle(px[a], py[a], px[b], py[b], px[c], py[c], x, y) > 0

    # -- construction -------------------------------------------------
    def start(self, i, j, k):
        px, py, g = self.px, self.py, self.ghost
        if orient2d(px[i], py[i], px[j], py[j], px[k], py[k]) < 0:
            j, k = k, j
        t = self.new_tri(i, j, k)
        # ghosts on the outside of each edge: edge (u, v) of t -> ghost (v, u, g)
        g0 = self.new_tri(k, j, g)  # across edge (j, k)
        g1 = self.new_tri(i, k, g)  # across edge (k, i)
        g2 = self.new_tri(j, i, g)  # across edge (i, j)
        self.tn[t] = [g0, g1, g2]
        # ghost (a, b, g): opposite a is edge (b, g), opposite b is edge (g, a)
        self.tn[g0] = [g2, g1, t]
        self.tn[g1] = [g0, g2, t]
        self.tn[g2] = [g1, g0, t]
        self.last = t

    def walk(self, x, y):
        """Visibility walk to a real triangle containing (x, y) or a conflicting ghost."""
        px, py, tv, tn = self.px, self.py, self.tv, self.tn
        t = self.last
        if not self.alive[t]:
            t = self.alive.index(True)
        if self.is_ghost(t):
            t = tn[t][2]
        limit = 4 * len(tv) + 16
        for _ in range(limit):
            v = tv[t]
            moved = False
            for k in range(3):
                a = v[(k + 1) % 3]
                b = v[(k + 2) % 3]
                if orient2d(px[a], py[a], px[b], py[b], x, y) < 0:
                    nb = tn[t][k]
                    if self.is_ghost(nb):
                        return nb
                    t = nb
                    moved = True
                    break
            if not moved:
                return t
        for t in range(len(tv)):  # pragma: no cover - walk always terminates on Delaunay meshes
            if self.alive[t] and self.conflicts(t, x, y):
                return t
        raise RuntimeError("point location failed")

    def insert(self, p):
        x, y = self.px[p], self.py[p]
        tv, tn = self.tv, self.tn
        t0 = self.walk(x, y)
        for v in tv[t0]:
            if v != self.ghost and self.px[v] == x and self.py[v] == y:
                raise DegenerateInputError(f"duplicate point at ({x!r}, {y!r})")
        if not self.conflicts(t0, x, y):  # pragma: no cover - defensive
            raise RuntimeError("located triangle does not conflict")
        cavity = {t0}
        stack = [t0]
        boundary = []
        while stack:
            t = stack.pop()
            v = tv[t]
            for k in range(3):
                nb = tn[t][k]
                if nb in cavity:
                    continue
                if self.conflicts(nb, x, y):
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    boundary.append((v[(k + 1) % 3], v[(k + 2) % 3], nb))
        for t in cavity:
            self.alive[t] = False
        self.free.extend(sorted(cavity, reverse=True))
        g = self.ghost
        edge_owner = {}
        created = []
        for u, w, nb in boundary:
            if w == g:
                a, b, c = p, u, g
            elif u == g:
                a, b, c = w, p, g
            else:
                a, b, c = u, w, p
            t = self.new_tri(a, b, c)
            created.append(t)
            verts = (a, b, c)
            for k in range(3):
                e0 = verts[(k + 1) % 3]
                e1 = verts[(k + 2) % 3]
                if {e0, e1} == {u, w}:
                    tn[t][k] = nb
                    # match by edge: slot numbers of dead triangles get reused
                    ov = tv[nb]
                    for m in range(3):
                        if ov[(m + 1) % 3] == w and ov[(m + 2) % 3] == u:
                            tn[nb][m] = t
                            break
                else:
                    other = edge_owner.pop((e1, e0), None)
                    if other is None:
                        edge_owner[(e0, e1)] = (t, k)
                    else:
                        ot, ok = other
                        tn[t][k] = ot
                        tn[ot][ok] = t
        for t in created:
            if not self.is_ghost(t):
                self.last = t
                break

    # -- cocircular tie-break -------------------------------------------
    def flip(self, t1, k1):
        """Flip the edge opposite vertex k1 of t1."""
        tv, tn = self.tv, self.tn
        t2 = tn[t1][k1]
        p = tv[t1][k1]
        q = tv[t1][(k1 + 1) % 3]
        r = tv[t1][(k1 + 2) % 3]
        k2 = tn[t2].index(t1)
        s = tv[t2][k2]
        n_pq = tn[t1][(k1 + 2) % 3]
        n_rp = tn[t1][(k1 + 1) % 3]
        n_qs = tn[t2][(k2 + 1) % 3]
        n_sr = tn[t2][(k2 + 2) % 3]
        tv[t1] = [p, q, s]
        tn[t1] = [n_qs, t2, n_pq]
        tv[t2] = [s, r, p]
        tn[t2] = [n_rp, t1, n_sr]
        self._repoint(n_qs, t2, t1)
        self._repoint(n_rp, t1, t2)

    def _repoint(self, t, old, new):
        nv = self.tn[t]
        for m in range(3):
            if nv[m] == old:
                nv[m] = new
                return

    def apply_tie_break(self, rank):
        """Among cocircular quads, keep the diagonal touching the lowest-ranked vertex."""
        px, py, tv, tn = self.px, self.py, self.tv, self.tn
        queue = [(t, k) for t in range(len(tv)) if self.alive[t] and not self.is_ghost(t) for k in range(3)]
        queue.reverse()
        budget = 50 * len(queue) + 100
        while queue and budget > 0:
            budget -= 1
            t1, k1 = queue.pop()
            if not self.alive[t1] or self.is_ghost(t1):
                continue
            t2 = tn[t1][k1]
            if self.is_ghost(t2):
                continue
            p, q, r = tv[t1][k1], tv[t1][(k1 + 1) % 3], tv[t1][(k1 + 2) % 3]
            s = tv[t2][tn[t2].index(t1)]
            low = min(rank[p], rank[q], rank[r], rank[s])
            if low != rank[p] and low != rank[s]:
                continue
            if incircle(px[p], py[p], px[q], py[q], px[r], py[r], px[s], py[s]) != 0:
                continue
            self.flip(t1, k1)
            for t in (t1, t2):
                for k in range(3):
                    queue.append((t, k))


class Triangulation:
    """Frozen Delaunay triangulation of a set of valued points."""

    def __init__(self, x, y, values, triangles, neighbors, hull):
        self.x = x
        self.y = y
        self.values = values
        self.triangles = triangles
        self.neighbors = neighbors
        self.hull = hull
        self._px = x.tolist()
        self._py = y.tolist()
        self._tv = triangles.tolist()
        self._tn = neighbors.tolist()
        self._csr = None

    @property
    def n_vertices(self) -> int:
        return len(self.x)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # -- point location ---------------------------------------------------
    def contains(self, t: int, qx: float, qy: float) -> bool:
        px, py = self._px, self._py
        a, b, c = self._tv[t]
        return (
            orient2d(px[a], py[a], px[b], py[b], qx, qy) >= 0
            and orient2d(px[b], py[b], px[c], py[c], qx, qy) >= 0
            and orient2d(px[c], py[c], px[a], py[a], qx, qy) >= 0
        )

    def walk(self, qx: float, qy: float, start: int = 0) -> tuple[int, int]:
        """Walk toward (qx, qy). Returns (triangle or OUTSIDE, last triangle visited)."""
        px, py, tv, tn = self._px, self._py, self._tv, self._tn
        t = start if 0 <= start < len(tv) else 0
        for _ in range(4 * len(tv) + 16):
            v = tv[t]
            for k in range(3):
                a = v[(k + 1) % 3]
                b = v[(k + 2) % 3]
                if orient2d(px[a], py[a], px[b], py[b], qx, qy) < 0:
                    nb = tn[t][k]
                    if nb < 0:
                        return OUTSIDE, t
                    t = nb
                    break
            else:
                return t, t
        return self.scan(qx, qy), t

    def scan(self, qx: float, qy: float) -> int:
        for t in range(len(self._tv)):
            if self.contains(t, qx, qy):
                return t
        return OUTSIDE

    def locate(self, q, start: int = 0) -> int:
        """Index of a triangle containing ``q`` (boundary inclusive), or OUTSIDE."""
        return self.walk(float(q[0]), float(q[1]), start)[0]

    # -- topology ------------------------------------------------------
    def vertex_neighbors(self):
        """CSR adjacency (indptr, indices) of the Delaunay graph, neighbors sorted."""
        if self._csr is None:
            t = self.triangles
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e = np.concatenate([e, e[:, ::-1]])
            e = np.unique(e, axis=0)
            indptr = np.searchsorted(e[:, 0], np.arange(self.n_vertices + 1))
            self._csr = (indptr, e[:, 1].copy())
        return self._csr

    def areas(self) -> np.ndarray:
        t = self.triangles
        ax, ay = self.x[t[:, 0]], self.y[t[:, 0]]
        bx, by = self.x[t[:, 1]], self.y[t[:, 1]]
        cx, cy = self.x[t[:, 2]], self.y[t[:, 2]]
        return 0.5 * ((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))

    def hull_area(self) -> float:
        hx, hy = self.x[self.hull], self.y[self.hull]
        return 0.5 * float(np.sum(hx * np.roll(hy, -1) - np.roll(hx, -1) * hy))


def build_delaunay(x, y, values=None) -> Triangulation:
    """Delaunay triangulation of the points (x[i], y[i]).

    Vertex indices follow the input order. Points are inserted along a
    Hilbert curve for cheap point location; the result is a deterministic
    function of the input sequence. Exactly cocircular quads keep the
    diagonal incident to the lowest-indexed of their four vertices.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    values = np.zeros(len(x)) if values is None else np.ascontiguousarray(values, dtype=float)
    n = len(x)
    if n < 3:
        raise DegenerateInputError("degenerate point set: fewer than 3 points")
    px, py = x.tolist(), y.tolist()
    order = hilbert_order(x, y).tolist()

    i0 = order[0]
    i1 = next((i for i in order if px[i] != px[i0] or py[i] != py[i0]), None)
    if i1 is None:
        raise DegenerateInputError("degenerate point set: all points coincide")
    i2 = next(
        (i for i in order if orient2d(px[i0], py[i0], px[i1], py[i1], px[i], py[i]) != 0),
        None,
    )
    if i2 is None:
        raise DegenerateInputError("degenerate point set: all points collinear")

    b = _Builder(px, py)
    b.start(i0, i1, i2)
    seed = {i0, i1, i2}
    for p in order:
        if p not in seed:
            b.insert(p)
    b.apply_tie_break(list(range(n)))
    return _freeze(b, x, y, values)


def build_from_mesh(mesh) -> Triangulation:
    return build_delaunay(mesh.x, mesh.y, mesh.values)


def _freeze(b: _Builder, x, y, values) -> Triangulation:
    real = [t for t in range(len(b.tv)) if b.alive[t] and not b.is_ghost(t)]
    remap = {t: i for i, t in enumerate(real)}
    tris = np.array([b.tv[t] for t in real], dtype=np.int64).reshape(-1, 3)
    nbrs = np.array(
        [[remap.get(nb, -1) for nb in b.tn[t]] for t in real], dtype=np.int64
    ).reshape(-1, 3)
    # ghost (a, b, g) sits on hull edge b -> a (counter-clockwise); the ghost
    # across (g, a) carries the next hull edge a -> c.
    ghosts = [t for t in range(len(b.tv)) if b.alive[t] and b.is_ghost(t)]
    start = min(ghosts, key=lambda t: b.tv[t][1])
    hull = []
    t = start
    for _ in range(len(ghosts)):
        hull.append(b.tv[t][1])
        t = b.tn[t][1]
    hull = np.array(hull, dtype=np.int64)
    hull = np.roll(hull, -int(np.argmin(hull)))
    return Triangulation(x, y, values, tris, nbrs, hull)
