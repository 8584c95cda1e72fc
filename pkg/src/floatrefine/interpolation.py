"""Triangulation-based scattered interpolation onto the regular grid.

Four initial-estimate reconstructors:

* ``NN`` nearest vertex (ties to the lowest vertex index),
* ``LI`` barycentric linear,
* ``CI`` Clough-Tocher C1 piecewise cubic,
* ``NI`` Sibson natural-neighbour.

Point queries return ``None`` outside the convex hull. :func:`reconstruct`
fills hull-exterior pixels with the nearest-neighbour value and reports them
in a boolean mask.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .parallel import ordered_map
from .predicates import circumcenter, incircle, orient2d
from .triangulation import OUTSIDE, Triangulation, build_from_mesh


class InterpolationMethod(str, enum.Enum):
    NN = "NN"
    LI = "LI"
    CI = "CI"
    NI = "NI"

    @classmethod
    def parse(cls, text) -> "InterpolationMethod":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).upper())
        except ValueError:
            raise ValueError(f"unknown interpolation method {text!r}") from None


# -- nearest neighbour -------------------------------------------------------


def _nearest_from(tri: Triangulation, qx, qy, v: int) -> int:
    """Greedy descent over the Delaunay graph, then lowest index among ties."""
    indptr, nbr = tri.vertex_neighbors()
    px, py = tri._px, tri._py

    def d2(k):
        dx = px[k] - qx
        dy = py[k] - qy
        return dx * dx + dy * dy

    best = d2(v)
    while True:
        step = None
        for k in nbr[indptr[v] : indptr[v + 1]].tolist():
            dk = d2(k)
            if dk < best or (dk == best and step is not None and k < step):
                best, step = dk, k
        if step is None:
            break
        v = step
    # equidistant vertices are mutually Delaunay-connected: flood the tie set
    ties = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for k in nbr[indptr[u] : indptr[u + 1]].tolist():
            if k not in ties and d2(k) == best:
                ties.add(k)
                stack.append(k)
    return min(ties)


def nearest_vertex(tri: Triangulation, q, start: int = 0) -> int:
    qx, qy = float(q[0]), float(q[1])
    t, last = tri.walk(qx, qy, start)
    seed = tri._tv[t if t != OUTSIDE else last][0]
    return _nearest_from(tri, qx, qy, seed)


def interpolate_nearest(tri: Triangulation, q, start: int = 0) -> float:
    return float(tri.values[nearest_vertex(tri, q, start)])


# -- linear ------------------------------------------------------------------


def _barycentric(tri: Triangulation, t: int, qx, qy):
    px, py = tri._px, tri._py
    a, b, c = tri._tv[t]
    wa = (px[b] - qx) * (py[c] - qy) - (py[b] - qy) * (px[c] - qx)
    wb = (px[c] - qx) * (py[a] - qy) - (py[c] - qy) * (px[a] - qx)
    wc = (px[a] - qx) * (py[b] - qy) - (py[a] - qy) * (px[b] - qx)
    s = wa + wb + wc
    return (a, b, c), (wa / s, wb / s, wc / s)


def interpolate_linear(tri: Triangulation, q, start: int = 0):
    qx, qy = float(q[0]), float(q[1])
    t = tri.walk(qx, qy, start)[0]
    if t == OUTSIDE:
        return None
    (a, b, c), (wa, wb, wc) = _barycentric(tri, t, qx, qy)
    f = tri.values
    return float(wa * f[a] + wb * f[b] + wc * f[c])


# -- Clough-Tocher -----------------------------------------------------------


def estimate_gradients(tri: Triangulation) -> np.ndarray:
    """Per-vertex gradients by 1/d^2-weighted least squares over the 1-ring.

    Hull vertices whose ring cannot pin down a plane (fewer than three
    neighbours, or a near-singular normal matrix) also use the second ring.
    """
    indptr, nbr = tri.vertex_neighbors()
    n = tri.n_vertices
    x, y, f = tri.x, tri.y, tri.values
    owner = np.repeat(np.arange(n), np.diff(indptr))
    dx = x[nbr] - x[owner]
    dy = y[nbr] - y[owner]
    df = f[nbr] - f[owner]
    w = 1.0 / (dx * dx + dy * dy)
    sxx = np.bincount(owner, w * dx * dx, n)
    sxy = np.bincount(owner, w * dx * dy, n)
    syy = np.bincount(owner, w * dy * dy, n)
    sxf = np.bincount(owner, w * dx * df, n)
    syf = np.bincount(owner, w * dy * df, n)
    det = sxx * syy - sxy * sxy
    grads = np.zeros((n, 2))
    ok = det > 1e-10 * (sxx + syy) ** 2
    grads[ok, 0] = (syy[ok] * sxf[ok] - sxy[ok] * syf[ok]) / det[ok]
    grads[ok, 1] = (sxx[ok] * syf[ok] - sxy[ok] * sxf[ok]) / det[ok]
    ring_size = np.diff(indptr)
    on_hull = np.zeros(n, dtype=bool)
    on_hull[tri.hull] = True
    pad = (~ok) | (on_hull & (ring_size < 3))
    for v in np.flatnonzero(pad).tolist():
        first = set(nbr[indptr[v] : indptr[v + 1]].tolist())
        ring = set(first)
        for k in first:
            ring.update(nbr[indptr[k] : indptr[k + 1]].tolist())
        ring.discard(v)
        ring = np.array(sorted(ring))
        ddx, ddy = x[ring] - x[v], y[ring] - y[v]
        sw = np.sqrt(1.0 / (ddx * ddx + ddy * ddy))
        A = np.column_stack([ddx, ddy]) * sw[:, None]
        grads[v] = np.linalg.lstsq(A, (f[ring] - f[v]) * sw, rcond=None)[0]
    return grads


class CloughTocher:
    """Reduced Clough-Tocher interpolant over a Delaunay triangulation.

    Each triangle is split at its centroid into three cubic Bezier patches.
    The normal derivative varies linearly along every outer edge, which
    makes the surface C1 across triangles sharing vertex gradients.
    """

    def __init__(self, tri: Triangulation, gradients: np.ndarray | None = None):
        self.tri = tri
        self.gradients = estimate_gradients(tri) if gradients is None else np.asarray(gradients, float)
        self.nets = self._control_nets()

    def _control_nets(self) -> np.ndarray:
        """Per triangle: vertex values P, edge points E[i, j], Q, T, R and S.

        Layout (T, 3 sub-patches, 10 coefficients) in Bernstein order
        b300 b210 b120 b030 b201 b111 b021 b102 b012 b003 for sub-patch
        (V_i, V_{i+1}, C).
        """
        tri = self.tri
        t = tri.triangles
        V = np.stack([np.column_stack([tri.x[t[:, k]], tri.y[t[:, k]]]) for k in range(3)], axis=1)
        F = tri.values[t]
        G = self.gradients[t]
        C = V.mean(axis=1)

        def lin(i, point):
            return F[:, i] + np.einsum("nd,nd->n", G[:, i], point - V[:, i]) / 3.0

        E = {(i, j): lin(i, V[:, j]) for i in range(3) for j in range(3) if i != j}
        Q = [lin(i, C) for i in range(3)]
        T = []
        for i in range(3):
            j = (i + 1) % 3
            b300, b210, b120, b030 = F[:, i], E[i, j], E[j, i], F[:, j]
            b201, b021 = Q[i], Q[j]
            e = V[:, j] - V[:, i]
            d = C - 0.5 * (V[:, i] + V[:, j])
            s = np.einsum("nd,nd->n", d, e) / np.einsum("nd,nd->n", e, e)
            c20 = 3.0 * (b201 - 0.5 * b300 - 0.5 * b210)
            c02 = 3.0 * (b021 - 0.5 * b120 - 0.5 * b030)
            t20 = 3.0 * (b210 - b300)
            t11 = 3.0 * (b120 - b210)
            t02 = 3.0 * (b030 - b120)
            T.append((0.5 * (c20 - s * t20 + c02 - s * t02) + s * t11) / 3.0 + 0.5 * (b210 + b120))
        R = [(Q[i] + T[i] + T[(i - 1) % 3]) / 3.0 for i in range(3)]
        S = (R[0] + R[1] + R[2]) / 3.0
        nets = np.empty((len(t), 3, 10))
        for i in range(3):
            j = (i + 1) % 3
            nets[:, i] = np.column_stack(
                [F[:, i], E[i, j], E[j, i], F[:, j], Q[i], T[i], Q[j], R[i], R[j], S]
            )
        return nets

    def evaluate_in(self, tris: np.ndarray, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at points known to lie in ``tris``."""
        tri = self.tri
        t = tri.triangles[tris]
        ax, ay = tri.x[t[:, 0]], tri.y[t[:, 0]]
        bx, by = tri.x[t[:, 1]], tri.y[t[:, 1]]
        cx, cy = tri.x[t[:, 2]], tri.y[t[:, 2]]
        l0 = (bx - qx) * (cy - qy) - (by - qy) * (cx - qx)
        l1 = (cx - qx) * (ay - qy) - (cy - qy) * (ax - qx)
        l2 = (ax - qx) * (by - qy) - (ay - qy) * (bx - qx)
        s = l0 + l1 + l2
        lam = np.column_stack([l0, l1, l2]) / s[:, None]
        k = np.argmin(lam, axis=1)
        rows = np.arange(len(k))
        i = (k + 1) % 3
        j = (k + 2) % 3
        lk = lam[rows, k]
        u = lam[rows, i] - lk
        v = lam[rows, j] - lk
        w = 3.0 * lk
        b = self.nets[tris, i]
        return (
            b[:, 0] * u**3
            + 3 * b[:, 1] * u * u * v
            + 3 * b[:, 2] * u * v * v
            + b[:, 3] * v**3
            + 3 * b[:, 4] * u * u * w
            + 6 * b[:, 5] * u * v * w
            + 3 * b[:, 6] * v * v * w
            + 3 * b[:, 7] * u * w * w
            + 3 * b[:, 8] * v * w * w
            + b[:, 9] * w**3
        )

    def __call__(self, q, start: int = 0):
        qx, qy = float(q[0]), float(q[1])
        t = self.tri.walk(qx, qy, start)[0]
        if t == OUTSIDE:
            return None
        return float(self.evaluate_in(np.array([t]), np.array([qx]), np.array([qy]))[0])


def interpolate_cubic(tri: Triangulation, q, start: int = 0, *, interpolant: CloughTocher | None = None):
    ct = interpolant if interpolant is not None else CloughTocher(tri)
    return ct(q, start)


# -- natural neighbour ---------------------------------------------------------


class NaturalNeighbor:
    """Sibson coordinates by virtual insertion of the query point.

    The Bowyer-Watson cavity of the query gives its natural neighbours; the
    area stolen from each is the polygon through the two new circumcenters
    flanking it and the old circumcenters of its cavity triangles.
    """

    def __init__(self, tri: Triangulation):
        self.tri = tri
        t = tri.triangles
        cc = [
            circumcenter(tri._px[a], tri._py[a], tri._px[b], tri._py[b], tri._px[c], tri._py[c])
            for a, b, c in t.tolist()
        ]
        self._cc = cc

    def weights(self, q, start: int = 0):
        """(vertex indices, Sibson weights) for ``q``, or None outside the hull."""
        tri = self.tri
        qx, qy = float(q[0]), float(q[1])
        t0 = tri.walk(qx, qy, start)[0]
        if t0 == OUTSIDE:
            return None
        return self._weights_in(t0, qx, qy)

    def _weights_in(self, t0, qx, qy):
        tri = self.tri
        px, py, tv, tn = tri._px, tri._py, tri._tv, tri._tn
        verts = tv[t0]
        for v in verts:
            if px[v] == qx and py[v] == qy:
                return [v], [1.0]
        for k in range(3):
            if tn[t0][k] < 0:
                a, b = verts[(k + 1) % 3], verts[(k + 2) % 3]
                if orient2d(px[a], py[a], px[b], py[b], qx, qy) == 0:
                    # on the hull: Sibson coordinates reduce to the edge's linear ones
                    la = math.hypot(px[b] - qx, py[b] - qy)
                    lb = math.hypot(px[a] - qx, py[a] - qy)
                    return [a, b], [la / (la + lb), lb / (la + lb)]
        cavity = {t0}
        stack = [t0]
        nxt = {}  # boundary vertex u -> (w, cavity triangle owning edge u->w)
        while stack:
            t = stack.pop()
            v = tv[t]
            for k in range(3):
                nb = tn[t][k]
                if nb in cavity:
                    continue
                a, b, c = (tv[nb] if nb >= 0 else (0, 0, 0))
                if nb >= 0 and incircle(px[a], py[a], px[b], py[b], px[c], py[c], qx, qy) > 0:
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    nxt[v[(k + 1) % 3]] = (v[(k + 2) % 3], t)
        prv = {w: u for u, (w, _) in nxt.items()}
        cc = self._cc
        idx, areas = [], []
        for v, (w, _) in nxt.items():
            u = prv[v]
            pts = [circumcenter(px[u], py[u], px[v], py[v], qx, qy)]
            # fan of cavity triangles around v, from edge (u, v) to edge (v, w)
            t = nxt[u][1]
            for _ in range(len(cavity) + 1):
                pts.append(cc[t])
                m = tv[t].index(v)
                if tv[t][(m + 1) % 3] == w and nxt.get(v, (None, None))[1] == t:
                    break
                t = tn[t][(m + 2) % 3]
            pts.append(circumcenter(px[v], py[v], px[w], py[w], qx, qy))
            area = 0.0
            for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
                area += (x0 - qx) * (y1 - qy) - (x1 - qx) * (y0 - qy)
            idx.append(v)
            areas.append(abs(area) * 0.5)
        total = sum(areas)
        return idx, [a / total for a in areas]

    def __call__(self, q, start: int = 0):
        res = self.weights(q, start)
        if res is None:
            return None
        idx, w = res
        f = self.tri.values
        return float(sum(wk * f[k] for k, wk in zip(idx, w)))


def interpolate_natural(tri: Triangulation, q, start: int = 0, *, interpolant: NaturalNeighbor | None = None):
    nn = interpolant if interpolant is not None else NaturalNeighbor(tri)
    return nn(q, start)


# -- grid reconstruction -----------------------------------------------------------


def _locate_row(tri: Triangulation, i: int, width: int):
    tris = np.empty(width, dtype=np.int64)
    lasts = np.empty(width, dtype=np.int64)
    hint = 0
    for j in range(width):
        t, last = tri.walk(float(j), float(i), hint)
        tris[j] = t
        lasts[j] = last
        hint = last
    return tris, lasts


def reconstruct(mesh, width: int, height: int, method, tri: Triangulation | None = None, threads=None):
    """Evaluate the chosen interpolator at every grid position (x=j, y=i).

    Returns ``(image, outside_mask)``; masked pixels lie outside the convex
    hull and carry the nearest-neighbour value.
    """
    method = InterpolationMethod.parse(method)
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if tri is None:
        tri = build_from_mesh(mesh)
    rows = ordered_map(lambda i: _locate_row(tri, i, width), range(height), threads)
    tris = np.stack([r[0] for r in rows])
    lasts = np.stack([r[1] for r in rows])
    outside = tris == OUTSIDE
    out = np.empty((height, width))
    ii, jj = np.indices((height, width))

    def nearest_at(i, j):
        t = lasts[i, j]
        return tri.values[_nearest_from(tri, float(j), float(i), tri._tv[t][0])]

    if method is InterpolationMethod.NN:
        def nn_row(i):
            return [nearest_at(i, j) for j in range(width)]
        out[:] = np.array(ordered_map(nn_row, range(height), threads))
        return out, outside

    inside = ~outside
    t_in = tris[inside]
    qx = jj[inside].astype(float)
    qy = ii[inside].astype(float)
    if method is InterpolationMethod.LI:
        T = tri.triangles[t_in]
        f = tri.values
        ax, ay = tri.x[T[:, 0]], tri.y[T[:, 0]]
        bx, by = tri.x[T[:, 1]], tri.y[T[:, 1]]
        cx, cy = tri.x[T[:, 2]], tri.y[T[:, 2]]
        wa = (bx - qx) * (cy - qy) - (by - qy) * (cx - qx)
        wb = (cx - qx) * (ay - qy) - (cy - qy) * (ax - qx)
        wc = (ax - qx) * (by - qy) - (ay - qy) * (bx - qx)
        out[inside] = (wa * f[T[:, 0]] + wb * f[T[:, 1]] + wc * f[T[:, 2]]) / (wa + wb + wc)
    elif method is InterpolationMethod.CI:
        out[inside] = CloughTocher(tri).evaluate_in(t_in, qx, qy)
    else:
        natural = NaturalNeighbor(tri)
        f = tri.values

        def ni_row(i):
            vals = []
            for j in range(width):
                t = tris[i, j]
                if t == OUTSIDE:
                    vals.append(0.0)
                    continue
                idx, w = natural._weights_in(int(t), float(j), float(i))
                vals.append(sum(wk * f[k] for k, wk in zip(idx, w)))
            return vals

        vals = np.array(ordered_map(ni_row, range(height), threads))
        out[inside] = vals[inside]
    for i, j in zip(*np.nonzero(outside)):
        out[i, j] = nearest_at(i, j)
    return out, outside
