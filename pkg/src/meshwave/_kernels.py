"""Loop-bound numeric kernels, numba-compiled when available.

Only kernels that are genuinely loop-shaped live here (per-triangle
assembly scatters and graph Dijkstra); everything matmul-bound in the
package stays on BLAS.  Set MESHWAVE_NUMBA=0 to force the plain
numpy/scipy fallbacks; benchmarks/bench_kernels.py times both paths.

The numpy and numba variants mirror each other's arithmetic expression
by expression so the two paths agree to the last bit on the assembly
kernels (summation order is identical).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


USE_NUMBA = HAS_NUMBA and os.environ.get("MESHWAVE_NUMBA", "1") != "0"

_NJIT_OPTS = dict(cache=True, nogil=True, error_model="numpy")


# ---------------------------------------------------------------------------
# per-triangle cotangents and areas


def triangle_geometry_numpy(vertices, triangles):
    """Per-corner cotangents and per-triangle areas.

    Returns (cots, areas): cots[t, c] is the cotangent of the interior
    angle at corner c of triangle t, areas[t] the triangle area.
    """
    v0 = vertices[triangles[:, 0]]
    v1 = vertices[triangles[:, 1]]
    v2 = vertices[triangles[:, 2]]
    e0 = v2 - v1  # edge opposite corner 0
    e1 = v0 - v2
    e2 = v1 - v0
    cr = np.cross(e2, -e1)  # (v1-v0) x (v2-v0)
    double_area = np.sqrt((cr * cr).sum(axis=1))
    cots = np.empty((len(triangles), 3), dtype=np.float64)
    cots[:, 0] = -(e2 * e1).sum(axis=1) / double_area
    cots[:, 1] = -(e0 * e2).sum(axis=1) / double_area
    cots[:, 2] = -(e1 * e0).sum(axis=1) / double_area
    return cots, double_area / 2.0


@njit(**_NJIT_OPTS)
def _triangle_geometry_nb(vertices, triangles):
    nt = triangles.shape[0]
    cots = np.empty((nt, 3), dtype=np.float64)
    areas = np.empty(nt, dtype=np.float64)
    for t in range(nt):
        i0 = triangles[t, 0]
        i1 = triangles[t, 1]
        i2 = triangles[t, 2]
        # edge vectors, e_c opposite corner c
        e0x = vertices[i2, 0] - vertices[i1, 0]
        e0y = vertices[i2, 1] - vertices[i1, 1]
        e0z = vertices[i2, 2] - vertices[i1, 2]
        e1x = vertices[i0, 0] - vertices[i2, 0]
        e1y = vertices[i0, 1] - vertices[i2, 1]
        e1z = vertices[i0, 2] - vertices[i2, 2]
        e2x = vertices[i1, 0] - vertices[i0, 0]
        e2y = vertices[i1, 1] - vertices[i0, 1]
        e2z = vertices[i1, 2] - vertices[i0, 2]
        # cross(e2, -e1) == cross(v1-v0, v2-v0)
        f1x = -e1x
        f1y = -e1y
        f1z = -e1z
        crx = e2y * f1z - e2z * f1y
        cry = e2z * f1x - e2x * f1z
        crz = e2x * f1y - e2y * f1x
        double_area = np.sqrt((crx * crx + cry * cry) + crz * crz)
        cots[t, 0] = -((e2x * e1x + e2y * e1y) + e2z * e1z) / double_area
        cots[t, 1] = -((e0x * e2x + e0y * e2y) + e0z * e2z) / double_area
        cots[t, 2] = -((e1x * e0x + e1y * e0y) + e1z * e0z) / double_area
        areas[t] = double_area / 2.0
    return cots, areas


def triangle_geometry_numba(vertices, triangles):
    return _triangle_geometry_nb(
        np.ascontiguousarray(vertices), np.ascontiguousarray(triangles)
    )


def triangle_geometry(vertices, triangles):
    if USE_NUMBA:
        return triangle_geometry_numba(vertices, triangles)
    return triangle_geometry_numpy(vertices, triangles)


# ---------------------------------------------------------------------------
# lumped vertex areas (scatter-add of area/3 shares)


def vertex_areas_numpy(triangles, tri_areas, n_vertices):
    out = np.zeros(n_vertices, dtype=np.float64)
    share = tri_areas / 3.0
    for c in range(3):
        np.add.at(out, triangles[:, c], share)
    return out


@njit(**_NJIT_OPTS)
def _vertex_areas_nb(triangles, tri_areas, n_vertices):
    out = np.zeros(n_vertices, dtype=np.float64)
    nt = triangles.shape[0]
    for c in range(3):
        for t in range(nt):
            out[triangles[t, c]] += tri_areas[t] / 3.0
    return out


def vertex_areas_numba(triangles, tri_areas, n_vertices):
    return _vertex_areas_nb(
        np.ascontiguousarray(triangles), np.ascontiguousarray(tri_areas), n_vertices
    )


def vertex_areas(triangles, tri_areas, n_vertices):
    if USE_NUMBA:
        return vertex_areas_numba(triangles, tri_areas, n_vertices)
    return vertex_areas_numpy(triangles, tri_areas, n_vertices)


# ---------------------------------------------------------------------------
# Dijkstra over a CSR edge graph


def dijkstra_numpy(indptr, indices, weights, sources, n_vertices):
    """scipy fallback; returns (len(sources), n_vertices) float64."""
    import scipy.sparse as sp
    import scipy.sparse.csgraph as csgraph

    graph = sp.csr_matrix((weights, indices, indptr), shape=(n_vertices, n_vertices))
    dist = csgraph.dijkstra(graph, directed=False, indices=np.asarray(sources))
    return np.atleast_2d(dist)


@njit(**_NJIT_OPTS)
def _dijkstra_one_nb(indptr, indices, weights, source, dist):
    n = dist.shape[0]
    for i in range(n):
        dist[i] = np.inf
    # binary min-heap with lazy deletion; each edge pushes at most once
    cap = indptr[n] + 1
    heap_d = np.empty(cap, dtype=np.float64)
    heap_v = np.empty(cap, dtype=np.int64)
    heap_d[0] = 0.0
    heap_v[0] = source
    size = 1
    dist[source] = 0.0
    while size > 0:
        d = heap_d[0]
        u = heap_v[0]
        size -= 1
        heap_d[0] = heap_d[size]
        heap_v[0] = heap_v[size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            if child + 1 < size and heap_d[child + 1] < heap_d[child]:
                child += 1
            if heap_d[child] < heap_d[pos]:
                heap_d[pos], heap_d[child] = heap_d[child], heap_d[pos]
                heap_v[pos], heap_v[child] = heap_v[child], heap_v[pos]
                pos = child
            else:
                break
        if d > dist[u]:
            continue
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = d + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                pos = size
                heap_d[pos] = nd
                heap_v[pos] = v
                size += 1
                while pos > 0:
                    parent = (pos - 1) // 2
                    if heap_d[pos] < heap_d[parent]:
                        heap_d[pos], heap_d[parent] = heap_d[parent], heap_d[pos]
                        heap_v[pos], heap_v[parent] = heap_v[parent], heap_v[pos]
                        pos = parent
                    else:
                        break
    return dist


@njit(**_NJIT_OPTS)
def _dijkstra_multi_nb(indptr, indices, weights, sources, n_vertices):
    out = np.empty((sources.shape[0], n_vertices), dtype=np.float64)
    for s in range(sources.shape[0]):
        _dijkstra_one_nb(indptr, indices, weights, sources[s], out[s])
    return out


def dijkstra_numba(indptr, indices, weights, sources, n_vertices):
    return _dijkstra_multi_nb(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(sources, dtype=np.int64),
        n_vertices,
    )


def dijkstra(indptr, indices, weights, sources, n_vertices):
    sources = np.asarray(sources, dtype=np.int64)
    if USE_NUMBA:
        return dijkstra_numba(indptr, indices, weights, sources, n_vertices)
    return dijkstra_numpy(indptr, indices, weights, sources, n_vertices)
