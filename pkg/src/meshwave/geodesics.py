"""Graph geodesics on triangle meshes.

Distances are shortest paths over the undirected edge graph, weighted by
Euclidean edge length. This overshoots true polyhedral geodesics by a small
mesh-dependent factor (about 5% on a subdivided icosphere) but is consistent
across the meshes being compared, which is all the matching metrics need.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from ._kernels import dijkstra
from .mesh import TriMesh


def edge_graph(mesh: TriMesh):
    """CSR adjacency of the mesh edge graph, weighted by edge length.

    Returns (indptr, indices, weights) with both directions of every edge
    present, suitable for the dijkstra kernel.
    """
    edges = mesh.edges()
    lengths = np.linalg.norm(
        mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1
    )
    n = mesh.n_vertices
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    vals = np.concatenate([lengths, lengths])
    adj = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return adj.indptr, adj.indices.astype(np.int64), adj.data


def geodesic_from(mesh: TriMesh, source: int) -> np.ndarray:
    """Distance from one source vertex to every vertex."""
    return geodesic_multi(mesh, np.asarray([source]))[0]


def geodesic_multi(mesh: TriMesh, sources) -> np.ndarray:
    """Distances from several source vertices; rows follow `sources`."""
    sources = np.asarray(sources, dtype=np.int64)
    if sources.ndim != 1:
        raise ValueError("sources must be a 1-D index array")
    n = mesh.n_vertices
    if sources.size and (sources.min() < 0 or sources.max() >= n):
        raise IndexError("source vertex out of range")
    indptr, indices, weights = edge_graph(mesh)
    return dijkstra(indptr, indices, weights, sources, n)
