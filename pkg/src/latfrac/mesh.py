"""Disordered triangular lattices over rectangular specimens.

Nodes start on a regular triangular grid, get jittered, and are
Delaunay-triangulated. Every triangle edge becomes one lattice element
carrying its rest geometry: length, effective width and local frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

NODE_TAGS = ("interior", "bottom", "top", "left", "right", "notch_face", "bar_interface", "bar")
TAG = {name: k for k, name in enumerate(NODE_TAGS)}
OUTER_TAGS = (TAG["bottom"], TAG["top"], TAG["left"], TAG["right"])

DEGENERATE_AREA = 1e-12  # mm^2


class MeshError(ValueError):
    """Invalid mesh input or degenerate geometry."""


class Rect(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def intersection(self, other: "Rect") -> "Rect":
        return Rect(max(self.x0, other.x0), max(self.y0, other.y0),
                    min(self.x1, other.x1), min(self.y1, other.y1))


@dataclass(frozen=True, eq=False)
class LatticeMesh:
    """Immutable lattice: nodes, triangles and edge elements.

    Element ``k`` joins ``edges[k, 0]`` (node i) and ``edges[k, 1]`` (node j).
    ``n0`` points from j to i so that ``(u_i - u_j) . n0 > 0`` is extension;
    ``t0`` is ``n0`` rotated by +90 degrees.
    """

    nodes: np.ndarray          # (N, 2) mm
    tags: np.ndarray           # (N,) int, index into NODE_TAGS
    triangles: np.ndarray      # (T, 3) CCW node ids
    edges: np.ndarray          # (E, 2) node ids
    tri_edges: np.ndarray      # (T, 3) element ids
    edge_tris: np.ndarray      # (E, 2) adjacent triangles, -1 if absent
    length: np.ndarray         # (E,) mm
    width: np.ndarray          # (E,) effective width A, mm
    n0: np.ndarray             # (E, 2)
    t0: np.ndarray             # (E, 2)
    domain: Rect
    l_m: float                 # target spacing
    l_min: float               # perturbation radius
    seed: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.edges)

    @property
    def mean_mesh_size(self) -> float:
        return float(self.length.mean())

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])

    @property
    def triangle_areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)

    def is_boundary_element(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    def nodes_tagged(self, name: str) -> np.ndarray:
        if name not in TAG:
            raise KeyError(f"unknown node tag {name!r}")
        return np.flatnonzero(self.tags == TAG[name])

    def n_components(self) -> int:
        return _n_components(self.n_nodes, self.edges)


def _signed_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _n_components(n_nodes: int, edges: np.ndarray) -> int:
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_nodes, n_nodes))
    return connected_components(g, directed=False)[0]


def assemble_mesh(nodes, tags, triangles, *, domain: Rect, l_m: float, l_min: float, seed: int) -> LatticeMesh:
    """Build edges, adjacency and per-element rest geometry from a triangulation."""
    nodes = np.array(nodes, dtype=float)
    tags = np.array(tags, dtype=np.int8)
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)

    area = _signed_areas(nodes, tris)
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    area = np.abs(area)
    bad = np.flatnonzero(area < DEGENERATE_AREA)
    if bad.size:
        t = int(bad[0])
        raise MeshError(f"degenerate triangle {t} (nodes {tris[t].tolist()}, area {area[t]:.3e} mm^2)")

    half = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    half.sort(axis=1)
    edges, inverse = np.unique(half, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_tri = len(tris)
    tri_edges = inverse.reshape(3, n_tri).T.copy()

    owner = np.tile(np.arange(n_tri), 3)
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(edges))
    if counts.max() > 2:
        raise MeshError("non-manifold triangulation: an edge has more than two triangles")
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
    edge_tris[:, 0] = owner[order[first]]
    two = counts == 2
    edge_tris[two, 1] = owner[order[first[two] + 1]]

    d = nodes[edges[:, 0]] - nodes[edges[:, 1]]
    length = np.hypot(d[:, 0], d[:, 1])
    n0 = d / length[:, None]
    t0 = np.column_stack([-n0[:, 1], n0[:, 0]])

    cent = nodes[tris].mean(axis=1)
    c1 = cent[edge_tris[:, 0]]
    width = np.empty(len(edges))
    c2 = cent[edge_tris[two, 1]]
    width[two] = np.abs(np.einsum("ij,ij->i", c1[two] - c2, t0[two]))
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    one = ~two
    width[one] = 2.0 * np.abs(np.einsum("ij,ij->i", c1[one] - mid[one], t0[one]))
    if np.any(width <= 0):
        k = int(np.flatnonzero(width <= 0)[0])
        raise MeshError(f"element {k} has non-positive effective width")

    for a in (nodes, tags, tris, edges, tri_edges, edge_tris, length, width, n0, t0):
        a.flags.writeable = False
    return LatticeMesh(nodes=nodes, tags=tags, triangles=tris, edges=edges, tri_edges=tri_edges,
                       edge_tris=edge_tris, length=length, width=width, n0=n0, t0=t0,
                       domain=Rect(*map(float, domain)), l_m=float(l_m), l_min=float(l_min), seed=int(seed))


def compute_effective_widths(mesh: LatticeMesh) -> LatticeMesh:
    """Recompute adjacency and widths from the current triangulation."""
    return assemble_mesh(mesh.nodes.copy(), mesh.tags.copy(), mesh.triangles.copy(), domain=mesh.domain,
                         l_m=mesh.l_m, l_min=mesh.l_min, seed=mesh.seed)


def _grid(domain: Rect, l_m: float):
    nx = max(1, round(domain.width / l_m))
    ny = max(1, round(domain.height / (l_m * math.sqrt(3) / 2)))
    dx = domain.width / nx
    dy = domain.height / ny
    pts = []
    for k in range(ny + 1):
        y = domain.y0 + k * dy if k < ny else domain.y1
        if k % 2 == 0:
            xs = [domain.x0 + i * dx for i in range(nx)] + [domain.x1]
        else:
            xs = [domain.x0] + [domain.x0 + (i + 0.5) * dx for i in range(nx)] + [domain.x1]
        pts.extend((x, y) for x in xs)
    return np.array(pts), dx, dy


def _boundary_tags(p: np.ndarray, domain: Rect) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    tags = np.full(len(p), TAG["interior"], dtype=np.int8)
    tags[x == domain.x0] = TAG["left"]
    tags[x == domain.x1] = TAG["right"]
    tags[y == domain.y0] = TAG["bottom"]
    tags[y == domain.y1] = TAG["top"]
    return tags


def generate_mesh(domain, l_m: float, seed: int, perturbation: float = 0.4) -> LatticeMesh:
    """Jittered triangular lattice over ``domain`` = (x0, y0, x1, y1).

    Interior nodes move by a uniform random vector inside a disk of radius
    ``l_min = perturbation * l_m`` (shrunk near the boundary so no node comes
    closer than half its grid distance to a side). Side nodes slide along
    their side by less than a quarter spacing; corners stay put.
    """
    domain = Rect(*map(float, domain))
    if not l_m > 0:
        raise MeshError(f"mesh spacing must be positive, got {l_m}")
    if domain.width < 3 * l_m or domain.height < 3 * l_m:
        raise MeshError(f"domain {domain.width:g}x{domain.height:g} mm is too small for l_m={l_m:g} mm "
                        f"(need at least 3*l_m = {3 * l_m:g} mm on each side)")
    l_min = perturbation * l_m
    p, dx, dy = _grid(domain, l_m)
    tags = _boundary_tags(p, domain)

    rng = np.random.default_rng(seed)
    u1 = rng.random(len(p))
    u2 = rng.random(len(p))
    if l_min > 0:
        x, y = p[:, 0], p[:, 1]
        on_x = (x == domain.x0) | (x == domain.x1)
        on_y = (y == domain.y0) | (y == domain.y1)
        corner = on_x & on_y
        interior = ~(on_x | on_y)

        dist = np.minimum.reduce([x - domain.x0, domain.x1 - x, y - domain.y0, domain.y1 - y])
        r = np.minimum(l_min, 0.5 * dist[interior]) * np.sqrt(u1[interior])
        ang = 2 * np.pi * u2[interior]
        p[interior, 0] += r * np.cos(ang)
        p[interior, 1] += r * np.sin(ang)

        # side nodes slide by under a quarter of their spacing along the side
        side = on_y & ~corner
        p[side, 0] += min(l_min, 0.25 * dx) * (2 * u1[side] - 1)
        side = on_x & ~corner
        p[side, 1] += min(l_min, 0.25 * dy) * (2 * u1[side] - 1)

    tri = Delaunay(p)
    return assemble_mesh(p, tags, tri.simplices.copy(), domain=domain, l_m=l_m, l_min=l_min, seed=seed)


def segments_hit_open_rect(a: np.ndarray, b: np.ndarray, rect: Rect) -> np.ndarray:
    """True where segment a->b meets the open rectangle (Liang-Barsky clipping)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    lo = np.zeros(len(a))
    hi = np.ones(len(a))
    for ax, (r0, r1) in enumerate(((rect.x0, rect.x1), (rect.y0, rect.y1))):
        d = b[:, ax] - a[:, ax]
        par = d == 0
        inside = (a[:, ax] > r0) & (a[:, ax] < r1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (r0 - a[:, ax]) / d
            tb = (r1 - a[:, ax]) / d
        t_in = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        t_out = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        lo = np.maximum(lo, t_in)
        hi = np.minimum(hi, t_out)
    return lo < hi


def _open_to_edge(rect: Rect, domain: Rect, pad: float) -> Rect:
    tol = 1e-9 * max(domain.width, domain.height)
    x0, y0, x1, y1 = rect
    touches = False
    if x0 <= domain.x0 + tol:
        x0, touches = min(x0, domain.x0 - pad), True
    if x1 >= domain.x1 - tol:
        x1, touches = max(x1, domain.x1 + pad), True
    if y0 <= domain.y0 + tol:
        y0, touches = min(y0, domain.y0 - pad), True
    if y1 >= domain.y1 - tol:
        y1, touches = max(y1, domain.y1 + pad), True
    if not touches:
        raise MeshError(f"notch {tuple(rect)} does not reach the specimen boundary")
    return Rect(x0, y0, x1, y1)


def notch_cut_mask(mesh: LatticeMesh, notch) -> np.ndarray:
    """Elements removed directly by a notch: crossing it or touching a node inside it."""
    rect = _open_to_edge(Rect(*map(float, notch)), mesh.domain, mesh.l_m)
    p = mesh.nodes
    inside = (p[:, 0] > rect.x0) & (p[:, 0] < rect.x1) & (p[:, 1] > rect.y0) & (p[:, 1] < rect.y1)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    return segments_hit_open_rect(p[i], p[j], rect) | inside[i] | inside[j]


def carve_notch(mesh: LatticeMesh, notch) -> LatticeMesh:
    """Remove the lattice inside an edge notch ``(x0, y0, x1, y1)``.

    Elements crossing the open notch go, then every triangle that lost an
    edge, then elements and nodes left without a triangle. A notch side
    flush with the specimen side is treated as open to the outside.
    """
    notch = Rect(*map(float, notch))
    if notch.intersection(mesh.domain).area <= 0:
        return mesh
    cut = notch_cut_mask(mesh, notch)
    if not cut.any():
        return mesh

    tri_alive = ~cut[mesh.tri_edges].any(axis=1)
    tris = mesh.triangles[tri_alive]
    keep_nodes = np.zeros(mesh.n_nodes, dtype=bool)
    keep_nodes[tris.ravel()] = True

    # drop fragments that do not touch the outer boundary; refuse to split the specimen
    alive_edges = mesh.edges[~cut & (tri_alive[mesh.edge_tris[:, 0]]
                                     | ((mesh.edge_tris[:, 1] >= 0) & tri_alive[mesh.edge_tris[:, 1]]))]
    g = coo_matrix((np.ones(len(alive_edges)), (alive_edges[:, 0], alive_edges[:, 1])),
                   shape=(mesh.n_nodes, mesh.n_nodes))
    _, comp = connected_components(g, directed=False)
    outer = np.isin(mesh.tags, OUTER_TAGS) & keep_nodes
    anchored = np.unique(comp[outer])
    if len(anchored) > 1:
        raise MeshError(f"notch {tuple(notch)} splits the specimen into {len(anchored)} loaded parts")
    keep_nodes &= np.isin(comp, anchored)
    tris = tris[keep_nodes[tris].all(axis=1)]

    exposed = np.zeros(mesh.n_nodes, dtype=bool)
    exposed[mesh.edges[cut].ravel()] = True
    tags = mesh.tags.copy()
    tags[exposed & keep_nodes] = TAG["notch_face"]

    new_id = np.full(mesh.n_nodes, -1, dtype=np.int64)
    new_id[keep_nodes] = np.arange(keep_nodes.sum())
    return assemble_mesh(mesh.nodes[keep_nodes], tags[keep_nodes], new_id[tris], domain=mesh.domain,
                         l_m=mesh.l_m, l_min=mesh.l_min, seed=mesh.seed)
