import numpy as np
import pytest

from latfrac.material import ElementStates
from latfrac.mesh import LatticeMesh, Rect


def spring_mesh(nodes, edges, widths=1.0) -> LatticeMesh:
    """Lattice made of explicit springs (no triangles); element k joins edges[k] = (i, j)."""
    nodes = np.asarray(nodes, float)
    edges = np.asarray(edges, np.int64).reshape(-1, 2)
    d = nodes[edges[:, 0]] - nodes[edges[:, 1]]
    length = np.linalg.norm(d, axis=1)
    n0 = d / length[:, None]
    t0 = np.stack([-n0[:, 1], n0[:, 0]], axis=1)
    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    return LatticeMesh(nodes=nodes, tags=np.zeros(len(nodes), np.int8), triangles=np.zeros((0, 3), np.int64),
                       edges=edges, tri_edges=np.zeros((0, 3), np.int64),
                       edge_tris=np.full((len(edges), 2), -1), length=length,
                       width=np.broadcast_to(np.asarray(widths, float), length.shape).copy(), n0=n0, t0=t0,
                       domain=Rect(lo[0], lo[1], hi[0], hi[1]), l_m=float(length.mean()), l_min=0.0, seed=0)


def spring_states(kn, kt=None, sn0=1.0, st0=1.0, n=5.0, breakable=True) -> ElementStates:
    kn = np.atleast_1d(np.asarray(kn, float))
    kt = kn.copy() if kt is None else np.broadcast_to(np.asarray(kt, float), kn.shape).copy()
    m = len(kn)
    full = lambda v: np.broadcast_to(np.asarray(v, float), (m,)).copy()  # noqa: E731
    return ElementStates(phase=np.zeros(m, np.int8), kn=kn, kt=kt, sn0=full(sn0), st0=full(st0),
                         breakable=np.broadcast_to(np.asarray(breakable), (m,)).copy(), n=n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
