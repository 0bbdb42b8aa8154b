"""Elastic energy of the lattice and its minimisation by conjugate gradients.

For element ij with relative displacement du = u_i - u_j the length
variations are dn = du . n0 and dt = du . t0, the forces fn = Kn dn and
ft = Kt dt, and the energy 1/2 sum(Kn dn^2 + Kt dt^2). Energy, gradient
and the convergence test are evaluated element-by-element; an optional
preconditioner only accelerates the iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .material import ElementStates
from .mesh import TAG, LatticeMesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, msg: str, report: "SolveReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class BoundaryConditions:
    """Per node and axis: free, or fixed to ``values[node, axis]`` (mm)."""

    fixed: np.ndarray
    values: np.ndarray

    @classmethod
    def free(cls, n_nodes: int) -> "BoundaryConditions":
        return cls(np.zeros((n_nodes, 2), dtype=bool), np.zeros((n_nodes, 2)))

    def fix(self, nodes, axis: int, value: float = 0.0) -> "BoundaryConditions":
        self.fixed[nodes, axis] = True
        self.values[nodes, axis] = value
        return self

    def scaled(self, lam: float) -> "BoundaryConditions":
        return BoundaryConditions(self.fixed.copy(), self.values * lam)

    @property
    def n_constraints(self) -> int:
        return int(self.fixed.sum())

    def validate(self) -> None:
        if self.n_constraints < 3:
            raise ValueError("need at least 3 scalar constraints to remove rigid-body modes")
        if not np.all(np.isfinite(self.values[self.fixed])):
            raise ValueError("imposed displacements must be finite")


@dataclass
class SolveReport:
    iterations: int = 0
    grad_norm: float = 0.0
    load_norm: float = 0.0
    energy: float = 0.0
    converged: bool = False
    pinned_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _stretch(mesh: LatticeMesh, u: np.ndarray):
    du = u[mesh.edges[:, 0]] - u[mesh.edges[:, 1]]
    dn = np.einsum("ij,ij->i", du, mesh.n0)
    dt = np.einsum("ij,ij->i", du, mesh.t0)
    return dn, dt


def _effective(states: ElementStates):
    live = ~states.broken
    return np.where(live, states.kn, 0.0), np.where(live, states.kt, 0.0)


def element_forces(mesh: LatticeMesh, states: ElementStates, u: np.ndarray):
    """Normal and shear force per element; broken elements carry nothing."""
    kn, kt = _effective(states)
    dn, dt = _stretch(mesh, u)
    return kn * dn, kt * dt


def elastic_energy(mesh: LatticeMesh, states: ElementStates, u: np.ndarray) -> float:
    kn, kt = _effective(states)
    dn, dt = _stretch(mesh, u)
    return 0.5 * float(np.sum(kn * dn**2 + kt * dt**2))


def _nodal(mesh: LatticeMesh, kn, kt, u) -> np.ndarray:
    dn, dt = _stretch(mesh, u)
    f = (kn * dn)[:, None] * mesh.n0 + (kt * dt)[:, None] * mesh.t0
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    n = mesh.n_nodes
    g = np.empty((n, 2))
    for a in (0, 1):
        g[:, a] = np.bincount(i, f[:, a], minlength=n) - np.bincount(j, f[:, a], minlength=n)
    return g


def energy_gradient(mesh: LatticeMesh, states: ElementStates, u: np.ndarray,
                    bc: BoundaryConditions | None = None) -> np.ndarray:
    """dU/du per node and axis; entries at fixed dofs are zeroed when ``bc`` is given."""
    kn, kt = _effective(states)
    g = _nodal(mesh, kn, kt, u)
    if bc is not None:
        g[bc.fixed] = 0.0
    return g


def reaction_force(mesh: LatticeMesh, states: ElementStates, u: np.ndarray, nodes, axis: int = 1) -> float:
    """Total force the lattice exerts back on ``nodes`` along ``axis`` (N per unit thickness).

    ``nodes`` is an index array or a node tag name.
    """
    if isinstance(nodes, str):
        nodes = mesh.nodes_tagged(nodes)
    kn, kt = _effective(states)
    g = _nodal(mesh, kn, kt, u)
    return float(g[np.asarray(nodes), axis].sum())


def stiffness_diagonal(mesh: LatticeMesh, states: ElementStates) -> np.ndarray:
    kn, kt = _effective(states)
    d = kn[:, None] * mesh.n0**2 + kt[:, None] * mesh.t0**2
    n = mesh.n_nodes
    out = np.empty((n, 2))
    for a in (0, 1):
        out[:, a] = (np.bincount(mesh.edges[:, 0], d[:, a], minlength=n)
                     + np.bincount(mesh.edges[:, 1], d[:, a], minlength=n))
    return out


def assemble_stiffness(mesh: LatticeMesh, states: ElementStates) -> sp.csc_matrix:
    """Sparse global stiffness (2N x 2N, dof = 2*node + axis)."""
    kn, kt = _effective(states)
    n0, t0 = mesh.n0, mesh.t0
    k = kn[:, None, None] * n0[:, :, None] * n0[:, None, :] + kt[:, None, None] * t0[:, :, None] * t0[:, None, :]
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    rows, cols, vals = [], [], []
    for (p, q, s) in ((i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)):
        for a in (0, 1):
            for b in (0, 1):
                rows.append(2 * p + a)
                cols.append(2 * q + b)
                vals.append(s * k[:, a, b])
    n = 2 * mesh.n_nodes
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsc()


class FactorPreconditioner:
    """Sparse LU of the free-dof stiffness at build time.

    Reused while elements break: the current free-dof stiffness differs by a
    few low-rank element terms, so preconditioned CG needs few iterations.
    """

    def __init__(self, mesh: LatticeMesh, states: ElementStates, free: np.ndarray):
        self.free = free.ravel().copy()
        idx = np.flatnonzero(self.free)
        self.idx = idx
        self.lu = None
        if idx.size == 0:
            return
        K = assemble_stiffness(mesh, states)[idx][:, idx]
        # a tiny shift keeps partially constrained fragments factorable
        shift = 1e-10 * float(K.diagonal().max()) or 1.0
        K = K + sp.identity(len(idx), format="csc") * shift
        self.lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})

    def covers(self, free: np.ndarray) -> bool:
        return not np.any(free.ravel() & ~self.free)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        z = np.zeros_like(r)
        if self.lu is not None:
            z[self.idx] = self.lu.solve(r[self.idx])
        return z


def floating_nodes(mesh: LatticeMesh, states: ElementStates, bc: BoundaryConditions) -> np.ndarray:
    """Nodes of connected pieces with no imposed dof at all."""
    live = ~states.broken
    e = mesh.edges[live]
    n = mesh.n_nodes
    g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    held = np.zeros(comp.max() + 1, dtype=bool)
    held[comp[bc.fixed.any(axis=1)]] = True
    return np.flatnonzero(~held[comp])


def solve_reference(mesh: LatticeMesh, states: ElementStates, bc: BoundaryConditions, *,
                    tol: float = 1e-10, max_iter: int | None = None, u0: np.ndarray | None = None,
                    preconditioner=None, check_every: int = 50):
    """Minimise the elastic energy over the free dofs.

    Stops when the gradient norm on free dofs is at most ``tol`` times the
    norm of the load, i.e. the gradient with all free dofs at zero. Pieces
    with no imposed dof are pinned at zero displacement. ``u0`` warm-starts
    the free dofs. Returns ``(u, report)``.
    """
    bc.validate()
    n = mesh.n_nodes
    kn, kt = _effective(states)
    fixed = bc.fixed.copy()
    values = bc.values.copy()
    pinned = floating_nodes(mesh, states, bc)
    fixed[pinned] = True
    values[pinned] = 0.0
    free = ~fixed

    def grad(field_):
        g = _nodal(mesh, kn, kt, field_)
        g[fixed] = 0.0
        return g

    base = np.where(fixed, values, 0.0)
    load_norm = float(np.linalg.norm(grad(base)))
    u = base.copy()
    if u0 is not None:
        u[free] = u0[free]
    report = SolveReport(load_norm=load_norm, pinned_nodes=pinned)
    n_dof = int(free.sum())
    max_iter = max_iter or 50 * max(n_dof, 1)

    if preconditioner is None or not getattr(preconditioner, "covers", lambda f: True)(free):
        diag = stiffness_diagonal(mesh, states)
        inv = np.where(free & (diag > 0), 1.0 / np.where(diag > 0, diag, 1.0), 0.0).ravel()
        precond = lambda r: inv * r  # noqa: E731
    else:
        mask = free.ravel()
        precond = lambda r: preconditioner(r) * mask  # noqa: E731

    target = tol * load_norm
    r = -grad(u).ravel()
    res = float(np.linalg.norm(r))
    it = 0
    pAp = 1.0
    if load_norm == 0.0:
        u[free] = 0.0
        res = 0.0
    while res > target and it < max_iter:
        z = precond(r)
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            Ap = grad(p.reshape(n, 2)).ravel()
            pAp = float(p @ Ap)
            if pAp <= 0:
                break
            alpha = rz / pAp
            u += alpha * p.reshape(n, 2)
            r -= alpha * Ap
            it += 1
            if it % check_every == 0:
                r = -grad(u).ravel()
            res = float(np.linalg.norm(r))
            if res <= target:
                break
            z = precond(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        # restart from the true residual; recursion drift is caught here
        r = -grad(u).ravel()
        res = float(np.linalg.norm(r))
        if pAp <= 0 and res > target:
            break

    report.iterations = it
    report.grad_norm = res
    report.energy = elastic_energy(mesh, states, u)
    report.converged = res <= target
    log.debug("cg iterations=%d residual=%.3e load=%.3e", it, res, load_norm)
    if not report.converged:
        raise SolverError(f"CG did not converge in {it} iterations (|g|={res:.3e}, target {target:.3e})", report)
    return u, report


__all__ = [
    "BoundaryConditions", "SolveReport", "SolverError", "element_forces", "elastic_energy",
    "energy_gradient", "reaction_force", "solve_reference", "assemble_stiffness",
    "FactorPreconditioner", "floating_nodes", "stiffness_diagonal", "TAG",
]
