"""Specimens and the event-driven quasi-static failure loop.

Each step solves the elastic problem for a unit imposed displacement,
scales it until exactly one element reaches its failure surface, records
that state and removes the element.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grains import BAR, GrainStructure, classify_elements, empty_structure
from .material import (ElementStates, MaterialTable, assign_element_properties, failure_scale,
                       nominal_capacity_energy)
from .mesh import TAG, LatticeMesh, MeshError, Rect, assemble_mesh, carve_notch, generate_mesh
from .solver import BoundaryConditions, FactorPreconditioner, element_forces, reaction_force, solve_reference

log = logging.getLogger(__name__)

PROTOCOLS = ("LD", "DD", "direct")
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SpecimenGeometry:
    """Outer size, notches and loading protocol of a specimen.

    ``LD``: notched, stiff side bars glued over ``glue_fraction`` of the
    height at each end; specimen elements within the glued ends, extended by
    ``grip_margin`` times the glue length, stay elastic. ``DD``: bars glued over the full height. ``direct``:
    top edge pulled, bottom edge held vertically.
    """

    width: float
    height: float
    notches: tuple = ()
    protocol: str = "LD"
    bar_width: float = 2.0
    glue_fraction: float = 0.25
    grip_margin: float = 0.25

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("specimen dimensions must be positive")
        if not 0 < self.glue_fraction <= 0.5:
            raise ValueError("glue_fraction must lie in (0, 0.5]")
        if self.grip_margin is not None and self.grip_margin < 0:
            raise ValueError("grip_margin must be non-negative (or None for breakable grips)")
        object.__setattr__(self, "notches", tuple(tuple(map(float, n)) for n in self.notches))

    @property
    def outline(self) -> Rect:
        return Rect(0.0, 0.0, float(self.width), float(self.height))

    @property
    def volume(self) -> float:
        """Specimen area per unit thickness, bars and notches excluded."""
        return self.outline.area - sum(Rect(*n).intersection(self.outline).area for n in self.notches)

    @property
    def has_bars(self) -> bool:
        return self.protocol in ("LD", "DD")

    def grip_zones(self) -> tuple:
        """(y_lo, y_hi) bands whose elements cannot break."""
        if self.protocol != "LD" or self.grip_margin is None:
            return ()
        g = self.glue_fraction * self.height * (1 + self.grip_margin)
        return ((0.0, g), (self.height - g, self.height))

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "notches": [list(n) for n in self.notches],
                "protocol": self.protocol, "bar_width": self.bar_width, "glue_fraction": self.glue_fraction,
                "grip_margin": self.grip_margin}


def ld_geometry(width=40.0, height=160.0, notch_depth=5.0, notch_width=2.0, **kw) -> SpecimenGeometry:
    """Tension specimen with symmetric edge notches at mid-height."""
    y0 = 0.5 * (height - notch_width)
    notches = ((0.0, y0, notch_depth, y0 + notch_width), (width - notch_depth, y0, width, y0 + notch_width))
    return SpecimenGeometry(width, height, notches, "LD", **kw)


def dd_geometry(width=40.0, height=160.0, **kw) -> SpecimenGeometry:
    return SpecimenGeometry(width, height, (), "DD", **kw)


LIGAMENT_NOTCH = {"L": 10.0, "M": 20.0, "S": 35.0, "XS": 50.0}


def ligament_geometry(label: str = "L", size: float = 100.0, notch_width: float = 2.0) -> SpecimenGeometry:
    """Square specimen with one edge notch of length c at mid-height; ligament = size - c."""
    if label not in LIGAMENT_NOTCH:
        raise ValueError(f"unknown ligament {label!r}, expected one of {sorted(LIGAMENT_NOTCH)}")
    c = LIGAMENT_NOTCH[label]
    y0 = 0.5 * (size - notch_width)
    return SpecimenGeometry(size, size, ((0.0, y0, c, y0 + notch_width),), "direct")


def large_geometry(width=90.0, height=60.0, notch_depth=5.0, notch_width=2.0) -> SpecimenGeometry:
    y0 = 0.5 * (height - notch_width)
    notches = ((0.0, y0, notch_depth, y0 + notch_width), (width - notch_depth, y0, width, y0 + notch_width))
    return SpecimenGeometry(width, height, notches, "direct")


@dataclass(eq=False)
class Specimen:
    geometry: SpecimenGeometry
    mesh: LatticeMesh
    grains: GrainStructure
    labels: np.ndarray
    states: ElementStates
    bc: BoundaryConditions          # unit imposed displacement
    load_nodes: np.ndarray
    support_nodes: np.ndarray
    table: MaterialTable

    @property
    def bar_elements(self) -> np.ndarray:
        return np.flatnonzero(self.labels == BAR)

    @property
    def volume(self) -> float:
        return self.geometry.volume

    def descriptor(self) -> dict:
        return {"geometry": self.geometry.to_dict(), "l_m": self.mesh.l_m, "mesh_seed": self.mesh.seed,
                "grain_seed": self.grains.seed, "n_inclusions": self.grains.n,
                "n_elements": self.mesh.n_elements, "mean_mesh_size": self.mesh.mean_mesh_size}


def _side_nodes(mesh: LatticeMesh, x: float, y_lo: float, y_hi: float) -> np.ndarray:
    p = mesh.nodes
    sel = np.flatnonzero((p[:, 0] == x) & (p[:, 1] >= y_lo) & (p[:, 1] <= y_hi))
    return sel[np.argsort(p[sel, 1])]


def add_bars(mesh: LatticeMesh, spans, bar_width: float) -> LatticeMesh:
    """Mesh stiff strips glued to the side nodes over ``spans``.

    ``spans`` holds (side, y_lo, y_hi) with side -1 (left) or +1 (right).
    Strip nodes reuse the y positions of the glued side nodes, so the glue
    line is shared node-for-node.
    """
    nodes = [mesh.nodes]
    tags = [mesh.tags.copy()]
    tris = [mesh.triangles]
    n = mesh.n_nodes
    n_cols = max(1, round(bar_width / mesh.l_m))
    for side, y_lo, y_hi in spans:
        x_glue = mesh.domain.x0 if side < 0 else mesh.domain.x1
        glue = _side_nodes(mesh, x_glue, y_lo, y_hi)
        if len(glue) < 2:
            raise MeshError(f"bar span {y_lo:g}..{y_hi:g} mm covers fewer than two glue nodes")
        tags[0][glue] = TAG["bar_interface"]
        ys = mesh.nodes[glue, 1]
        prev = glue
        for c in range(1, n_cols + 1):
            x = x_glue + side * bar_width * c / n_cols
            col = np.arange(n, n + len(ys))
            nodes.append(np.column_stack([np.full(len(ys), x), ys]))
            tags.append(np.full(len(ys), TAG["bar"], dtype=np.int8))
            a0, a1, b0, b1 = prev[:-1], prev[1:], col[:-1], col[1:]
            tris.append(np.column_stack([a0, a1, b0]))
            tris.append(np.column_stack([b0, a1, b1]))
            prev = col
            n += len(ys)
    return assemble_mesh(np.vstack(nodes), np.concatenate(tags), np.vstack(tris), domain=mesh.domain,
                         l_m=mesh.l_m, l_min=mesh.l_min, seed=mesh.seed)


def build_specimen(geometry: SpecimenGeometry, l_m: float, mesh_seed: int, grains: GrainStructure | None = None,
                   table: MaterialTable | None = None, perturbation: float = 0.4) -> Specimen:
    """Mesh, notch, glue bars, classify and assign properties; unit load pattern."""
    table = table or MaterialTable()
    outline = geometry.outline
    grains = grains if grains is not None else empty_structure(outline)
    if grains.n and (grains.outline.x0 < outline.x0 or grains.outline.x1 > outline.x1
                     or grains.outline.y0 < outline.y0 or grains.outline.y1 > outline.y1):
        raise ValueError("grain structure outline exceeds the specimen")
    mesh = generate_mesh(outline, l_m, mesh_seed, perturbation)
    for notch in geometry.notches:
        mesh = carve_notch(mesh, notch)

    W, H = geometry.width, geometry.height
    if geometry.has_bars:
        if geometry.protocol == "DD":
            spans = [(-1, 0.0, H), (1, 0.0, H)]
        else:
            g = geometry.glue_fraction * H
            spans = [(-1, 0.0, g), (1, 0.0, g), (-1, H - g, H), (1, H - g, H)]
        mesh = add_bars(mesh, spans, geometry.bar_width)

    is_bar_node = mesh.tags == TAG["bar"]
    bar_el = is_bar_node[mesh.edges].any(axis=1)
    labels = np.full(mesh.n_elements, BAR, dtype=np.int8)
    labels[~bar_el] = classify_elements(mesh, grains, np.flatnonzero(~bar_el))
    states = assign_element_properties(mesh, labels, table)
    ends = mesh.nodes[mesh.edges, 1]
    for lo, hi in geometry.grip_zones():
        states.breakable[np.all((ends >= lo) & (ends <= hi), axis=1)] = False

    bc = BoundaryConditions.free(mesh.n_nodes)
    y = mesh.nodes[:, 1]
    if geometry.has_bars:
        ends = is_bar_node | (mesh.tags == TAG["bar_interface"])
        support = np.flatnonzero(ends & (y == 0.0))
        load = np.flatnonzero(ends & (y == H))
        bc.fix(support, 0).fix(support, 1)
        bc.fix(load, 0).fix(load, 1, 1.0)
    else:
        support = np.flatnonzero(y == 0.0)
        load = np.flatnonzero(y == H)
        bc.fix(support, 1).fix(load, 1, 1.0)
        x = mesh.nodes[:, 0]
        bc.fix(support[np.argmin(x[support])], 0)
        bc.fix(load[np.argmin(x[load])], 0)
    return Specimen(geometry, mesh, grains, labels, states, bc, load, support, table)


@dataclass
class BreakEvent:
    index: int
    element: int
    eta: float
    displacement: float      # mm, imposed displacement at this state
    force: float             # N per unit thickness, reaction at this state
    e_nominal: float
    e_actual: float
    midpoint: tuple
    phase: int
    width: float
    opening: float = 0.0


@dataclass
class SimulationRecord:
    descriptor: dict
    events: list = field(default_factory=list)
    terminated_reason: str = ""
    initial_reaction: float = 0.0
    volume: float = 0.0

    @property
    def load_curve(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([e.displacement for e in self.events]), np.array([e.force for e in self.events]))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.events])

    @property
    def midpoints(self) -> np.ndarray:
        return np.array([e.midpoint for e in self.events]).reshape(-1, 2)

    @property
    def broken(self) -> np.ndarray:
        return self.column("element").astype(np.int64)


def _bar_only_reaction(spec: Specimen) -> float:
    """Reaction of the bars alone under the unit pattern (0 when bars do not span the specimen)."""
    if not spec.geometry.has_bars or spec.geometry.protocol == "LD":
        return 0.0
    st = spec.states.copy()
    st.broken[spec.labels != BAR] = True
    u, _ = solve_reference(spec.mesh, st, spec.bc)
    return reaction_force(spec.mesh, st, u, spec.load_nodes, axis=1)


def run_quasistatic(spec: Specimen, *, max_events: int | None = None, reaction_ratio: float = 1e-6,
                    tol: float = 1e-10, refresh_after: int = 25, monitor=None,
                    compute_openings: bool = True) -> SimulationRecord:
    """Break elements one at a time, each at the load that makes it the weakest.

    Stops when no element can fail under further scaling, when the part of
    the unit-load reaction carried by the specimen (beyond what the bars
    alone carry) falls under ``reaction_ratio`` of its initial value, or at
    ``max_events``. ``monitor(event, fn, ft, states)`` sees the scaled forces
    of every recorded state before the element is removed.
    """
    mesh = spec.mesh
    states = spec.states.copy()
    bc = spec.bc
    cand_mask = states.breakable & ~states.broken
    if not cand_mask.any():
        raise ValueError("specimen has no breakable element")
    max_events = max_events if max_events is not None else int(cand_mask.sum())
    r_bar = _bar_only_reaction(spec)
    record = SimulationRecord(spec.descriptor(), volume=spec.volume)
    mid = mesh.midpoints

    u = None
    pre = None
    r0 = None
    while True:
        if pre is None:
            pre = FactorPreconditioner(mesh, states, ~bc.fixed)
        u, rep = solve_reference(mesh, states, bc, tol=tol, u0=u, preconditioner=pre)
        if rep.iterations > refresh_after:
            pre = None
        R = reaction_force(mesh, states, u, spec.load_nodes, axis=1)
        if r0 is None:
            r0 = R
            record.initial_reaction = R
        if abs(R - r_bar) < reaction_ratio * abs(r0 - r_bar):
            record.terminated_reason = "reaction"
            break
        fn, ft = element_forces(mesh, states, u)
        cand = np.flatnonzero(states.breakable & ~states.broken)
        eta = failure_scale(fn[cand], ft[cand], mesh.width[cand], states.sn0[cand], states.st0[cand], states.n)
        finite = np.isfinite(eta)
        if not finite.any():
            record.terminated_reason = "no_failure"
            break
        eta_min = eta[finite].min()
        tied = cand[finite & (eta <= eta_min * (1 + TIE_RTOL))]
        k = int(tied.min())
        e = float(eta[np.searchsorted(cand, k)])
        sfn, sft = e * fn, e * ft
        event = BreakEvent(
            index=len(record.events), element=k, eta=e, displacement=e, force=e * R,
            e_nominal=float(nominal_capacity_energy(mesh.width[k], states.kn[k], states.kt[k],
                                                    states.sn0[k], states.st0[k])),
            e_actual=float(0.5 * (sfn[k] ** 2 / states.kn[k] + sft[k] ** 2 / states.kt[k])),
            midpoint=(float(mid[k, 0]), float(mid[k, 1])), phase=int(states.phase[k]),
            width=float(mesh.width[k]))
        if monitor is not None:
            monitor(event, sfn, sft, states)
        states.broken[k] = True
        states.e_nominal[k] = event.e_nominal
        states.e_actual[k] = event.e_actual
        record.events.append(event)
        if len(record.events) >= max_events:
            record.terminated_reason = "max_events"
            break

    if compute_openings and record.events:
        for ev, op in zip(record.events, final_openings(spec, record, states=states, u_ref=u)):
            ev.opening = float(op)
    log.info("run finished: %d events, reason=%s", len(record.events), record.terminated_reason)
    return record


def final_openings(spec: Specimen, record: SimulationRecord, *, states: ElementStates | None = None,
                   u_ref: np.ndarray | None = None) -> np.ndarray:
    """Normal opening of every broken element at the last recorded load, all breaks applied.

    Returned in event order.
    """
    if not record.events:
        return np.zeros(0)
    if states is None:
        states = spec.states.copy()
        states.broken[record.broken] = True
        u_ref = None
    if u_ref is None or record.terminated_reason == "max_events":
        u_ref, _ = solve_reference(spec.mesh, states, spec.bc, u0=u_ref)
    u = record.events[-1].displacement * u_ref
    k = record.broken
    du = u[spec.mesh.edges[k, 0]] - u[spec.mesh.edges[k, 1]]
    return np.abs(np.einsum("ij,ij->i", du, spec.mesh.n0[k]))


__all__ = [
    "SpecimenGeometry", "Specimen", "BreakEvent", "SimulationRecord", "build_specimen", "run_quasistatic",
    "final_openings", "ld_geometry", "dd_geometry", "ligament_geometry", "large_geometry", "add_bars",
    "LIGAMENT_NOTCH",
]
