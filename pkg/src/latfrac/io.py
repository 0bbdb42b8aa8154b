"""File formats: mesh and grain JSON, element and event CSV, record JSON.

Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .engine import BreakEvent, SimulationRecord
from .grains import PHASE_NAMES, GradingSpec, GrainStructure
from .mesh import NODE_TAGS, TAG, Rect, assemble_mesh

EVENT_COLUMNS = ("event_index", "element_id", "phase", "midpoint_x", "midpoint_y", "eta_min", "displacement",
                 "force", "e_nominal", "e_actual", "width", "opening")
FORMAT_VERSION = 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_dump(obj, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")
    return p


# --- mesh ------------------------------------------------------------------------------------

def mesh_to_dict(mesh) -> dict:
    return {
        "format": FORMAT_VERSION,
        "nodes": [[float(x), float(y), NODE_TAGS[t]] for (x, y), t in zip(mesh.nodes, mesh.tags)],
        "triangles": mesh.triangles.tolist(),
        "elements": [[int(i), int(j), float(l), float(a), float(nx), float(ny)]
                     for (i, j), l, a, (nx, ny) in zip(mesh.edges, mesh.length, mesh.width, mesh.n0)],
        "seed": int(mesh.seed), "l_m": float(mesh.l_m), "l_min": float(mesh.l_min),
        "domain": list(map(float, mesh.domain)),
    }


def mesh_from_dict(d: dict):
    nodes = np.array([n[:2] for n in d["nodes"]], dtype=float)
    tags = np.array([TAG[n[2]] for n in d["nodes"]], dtype=np.int8)
    tris = np.array(d["triangles"], dtype=np.int64).reshape(-1, 3)
    return assemble_mesh(nodes, tags, tris, domain=Rect(*d["domain"]), l_m=d["l_m"],
                         l_min=d.get("l_min", 0.4 * d["l_m"]), seed=d["seed"])


def save_mesh(mesh, path) -> Path:
    return _json_dump(mesh_to_dict(mesh), path)


def load_mesh(path):
    return mesh_from_dict(json.loads(Path(path).read_text()))


# --- grains ----------------------------------------------------------------------------------

def grains_to_dict(g: GrainStructure) -> dict:
    return {"format": FORMAT_VERSION, "spec": g.spec.to_dict(), "seed": int(g.seed), "gap_min": float(g.gap_min),
            "outline": list(map(float, g.outline)), "achieved_fraction": g.achieved_fraction,
            "inclusions": [[float(x), float(y), float(d)] for (x, y), d in zip(g.centers, g.diameters)]}


def grains_from_dict(d: dict) -> GrainStructure:
    inc = np.array(d["inclusions"], dtype=float).reshape(-1, 3)
    return GrainStructure(inc[:, :2].copy(), inc[:, 2].copy(), Rect(*d["outline"]), GradingSpec(**d["spec"]),
                          int(d["seed"]), float(d.get("gap_min", 0.0)))


def save_grains(g, path) -> Path:
    return _json_dump(grains_to_dict(g), path)


def load_grains(path) -> GrainStructure:
    return grains_from_dict(json.loads(Path(path).read_text()))


# --- CSV tables ------------------------------------------------------------------------------

def write_csv(path, header, rows) -> Path:
    """CSV with '\\n' line ends; floats at full precision."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return p


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_element_csv(mesh, labels, path) -> Path:
    rows = ((k, PHASE_NAMES[labels[k]], int(i), int(j), mesh.length[k], mesh.width[k])
            for k, (i, j) in enumerate(mesh.edges))
    return write_csv(path, ("element_id", "phase", "node_i", "node_j", "length", "width"), rows)


def _event_row(e: BreakEvent):
    return (e.index, e.element, PHASE_NAMES[e.phase], e.midpoint[0], e.midpoint[1], e.eta, e.displacement,
            e.force, e.e_nominal, e.e_actual, e.width, e.opening)


def event_log_text(record: SimulationRecord) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for e in record.events:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in _event_row(e)])
    return buf.getvalue()


def write_event_log(record: SimulationRecord, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(event_log_text(record))
    return p


def read_event_log(path) -> list[BreakEvent]:
    out = []
    for r in read_csv(path):
        out.append(BreakEvent(index=int(r["event_index"]), element=int(r["element_id"]),
                              eta=float(r["eta_min"]), displacement=float(r["displacement"]),
                              force=float(r["force"]), e_nominal=float(r["e_nominal"]),
                              e_actual=float(r["e_actual"]),
                              midpoint=(float(r["midpoint_x"]), float(r["midpoint_y"])),
                              phase=PHASE_NAMES.index(r["phase"]), width=float(r["width"]),
                              opening=float(r["opening"])))
    return out


# --- record envelope -------------------------------------------------------------------------

def record_to_dict(record: SimulationRecord, config_hash: str | None = None, seeds: dict | None = None) -> dict:
    return {"format": FORMAT_VERSION, "config_hash": config_hash, "seeds": seeds or {},
            "descriptor": record.descriptor, "terminated_reason": record.terminated_reason,
            "initial_reaction": record.initial_reaction, "volume": record.volume,
            "events": [asdict(e) for e in record.events]}


def record_from_dict(d: dict) -> SimulationRecord:
    names = {f.name for f in fields(BreakEvent)}
    events = [BreakEvent(**{k: (tuple(v) if k == "midpoint" else v) for k, v in e.items() if k in names})
              for e in d["events"]]
    return SimulationRecord(descriptor=d["descriptor"], events=events, terminated_reason=d["terminated_reason"],
                            initial_reaction=d["initial_reaction"], volume=d["volume"])


def save_record(record, path, config_hash=None, seeds=None) -> Path:
    return _json_dump(record_to_dict(record, config_hash, seeds), path)


def load_record(path) -> SimulationRecord:
    return record_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "EVENT_COLUMNS", "mesh_to_dict", "mesh_from_dict", "save_mesh", "load_mesh", "grains_to_dict",
    "grains_from_dict", "save_grains", "load_grains", "write_csv", "read_csv", "write_element_csv",
    "event_log_text", "write_event_log", "read_event_log", "record_to_dict", "record_from_dict", "save_record",
    "load_record", "fmt",
]
