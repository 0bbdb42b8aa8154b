"""Circular inclusions: take-and-place packing and phase classification."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import LatticeMesh, Rect

MATRIX, INCLUSION, ITZ, BAR = 0, 1, 2, 3
PHASE_NAMES = ("matrix", "inclusion", "itz", "bar")

MAX_REJECTIONS = 10**6
_BATCH = 4096


class PackingError(RuntimeError):
    """Take-and-place stalled before reaching its target."""

    def __init__(self, msg: str, achieved_fraction: float):
        super().__init__(f"{msg} (achieved fraction {achieved_fraction:.4f})")
        self.achieved_fraction = achieved_fraction


class OverlapError(ValueError):
    def __init__(self, i: int, j: int, gap: float, gap_min: float):
        super().__init__(f"inclusions {i} and {j} are {gap:.4g} mm apart, below gap_min={gap_min:g} mm")
        self.pair = (i, j)


@dataclass(frozen=True)
class GradingSpec:
    """Size distribution and target of a take-and-place run.

    ``kind`` is ``"monodisperse"`` (uses ``d``) or ``"fuller"`` (uses
    ``d_min``, ``d_max``, ``n_classes`` and exponent ``q``). The target is
    either a surface ``fraction`` or, for monodisperse packings, a ``count``.
    """

    kind: str = "monodisperse"
    d: float | None = None
    fraction: float | None = None
    count: int | None = None
    d_min: float | None = None
    d_max: float | None = None
    n_classes: int = 4
    q: float = 0.5

    def __post_init__(self):
        if self.kind == "monodisperse":
            if self.d is None or self.d <= 0:
                raise ValueError("monodisperse grading needs d > 0")
            if (self.fraction is None) == (self.count is None):
                raise ValueError("give exactly one of fraction or count")
        elif self.kind == "fuller":
            if not (self.d_min and self.d_max and 0 < self.d_min < self.d_max):
                raise ValueError("fuller grading needs 0 < d_min < d_max")
            if self.n_classes < 2:
                raise ValueError("fuller grading needs n_classes >= 2")
            if self.fraction is None:
                raise ValueError("fuller grading needs a target fraction")
        else:
            raise ValueError(f"unknown grading kind {self.kind!r}")
        if self.fraction is not None and not 0 <= self.fraction < 1:
            raise ValueError(f"fraction must lie in [0, 1), got {self.fraction}")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True, eq=False)
class GrainStructure:
    centers: np.ndarray        # (M, 2) mm
    diameters: np.ndarray      # (M,) mm
    outline: Rect
    spec: GradingSpec
    seed: int
    gap_min: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.diameters)

    @property
    def achieved_fraction(self) -> float:
        return float(np.sum(np.pi * self.diameters**2 / 4) / self.outline.area)

    def min_gap(self) -> tuple[float, int, int]:
        """Smallest surface-to-surface distance and the pair realising it."""
        if self.n < 2:
            return math.inf, -1, -1
        d = np.linalg.norm(self.centers[:, None] - self.centers[None], axis=-1)
        gap = d - 0.5 * (self.diameters[:, None] + self.diameters[None])
        np.fill_diagonal(gap, np.inf)
        k = int(np.argmin(gap))
        i, j = divmod(k, self.n)
        return float(gap[i, j]), min(i, j), max(i, j)


def empty_structure(outline, seed: int = 0) -> GrainStructure:
    spec = GradingSpec(kind="monodisperse", d=1.0, fraction=0.0)
    return GrainStructure(np.zeros((0, 2)), np.zeros(0), Rect(*outline), spec, seed)


class _Placer:
    """Sequential random placement with rejection; one RNG stream per structure."""

    def __init__(self, outline: Rect, gap_min: float, rng: np.random.Generator, max_rejections: int):
        self.outline = outline
        self.gap_min = gap_min
        self.rng = rng
        self.max_rejections = max_rejections
        self._c = np.zeros((0, 2))
        self._d = np.zeros(0)

    def fraction(self) -> float:
        return float(np.sum(np.pi * self._d**2 / 4) / self.outline.area)

    def place(self, d: float) -> None:
        o = self.outline
        r = 0.5 * d
        if o.width <= d or o.height <= d:
            raise PackingError(f"inclusion d={d:g} mm does not fit the {o.width:g}x{o.height:g} outline",
                               self.fraction())
        rejected = 0
        while rejected < self.max_rejections:
            n = min(_BATCH, self.max_rejections - rejected)
            cand = np.column_stack([self.rng.uniform(o.x0 + r, o.x1 - r, n),
                                    self.rng.uniform(o.y0 + r, o.y1 - r, n)])
            if len(self._d):
                dist = np.linalg.norm(cand[:, None] - self._c[None], axis=-1)
                ok = np.all(dist >= r + 0.5 * self._d + self.gap_min, axis=1)
            else:
                ok = np.ones(n, dtype=bool)
            hit = np.flatnonzero(ok)
            if hit.size:
                rejected += int(hit[0])
                c = cand[hit[0]]
                self._c = np.vstack([self._c, c])
                self._d = np.append(self._d, d)
                return
            rejected += n
        raise PackingError(f"{self.max_rejections} consecutive rejections placing d={d:g} mm", self.fraction())

    def result(self, spec: GradingSpec, seed: int, **meta) -> GrainStructure:
        return GrainStructure(self._c.copy(), self._d.copy(), self.outline, spec, seed, self.gap_min, meta)


def place_monodisperse(outline, d: float, *, fraction: float | None = None, count: int | None = None,
                       gap_min: float = 0.0, seed: int = 0,
                       max_rejections: int = MAX_REJECTIONS) -> GrainStructure:
    """Take-and-place of equal disks fully inside ``outline``.

    With a ``fraction`` target, disks are added while the next one keeps the
    surface fraction at or below the target.
    """
    outline = Rect(*map(float, outline))
    spec = GradingSpec(kind="monodisperse", d=d, fraction=fraction, count=count)
    if d >= min(outline.width, outline.height) / 2:
        raise ValueError(f"d={d} mm too large for outline {outline.width:g}x{outline.height:g} mm")
    placer = _Placer(outline, gap_min, np.random.default_rng(seed), max_rejections)
    disk = math.pi * d * d / 4
    n_target = count if count is not None else int(math.floor(fraction * outline.area / disk + 1e-9))
    for _ in range(n_target):
        placer.place(d)
    return placer.result(spec, seed)


def rescale_diameters(grains: GrainStructure, d: float, *, check: bool = True) -> GrainStructure:
    """Same centers, new diameter (variation at fixed positions)."""
    new = replace(grains, diameters=np.full(grains.n, float(d)),
                  spec=replace(grains.spec, d=float(d), fraction=None, count=grains.n)
                  if grains.spec.kind == "monodisperse" else grains.spec)
    if check and new.n:
        r = 0.5 * d
        o = new.outline
        c = new.centers
        out = (c[:, 0] - r < o.x0) | (c[:, 0] + r > o.x1) | (c[:, 1] - r < o.y0) | (c[:, 1] + r > o.y1)
        if out.any():
            raise ValueError(f"inclusion {int(np.flatnonzero(out)[0])} leaves the outline at d={d:g} mm")
        gap, i, j = new.min_gap()
        if gap < new.gap_min:
            raise OverlapError(i, j, gap, new.gap_min)
    return new


def fuller_passing(D, d_max: float, q: float = 0.5):
    """Cumulative passing fraction (D / d_max)^q."""
    return (np.asarray(D, dtype=float) / d_max) ** q


def fuller_classes(d_min: float, d_max: float, n_classes: int, q: float = 0.5):
    """Log-spaced sieve classes and each class' share of the inclusion area."""
    sieves = np.geomspace(d_min, d_max, n_classes + 1)
    p = fuller_passing(sieves, d_max, q)
    share = np.diff(p) / (p[-1] - p[0])
    return sieves, share


def place_fuller(outline, d_min: float, d_max: float, fraction: float, *, n_classes: int = 4,
                 q: float = 0.5, gap_min: float = 0.0, seed: int = 0, mesh_size: float | None = None,
                 max_rejections: int = MAX_REJECTIONS) -> GrainStructure:
    """Polydisperse take-and-place following a Fuller grading curve.

    Classes are filled from the largest down. Within a class, diameters are
    drawn from the number density implied by the continuous curve
    restricted to the class.
    """
    outline = Rect(*map(float, outline))
    spec = GradingSpec(kind="fuller", fraction=fraction, d_min=d_min, d_max=d_max, n_classes=n_classes, q=q)
    if mesh_size is not None and d_min < 2 * mesh_size:
        warnings.warn(f"d_min={d_min} mm is below two mesh sizes ({2 * mesh_size:g} mm)", stacklevel=2)
    rng = np.random.default_rng(seed)
    placer = _Placer(outline, gap_min, rng, max_rejections)
    sieves, share = fuller_classes(d_min, d_max, n_classes, q)
    total = fraction * outline.area
    carry = 0.0
    for k in range(n_classes - 1, -1, -1):
        lo, hi = sieves[k], sieves[k + 1]
        target = total * share[k] + carry
        placed = 0.0
        while True:
            d = _sample_fuller_diameter(rng, lo, hi, q)
            a = math.pi * d * d / 4
            if placed + a > target:
                # try the smallest size of the class before closing it
                a_lo = math.pi * lo * lo / 4
                if placed + a_lo > target:
                    break
                d, a = lo, a_lo
            placer.place(d)
            placed += a
        carry = target - placed
    return placer.result(spec, seed, sieves=sieves.tolist())


def _sample_fuller_diameter(rng, lo: float, hi: float, q: float) -> float:
    # area density dP/dD ~ D^(q-1), so number density ~ D^(q-3); inverse cdf below
    e = q - 2.0
    u = rng.random()
    return float((lo**e + u * (hi**e - lo**e)) ** (1.0 / e))


def _containing_disk(points: np.ndarray, grains: GrainStructure) -> np.ndarray:
    """Index of the disk strictly containing each point, -1 for none."""
    out = np.full(len(points), -1, dtype=np.int64)
    if grains.n == 0:
        return out
    r2 = (0.5 * grains.diameters) ** 2
    chunk = max(1, 2_000_000 // grains.n)
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        d2 = ((p[:, None, :] - grains.centers[None]) ** 2).sum(-1)
        inside = d2 < r2[None]
        hit = inside.any(axis=1)
        out[s:s + chunk][hit] = np.argmax(inside[hit], axis=1)
    return out


def classify_elements(mesh: LatticeMesh, grains: GrainStructure, elements=None) -> np.ndarray:
    """Phase label per element from the position of its end nodes and midpoint.

    Both ends inside the same disk give ``INCLUSION``, both ends outside all
    disks give ``MATRIX``. Otherwise the midpoint decides: inside a disk is
    ``INCLUSION``, outside is ``ITZ``.
    """
    idx = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    node_disk = _containing_disk(mesh.nodes, grains)
    i, j = mesh.edges[idx, 0], mesh.edges[idx, 1]
    di, dj = node_disk[i], node_disk[j]
    labels = np.full(len(idx), ITZ, dtype=np.int8)
    same = di == dj
    labels[same & (di >= 0)] = INCLUSION
    labels[same & (di < 0)] = MATRIX
    mixed = np.flatnonzero(~same)
    if mixed.size:
        mid = 0.5 * (mesh.nodes[i[mixed]] + mesh.nodes[j[mixed]])
        labels[mixed[_containing_disk(mid, grains) >= 0]] = INCLUSION
    return labels


def surface_fractions(mesh: LatticeMesh, labels: np.ndarray, *, weighted: bool = False) -> dict:
    """Share of inclusion, ITZ and matrix among the labelled elements.

    ``weighted`` uses the element areas A*l instead of plain counts. Bar
    elements are ignored.
    """
    labels = np.asarray(labels)
    keep = labels != BAR
    w = (mesh.width * mesh.length)[keep] if weighted else np.ones(keep.sum())
    lab = labels[keep]
    total = w.sum()
    if total == 0:
        return {"inclusion": 0.0, "itz": 0.0, "matrix": 0.0}
    return {name: float(w[lab == code].sum() / total)
            for name, code in (("inclusion", INCLUSION), ("itz", ITZ), ("matrix", MATRIX))}
