"""Phase parameters, element stiffnesses and the failure surface.

Units: mm, N, MPa (= N/mm^2); stiffness moduli are given in GPa and
converted on assignment. Everything is per unit out-of-plane thickness.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .grains import BAR, INCLUSION, ITZ, MATRIX, PHASE_NAMES
from .mesh import LatticeMesh

GPA = 1000.0  # N/mm^2


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    kn: float          # GPa
    kt: float          # GPa
    sn0: float = 0.0   # MPa
    st0: float = 0.0   # MPa
    breakable: bool = True

    def __post_init__(self):
        if not (self.kn > 0 and self.kt > 0):
            raise ValueError(f"phase {self.name}: stiffnesses must be positive (kn={self.kn}, kt={self.kt})")
        if self.breakable and not (self.sn0 > 0 and self.st0 > 0):
            raise ValueError(f"phase {self.name}: breakable phases need positive strengths")

    def scaled(self, stiffness: float, strength: float, name: str | None = None, **kw) -> "PhaseSpec":
        return replace(self, name=name or self.name, kn=self.kn * stiffness, kt=self.kt * stiffness,
                       sn0=self.sn0 * strength, st0=self.st0 * strength, **kw)


# bulk matrix parameters used throughout the study
MATRIX_DEFAULT = PhaseSpec("matrix", kn=16.50, kt=5.10, sn0=6.07, st0=18.21)


@dataclass(frozen=True)
class MaterialTable:
    matrix: PhaseSpec = MATRIX_DEFAULT
    inclusion: PhaseSpec = field(default_factory=lambda: MATRIX_DEFAULT.scaled(10, 10, "inclusion"))
    itz: PhaseSpec = field(default_factory=lambda: MATRIX_DEFAULT.scaled(0.5, 0.5, "itz"))
    bar: PhaseSpec = field(default_factory=lambda: MATRIX_DEFAULT.scaled(10, 1, "bar", breakable=False))
    n: float = 5.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"failure exponent n must be >= 1, got {self.n}")

    @classmethod
    def default(cls, three_phase: bool = True, matrix: PhaseSpec = MATRIX_DEFAULT,
                inclusion_ratio: float = 10.0, itz_ratio: float = 0.5, bar_ratio: float = 10.0,
                n: float = 5.0) -> "MaterialTable":
        """Matrix-based table: inclusions stiffer and stronger, ITZ weaker.

        With ``three_phase=False`` the ITZ carries matrix properties.
        """
        itz = matrix.scaled(itz_ratio, itz_ratio, "itz") if three_phase else replace(matrix, name="itz")
        return cls(matrix=matrix,
                   inclusion=matrix.scaled(inclusion_ratio, inclusion_ratio, "inclusion"),
                   itz=itz,
                   bar=matrix.scaled(bar_ratio, 1.0, "bar", breakable=False),
                   n=n)

    def phases(self) -> tuple[PhaseSpec, ...]:
        """Phases indexed by the integer labels of :mod:`latfrac.grains`."""
        return (self.matrix, self.inclusion, self.itz, self.bar)

    def to_dict(self) -> dict:
        return {"n": self.n, **{k: asdict(p) for k, p in zip(PHASE_NAMES, self.phases())}}

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialTable":
        kw = {k: PhaseSpec(**d[k]) for k in PHASE_NAMES if k in d}
        if "n" in d:
            kw["n"] = float(d["n"])
        return cls(**kw)


def moduli_from_elastic(E: float, nu: float) -> tuple[float, float]:
    """Phase moduli (kn, kt) targeting Young's modulus E and Poisson ratio nu."""
    if not 0 <= nu < 1 / 3:
        raise ValueError(f"Poisson ratio {nu} outside [0, 1/3): shear stiffness would not be positive")
    return E / (1 - nu), E * (1 - 3 * nu) / (1 - nu**2)


def elastic_from_moduli(kn: float, kt: float) -> tuple[float, float]:
    """Inverse of :func:`moduli_from_elastic`, returns (E, nu)."""
    nu = (kn - kt) / (3 * kn + kt)
    return kn * (1 - nu), nu


def failure_value(fn, ft, A, sn0, st0, n):
    """psi = fn/(A sn0) + (|ft|/(A st0))^n - 1; failure when psi >= 0."""
    fn, ft, A = np.asarray(fn, float), np.asarray(ft, float), np.asarray(A, float)
    return fn / (A * sn0) + (np.abs(ft) / (A * st0)) ** n - 1.0


def failure_scale(fn, ft, A, sn0, st0, n, *, tol: float = 1e-12):
    """Positive factor eta with psi(eta*fn, eta*ft) = 0, +inf if none exists.

    Solves a*eta + (b*eta)^n = 1 with a = fn/(A sn0), b = |ft|/(A st0).
    The left side is convex and starts at 0, so the positive root is unique.
    Vectorised bisection brackets it, Newton steps polish it. For n = 1 the
    root exists only when a + b > 0.
    """
    scalar = np.ndim(fn) == 0 and np.ndim(ft) == 0
    fn, ft, A = np.broadcast_arrays(np.asarray(fn, float), np.asarray(ft, float), np.asarray(A, float))
    sn0, st0 = np.broadcast_to(sn0, fn.shape), np.broadcast_to(st0, fn.shape)
    a = (fn / (A * sn0)).ravel()
    b = (np.abs(ft) / (A * st0)).ravel()
    eta = np.full(a.shape, np.inf)

    if n == 1:
        # linear surface: (a + b) eta = 1
        lin = a + b > 0
        with np.errstate(over="ignore"):
            eta[lin] = 1.0 / (a + b)[lin]
        return float(eta[0]) if scalar else eta.reshape(fn.shape)
    lin = (b == 0) & (a > 0)
    with np.errstate(over="ignore"):
        eta[lin] = 1.0 / a[lin]
    act = np.flatnonzero(b > 0)
    if act.size:
        with np.errstate(over="ignore", divide="ignore"):
            eta[act] = _solve_root(a[act], b[act], float(n), tol)
    eta = eta.reshape(fn.shape)
    return float(eta) if scalar else eta


def _solve_root(a: np.ndarray, b: np.ndarray, n: float, tol: float) -> np.ndarray:
    def g(x):
        return a * x + (b * x) ** n - 1.0

    # upper bracket: at x = 1/b the power term alone is 1; extend while a < 0 keeps g negative
    hi = 1.0 / b
    lo = np.zeros_like(a)
    pos = a > 0
    hi[pos] = np.minimum(hi[pos], 1.0 / a[pos])
    for _ in range(200):
        neg = g(hi) < 0
        if not neg.any():
            break
        lo[neg] = hi[neg]
        hi[neg] *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        lo = np.where(gm < 0, mid, lo)
        hi = np.where(gm < 0, hi, mid)
        if np.all(hi - lo <= 1e-6 * hi):
            break
    x = hi
    for _ in range(20):
        gx = g(x)
        if np.all(np.abs(gx) < tol):
            break
        dg = a + n * b * (b * x) ** (n - 1)
        step = gx / dg
        x_new = x - step
        ok = (x_new > lo) & np.isfinite(x_new)
        x = np.where(ok, x_new, 0.5 * (lo + x))
    # last-ulp cleanup: pick the neighbour with the smallest residual
    best = x
    for cand in (np.nextafter(x, 0), np.nextafter(x, np.inf)):
        better = np.abs(g(cand)) < np.abs(g(best))
        best = np.where(better, cand, best)
    return best


@dataclass(eq=False)
class ElementStates:
    """Per-element assigned properties and damage bookkeeping (mutable)."""

    phase: np.ndarray       # (E,) int labels
    kn: np.ndarray          # N/mm
    kt: np.ndarray          # N/mm
    sn0: np.ndarray         # N/mm^2
    st0: np.ndarray         # N/mm^2
    breakable: np.ndarray   # bool
    n: float
    broken: np.ndarray = None
    e_nominal: np.ndarray = None
    e_actual: np.ndarray = None

    def __post_init__(self):
        m = len(self.phase)
        if self.broken is None:
            self.broken = np.zeros(m, dtype=bool)
        if self.e_nominal is None:
            self.e_nominal = np.zeros(m)
        if self.e_actual is None:
            self.e_actual = np.zeros(m)

    def __len__(self) -> int:
        return len(self.phase)

    @property
    def active(self) -> np.ndarray:
        return ~self.broken

    def copy(self) -> "ElementStates":
        return ElementStates(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})


def assign_element_properties(mesh: LatticeMesh, labels, table: MaterialTable) -> ElementStates:
    """Stiffness per element, weighted by its geometry A/l, plus phase strengths."""
    labels = np.asarray(labels)
    if labels.shape != (mesh.n_elements,):
        raise ValueError(f"need one label per element ({mesh.n_elements}), got shape {labels.shape}")
    if np.any((labels < 0) | (labels >= len(PHASE_NAMES))):
        k = int(np.flatnonzero((labels < 0) | (labels >= len(PHASE_NAMES)))[0])
        raise ValueError(f"element {k} has no valid phase label ({labels[k]})")
    phases = table.phases()
    pick = lambda attr: np.array([getattr(p, attr) for p in phases], dtype=float)[labels]  # noqa: E731
    geom = mesh.width / mesh.length
    return ElementStates(
        phase=labels.astype(np.int8).copy(),
        kn=geom * pick("kn") * GPA,
        kt=geom * pick("kt") * GPA,
        sn0=pick("sn0"),
        st0=pick("st0"),
        breakable=np.array([p.breakable for p in phases])[labels],
        n=float(table.n),
    )


def nominal_capacity_energy(A, kn, kt, sn0, st0):
    """Elastic energy stored at the pure-normal plus pure-shear ultimate states."""
    A = np.asarray(A, float)
    return 0.5 * A**2 * (np.asarray(sn0) ** 2 / kn + np.asarray(st0) ** 2 / kt)


__all__ = [
    "PhaseSpec", "MaterialTable", "MATRIX_DEFAULT", "ElementStates", "moduli_from_elastic",
    "elastic_from_moduli", "failure_value", "failure_scale", "assign_element_properties",
    "nominal_capacity_energy", "MATRIX", "INCLUSION", "ITZ", "BAR",
]
