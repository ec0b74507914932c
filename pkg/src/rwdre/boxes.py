"""Renormalization scales, boxes, child index sets and separation geometry.

A level-k box anchored at w spans w + [-4*lam*h*L_k, 5*lam*h*L_k) in space
and w + [0, h*L_k) in time; its bottom interval I is w + [0, lam*h*L_k).
Children of a level-k box live at level k-1 with anchors
w + (i*lam*h*L_{k-1}, j*h*L_{k-1}), (i, j) in [-4l, 5l-1] x [0, l-1] where
l = l_{k-1}, so every lattice point of the box at a child time level lies in
some child's bottom interval.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field


class ScaleError(ValueError):
    """Scale construction violated a structural constraint."""


def nu_constraint_ok(nu: float, gamma: float) -> bool:
    """The production-scale constraint 6 * (1 + nu)^(3*gamma) <= 7."""
    return 6.0 * (1.0 + nu) ** (3.0 * gamma) <= 7.0


@dataclass
class ScaleSequence:
    """Scales L_{k+1} = floor(L_k^nu) * L_k with their multipliers."""

    L0: int
    nu: float
    gamma: float
    strict: bool
    levels: list[tuple[int, int]] = field(default_factory=list)  # (L_k, l_k)
    warnings_issued: list[str] = field(default_factory=list)

    def L(self, k: int) -> int:
        return self.levels[k][0]

    def ell(self, k: int) -> int:
        return self.levels[k][1]

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1


def build_scales(L0: int, nu: float, gamma: float, k_max: int, strict: bool = False) -> ScaleSequence:
    """Build the scale sequence up to level k_max.

    In strict mode the nu-constraint must hold and scales must not stagnate
    (l_k = 1); outside strict mode both conditions downgrade to warnings so
    that desk-size experiments stay possible.
    """
    if L0 < 2:
        raise ScaleError("L0 must be at least 2")
    if not 0.0 < nu < 1.0:
        raise ScaleError("nu must lie in (0, 1)")
    if gamma <= 1.0:
        raise ScaleError("gamma must exceed 1")
    seq = ScaleSequence(L0, nu, gamma, strict)
    if not nu_constraint_ok(nu, gamma):
        msg = (
            f"nu-constraint violated: 6*(1+{nu})^(3*{gamma}) = "
            f"{6.0 * (1.0 + nu) ** (3.0 * gamma):.4g} > 7"
        )
        if strict:
            raise ScaleError(msg)
        seq.warnings_issued.append(msg)
        warnings.warn(msg, stacklevel=2)
    L = L0
    for k in range(k_max + 1):
        ell = int(math.floor(L**nu))
        if ell == 1:
            msg = f"scales stagnate at level {k}: floor({L}^{nu}) = 1"
            if strict:
                raise ScaleError(msg)
            if msg not in seq.warnings_issued:
                seq.warnings_issued.append(msg)
                warnings.warn(msg, stacklevel=2)
        seq.levels.append((L, ell))
        nxt = ell * L
        if not L <= nxt <= L ** (1.0 + nu):
            raise ScaleError(f"sandwich violated at level {k}")
        L = nxt
    return seq


@dataclass(frozen=True)
class BoxIndex:
    """m = (h, k, w): scaling factor, level and anchor point."""

    h: float
    k: int
    w: tuple[float, float]

    def __post_init__(self):
        if self.h < 1.0:
            raise ValueError("h must be at least 1")
        if self.k < 0:
            raise ValueError("level must be non-negative")
        if self.w[1] < 0:
            raise ValueError("anchor time must be non-negative")


def box_bounds(m: BoxIndex, scales: ScaleSequence, lam: float) -> tuple[float, float, float, float]:
    """(x0, x1, t0, t1) of B_m."""
    size = m.h * scales.L(m.k)
    wx, wt = m.w
    return (wx - 4.0 * lam * size, wx + 5.0 * lam * size, wt, wt + size)


def interval_bounds(m: BoxIndex, scales: ScaleSequence, lam: float) -> tuple[float, float, float]:
    """(x0, x1, t) of the bottom interval I_m."""
    size = m.h * scales.L(m.k)
    wx, wt = m.w
    return (wx, wx + lam * size, wt)


def children(m: BoxIndex, scales: ScaleSequence, lam: float) -> list[BoxIndex]:
    """Child boxes at level k-1, ordered by (i, j) ascending."""
    if m.k < 1:
        raise ValueError("level-0 boxes have no children")
    ell = scales.ell(m.k - 1)
    child = m.h * scales.L(m.k - 1)
    wx, wt = m.w
    out = []
    for i in range(-4 * ell, 5 * ell):
        for j in range(ell):
            out.append(BoxIndex(m.h, m.k - 1, (wx + i * lam * child, wt + j * child)))
    return out


def lattice_starts(x0: float, x1: float) -> range:
    """Integer sites in the half-open interval [x0, x1)."""
    return range(math.ceil(x0), math.ceil(x1))


def corner_set(m: BoxIndex, scales: ScaleSequence, lam: float):
    """Lattice points of B_m at the child time levels.

    Returns (sites range, child_scale, time offsets list). Asserts the
    paper's cardinality bound 9 * (h L_{k-1})^3.
    """
    if m.k < 1:
        raise ValueError("corner sets need level >= 1")
    x0, x1, t0, _ = box_bounds(m, scales, lam)
    child = m.h * scales.L(m.k - 1)
    ell = scales.ell(m.k - 1)
    sites = lattice_starts(x0, x1)
    count = len(sites) * ell
    bound = 9.0 * child**3
    if count > bound:
        raise AssertionError(f"corner-set cardinality {count} exceeds 9*(hL_k)^3 = {bound:.4g}")
    times = [t0 + j * child for j in range(ell)]
    return sites, child, times


@dataclass(frozen=True)
class Region:
    """Axis-aligned space-time region; infinite extents allowed."""

    x0: float
    x1: float
    t0: float
    t1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.t0 <= self.t1):
            raise ValueError("malformed region")

    @property
    def height(self) -> float:
        return self.t1 - self.t0


def region_distances(b1: Region, b2: Region) -> tuple[float, float]:
    """(dist_H, dist_V): horizontal and vertical gaps (0 when overlapping)."""
    d_h = max(b1.x0 - b2.x1, b2.x0 - b1.x1, 0.0)
    d_v = max(b1.t0 - b2.t1, b2.t0 - b1.t1, 0.0)
    return d_h, d_v


def check_distance_condition(b1: Region, b2: Region, params) -> tuple[bool, tuple[float, float, float]]:
    """Lateral-decoupling separation: dist_H >= v.dist_V + C2 s + C3.

    The regions must be a left and a right half-strip of equal height.
    """
    if not (math.isinf(b1.x0) and b1.x0 < 0 and math.isinf(b2.x1) and b2.x1 > 0):
        raise ValueError("expected a left half-strip and a right half-strip")
    if abs(b1.height - b2.height) > 1e-12:
        raise ValueError("half-strips must have equal height")
    s = b1.height
    d_h, d_v = region_distances(b1, b2)
    ok = d_h >= params.v_circ * d_v + params.c2 * s + params.c3
    return ok, (d_h, d_v, s)
