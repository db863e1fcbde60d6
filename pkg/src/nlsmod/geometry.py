"""Branchpoints, arcs, loop contours and the radical R(z).

Conventions used throughout the package:

* ``upper[j]`` is alpha_{2j} (Im > 0) and ``lower[j]`` is alpha_{2j+1}; for
  Schwarz-symmetric sets ``lower[j] == conj(upper[j])``.
* Main arc 0 runs alpha_1 -> alpha_0.  For k = 1..N the main arc k is the pair
  alpha_{4k-2} -> alpha_{4k} and alpha_{4k+1} -> alpha_{4k-1}; the
  complementary arc k is alpha_{4k-4} -> alpha_{4k-2} and
  alpha_{4k-1} -> alpha_{4k-3}.  Main arcs are the branch cuts of R.
* Every loop is traversed clockwise.  A clockwise loop around a main arc gives
  twice the arc integral taken with the boundary value of R from the left of
  the arc.  Loops around complementary arcs cross the two adjacent cuts; each
  of their segments carries a ``sheet`` sign so that ``sheet * R`` is the
  analytic continuation of R along the loop, with sheet = +1 on the stretch
  to the left of the arc.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from shapely.geometry import LineString, MultiLineString, Point
from shapely.ops import unary_union

TWO_PI = 2 * math.pi
ON_CONTOUR_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid branchpoints, colliding arcs or loops, or a point on a contour."""


# --------------------------------------------------------------------------
# segments and paths


@dataclass(frozen=True)
class Line:
    start: complex
    end: complex
    sheet: int = 1

    def point(self, s):
        return self.start + s * (self.end - self.start)

    def deriv(self, s):
        return (self.end - self.start) * np.ones_like(s)

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def reversed(self) -> Line:
        return Line(self.end, self.start, self.sheet)

    def with_sheet(self, sheet: int) -> Line:
        return Line(self.start, self.end, sheet)

    def split(self, params) -> list[Line]:
        pts = [self.start] + [self.point(s) for s in params] + [self.end]
        return [Line(a, b, self.sheet) for a, b in zip(pts[:-1], pts[1:])]

    def distance(self, z: complex) -> float:
        d = self.end - self.start
        if d == 0:
            return abs(z - self.start)
        s = ((z - self.start) * d.conjugate()).real / abs(d) ** 2
        s = min(max(s, 0.0), 1.0)
        return abs(z - self.point(s))

    def arg_increment(self, z: complex) -> float:
        return cmath.phase((self.end - z) / (self.start - z))

    def crossing_params(self, p: complex, q: complex) -> list[float]:
        """Parameters s in (0, 1) where this segment crosses segment p -> q."""
        d1 = self.end - self.start
        d2 = q - p
        den = (d1.conjugate() * d2).imag
        if den == 0:
            return []
        w = p - self.start
        s = (w.conjugate() * d2).imag / den
        u = (w.conjugate() * d1).imag / den
        if 0 < s < 1 and 0 <= u <= 1:
            return [s]
        return []

    def real_axis_params(self) -> list[float]:
        y0, y1 = self.start.imag, self.end.imag
        if (y0 < 0 < y1) or (y1 < 0 < y0):
            return [y0 / (y0 - y1)]
        return []


@dataclass(frozen=True)
class CircArc:
    """Circular arc center + radius * exp(i theta), theta from theta0 to theta1."""

    center: complex
    radius: float
    theta0: float
    theta1: float
    sheet: int = 1

    def point(self, s):
        return self.center + self.radius * np.exp(1j * (self.theta0 + s * (self.theta1 - self.theta0)))

    def deriv(self, s):
        th = self.theta0 + s * (self.theta1 - self.theta0)
        return 1j * self.radius * (self.theta1 - self.theta0) * np.exp(1j * th)

    @property
    def start(self) -> complex:
        return complex(self.point(0.0))

    @property
    def end(self) -> complex:
        return complex(self.point(1.0))

    @property
    def length(self) -> float:
        return self.radius * abs(self.theta1 - self.theta0)

    def reversed(self) -> CircArc:
        return CircArc(self.center, self.radius, self.theta1, self.theta0, self.sheet)

    def with_sheet(self, sheet: int) -> CircArc:
        return CircArc(self.center, self.radius, self.theta0, self.theta1, sheet)

    def split(self, params) -> list[CircArc]:
        th = [self.theta0] + [self.theta0 + s * (self.theta1 - self.theta0) for s in params] + [self.theta1]
        return [CircArc(self.center, self.radius, a, b, self.sheet) for a, b in zip(th[:-1], th[1:])]

    def _param_of_angle(self, phi: float) -> float | None:
        span = self.theta1 - self.theta0
        delta = math.copysign(1.0, span) * (phi - self.theta0)
        delta = delta % TWO_PI
        s = delta / abs(span)
        return s if s <= 1 else None

    def distance(self, z: complex) -> float:
        w = z - self.center
        if w != 0 and self._param_of_angle(cmath.phase(w)) is not None:
            return abs(abs(w) - self.radius)
        if w == 0:
            return self.radius
        return min(abs(z - self.start), abs(z - self.end))

    def arg_increment(self, z: complex) -> float:
        n = max(1, math.ceil(abs(self.theta1 - self.theta0) / (math.pi / 2)))
        total = 0.0
        sgn = math.copysign(1.0, self.theta1 - self.theta0)
        for piece in self.split([k / n for k in range(1, n)]):
            p, q = piece.start, piece.end
            total += cmath.phase((q - z) / (p - z))
            # z in the lens between this sub-arc and its chord
            if abs(z - self.center) < self.radius:
                side_z = ((q - p).conjugate() * (z - p)).imag
                mid = complex(piece.point(0.5))
                side_m = ((q - p).conjugate() * (mid - p)).imag
                if side_z * side_m > 0:
                    total += TWO_PI * sgn
        return total

    def crossing_params(self, p: complex, q: complex) -> list[float]:
        d = q - p
        w = p - self.center
        a = abs(d) ** 2
        b = 2 * (w.conjugate() * d).real
        c = abs(w) ** 2 - self.radius**2
        disc = b * b - 4 * a * c
        if a == 0 or disc <= 0:
            return []
        out = []
        for u in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)):
            if 0 <= u <= 1:
                s = self._param_of_angle(cmath.phase(p + u * d - self.center))
                if s is not None and 0 < s < 1:
                    out.append(s)
        return sorted(out)

    def real_axis_params(self) -> list[float]:
        v = -self.center.imag / self.radius
        if abs(v) >= 1:
            return []
        base = math.asin(v)
        out = []
        for phi in (base, math.pi - base):
            s = self._param_of_angle(phi)
            if s is not None and 0 < s < 1:
                out.append(s)
        return sorted(out)


Segment = Line | CircArc


@dataclass(frozen=True)
class PathTable:
    """Vectorized segment description used by the quadrature."""

    is_arc: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    center: np.ndarray
    radius: np.ndarray
    th0: np.ndarray
    th1: np.ndarray
    sheet: np.ndarray
    length: np.ndarray

    def point(self, idx, s):
        line = self.p0[idx] + s * (self.p1[idx] - self.p0[idx])
        th = self.th0[idx] + s * (self.th1[idx] - self.th0[idx])
        arc = self.center[idx] + self.radius[idx] * np.exp(1j * th)
        return np.where(self.is_arc[idx], arc, line)

    def deriv(self, idx, s):
        line = self.p1[idx] - self.p0[idx] + 0 * s
        th = self.th0[idx] + s * (self.th1[idx] - self.th0[idx])
        arc = 1j * self.radius[idx] * (self.th1[idx] - self.th0[idx]) * np.exp(1j * th)
        return np.where(self.is_arc[idx], arc, line)


@dataclass(frozen=True)
class Path:
    segments: tuple
    closed: bool = True

    def __post_init__(self):
        segs = self.segments
        for a, b in zip(segs[:-1], segs[1:]):
            if abs(a.end - b.start) > 1e-14 * max(1.0, abs(a.end)):
                raise GeometryError("consecutive path segments do not join")
        if self.closed and segs and abs(segs[-1].end - segs[0].start) > 1e-14 * max(1.0, abs(segs[0].start)):
            raise GeometryError("closed path does not return to its start")

    @property
    def start(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> Path:
        return Path(tuple(s.reversed() for s in reversed(self.segments)), self.closed)

    def winding(self, z: complex) -> int:
        total = sum(s.arg_increment(z) for s in self.segments)
        return int(round(total / TWO_PI))

    def distance(self, z: complex) -> float:
        return min(s.distance(z) for s in self.segments)

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``n`` points spread by arc length; returns (points, sheets)."""
        lengths = np.array([s.length for s in self.segments])
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        if self.closed:
            # half-step offset keeps samples off the start point (a cut crossing for comp loops)
            u = (np.arange(n) + 0.5) * cum[-1] / n
        else:
            u = np.linspace(0, cum[-1], n)
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.segments) - 1)
        s = (u - cum[idx]) / np.where(lengths[idx] > 0, lengths[idx], 1)
        tab = self.table
        return tab.point(idx, s), tab.sheet[idx]

    @cached_property
    def table(self) -> PathTable:
        segs = self.segments
        is_arc = np.array([isinstance(s, CircArc) for s in segs])
        return PathTable(
            is_arc=is_arc,
            p0=np.array([s.start if isinstance(s, Line) else 0j for s in segs], dtype=complex),
            p1=np.array([s.end if isinstance(s, Line) else 0j for s in segs], dtype=complex),
            center=np.array([s.center if isinstance(s, CircArc) else 0j for s in segs], dtype=complex),
            radius=np.array([s.radius if isinstance(s, CircArc) else 0.0 for s in segs]),
            th0=np.array([s.theta0 if isinstance(s, CircArc) else 0.0 for s in segs]),
            th1=np.array([s.theta1 if isinstance(s, CircArc) else 0.0 for s in segs]),
            sheet=np.array([s.sheet for s in segs], dtype=float),
            length=np.array([s.length for s in segs]),
        )

    def polyline(self, points_per_unit: float = 64.0) -> list[complex]:
        pts = [self.start]
        for seg in self.segments:
            n = max(2, int(math.ceil(seg.length * points_per_unit)) + 1)
            pts.extend(complex(seg.point(s)) for s in np.linspace(0, 1, n)[1:])
        return pts


@dataclass(frozen=True)
class Cycle:
    """A sum of closed paths integrated together (e.g. a loop and its mirror)."""

    paths: tuple

    def winding(self, z: complex) -> int:
        return sum(p.winding(z) for p in self.paths)

    def distance(self, z: complex) -> float:
        return min(p.distance(z) for p in self.paths)

    def reversed(self) -> Cycle:
        return Cycle(tuple(p.reversed() for p in self.paths))

    @property
    def segments(self) -> tuple:
        return tuple(s for p in self.paths for s in p.segments)

    @cached_property
    def table(self) -> PathTable:
        return Path(self.segments, closed=False).table if len(self.paths) == 1 else _joined_table(self.paths)


def _joined_table(paths) -> PathTable:
    tabs = [p.table for p in paths]
    return PathTable(*(np.concatenate([getattr(t, f) for t in tabs]) for f in PathTable.__dataclass_fields__))


def as_cycle(obj) -> Cycle:
    if isinstance(obj, Cycle):
        return obj
    if isinstance(obj, Path):
        return Cycle((obj,))
    raise TypeError(f"expected Path or Cycle, got {type(obj).__name__}")


def circle(center: complex, radius: float, clockwise: bool = False, pieces: int = 4) -> Path:
    sgn = -1.0 if clockwise else 1.0
    th = [sgn * TWO_PI * k / pieces for k in range(pieces + 1)]
    segs = [CircArc(complex(center), float(radius), a, b) for a, b in zip(th[:-1], th[1:])]
    return Path(tuple(segs), closed=True)


def segment_path(a: complex, b: complex) -> Path:
    return Path((Line(complex(a), complex(b)),), closed=False)


# --------------------------------------------------------------------------
# branchpoints


@dataclass(frozen=True)
class BranchpointSet:
    """alpha_0, alpha_2, ... (``upper``) and alpha_1, alpha_3, ... (``lower``)."""

    upper: tuple
    lower: tuple

    def __post_init__(self):
        up = tuple(complex(a) for a in self.upper)
        lo = tuple(complex(a) for a in self.lower)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", lo)
        if len(up) % 2 != 1 or len(lo) != len(up):
            raise GeometryError("need 2N+1 upper and 2N+1 lower branchpoints")
        if any(a.imag <= 0 for a in up):
            raise GeometryError("upper branchpoints must have positive imaginary part")
        if any(a.imag >= 0 for a in lo):
            raise GeometryError("lower branchpoints must have negative imaginary part")
        if self.min_distance <= 1e-10:
            raise GeometryError("branchpoints must be pairwise distinct")

    @classmethod
    def from_upper(cls, alphas) -> BranchpointSet:
        up = tuple(complex(a) for a in alphas)
        return cls(up, tuple(a.conjugate() for a in up))

    @property
    def N(self) -> int:
        return (len(self.upper) - 1) // 2

    @property
    def all(self) -> tuple:
        out = []
        for u, lo in zip(self.upper, self.lower):
            out += [u, lo]
        return tuple(out)

    def alpha(self, i: int) -> complex:
        return self.upper[i // 2] if i % 2 == 0 else self.lower[i // 2]

    def with_alpha(self, i: int, value: complex) -> BranchpointSet:
        up, lo = list(self.upper), list(self.lower)
        (up if i % 2 == 0 else lo)[i // 2] = complex(value)
        return BranchpointSet(tuple(up), tuple(lo))

    def with_upper(self, alphas, conjugate: bool = True) -> BranchpointSet:
        if conjugate:
            return BranchpointSet.from_upper(alphas)
        return BranchpointSet(tuple(alphas), self.lower)

    @property
    def min_distance(self) -> float:
        pts = np.array(self.all)
        d = np.abs(pts[:, None] - pts[None, :])
        d[np.diag_indices(len(pts))] = np.inf
        return float(d.min())

    @property
    def scale(self) -> float:
        return max(1.0, max(abs(a) for a in self.all))

    @property
    def is_schwarz_symmetric(self) -> bool:
        return all(lo == u.conjugate() for u, lo in zip(self.upper, self.lower))

    @property
    def total(self) -> complex:
        """Sum of all 4N+2 branchpoints."""
        return complex(sum(self.all))

    def to_json(self) -> dict:
        return {"upper": [[a.real, a.imag] for a in self.upper], "lower": [[a.real, a.imag] for a in self.lower]}


# --------------------------------------------------------------------------
# radical


class Radical:
    """R(z) = prod over cuts of sqrt((z - a)(z - b)), cut along the polyline a..b.

    Each cut with vertices v_0..v_m contributes
    (z - v_m) * prod_i sqrt((z - v_i)/(z - v_{i+1})) with principal roots; every
    factor is continuous off its own piece and tends to 1 at infinity, so the
    product is analytic off the cuts and R(z)/z^(2N+1) -> 1.
    """

    def __init__(self, cuts):
        self.cuts = [np.asarray(c, dtype=complex) for c in cuts]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for v in self.cuts:
            out = out * (z - v[-1])
            for a, b in zip(v[:-1], v[1:]):
                out = out * np.sqrt((z - a) / (z - b))
        return out

    def boundary(self, zeta, cut: int, piece: int, side: int):
        """Boundary value on piece ``piece`` of cut ``cut``; side +1 = left of the cut's direction."""
        zeta = np.asarray(zeta, dtype=complex)
        out = np.ones_like(zeta)
        for ci, v in enumerate(self.cuts):
            out = out * (zeta - v[-1])
            for pi, (a, b) in enumerate(zip(v[:-1], v[1:])):
                if ci == cut and pi == piece:
                    rho = np.abs((zeta - a) / (zeta - b))
                    out = out * (-1j * side) * np.sqrt(rho)
                else:
                    out = out * np.sqrt((zeta - a) / (zeta - b))
        return out

    def distance_to_cuts(self, z: complex) -> float:
        return min(Line(complex(a), complex(b)).distance(z) for v in self.cuts for a, b in zip(v[:-1], v[1:]))


# --------------------------------------------------------------------------
# contour system


@dataclass(frozen=True)
class ContourSystem:
    bps: BranchpointSet
    main_arcs: tuple  # main_arcs[0] = (gamma_m0,), main_arcs[k] = (upper, lower)
    comp_arcs: tuple  # comp_arcs[k-1] = (upper, lower)
    singularities: tuple = ()
    margin: float | None = None
    loops_m: tuple = ()
    loops_c: tuple = ()
    loop_all: Cycle | None = None
    plus_regions: tuple = field(default=(), repr=False)  # per comp loop: (upper, lower) closed Paths

    @property
    def N(self) -> int:
        return self.bps.N

    @property
    def cuts(self) -> tuple:
        return tuple(p for arcs in self.main_arcs for p in arcs)

    @cached_property
    def radical(self) -> Radical:
        return Radical([_vertices(p) for p in self.cuts])

    @property
    def has_loops(self) -> bool:
        return self.loop_all is not None

    @property
    def is_schwarz_symmetric(self) -> bool:
        if not self.bps.is_schwarz_symmetric:
            return False
        for arcs in list(self.main_arcs[1:]) + list(self.comp_arcs):
            up, lo = _vertices(arcs[0]), _vertices(arcs[1])
            if not np.allclose(np.conj(up)[::-1], lo, atol=1e-14, rtol=0):
                return False
        return True

    def to_json(self, points_per_unit: float = 32.0) -> dict:
        def pl(p):
            return [[z.real, z.imag] for z in p.polyline(points_per_unit)]

        out = {
            "branchpoints": self.bps.to_json(),
            "main_arcs": [[pl(p) for p in arcs] for arcs in self.main_arcs],
            "comp_arcs": [[pl(p) for p in arcs] for arcs in self.comp_arcs],
            "margin": self.margin,
        }
        if self.has_loops:
            out["loops_m"] = [[pl(p) for p in c.paths] for c in self.loops_m]
            out["loops_c"] = [[pl(p) for p in c.paths] for c in self.loops_c]
            out["loop_all"] = [pl(p) for p in self.loop_all.paths]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _vertices(path: Path) -> list[complex]:
    return [path.segments[0].start] + [s.end for s in path.segments]


def _polyline_path(points) -> Path:
    pts = [complex(p) for p in points]
    return Path(tuple(Line(a, b) for a, b in zip(pts[:-1], pts[1:])), closed=False)


def _singular_points(singularities) -> list:
    out = []
    for s in singularities:
        if hasattr(s, "point"):
            out.append(s)
        else:
            from .scattering import Singularity

            out.append(Singularity(complex(s)))
    return out


def build_arc_system(bps: BranchpointSet, custom_arcs: dict | None = None, singularities=()) -> ContourSystem:
    """Main and complementary arcs for ``bps`` (straight segments by default).

    ``custom_arcs`` maps keys ``"m0"``, ``"m<k>+"``, ``"m<k>-"``, ``"c<k>+"``,
    ``"c<k>-"`` to lists of interior polyline vertices.  A missing lower key
    reuses the mirror image of the upper one when ``bps`` is Schwarz symmetric.
    """
    custom = dict(custom_arcs or {})
    N = bps.N
    up, lo = bps.upper, bps.lower

    def arc(key, a, b):
        inner = custom.get(key)
        if inner is None and key.endswith("-") and bps.is_schwarz_symmetric:
            mirror = custom.get(key[:-1] + "+")
            if mirror is not None:
                inner = [complex(p).conjugate() for p in reversed(mirror)]
        pts = [a] + [complex(p) for p in (inner or [])] + [b]
        return _polyline_path(pts)

    main = [(arc("m0", lo[0], up[0]),)]
    comp = []
    for k in range(1, N + 1):
        main.append((arc(f"m{k}+", up[2 * k - 1], up[2 * k]), arc(f"m{k}-", lo[2 * k], lo[2 * k - 1])))
        comp.append((arc(f"c{k}+", up[2 * k - 2], up[2 * k - 1]), arc(f"c{k}-", lo[2 * k - 1], lo[2 * k - 2])))
    cs = ContourSystem(bps, tuple(main), tuple(comp), tuple(_singular_points(singularities)))

    # arcs may only meet at shared endpoints
    arcs = [p for a in cs.main_arcs for p in a] + [p for a in cs.comp_arcs for p in a]
    lines = [LineString([(z.real, z.imag) for z in _vertices(p)]) for p in arcs]
    for i in range(len(arcs)):
        if not lines[i].is_simple:
            raise GeometryError("arc intersects itself")
        for j in range(i + 1, len(arcs)):
            inter = lines[i].intersection(lines[j])
            if inter.is_empty:
                continue
            shared = set(_vertices(arcs[i])[::len(_vertices(arcs[i])) - 1]) & set(
                _vertices(arcs[j])[::len(_vertices(arcs[j])) - 1]
            )
            allowed = unary_union([Point(z.real, z.imag) for z in shared]) if shared else None
            if allowed is None or not inter.difference(allowed.buffer(1e-12)).is_empty:
                raise GeometryError("arcs intersect away from shared endpoints")
    tol = 1e-9 * bps.scale
    for s in cs.singularities:
        for p in arcs:
            if p.distance(s.point) <= tol:
                raise GeometryError(f"arc passes through singularity {s.point}")
            if s.direction is not None and _ray_hits_path(s.point, s.direction, p, tol):
                raise GeometryError(f"arc crosses the branch cut of singularity {s.point}")
    return cs


def _ray_hits_path(point: complex, direction: complex, path: Path, tol: float, reach: float = 1e6) -> bool:
    ray = LineString([(point.real, point.imag), ((point + reach * direction).real, (point + reach * direction).imag)])
    pl = LineString([(z.real, z.imag) for z in path.polyline(256)])
    return ray.distance(pl) <= tol


def default_margin(bps: BranchpointSet) -> float:
    return 0.15 * bps.min_distance


def _stadium(a: complex, b: complex, m: float) -> list:
    """Clockwise stadium around segment a -> b, starting at the left-side midpoint."""
    u = (b - a) / abs(b - a)
    n = 1j * u
    phi_n = cmath.phase(n)
    cap_b = CircArc(b, m, phi_n, phi_n - math.pi)
    cap_a = CircArc(a, m, phi_n - math.pi, phi_n - 2 * math.pi)
    mid = (a + b) / 2 + n * m
    segs = [
        Line(mid, cap_b.start),
        cap_b,
        Line(cap_b.end, cap_a.start),
        cap_a,
        Line(cap_a.end, mid),
    ]
    return segs


def _buffer_ring(polylines, m: float, quad_segs: int = 24) -> list:
    geom = MultiLineString([[(z.real, z.imag) for z in pl] for pl in polylines])
    poly = unary_union(geom).buffer(m, quad_segs=quad_segs)
    if poly.geom_type != "Polygon":
        raise GeometryError("loop construction produced disconnected pieces")
    if len(poly.interiors):
        raise GeometryError("loop construction produced a ring with holes; reduce margin")
    coords = [complex(x, y) for x, y in poly.exterior.coords]
    area = sum((p.conjugate() * q).imag for p, q in zip(coords[:-1], coords[1:]))
    if area > 0:  # counterclockwise -> flip
        coords = coords[::-1]
    coords[-1] = coords[0]
    return [Line(p, q) for p, q in zip(coords[:-1], coords[1:])]


def _loop_around(arc: Path, m: float) -> list:
    verts = _vertices(arc)
    if len(verts) == 2:
        return _stadium(verts[0], verts[1], m)
    segs = _buffer_ring([verts], m)
    # start the ring at the vertex closest to the left-side point of the middle piece
    k = (len(verts) - 1) // 2
    a, b = verts[k], verts[k + 1]
    ref = (a + b) / 2 + 1j * (b - a) / abs(b - a) * m
    i0 = int(np.argmin([abs(s.start - ref) for s in segs]))
    return segs[i0:] + segs[:i0]


def _cut_pieces(cs: ContourSystem):
    out = []
    for ci, p in enumerate(cs.cuts):
        v = _vertices(p)
        for pi, (a, b) in enumerate(zip(v[:-1], v[1:])):
            out.append((ci, pi, a, b))
    return out


def _split_segments(segs, cut_pieces):
    """Split at cut and real-axis crossings; returns (segments, crossing tags).

    ``tags[i]`` is (cut index, piece index) if segment i starts at a cut
    crossing, else None.
    """
    out, tags = [], []
    for seg in segs:
        events = []
        for ci, pi, a, b in cut_pieces:
            for s in seg.crossing_params(a, b):
                events.append((s, (ci, pi)))
        for s in seg.real_axis_params():
            if not any(abs(s - e[0]) < 1e-12 for e in events):
                events.append((s, None))
        events.sort(key=lambda e: e[0])
        pieces = seg.split([e[0] for e in events])
        out.extend(pieces)
        tags.append(None)
        tags.extend(e[1] for e in events)
    # a crossing exactly at a segment joint is not expected for generic data
    return out, tags


def _build_plain_loop(segs, cut_pieces, what: str) -> Path:
    segs, tags = _split_segments(segs, cut_pieces)
    if any(t is not None for t in tags):
        raise GeometryError(f"{what} crosses a branch cut; reduce margin")
    return Path(tuple(segs), closed=True)


def _build_comp_loop(cs: ContourSystem, arc: Path, m: float, adjacent: set, cut_pieces):
    raw = _loop_around(arc, m)
    segs, tags = _split_segments(raw, cut_pieces)
    crossings = [i for i, t in enumerate(tags) if t is not None]
    cut_ids = sorted(tags[i][0] for i in crossings)
    if cut_ids != sorted(adjacent):
        raise GeometryError("complementary loop must cross exactly its two adjacent cuts once; reduce margin")
    # stretch containing the left-side reference point carries sheet +1
    verts = _vertices(arc)
    k = (len(verts) - 1) // 2
    a, b = verts[k], verts[k + 1]
    ref = (a + b) / 2 + 1j * (b - a) / abs(b - a) * m
    i_ref = int(np.argmin([s.distance(ref) for s in segs]))
    c0, c1 = crossings
    in_first = c0 <= i_ref < c1
    plus = list(range(c0, c1)) if in_first else list(range(c1, len(segs))) + list(range(0, c0))
    plus_set = set(plus)
    signed = [s.with_sheet(1 if i in plus_set else -1) for i, s in enumerate(segs)]
    start = plus[0]
    signed = signed[start:] + signed[:start]
    loop = Path(tuple(signed), closed=True)

    # closed boundary of the "+" region: plus stretch, cut stub, arc, cut stub
    x_first, x_last = segs[plus[0]].start, segs[plus[-1]].end
    tag_first = tags[plus[0]]
    tag_last = tags[(plus[-1] + 1) % len(segs)]
    stub_last = _stub(cs, tag_last, x_last, verts)
    stub_first = _stub(cs, tag_first, x_first, verts)
    e_last, e_first = stub_last[-1], stub_first[-1]
    arc_pts = verts if (e_last == verts[0]) else verts[::-1]
    if arc_pts[-1] != e_first:
        raise GeometryError("cut stubs do not end at the complementary arc endpoints")
    pts = stub_last + arc_pts[1:] + stub_first[::-1][1:]
    region_segs = [segs[i] for i in plus] + [Line(p, q) for p, q in zip(pts[:-1], pts[1:])]
    region = Path(tuple(s.with_sheet(1) for s in region_segs), closed=True)
    return loop, region


def _stub(cs: ContourSystem, tag, x: complex, arc_verts) -> list:
    """Polyline from crossing point ``x`` along the cut to the arc endpoint it touches."""
    ci, pi = tag
    v = _vertices(cs.cuts[ci])
    ends = {arc_verts[0], arc_verts[-1]}
    if v[0] in ends:
        return [x] + v[pi::-1]
    if v[-1] in ends:
        return [x] + v[pi + 1:]
    raise GeometryError("crossed cut does not touch the complementary arc")


def build_loops(cs: ContourSystem, margin: float | None = None) -> ContourSystem:
    """Add clockwise offset loops (distance ``margin``) and the outer loop (2*margin)."""
    m = default_margin(cs.bps) if margin is None else float(margin)
    if m <= 0:
        raise GeometryError("margin must be positive")
    N = cs.N
    pieces = _cut_pieces(cs)
    cuts = cs.cuts  # index 0 -> m0, 2k-1 -> m_k upper, 2k -> m_k lower

    loops_m = []
    for k in range(1, N + 1):
        paths = tuple(_build_plain_loop(_loop_around(a, m), pieces, f"main loop {k}") for a in cs.main_arcs[k])
        loops_m.append(Cycle(paths))

    loops_c, regions = [], []
    for k in range(1, N + 1):
        up_arc, lo_arc = cs.comp_arcs[k - 1]
        # upper comp arc touches m_{k-1} upper (or m0) and m_k upper
        adj_up = {0 if k == 1 else 2 * (k - 1) - 1, 2 * k - 1}
        adj_lo = {0 if k == 1 else 2 * (k - 1), 2 * k}
        lu, ru = _build_comp_loop(cs, up_arc, m, adj_up, pieces)
        ll, rl = _build_comp_loop(cs, lo_arc, m, adj_lo, pieces)
        loops_c.append(Cycle((lu, ll)))
        regions.append((ru, rl))

    union = [_vertices(p) for p in cuts] + [_vertices(p) for arcs in cs.comp_arcs for p in arcs]
    outer = _build_plain_loop(_buffer_ring(union, 2 * m), pieces, "outer loop")
    out = replace(
        cs,
        margin=m,
        loops_m=tuple(loops_m),
        loops_c=tuple(loops_c),
        loop_all=Cycle((outer,)),
        plus_regions=tuple(regions),
    )
    _validate_loops(out)
    return out


def _arc_endpoints(path: Path) -> set:
    v = _vertices(path)
    return {v[0], v[-1]}


def _validate_loops(cs: ContourSystem):
    m = cs.margin
    alphas = cs.bps.all
    outer = cs.loop_all.paths[0]
    entries = []  # (closed path, endpoints it must enclose)
    for k in range(1, cs.N + 1):
        for arc, p in zip(cs.main_arcs[k], cs.loops_m[k - 1].paths):
            entries.append((p, _arc_endpoints(arc)))
        for arc, p in zip(cs.comp_arcs[k - 1], cs.loops_c[k - 1].paths):
            entries.append((p, _arc_endpoints(arc)))
    entries.append((outer, set(alphas)))
    for p, own in entries:
        for a in alphas:
            w = p.winding(a)
            if (a in own and w != -1) or (a not in own and w != 0):
                raise GeometryError("a loop encloses the wrong branchpoints; reduce margin")
            if a not in own and p.distance(a) < m / 2:
                raise GeometryError("a loop passes too close to a branchpoint; reduce margin")
    # loops of arcs sharing no endpoint must be disjoint
    small = entries[:-1]
    rings = [LineString([(z.real, z.imag) for z in p.polyline(32)]) for p, _ in small]
    for i in range(len(small)):
        if outer.winding(small[i][0].start) != -1:
            raise GeometryError("small loop is not inside the outer loop; reduce margin")
        for j in range(i + 1, len(small)):
            if small[i][1] & small[j][1]:
                continue
            if rings[i].intersects(rings[j]):
                raise GeometryError("loops collide; reduce margin")
    for s in cs.singularities:
        for p, _ in entries:
            if p.distance(s.point) < m / 2:
                raise GeometryError(f"loop passes within margin/2 of singularity {s.point}")
            if s.direction is not None and _ray_hits_path(s.point, s.direction, p, m / 2):
                raise GeometryError(f"loop crosses the branch cut of singularity {s.point}")
        if outer.winding(s.point) != 0:
            raise GeometryError(f"singularity {s.point} lies inside the outer loop")


def build_contours(bps: BranchpointSet, margin: float | None = None, custom_arcs=None, singularities=()) -> ContourSystem:
    return build_loops(build_arc_system(bps, custom_arcs, singularities), margin)


# --------------------------------------------------------------------------
# evaluation


def _radical_of(obj) -> Radical:
    if isinstance(obj, ContourSystem):
        return obj.radical
    if isinstance(obj, BranchpointSet):
        return build_arc_system(obj).radical
    if isinstance(obj, Radical):
        return obj
    raise TypeError(f"cannot build a radical from {type(obj).__name__}")


def radical_R(obj, z):
    """R(z), single valued off the main arcs with R(z)/z^(2N+1) -> 1.

    ``obj`` is a BranchpointSet (straight cuts) or a ContourSystem.
    """
    rad = _radical_of(obj)
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    for w in zs:
        if rad.distance_to_cuts(complex(w)) <= ON_CONTOUR_TOL * max(1.0, abs(w)):
            raise GeometryError(f"z = {complex(w)} lies on a branch cut")
    out = rad(zs)
    return complex(out[0]) if np.ndim(z) == 0 else out


def radical_on_path(obj, path, samples: int):
    """(points, values) of the continuation sheet * R along ``path``."""
    rad = _radical_of(obj)
    path = path if isinstance(path, Path) else Path(as_cycle(path).segments, closed=False)
    pts, sheets = path.sample(samples)
    if rad.distance_to_cuts(complex(pts[0])) <= ON_CONTOUR_TOL * max(1.0, abs(pts[0])):
        raise GeometryError("path starts on a branch cut")
    vals = sheets * rad(pts)
    vals = vals * sheets[0]
    return list(zip(pts.tolist(), vals.tolist()))


@dataclass(frozen=True)
class Location:
    """Containment flags; ``inside_c[i]`` is +1/-1 by side, 0 when outside."""

    inside_loop_all: bool
    inside_m: tuple
    inside_c: tuple

    @property
    def standard(self) -> bool:
        return self.inside_loop_all and not any(self.inside_m) and not any(self.inside_c)

    def label(self) -> str:
        if not self.inside_loop_all:
            return "outside"
        if self.standard:
            return "standard"
        parts = [f"m{i + 1}" for i, v in enumerate(self.inside_m) if v]
        parts += [f"c{i + 1}{'+' if v > 0 else '-'}" for i, v in enumerate(self.inside_c) if v]
        return "+".join(parts)


def point_location(cs: ContourSystem, z: complex) -> Location:
    z = complex(z)
    if not cs.has_loops:
        raise GeometryError("contour system has no loops")
    loops = [cs.loop_all, *cs.loops_m, *cs.loops_c]
    for lp in loops:
        if lp.distance(z) <= ON_CONTOUR_TOL * max(1.0, abs(z)):
            raise GeometryError(f"z = {z} lies on a loop")
    inside_all = cs.loop_all.winding(z) != 0
    inside_m = tuple(c.winding(z) != 0 for c in cs.loops_m)
    inside_c = []
    for c, regions in zip(cs.loops_c, cs.plus_regions):
        side = 0
        for p, region in zip(c.paths, regions):
            if p.winding(z) != 0:
                side = 1 if region.winding(z) != 0 else -1
        inside_c.append(side)
    return Location(inside_all, inside_m, tuple(inside_c))
