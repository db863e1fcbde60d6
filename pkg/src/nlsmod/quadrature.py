"""Adaptive Gauss-Kronrod integration along paths and the loop integrals built on it."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ContourSystem,
    GeometryError,
    Path,
    _radical_of,
    as_cycle,
    point_location,
)
from .scattering import ScatteringData, eval_f

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
# panels whose Kronrod/Gauss gap is this small relative to the panel magnitude sit at
# the round-off floor (cancellation in zeta - z near the contour) and are accepted
ROUNDOFF = 1e3 * EPS

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
_XK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ]
)
_WK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)
NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
W_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
W_GAUSS = np.zeros(15)
W_GAUSS[1:7:2] = _WG[:3]
W_GAUSS[7] = _WG[3]
W_GAUSS[9:15:2] = _WG[:3][::-1]


class QuadratureError(RuntimeError):
    """Tolerance not reached within the evaluation budget."""


@dataclass(frozen=True)
class QuadConfig:
    tol: float = 1e-11
    max_evals: int = 1_000_000


DEFAULT = QuadConfig()


@dataclass(frozen=True)
class IntegralResult:
    value: complex | np.ndarray
    abs_error_estimate: float
    evaluations: int
    converged: bool = True


def _adaptive(func, table, tol: float, max_evals: int, panels=None, collect: bool = False, total_len=None):
    """Vectorized adaptive G7-K15 over the segments of ``table``.

    ``func(zeta, sheet)`` returns values of shape (n,) or (m, n).  A panel is
    accepted once |K15 - G7| (max over components) is below its length share of
    ``tol`` or below the roundoff floor of the panel.  ``panels`` is an optional
    starting set (segment index, a, b); with ``collect`` the accepted panels are
    returned as a fourth item.
    """
    if panels is None:
        idx = np.arange(len(table.length))
        a = np.zeros(len(idx))
        b = np.ones(len(idx))
    else:
        idx, a, b = (np.asarray(v) for v in panels)
    if total_len is None:
        total_len = float(table.length.sum())
    value = None
    err_total = 0.0
    evals = 0
    converged = True
    squeeze = True
    acc = ([], [], [])
    while len(idx):
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * NODES[None, :]
        ii = np.broadcast_to(idx[:, None], s.shape)
        zeta = table.point(ii, s)
        dz = table.deriv(ii, s) * half[:, None]
        sheet = table.sheet[ii]
        vals = np.asarray(func(zeta.ravel(), sheet.ravel()))
        evals += zeta.size
        squeeze = vals.ndim == 1
        vals = vals.reshape((-1,) + s.shape) * dz[None]
        kron = vals @ W_KRONROD
        gauss = vals @ W_GAUSS
        err = np.max(np.abs(kron - gauss), axis=0)
        mag = np.max(np.abs(vals) @ W_KRONROD, axis=0)
        share = tol * (b - a) * table.length[idx] / total_len
        ok = (err <= share) | (err <= ROUNDOFF * mag)
        if value is None:
            value = np.zeros(kron.shape[0], dtype=complex)
        if evals >= max_evals:
            ok[:] = True
            converged = False
        value += kron[:, ok].sum(axis=1)
        err_total += float(err[ok].sum())
        if collect:
            acc[0].append(idx[ok])
            acc[1].append(a[ok])
            acc[2].append(b[ok])
        keep = ~ok
        mid = 0.5 * (a + b)
        idx = np.concatenate([idx[keep], idx[keep]])
        a, b = np.concatenate([a[keep], mid[keep]]), np.concatenate([mid[keep], b[keep]])
    if not converged:
        log.warning("quadrature budget of %d evaluations exhausted (error %.3g)", max_evals, err_total)
    if value is None:
        value = np.zeros(1, dtype=complex)
    out = value[0] if squeeze else value
    res = IntegralResult(out, err_total, evals, converged)
    if collect:
        return res, tuple(np.concatenate(v) for v in acc)
    return res


class LoopRule:
    """Cached Kronrod panels, nodes and 1/(sheet R) values on one loop.

    Panels are chosen adaptively for the weights ``zeta^k`` (k < ``degree``)
    and optionally ``f``.  Later integrals reuse the nodes; any panel whose
    Kronrod/Gauss discrepancy exceeds its share of ``tol`` for the new
    integrand is refined adaptively from that panel on.
    """

    def __init__(self, rad, path, quad: QuadConfig = None, degree: int = 2, extra=None):
        quad = quad or DEFAULT
        self.quad = quad
        self.rad = rad
        self.cycle = as_cycle(path)
        self.table = self.cycle.table
        self.total_len = float(self.table.length.sum())

        def probe(z, s):
            rows = [z**k for k in range(degree + 1)]
            if extra is not None:
                rows.append(extra(z))
            return np.array(rows) / (s * rad(z))

        res, (idx, a, b) = _adaptive(probe, self.table, quad.tol, quad.max_evals, collect=True)
        if not res.converged:
            raise QuadratureError("loop rule did not converge")
        self.idx, self.a, self.b = idx, a, b
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * NODES[None, :]
        ii = np.broadcast_to(idx[:, None], s.shape)
        self.zeta = self.table.point(ii, s)
        self.dz = self.table.deriv(ii, s) * half[:, None]
        self.rinv = 1.0 / (self.table.sheet[ii] * rad(self.zeta))
        self.share = quad.tol * (b - a) * self.table.length[idx] / self.total_len
        self.radius = float(np.max(np.abs(self.zeta)))
        self.evaluations = res.evaluations

    def integrate(self, weight) -> np.ndarray:
        """Integral of weight(zeta)/(sheet R) for a weight returning (m, n) rows."""
        w = np.asarray(weight(self.zeta.ravel()))
        squeeze = w.ndim == 1
        w = w.reshape((-1,) + self.zeta.shape)
        vals = w * (self.rinv * self.dz)[None]
        kron = vals @ W_KRONROD
        gauss = vals @ W_GAUSS
        err = np.max(np.abs(kron - gauss), axis=0)
        mag = np.max(np.abs(vals) @ W_KRONROD, axis=0)
        ok = (err <= self.share) | (err <= ROUNDOFF * mag)
        value = kron[:, ok].sum(axis=1)
        if not ok.all():
            bad = ~ok
            res = _adaptive(
                lambda z, s: np.asarray(weight(z)).reshape(w.shape[0], -1) / (s * self.rad(z)),
                self.table,
                self.quad.tol,
                self.quad.max_evals,
                panels=(self.idx[bad], self.a[bad], self.b[bad]),
                total_len=self.total_len,
            )
            if not res.converged:
                raise QuadratureError("loop integral did not converge on refined panels")
            value = value + np.atleast_1d(res.value)
        return value[0] if squeeze else value

    def moments(self, kmax: int, factor=None) -> np.ndarray:
        """Integrals of zeta^k (times ``factor``) / (sheet R), k = 0..kmax-1."""
        if factor is None:
            return self.integrate(lambda z: np.array([z**k for k in range(kmax)]))
        return self.integrate(lambda z: np.array([z**k for k in range(kmax)]) * factor(z)[None, :])


def integrate_path(integrand, path, tol: float = DEFAULT.tol, max_evals: int = DEFAULT.max_evals) -> IntegralResult:
    """Integrate ``integrand(zeta)`` along a Path or Cycle (sheets ignored)."""
    cyc = as_cycle(path)
    return _adaptive(lambda z, s: integrand(z), cyc.table, tol, max_evals)


def cycle_integral(obj, path, weight, quad: QuadConfig = DEFAULT, strict: bool = True) -> IntegralResult:
    """Integrate ``weight(zeta) / (sheet * R(zeta))`` along a loop.

    ``obj`` supplies R (ContourSystem, BranchpointSet or Radical); ``weight``
    may return several rows at once.
    """
    rad = _radical_of(obj)
    cyc = as_cycle(path)
    res = _adaptive(lambda z, s: weight(z) / (s * rad(z)), cyc.table, quad.tol, quad.max_evals)
    if strict and not res.converged:
        raise QuadratureError(f"loop integral did not reach tol {quad.tol} (estimate {res.abs_error_estimate:.3g})")
    return res


def _check_off_path(path, z):
    cyc = as_cycle(path)
    for w in np.atleast_1d(z):
        if cyc.distance(complex(w)) <= 10 * EPS * max(1.0, abs(w)):
            raise GeometryError(f"Cauchy point {complex(w)} lies on the integration path")


def loop_moment(obj, path, k: int, quad: QuadConfig = DEFAULT) -> complex:
    """Loop integral of zeta^k / R(zeta)."""
    return complex(cycle_integral(obj, path, lambda z: z**k, quad).value)


def loop_cauchy(obj, path, z, quad: QuadConfig = DEFAULT):
    """Loop integral of 1 / ((zeta - z) R(zeta)); ``z`` may be an array."""
    _check_off_path(path, z)
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    val = cycle_integral(obj, path, lambda w: 1.0 / (w[None, :] - zs[:, None]), quad).value
    return complex(val[0]) if np.ndim(z) == 0 else np.asarray(val)


def loop_f_moment(obj, sd: ScatteringData, x: float, t: float, path, k: int, quad: QuadConfig = DEFAULT) -> complex:
    """Loop integral of zeta^k f(zeta) / R(zeta)."""
    if sd.is_zero and x == 0 and t == 0:
        return 0j
    return complex(cycle_integral(obj, path, lambda z: z**k * eval_f(sd, z, x, t), quad).value)


def loop_f_cauchy(obj, sd: ScatteringData, x: float, t: float, path, z, quad: QuadConfig = DEFAULT):
    """Loop integral of f(zeta) / ((zeta - z) R(zeta))."""
    _check_off_path(path, z)
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    if sd.is_zero and x == 0 and t == 0:
        return 0j if np.ndim(z) == 0 else np.zeros(zs.shape, complex)
    val = cycle_integral(obj, path, lambda w: eval_f(sd, w, x, t)[None, :] / (w[None, :] - zs[:, None]), quad).value
    return complex(val[0]) if np.ndim(z) == 0 else np.asarray(val)


# --------------------------------------------------------------------------
# loop-to-arc reduction


def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def arc_integral(cs: ContourSystem, arc: Path, func, pole: complex | None = None, side: int = 1, n: int = 400):
    """Integral of func(zeta) / R(zeta) along a polyline arc.

    On a main arc R is the boundary value from ``side`` (+1 = left of the arc
    direction); on a complementary arc R is continuous.  Endpoint square-root
    singularities are removed by zeta = a + (b - a)(1 - cos theta)/2 on every
    piece.  With ``pole`` on the arc the integral of func / ((zeta - pole) R)
    is taken as a principal value by subtracting func(pole)/R(pole).
    """
    rad = cs.radical
    verts = [arc.segments[0].start] + [s.end for s in arc.segments]
    cut_id = None
    for ci, cut in enumerate(cs.cuts):
        cv = [cut.segments[0].start] + [s.end for s in cut.segments]
        if cv == verts:
            cut_id, flip = ci, 1
        elif cv == verts[::-1]:
            cut_id, flip = ci, -1

    def r_on(piece_index, zeta):
        if cut_id is None:
            return rad(zeta)
        nseg = len(verts) - 1
        pi = piece_index if flip == 1 else nseg - 1 - piece_index
        return rad.boundary(zeta, cut_id, pi, side * flip)

    theta_x, theta_w = _gauss_legendre(n)
    theta = 0.5 * np.pi * (theta_x + 1)
    wts = 0.5 * np.pi * theta_w
    pole_piece = None
    if pole is not None:
        for pi, (a, b) in enumerate(zip(verts[:-1], verts[1:])):
            if abs((pole - a) / (b - a) - ((pole - a) / (b - a)).real) < 1e-12 and 0 < ((pole - a) / (b - a)).real < 1:
                pole_piece = pi
        if pole_piece is None:
            raise GeometryError("principal-value point is not on the arc")
        fp = func(np.array([pole]))[0] / r_on(pole_piece, np.array([pole]))[0]
    total = 0j
    for pi, (a, b) in enumerate(zip(verts[:-1], verts[1:])):
        s = 0.5 * (1 - np.cos(theta))
        zeta = a + (b - a) * s
        dz = (b - a) * 0.5 * np.sin(theta) * wts
        vals = func(zeta) / r_on(pi, zeta)
        if pole is None:
            total += np.sum(vals * dz)
        else:
            total += np.sum((vals - fp) / (zeta - pole) * dz)
    if pole is not None:
        # principal value of the integral of d zeta / (zeta - pole) along the polyline
        before = sum(np.angle((q - pole) / (p - pole)) for p, q in zip(verts[: pole_piece], verts[1 : pole_piece + 1]))
        after = sum(np.angle((q - pole) / (p - pole)) for p, q in zip(verts[pole_piece + 1 : -1], verts[pole_piece + 2 :]))
        pv = np.log(abs(verts[-1] - pole) / abs(verts[0] - pole)) + 1j * (before + after)
        total += fp * pv
    return complex(total)


@dataclass(frozen=True)
class ReductionReport:
    kind: str
    index: int
    z: complex
    loop_value: complex
    arc_value: complex
    factor: float
    discrepancy: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "index": self.index,
            "z": [self.z.real, self.z.imag],
            "loop_value": [self.loop_value.real, self.loop_value.imag],
            "arc_value": [self.arc_value.real, self.arc_value.imag],
            "factor": self.factor,
            "discrepancy": self.discrepancy,
        }


def segment_reduction_check(cs: ContourSystem, z: complex, kind: str, index: int, quad: QuadConfig = DEFAULT):
    """Compare the loop Cauchy integral with twice the enclosed arc integral.

    ``kind`` is "m" or "c" and ``index`` runs 1..N.  ``z`` must lie inside the
    loop.  On the arc the arc side is a principal value; off the arc the
    enclosed pole term is folded into ``arc_value``.
    For a main arc the arc integral uses the boundary value of R from the
    right of the arc, R_-, so the relation reads loop = -2 * arc; for a
    complementary arc R is continuous and loop = +2 * arc.
    """
    z = complex(z)
    loops = cs.loops_m if kind == "m" else cs.loops_c
    arcs = cs.main_arcs[index] if kind == "m" else cs.comp_arcs[index - 1]
    cyc = loops[index - 1]
    inside = [p.winding(z) != 0 for p in cyc.paths]
    if not any(inside):
        raise GeometryError("segment reduction needs z inside the loop")
    loop_val = loop_cauchy(cs, cyc, z, quad)
    factor = -2.0 if kind == "m" else 2.0
    loc = point_location(cs, z)
    sheet = 1 if kind == "m" else loc.inside_c[index - 1]
    arc_val = 0j
    for arc, contains in zip(arcs, inside):
        if arc.distance(z) <= 1e-12 * max(1.0, abs(z)):
            arc_val += arc_integral(cs, arc, lambda w: np.ones_like(w), pole=z, side=-1)
            continue
        arc_val += arc_integral(cs, arc, lambda w: 1.0 / (w - z), side=-1)
        if contains:
            # collapsing the loop onto the arc leaves a clockwise circle around z
            arc_val += -2j * np.pi / (sheet * cs.radical(np.array([z]))[0]) / factor
    disc = abs(loop_val - factor * arc_val)
    return ReductionReport(kind, index, z, loop_val, arc_val, factor, float(disc))
