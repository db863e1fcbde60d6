"""Moment system, determinants D and K(z), and the g and h evaluators.

All loops are clockwise (see ``geometry``).  Rows of the moment matrix are
the loops m_1..m_N, c_1..c_N; column k holds the integral of zeta^k / R,
k = 0..2N-1.  K(z) is the (2N+1)x(2N+1) determinant whose extra row is the
f-weighted big loop and whose extra column is the Cauchy kernel 1/(zeta - z),
divided by 2 pi i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    BranchpointSet,
    ContourSystem,
    GeometryError,
    Location,
    build_contours,
    build_loops,
    point_location,
)
from .quadrature import DEFAULT, EPS, LoopRule, QuadConfig
from .scattering import ScatteringData, eval_f

log = logging.getLogger(__name__)

TWO_PI_I = 2j * math.pi
COND_LIMIT = 1e12
# beyond FAR * (loop radius) Cauchy integrals are summed from their Laurent series
FAR = 20.0
SERIES_TERMS = 24
CAUCHY_CHUNK = 16
# g and h do not depend on where the loops sit; points closer than
# NEAR_LOOP * margin to a loop are evaluated on loops rebuilt at one of
# ALT_MARGINS * margin, where the Cauchy integrals are well conditioned
NEAR_LOOP = 0.02
ALT_MARGINS = (0.6, 0.75)


class RHPError(RuntimeError):
    """Singular moment system or violated solution invariant."""


@dataclass
class _Rules:
    """Loop rules and cached moment series shared by every evaluator."""

    all: LoopRule
    m: list
    c: list
    series: dict = field(default_factory=dict)
    alternates: dict = field(default_factory=dict)

    def loops(self):
        return [*self.m, *self.c]


def _cauchy(rule: LoopRule, z: np.ndarray, factor, series) -> np.ndarray:
    """Integral of factor(zeta) / ((zeta - z) R) for each z."""
    out = np.empty(z.shape, dtype=complex)
    far = np.abs(z) > FAR * rule.radius
    if far.any():
        zf = z[far]
        acc = np.zeros(zf.shape, dtype=complex)
        for mu in series[::-1]:
            acc = acc / zf + mu
        out[far] = -acc / zf
    near = ~far
    if near.any():
        zn = z[near]
        for w in zn:
            if rule.cycle.distance(complex(w)) <= 10 * EPS * max(1.0, abs(w)):
                raise GeometryError(f"z = {complex(w)} lies on a loop")
        # chunked so that a point close to the loop refines panels for its chunk only
        vals = np.empty(zn.shape, dtype=complex)
        for lo in range(0, zn.size, CAUCHY_CHUNK):
            zc = zn[lo : lo + CAUCHY_CHUNK]
            if factor is None:
                vals[lo : lo + CAUCHY_CHUNK] = rule.integrate(lambda q: 1.0 / (q[None, :] - zc[:, None]))
            else:
                vals[lo : lo + CAUCHY_CHUNK] = rule.integrate(lambda q: factor(q)[None, :] / (q[None, :] - zc[:, None]))
        out[near] = vals
    return out


@dataclass(frozen=True)
class RHPSolution:
    bps: BranchpointSet
    cs: ContourSystem
    sd: ScatteringData
    x: float
    t: float
    W: tuple
    Omega: tuple
    D: complex
    moment_matrix_cond: float
    M: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    rules: _Rules = field(repr=False, compare=False)
    quad: QuadConfig = field(default=DEFAULT, repr=False)

    @property
    def N(self) -> int:
        return self.bps.N

    @property
    def constants(self) -> np.ndarray:
        return np.array([*self.W, *self.Omega], dtype=complex)

    def f(self, z):
        return eval_f(self.sd, z, self.x, self.t)

    def with_constants(self, W, Omega) -> RHPSolution:
        return replace(self, W=tuple(complex(w) for w in W), Omega=tuple(complex(o) for o in Omega))

    # ---- cached integrals -------------------------------------------------

    def _series(self, key, rule, factor):
        if key not in self.rules.series:
            self.rules.series[key] = rule.moments(SERIES_TERMS + 2 * self.N + 2, factor)
        return self.rules.series[key]

    def f_factor(self):
        return lambda q: self.f(q)

    def cauchy_f(self, z: np.ndarray) -> np.ndarray:
        """Big-loop integral of f / ((zeta - z) R)."""
        if self.sd.is_zero and self.x == 0 and self.t == 0:
            return np.zeros(z.shape, complex)
        rule = self.rules.all
        return _cauchy(rule, z, self.f_factor(), self._series("f", rule, self.f_factor()))

    def cauchy_poly(self, z: np.ndarray, p: int) -> np.ndarray:
        """Big-loop integral of zeta^p / ((zeta - z) R)."""
        rule = self.rules.all
        fac = (lambda q: q**p) if p else None
        ser = self._series(("all", 0), rule, None)[p:]
        return _cauchy(rule, z, fac, ser)

    def cauchy_loops(self, z: np.ndarray) -> np.ndarray:
        """(2N, nz) integrals of 1/((zeta - z) R) over m_1..m_N, c_1..c_N."""
        out = np.empty((2 * self.N,) + z.shape, dtype=complex)
        for i, rule in enumerate(self.rules.loops()):
            out[i] = _cauchy(rule, z, None, self._series(("loop", i), rule, None))
        return out

    def loop_moments(self, kmax: int) -> np.ndarray:
        """(2N, kmax) moments of zeta^k / R over the small loops."""
        return np.array([self._series(("loop", i), r, None)[:kmax] for i, r in enumerate(self.rules.loops())]).reshape(
            2 * self.N, kmax
        )

    def big_moments(self, kmax: int, p: int = 0) -> np.ndarray:
        """Moments of zeta^(k+p) / R over the big loop."""
        return self._series(("all", 0), self.rules.all, None)[p : p + kmax]

    # ---- determinants -----------------------------------------------------

    def K_matrix(self, z: np.ndarray, last_row: np.ndarray, last_cauchy: np.ndarray) -> np.ndarray:
        """Stacked (nz, 2N+1, 2N+1) matrices with the given f-type row."""
        n = 2 * self.N
        nz = z.size
        mat = np.zeros((nz, n + 1, n + 1), dtype=complex)
        if n:
            mat[:, :n, :n] = self.M[None]
            mat[:, :n, n] = self.cauchy_loops(z).T
            mat[:, n, :n] = last_row[None]
        mat[:, n, n] = last_cauchy
        return mat


# --------------------------------------------------------------------------


def build_rules(bps: BranchpointSet, cs: ContourSystem, sd: ScatteringData, x: float, t: float, quad=DEFAULT) -> _Rules:
    if not cs.has_loops:
        raise GeometryError("contour system has no loops")
    N = bps.N
    rad = cs.radical
    fac = None if (sd.is_zero and x == 0 and t == 0) else (lambda q: eval_f(sd, q, x, t))
    deg = 2 * N + 2
    rule_all = LoopRule(rad, cs.loop_all, quad, deg, fac)
    rules_m = [LoopRule(rad, c, quad, deg) for c in cs.loops_m]
    rules_c = [LoopRule(rad, c, quad, deg) for c in cs.loops_c]
    return _Rules(rule_all, rules_m, rules_c)


def solve_constants(
    bps: BranchpointSet,
    cs: ContourSystem | None,
    sd: ScatteringData,
    x: float,
    t: float,
    quad: QuadConfig = DEFAULT,
    margin: float | None = None,
    check_real: bool = True,
) -> RHPSolution:
    """Solve the 2N moment equations for W_1..W_N, Omega_1..Omega_N."""
    if cs is None:
        cs = build_contours(bps, margin, singularities=sd.singularities)
    rules = build_rules(bps, cs, sd, x, t, quad)
    N = bps.N
    n = 2 * N
    proto = RHPSolution(bps, cs, sd, float(x), float(t), (), (), 1 + 0j, 1.0, np.zeros((0, 0)), np.zeros(0), rules, quad)
    if N == 0:
        return proto
    M = proto.loop_moments(n)
    if sd.is_zero and x == 0 and t == 0:
        A = np.zeros(n, dtype=complex)
    else:
        A = proto._series("f", rules.all, proto.f_factor())[:n]
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RHPError(f"moment matrix is ill-conditioned (cond = {cond:.3g}); degenerate branchpoints?")
    u = np.linalg.solve(M.T, -A)
    # one step of iterative refinement
    u = u + np.linalg.solve(M.T, -A - M.T @ u)
    resid = float(np.max(np.abs(M.T @ u + A))) if n else 0.0
    scale = float(np.max(np.abs(A))) if n else 0.0
    if resid > 1e-9 * max(scale, 1e-300) and scale > 0:
        raise RHPError(f"moment system residual {resid:.3g} too large")
    D = complex(np.linalg.det(M))
    if abs(D) <= 1e-12 * bps.scale ** (2 * N * N):
        raise RHPError("D vanishes")
    sol = replace(
        proto,
        W=tuple(complex(v) for v in u[:N]),
        Omega=tuple(complex(v) for v in u[N:]),
        D=D,
        moment_matrix_cond=cond,
        M=M,
        A=A,
    )
    if check_real and sd.schwarz_symmetric and cs.is_schwarz_symmetric:
        imag = float(np.max(np.abs(u.imag)))
        if imag >= 1e-8 * max(1.0, float(np.max(np.abs(u)))):
            raise RHPError(f"constants should be real for Schwarz-symmetric data (max |Im| = {imag:.3g})")
    return sol


def eval_D(sol: RHPSolution) -> complex:
    return sol.D


def _as_array(z):
    return np.atleast_1d(np.asarray(z, dtype=complex)), np.ndim(z) == 0


def eval_K(sol: RHPSolution, z):
    """K(z) from the literal loops (no location correction)."""
    zs, scalar = _as_array(z)
    n = 2 * sol.N
    mat = sol.K_matrix(zs, sol.A if n else np.zeros(0), sol.cauchy_f(zs))
    out = np.linalg.det(mat) / TWO_PI_I
    return complex(out[0]) if scalar else out


def eval_B(sol: RHPSolution, z):
    """Loop-form bracket: big-loop f integral plus W/Omega-weighted loop integrals."""
    zs, scalar = _as_array(z)
    out = sol.cauchy_f(zs)
    if sol.N:
        out = out + sol.constants @ sol.cauchy_loops(zs)
    return complex(out[0]) if scalar else out


def _corrections(sol: RHPSolution, loc: Location) -> tuple[complex, float]:
    """(constant term from small loops, 1 if inside the big loop else 0)."""
    const = 0j
    for i, inside in enumerate(loc.inside_m):
        if inside:
            const += sol.W[i]
    for i, side in enumerate(loc.inside_c):
        if side:
            const += side * sol.Omega[i]
    return const, 1.0 if loc.inside_loop_all else 0.0


def locations(sol: RHPSolution, zs) -> list:
    return [point_location(sol.cs, complex(w)) for w in zs]


def loop_distance(cs: ContourSystem, z: complex) -> float:
    return min(c.distance(complex(z)) for c in (cs.loop_all, *cs.loops_m, *cs.loops_c))


def near_loop_mask(sol: RHPSolution, zs: np.ndarray) -> np.ndarray:
    limit = NEAR_LOOP * sol.cs.margin
    return np.array([loop_distance(sol.cs, w) < limit for w in zs], dtype=bool)


def alternate(sol: RHPSolution, zs) -> RHPSolution:
    """The same solution on loops rebuilt at another margin, clear of every point in ``zs``.

    The constants are carried over unchanged, so the result agrees with
    ``sol`` wherever both apply.
    """
    for factor in ALT_MARGINS:
        if factor not in sol.rules.alternates:
            try:
                cs = build_loops(sol.cs, factor * sol.cs.margin)
                base = solve_constants(sol.bps, cs, sol.sd, sol.x, sol.t, sol.quad, check_real=False)
            except (GeometryError, RHPError) as exc:
                log.debug("alternate loops at %.3g x margin unusable: %s", factor, exc)
                base = None
            sol.rules.alternates[factor] = base
        base = sol.rules.alternates[factor]
        if base is None:
            continue
        if not near_loop_mask(base, np.asarray(zs)).any():
            return replace(base, W=sol.W, Omega=sol.Omega)
    raise GeometryError("points lie too close to every available loop set")


def _split_eval(sol: RHPSolution, z, locs, direct):
    zs, scalar = _as_array(z)
    near = near_loop_mask(sol, zs)
    out = np.empty(zs.shape, dtype=complex)
    if (~near).any():
        far_z = zs[~near]
        if locs is None:
            far_locs = locations(sol, far_z)
        else:
            far_locs = [loc for loc, n in zip(locs, near) if not n]
        out[~near] = direct(sol, far_z, far_locs)
    if near.any():
        alt = alternate(sol, zs[near])
        out[near] = direct(alt, zs[near], locations(alt, zs[near]))
    return complex(out[0]) if scalar else out


def _g_direct(sol: RHPSolution, zs: np.ndarray, locs) -> np.ndarray:
    R = _radical(sol, zs)
    out = R * eval_B(sol, zs) / (2 * TWO_PI_I)
    for i, loc in enumerate(locs):
        const, inside = _corrections(sol, loc)
        fz = sol.f(zs[i]) if (inside and not (sol.sd.is_zero and sol.x == 0 and sol.t == 0)) else 0j
        out[i] += 0.5 * const + 0.5 * inside * fz
    return out


def _h_direct(sol: RHPSolution, zs: np.ndarray, locs) -> np.ndarray:
    R = _radical(sol, zs)
    out = R * eval_K(sol, zs) / sol.D
    for i, loc in enumerate(locs):
        const, inside = _corrections(sol, loc)
        out[i] += const
        if not inside and not (sol.sd.is_zero and sol.x == 0 and sol.t == 0):
            out[i] -= sol.f(zs[i])
    return out


def eval_g(sol: RHPSolution, z, locs=None):
    """g(z) from the loop form with residue corrections for the location of z.

    ``locs`` (one Location per point) may be passed to skip the location
    lookup; it is ignored for points close to a loop.
    """
    return _split_eval(sol, z, locs, _g_direct)


def eval_h(sol: RHPSolution, z, locs=None):
    """h(z) = R K / D with residue corrections for the location of z."""
    return _split_eval(sol, z, locs, _h_direct)


def _radical(sol: RHPSolution, zs: np.ndarray) -> np.ndarray:
    rad = sol.cs.radical
    for w in zs:
        if rad.distance_to_cuts(complex(w)) <= 1e-12 * max(1.0, abs(w)):
            raise GeometryError(f"z = {complex(w)} lies on a branch cut")
    return rad(zs)


def modulation_residual(sol: RHPSolution, lower: bool = False) -> np.ndarray:
    """K at alpha_0, alpha_2, ..., alpha_4N (and the lower ones with ``lower``).

    Each branchpoint already lies inside the loops of its adjacent arcs and
    outside all other small loops, so K is evaluated there directly.
    """
    pts = list(sol.bps.upper) + (list(sol.bps.lower) if lower else [])
    return np.asarray(eval_K(sol, np.array(pts)))


# --------------------------------------------------------------------------
# jump diagnostics


@dataclass(frozen=True)
class JumpReport:
    max_main: float
    max_comp: float
    per_arc: tuple  # (label, max violation)
    offset: float

    @property
    def max_violation(self) -> float:
        return max(self.max_main, self.max_comp)

    def to_json(self) -> dict:
        return {
            "max_main": self.max_main,
            "max_comp": self.max_comp,
            "offset": self.offset,
            "per_arc": [{"arc": a, "violation": v} for a, v in self.per_arc],
        }


def _arc_samples(path, n: int):
    """Interior points and unit left normals at Gauss-Legendre positions of every piece."""
    s = 0.5 * (np.polynomial.legendre.leggauss(n)[0] + 1)
    pts, normals = [], []
    for seg in path.segments:
        p = seg.point(s)
        tan = seg.deriv(s)
        pts.append(p)
        normals.append(1j * tan / np.abs(tan))
    return np.concatenate(pts), np.concatenate(normals)


def jump_check(sol: RHPSolution, samples_per_arc: int = 8, offset: float = 1e-6) -> JumpReport:
    """Two-sided limits of g on every arc, Richardson-extrapolated in the offset.

    Main arc k: g_+ + g_- - f - W_k (W_0 = 0).  Complementary arc k:
    g_+ - g_- - Omega_k.  The + side is to the left of the arc direction.
    """
    N = sol.N
    per_arc = []

    def limits(p, nrm):
        out = []
        for d in (offset, 2 * offset):
            gp = eval_g(sol, p + d * nrm)
            gm = eval_g(sol, p - d * nrm)
            out.append((gp, gm))
        (gp1, gm1), (gp2, gm2) = out
        return 2 * gp1 - gp2, 2 * gm1 - gm2

    max_main = 0.0
    for k, arcs in enumerate(sol.cs.main_arcs):
        Wk = 0j if k == 0 else sol.W[k - 1]
        for tag, arc in zip(("", "+", "-") if k == 0 else ("+", "-"), arcs):
            p, nrm = _arc_samples(arc, samples_per_arc)
            keep = np.abs(p.imag) > 1e-3  # keep away from a real-axis jump of f
            p, nrm = p[keep], nrm[keep]
            gp, gm = limits(p, nrm)
            v = float(np.max(np.abs(gp + gm - sol.f(p) - Wk)))
            per_arc.append((f"m{k}{tag}", v))
            max_main = max(max_main, v)
    max_comp = 0.0
    for k in range(1, N + 1):
        for tag, arc in zip(("+", "-"), sol.cs.comp_arcs[k - 1]):
            p, nrm = _arc_samples(arc, samples_per_arc)
            gp, gm = limits(p, nrm)
            v = float(np.max(np.abs(gp - gm - sol.Omega[k - 1])))
            per_arc.append((f"c{k}{tag}", v))
            max_comp = max(max_comp, v)
    return JumpReport(max_main, max_comp, tuple(per_arc), offset)


def growth_coefficients(
    sol: RHPSolution, radii=tuple(np.logspace(3, 5, 9)), direction: complex = np.exp(0.3j), tail: int = 3
) -> np.ndarray:
    """Least-squares coefficients of z^1..z^(2N) in g along a ray.

    g is fitted by sum of a_k z^k for k = -tail..2N at the given radii; the
    negative powers absorb the decaying part of g so it does not leak into
    the growth terms.  With analyticity at infinity all a_1..a_{2N} vanish.
    """
    z = np.asarray(radii, dtype=float) * direction
    g = np.asarray(eval_g(sol, z))
    deg = 2 * sol.N
    powers = np.arange(-tail, deg + 1)
    if len(z) < len(powers):
        raise ValueError("need at least as many radii as fitted powers")
    V = z[:, None] ** powers[None, :]
    scale = np.abs(V).max(axis=0)
    coef = np.linalg.lstsq(V / scale, g, rcond=None)[0] / scale
    return coef[tail + 1 :]


def local_exponent(sol: RHPSolution, j: int, deltas=None, direction: complex | None = None) -> float:
    """Slope of log|h - h(alpha_j)| against log delta near the upper branchpoint alpha_{2j}."""
    alpha = sol.bps.upper[j]
    if deltas is None:
        deltas = np.logspace(-5, -2, 7)
    if direction is None:
        direction = 1j * np.exp(0.2j)
    z = alpha + np.asarray(deltas) * direction
    locs = locations(sol, z)
    h = np.asarray(eval_h(sol, z, locs))
    const, _ = _corrections(sol, locs[0])
    y = np.log(np.abs(h - const))
    return float(np.polyfit(np.log(deltas), y, 1)[0])


def report_json(sol: RHPSolution) -> dict:
    return {
        "N": sol.N,
        "x": sol.x,
        "t": sol.t,
        "W": [[w.real, w.imag] for w in sol.W],
        "Omega": [[o.real, o.imag] for o in sol.Omega],
        "D": [sol.D.real, sol.D.imag],
        "moment_matrix_cond": sol.moment_matrix_cond,
    }
