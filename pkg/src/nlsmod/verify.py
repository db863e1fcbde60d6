"""Verification suite: every identity check at one configuration, with pass/fail per tolerance."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .evolution import (
    EvolutionError,
    alpha_rates,
    constants_rates,
    velocities,
    velocities_explicit,
)
from .geometry import BranchpointSet, GeometryError, build_contours, point_location
from .modulation import (
    DEFAULT_TEST_POINTS,
    eval_cj,
    eval_cj_alt,
    lemma_derKa_check,
    theorem_dhda_check,
)
from .quadrature import DEFAULT, QuadConfig, segment_reduction_check
from .rhp import (
    RHPSolution,
    eval_g,
    eval_h,
    growth_coefficients,
    jump_check,
    local_exponent,
    modulation_residual,
    solve_constants,
)

log = logging.getLogger(__name__)

TOL = {
    "modulation_residual": 1e-10,
    "jump": 1e-6,
    "growth": 1e-6,
    "h_routes": 1e-8,
    "lemma": 1e-5,
    "theorem": 1e-5,
    "theorem_detuned": 1e-3,
    "segment_reduction": 1e-8,
    "cj_routes": 1e-7,
    "local_exponent": 0.05,
    "wronskian": 1e-7,
    "velocity_routes": 1e-8,
    "rate_consistency": 1e-9,
}

CHECK_ORDER = (
    "modulation_residual",
    "jump",
    "growth",
    "h_routes",
    "segment_reduction",
    "velocity_routes",
    "wronskian",
    "lemma",
    "theorem",
    "theorem_detuned",
    "cj_routes",
    "local_exponent",
    "rate_consistency",
)

DETUNE_PATTERN = (1.0, -1j, 0.5 + 0.5j)


@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "skipped"
    value: float | None = None
    tolerance: float | None = None
    detail: dict = field(default_factory=dict)
    reason: str = ""

    def to_json(self) -> dict:
        out = {"name": self.name, "status": self.status, "value": self.value, "tolerance": self.tolerance}
        if self.reason:
            out["reason"] = self.reason
        if self.detail:
            out["detail"] = self.detail
        return out


def _le(name, value, tol, **detail) -> Check:
    ok = bool(np.isfinite(value) and value < tol)
    return Check(name, "pass" if ok else "fail", float(value), tol, detail)


def _skip(name, reason) -> Check:
    return Check(name, "skipped", reason=reason)


def detuned(bps: BranchpointSet, amount: float) -> BranchpointSet:
    pat = np.resize(np.array(DETUNE_PATTERN, dtype=complex), len(bps.upper))
    return BranchpointSet.from_upper(np.array(bps.upper) + amount * pat)


def class_points(sol: RHPSolution, per_class: int = 6, seed: int = 0, draws: int = 4000, max_lookups: int = 600) -> list:
    """Deterministic sample points grouped over every location class, away from all contours."""
    cs = sol.cs
    verts = np.concatenate([p.polyline(8.0) for p in cs.loop_all.paths])
    lo = complex(verts.real.min(), verts.imag.min())
    hi = complex(verts.real.max(), verts.imag.max())
    pad = 0.5 * max(hi.real - lo.real, hi.imag - lo.imag)
    gap = 0.15 * cs.margin
    paths = [p for c in (cs.loop_all, *cs.loops_m, *cs.loops_c) for p in c.paths]
    paths += [p for a in cs.main_arcs for p in a] + [p for a in cs.comp_arcs for p in a]
    dense = np.concatenate([np.asarray(p.polyline(8.0 / gap)) for p in paths])
    rng = np.random.default_rng(seed)
    z = rng.uniform(lo.real - pad, hi.real + pad, draws) + 1j * rng.uniform(lo.imag - pad, hi.imag + pad, draws)
    near = np.array([np.min(np.abs(dense - w)) for w in z])
    z = z[(near > gap) & (np.abs(z.imag) > gap)]  # f may jump on the real axis
    found: dict = {}
    for w in z[:max_lookups]:
        bucket = found.setdefault(point_location(cs, complex(w)).label(), [])
        if len(bucket) < per_class:
            bucket.append(complex(w))
    return [w for label in sorted(found) for w in found[label]]


def _arc_inner_point(sol: RHPSolution, kind: str, k: int) -> complex:
    arcs = sol.cs.main_arcs[k] if kind == "m" else sol.cs.comp_arcs[k - 1]
    seg = arcs[0].segments[0]
    s = np.array([0.37])
    tan = complex(seg.deriv(s)[0])
    return complex(seg.point(s)[0]) + 0.3 * sol.cs.margin * 1j * tan / abs(tan)


@dataclass
class VerifyReport:
    checks: list
    elapsed: float
    solution: dict

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "solution": self.solution,
            "checks": [c.to_json() for c in self.checks],
        }


def _degenerate_reason(sol: RHPSolution, c: np.ndarray) -> str:
    if sol.sd.is_zero and sol.x == 0 and sol.t == 0:
        return "f vanishes identically, so c_j = 0 and h = 0"
    if len(c) and float(np.max(np.abs(c))) == 0.0:
        return "all c_j vanish"
    return ""


def run_checks(
    bps: BranchpointSet,
    sd,
    x: float,
    t: float,
    quad: QuadConfig = DEFAULT,
    margin: float | None = None,
    custom_arcs: dict | None = None,
    newton_tol: float = TOL["modulation_residual"],
    detune: float = 0.1,
    only: tuple | None = None,
) -> VerifyReport:
    """Run every check at ``bps`` as given (no Newton projection).

    ``only`` restricts the run to the named checks.
    """
    t0 = time.perf_counter()
    cs = build_contours(bps, margin, custom_arcs, sd.singularities)
    sol = solve_constants(bps, cs, sd, x, t, quad, margin)
    c = np.array([eval_cj(sol, j) for j in range(len(bps.upper))])
    degenerate = _degenerate_reason(sol, c)
    checks = []

    def want(name):
        return only is None or name in only

    def guarded(name, fn):
        if not want(name):
            return
        try:
            res = fn()
        except (GeometryError, EvolutionError, ArithmeticError, RuntimeError, ValueError) as exc:
            checks.append(Check(name, "fail", reason=f"{type(exc).__name__}: {exc}"))
            return
        checks.extend(res if isinstance(res, list) else [res])

    def residual():
        K = np.abs(modulation_residual(sol))
        scale = abs(sol.D) * float(np.max(np.abs(c))) if len(c) else 0.0
        res = float(np.max(K))
        if res == 0.0:
            return _le("modulation_residual", 0.0, newton_tol)
        if scale == 0.0:
            return Check("modulation_residual", "fail", res, newton_tol, reason="zero scale")
        return _le("modulation_residual", res / scale, newton_tol, absolute=res)

    guarded("modulation_residual", residual)

    def jumps():
        rep = jump_check(sol)
        return _le("jump", rep.max_violation, TOL["jump"], per_arc=dict(rep.per_arc))

    guarded("jump", jumps)

    def growth():
        coef = growth_coefficients(sol)
        v = float(np.max(np.abs(coef))) if len(coef) else 0.0
        return _le("growth", v, TOL["growth"])

    guarded("growth", growth)

    def h_routes():
        pts = class_points(sol)
        h = np.asarray(eval_h(sol, np.array(pts)))
        alt = 2 * np.asarray(eval_g(sol, np.array(pts))) - sol.f(np.array(pts))
        den = np.maximum(np.maximum(np.abs(h), np.abs(alt)), 1e-300)
        err = np.abs(h - alt) / den
        err[(np.abs(h) == 0) & (np.abs(alt) == 0)] = 0.0
        labels = sorted({point_location(sol.cs, z).label() for z in pts})
        return _le("h_routes", float(np.max(err)), TOL["h_routes"], points=len(pts), classes=labels)

    guarded("h_routes", h_routes)

    def segments():
        out = []
        worst = 0.0
        for kind in ("m", "c"):
            for k in range(1, sol.N + 1):
                z = _arc_inner_point(sol, kind, k)
                rep = segment_reduction_check(sol.cs, z, kind, k, quad)
                scale = max(abs(rep.loop_value), 1e-300)
                worst = max(worst, rep.discrepancy / scale)
                out.append(rep.to_json())
        return _le("segment_reduction", worst, TOL["segment_reduction"], reports=out)

    if sol.N == 0:
        if want("segment_reduction"):
            checks.append(_skip("segment_reduction", "no small loops for N = 0"))
    else:
        guarded("segment_reduction", segments)

    def velocity_routes():
        v = velocities(sol)
        if sol.N != 1:
            return _skip("velocity_routes", "explicit form is written for N = 1")
        w = velocities_explicit(sol)
        return _le("velocity_routes", float(np.max(np.abs(v - w) / np.abs(v))), TOL["velocity_routes"])

    guarded("velocity_routes", velocity_routes)

    def wronskian():
        if sol.N != 1:
            return _skip("wronskian", "identity is stated for N = 1")
        w = constants_rates(sol).wronskian()
        ref = -8 * np.pi**2 / sol.D
        return _le("wronskian", abs(w - ref) / abs(ref), TOL["wronskian"], wronskian=[w.real, w.imag])

    guarded("wronskian", wronskian)

    if degenerate:
        for name in ("lemma", "theorem", "theorem_detuned", "cj_routes", "local_exponent", "rate_consistency"):
            if want(name):
                checks.append(_skip(name, degenerate))
    else:

        def lemma():
            out, worst = [], 0.0
            for i in range(len(bps.all)):
                rep = lemma_derKa_check(sol, i, DEFAULT_TEST_POINTS[0])
                worst = max(worst, rep.deviation)
                out.append(rep.to_json())
            return _le("lemma", worst, TOL["lemma"], reports=out)

        guarded("lemma", lemma)

        def theorem():
            reps = [theorem_dhda_check(sol, i) for i in range(len(bps.all))]
            worst = max(r.max_abs for r in reps)
            return _le("theorem", worst, TOL["theorem"], per_index=[r.max_abs for r in reps])

        guarded("theorem", theorem)

        def theorem_detuned():
            sd_sol = solve_constants(detuned(bps, detune), None, sd, x, t, quad, margin, check_real=False)
            v = theorem_dhda_check(sd_sol, 0).max_abs
            ok = v >= TOL["theorem_detuned"]
            return Check("theorem_detuned", "pass" if ok else "fail", v, TOL["theorem_detuned"], {"detune": detune})

        guarded("theorem_detuned", theorem_detuned)

        def cj_routes():
            alt = np.array([eval_cj_alt(sol, j) for j in range(len(c))])
            err = float(np.max(np.abs(c - alt) / np.abs(c)))
            return _le("cj_routes", err, TOL["cj_routes"], c=[[v.real, v.imag] for v in c])

        guarded("cj_routes", cj_routes)

        def exponents():
            s = np.array([local_exponent(sol, j) for j in range(len(c))])
            return _le("local_exponent", float(np.max(np.abs(s - 1.5))), TOL["local_exponent"], slopes=s.tolist())

        guarded("local_exponent", exponents)

        def rates():
            r = alpha_rates(sol)
            return _le("rate_consistency", r.consistency, TOL["rate_consistency"])

        guarded("rate_consistency", rates)

    summary = {
        "N": sol.N,
        "x": sol.x,
        "t": sol.t,
        "D": [sol.D.real, sol.D.imag],
        "W": [[w.real, w.imag] for w in sol.W],
        "Omega": [[o.real, o.imag] for o in sol.Omega],
    }
    return VerifyReport(checks, time.perf_counter() - t0, summary)
