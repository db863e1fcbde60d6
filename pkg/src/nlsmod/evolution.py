"""x/t derivatives of K, characteristic velocities, branchpoint and constant rates,
and RK4 sweeps with Newton re-projection."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import BranchpointSet, GeometryError, build_contours
from .modulation import ModulationError, eval_cj, newton_solve
from .quadrature import DEFAULT, QuadConfig
from .rhp import (
    RHPError,
    RHPSolution,
    TWO_PI_I,
    eval_h,
    locations,
    modulation_residual,
    solve_constants,
)
from .scattering import ScatteringData

log = logging.getLogger(__name__)


class EvolutionError(RuntimeError):
    """Degenerate configuration or failed projection."""


# --------------------------------------------------------------------------
# partial derivatives of K


def _K_with_row(sol: RHPSolution, z, p: int, coef: float):
    """K with f replaced by coef * zeta^p (the x and t derivatives of f)."""
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    n = 2 * sol.N
    row = coef * sol.big_moments(n, p) if n else np.zeros(0)
    mat = sol.K_matrix(zs, row, coef * sol.cauchy_poly(zs, p))
    out = np.linalg.det(mat) / TWO_PI_I
    return complex(out[0]) if np.ndim(z) == 0 else out


def dK_dx(sol: RHPSolution, z):
    """Partial x-derivative of K(z) at fixed branchpoints (f -> -zeta)."""
    return _K_with_row(sol, z, 1, -1.0)


def dK_dt(sol: RHPSolution, z):
    """Partial t-derivative of K(z) at fixed branchpoints (f -> -2 zeta^2)."""
    return _K_with_row(sol, z, 2, -2.0)


def _two_by_two(sol: RHPSolution, z, k: int):
    """det [[M_m,k, C_m(z)], [M_c,k, C_c(z)]] for N = 1."""
    if sol.N != 1:
        raise ValueError("explicit 2x2 forms are for N = 1")
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    C = sol.cauchy_loops(zs)
    out = sol.M[0, k] * C[1] - sol.M[1, k] * C[0]
    return complex(out[0]) if np.ndim(z) == 0 else out


def dK_dx_explicit(sol: RHPSolution, z):
    """N = 1 closed form, valid inside the big loop: -det[[M_m0, C_m], [M_c0, C_c]]."""
    return -np.asarray(_two_by_two(sol, z, 0)) if np.ndim(z) else -_two_by_two(sol, z, 0)


def dK_dt_first(sol: RHPSolution, z):
    """N = 1: the zeta-weighted determinant 2 det[[M_m1, C_m], [M_c1, C_c]].

    Inside the big loop dK_dt = dK_dt_first + (sum of all alphas) * dK_dx.
    """
    return 2 * np.asarray(_two_by_two(sol, z, 1)) if np.ndim(z) else 2 * _two_by_two(sol, z, 1)


# --------------------------------------------------------------------------
# velocities and rates


def velocities(sol: RHPSolution) -> np.ndarray:
    """v_j = dK_dt(alpha_2j) / dK_dx(alpha_2j); depends on the branchpoints only."""
    a = np.array(sol.bps.upper)
    kx = np.asarray(dK_dx(sol, a))
    if np.any(np.abs(kx) < 1e-300):
        raise EvolutionError("characteristic degeneracy: dK/dx vanishes at a branchpoint")
    return np.asarray(dK_dt(sol, a)) / kx


def velocities_explicit(sol: RHPSolution) -> np.ndarray:
    """N = 1: sum(alpha) - 2 det1 / det0 with the 2x2 determinants at alpha_2j."""
    a = np.array(sol.bps.upper)
    d0 = np.asarray(_two_by_two(sol, a, 0))
    d1 = np.asarray(_two_by_two(sol, a, 1))
    if np.any(np.abs(d0) < 1e-300):
        raise EvolutionError("characteristic degeneracy: vanishing denominator determinant")
    return sol.bps.total - 2 * d1 / d0


@dataclass(frozen=True)
class Rates:
    x: np.ndarray
    t: np.ndarray
    c: np.ndarray
    consistency: float


def alpha_rates(sol: RHPSolution) -> Rates:
    """(alpha_2j)_x and (alpha_2j)_t from -dK/dx,t(alpha_2j) / ((3/2) c_j D)."""
    a = np.array(sol.bps.upper)
    c = np.array([eval_cj(sol, j) for j in range(len(a))])
    den = 1.5 * c * sol.D
    if np.any(np.abs(den) < 1e-14):
        raise EvolutionError("c_j D vanishes: rates undefined")
    kx = np.asarray(dK_dx(sol, a))
    kt = np.asarray(dK_dt(sol, a))
    ax = -kx / den
    at = -kt / den
    v = kt / kx if np.all(np.abs(kx) > 0) else np.full(len(a), np.nan)
    cons = float(np.max(np.abs(at - v * ax) / np.maximum(np.abs(at), 1e-300)))
    return Rates(ax, at, c, cons)


@dataclass(frozen=True)
class ConstantRates:
    W_x: np.ndarray
    Omega_x: np.ndarray
    W_t: np.ndarray
    Omega_t: np.ndarray
    closed_form: bool

    def wronskian(self) -> complex:
        """Omega_x W_t - Omega_t W_x (first components)."""
        return complex(self.Omega_x[0] * self.W_t[0] - self.Omega_t[0] * self.W_x[0])


def constants_rates(sol: RHPSolution, fd_step: float = 1e-4) -> ConstantRates:
    """x and t derivatives of W and Omega along the solution manifold.

    N = 1 uses the closed forms in the loop integrals of 1/R and zeta/R; other
    N fall back to central differences over fresh Newton solves.
    """
    if sol.N == 1:
        M = sol.M
        S = sol.bps.total
        D = sol.D
        Wx = TWO_PI_I * M[1, 0] / D
        Ox = -TWO_PI_I * M[0, 0] / D
        Wt = -2 * TWO_PI_I / D * (M[1, 1] - 0.5 * S * M[1, 0])
        Ot = 2 * TWO_PI_I / D * (M[0, 1] - 0.5 * S * M[0, 0])
        return ConstantRates(np.array([Wx]), np.array([Ox]), np.array([Wt]), np.array([Ot]), True)
    if sol.N == 0:
        e = np.zeros(0, dtype=complex)
        return ConstantRates(e, e, e, e, True)
    log.warning("constants_rates: no closed form for N = %d, using finite differences", sol.N)
    out = []
    for axis in ("x", "t"):
        vals = []
        for s in (fd_step, -fd_step):
            x = sol.x + (s if axis == "x" else 0.0)
            t = sol.t + (s if axis == "t" else 0.0)
            rep = newton_solve(sol.bps, sol.sd, x, t, quad=sol.quad, margin=sol.cs.margin)
            if not rep.converged:
                raise EvolutionError("finite-difference re-solve did not converge")
            vals.append(rep.solution.constants)
        out.append((vals[0] - vals[1]) / (2 * fd_step))
    N = sol.N
    return ConstantRates(out[0][:N], out[0][N:], out[1][:N], out[1][N:], False)


def corollary_check(sol: RHPSolution, z, step: float = 1e-4) -> dict:
    """Total x-derivative of h(z) across fresh solves against (R/D) dK/dx (+ z outside the big loop)."""
    z = complex(z)
    vals = []
    for s in (step, -step):
        rep = newton_solve(sol.bps, sol.sd, sol.x + s, sol.t, quad=sol.quad, margin=sol.cs.margin)
        if not rep.converged:
            raise EvolutionError("re-solve did not converge")
        vals.append(eval_h(rep.solution, z))
    total = (vals[0] - vals[1]) / (2 * step)
    loc = locations(sol, [z])[0]
    partial = sol.cs.radical(np.array([z]))[0] * dK_dx(sol, z) / sol.D
    if not loc.inside_loop_all:
        partial += z  # h = R K / D - f there, and d f / d x = -z
    dev = abs(total - partial) / max(abs(partial), 1e-300)
    return {"z": z, "total": complex(total), "partial": complex(partial), "deviation": float(dev)}


# --------------------------------------------------------------------------
# sweeps


@dataclass
class Trajectory:
    axis: str
    grid: list = field(default_factory=list)
    states: list = field(default_factory=list)
    constants: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    truncated: bool = False
    reason: str = ""

    def append(self, sol: RHPSolution, residual: float, min_c: float, wronskian_dev: float | None):
        self.grid.append((sol.x, sol.t))
        self.states.append(sol.bps)
        self.constants.append((tuple(sol.W), tuple(sol.Omega)))
        self.diagnostics.append(
            {"residual": residual, "abs_D": abs(sol.D), "min_abs_c": min_c, "wronskian_deviation": wronskian_dev}
        )

    def csv_header(self) -> list:
        if not self.states:
            return []
        n = len(self.states[0].upper)
        N = (n - 1) // 2
        cols = ["x", "t"]
        for j in range(n):
            cols += [f"re_alpha{2 * j}", f"im_alpha{2 * j}"]
        for j in range(1, N + 1):
            cols += [f"re_W{j}", f"im_W{j}"]
        for j in range(1, N + 1):
            cols += [f"re_Omega{j}", f"im_Omega{j}"]
        return cols + ["residual", "abs_D"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        for (x, t), bps, (W, O), diag in zip(self.grid, self.states, self.constants, self.diagnostics):
            row = [x, t]
            for a in bps.upper:
                row += [a.real, a.imag]
            for v in (*W, *O):
                row += [v.real, v.imag]
            row += [diag["residual"], diag["abs_D"]]
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "axis": self.axis,
            "truncated": self.truncated,
            "reason": self.reason,
            "points": [
                {
                    "x": x,
                    "t": t,
                    "alphas": [[a.real, a.imag] for a in bps.upper],
                    "W": [[w.real, w.imag] for w in W],
                    "Omega": [[o.real, o.imag] for o in O],
                    **diag,
                }
                for (x, t), bps, (W, O), diag in zip(self.grid, self.states, self.constants, self.diagnostics)
            ],
        }


def _fmt(v) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class Sweep:
    axis: str
    start: float
    stop: float
    step: float = 1e-2

    def __post_init__(self):
        if self.axis not in ("x", "t"):
            raise ValueError("sweep axis must be 'x' or 't'")
        if self.step <= 0:
            raise ValueError("sweep step must be positive")


@dataclass(frozen=True)
class EvolveOptions:
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    min_step: float = 1e-5
    quad: QuadConfig = DEFAULT
    margin: float | None = None
    degenerate_D: float = 1e-10
    degenerate_c: float = 1e-10
    degenerate_gap: float = 1e-6
    custom_arcs: dict | None = None


def _rate(sol: RHPSolution, axis: str) -> np.ndarray:
    r = alpha_rates(sol)
    return r.x if axis == "x" else r.t


def _point_diag(sol: RHPSolution, opts: EvolveOptions):
    res = float(np.max(np.abs(modulation_residual(sol))))
    c = np.array([eval_cj(sol, j) for j in range(len(sol.bps.upper))])
    wdev = None
    if sol.N == 1:
        w = constants_rates(sol).wronskian()
        wdev = abs(w - (-8 * np.pi**2 / sol.D)) / abs(8 * np.pi**2 / sol.D)
    return res, float(np.min(np.abs(c))) if len(c) else 0.0, wdev


def _degenerate(sol: RHPSolution, min_c: float, opts: EvolveOptions) -> str:
    if abs(sol.D) < opts.degenerate_D:
        return "D collapsed"
    if min_c < opts.degenerate_c:
        return "c_j collapsed"
    up = np.array(sol.bps.upper)
    if np.min(np.abs(up.imag)) < opts.degenerate_gap:
        return "branchpoint reached the real axis"
    if sol.bps.min_distance < opts.degenerate_gap:
        return "branchpoint collision"
    return ""


def evolve(initial: BranchpointSet, sd: ScatteringData, sweep: Sweep, fixed: float, opts: EvolveOptions = EvolveOptions()) -> Trajectory:
    """RK4 in the sweep variable on the branchpoint rates, re-projected by Newton after each step.

    ``fixed`` is the value of the other variable (t for an x sweep).
    Degeneracies stop the sweep and mark the trajectory truncated.
    """
    axis = sweep.axis

    def xt(s):
        return (s, fixed) if axis == "x" else (fixed, s)

    traj = Trajectory(axis)
    x0, t0 = xt(sweep.start)
    rep = _project(initial, sd, x0, t0, opts)
    if not rep.converged:
        if rep.status == "singular_jacobian":
            sol = _constants(initial, sd, x0, t0, opts)
            traj.append(sol, rep.residual, 0.0, None)
            traj.truncated, traj.reason = True, "singular Jacobian at the start"
            return traj
        raise EvolutionError(f"initial configuration does not satisfy the modulation equations ({rep.status})")
    sol = rep.solution
    res, min_c, wdev = _point_diag(sol, opts)
    traj.append(sol, res, min_c, wdev)
    reason = _degenerate(sol, min_c, opts)
    if reason:
        traj.truncated, traj.reason = True, reason
        return traj

    direction = 1.0 if sweep.stop >= sweep.start else -1.0
    s = sweep.start
    h = sweep.step
    span = abs(sweep.stop - sweep.start)
    while abs(s - sweep.start) < span - 1e-14 * max(1.0, span):
        dh = min(h, span - abs(s - sweep.start)) * direction
        try:
            new_sol = _rk4_step(sol, sd, s, dh, axis, xt, opts)
        except (EvolutionError, GeometryError, RHPError, ModulationError) as exc:
            if h / 2 >= opts.min_step:
                h /= 2
                log.info("sweep step halved to %.3g at %s = %.6g (%s)", h, axis, s, exc)
                continue
            traj.truncated, traj.reason = True, f"projection failed at {axis} = {s:.17g}: {exc}"
            return traj
        s = s + dh
        sol = new_sol
        res, min_c, wdev = _point_diag(sol, opts)
        traj.append(sol, res, min_c, wdev)
        reason = _degenerate(sol, min_c, opts)
        if reason:
            traj.truncated, traj.reason = True, reason
            return traj
    return traj


def _project(bps, sd, x, t, opts):
    return newton_solve(
        bps, sd, x, t, opts.newton_tol, opts.newton_max_iter, opts.quad, opts.margin, custom_arcs=opts.custom_arcs
    )


def _constants(bps, sd, x, t, opts):
    cs = build_contours(bps, opts.margin, opts.custom_arcs, sd.singularities) if opts.custom_arcs else None
    return solve_constants(bps, cs, sd, x, t, opts.quad, opts.margin)


def _rk4_step(sol, sd, s, dh, axis, xt, opts):
    a0 = np.array(sol.bps.upper)

    def rate_at(alphas, s_val):
        x, t = xt(s_val)
        sp = _constants(BranchpointSet.from_upper(alphas), sd, x, t, opts)
        return _rate(sp, axis)

    k1 = _rate(sol, axis)
    k2 = rate_at(a0 + 0.5 * dh * k1, s + 0.5 * dh)
    k3 = rate_at(a0 + 0.5 * dh * k2, s + 0.5 * dh)
    k4 = rate_at(a0 + dh * k3, s + dh)
    guess = a0 + dh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    x, t = xt(s + dh)
    rep = _project(BranchpointSet.from_upper(guess), sd, x, t, opts)
    if not rep.converged:
        raise EvolutionError(f"re-projection failed ({rep.status})")
    return rep.solution
