"""Newton solve of K(alpha_2j) = 0 with the diagonal Jacobian, and numerical checks of
the branchpoint-derivative identities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import BranchpointSet, GeometryError, build_contours
from .quadrature import DEFAULT, QuadConfig
from .rhp import (
    RHPError,
    RHPSolution,
    TWO_PI_I,
    eval_h,
    eval_K,
    locations,
    modulation_residual,
    solve_constants,
)
from .scattering import ScatteringData, eval_f_prime, parse_f0

log = logging.getLogger(__name__)

SINGULAR_JACOBIAN = 1e-14


class ModulationError(RuntimeError):
    """Singular Jacobian or an impossible branchpoint configuration."""


def _upper_alpha(sol: RHPSolution, j: int) -> complex:
    return sol.bps.upper[j]


def eval_cj(sol: RHPSolution, j: int) -> complex:
    """c_j from the big-loop integral of f'(zeta)/((zeta - alpha_2j) R), divided by 3 pi i."""
    a = _upper_alpha(sol, j)
    if sol.sd.is_zero and sol.x == 0 and sol.t == 0:
        return 0j
    val = sol.rules.all.integrate(lambda q: eval_f_prime(sol.sd, q, sol.x, sol.t) / (q - a))
    return complex(val) / (1.5 * TWO_PI_I)


def eval_cj_alt(sol: RHPSolution, j: int) -> complex:
    """c_j as the derivative at alpha_2j of the loop-form bracket (second-order poles).

    Every small loop contributes with its constant; restricting to the loops
    adjacent to alpha_2j changes the value whenever another loop is present.
    """
    a = _upper_alpha(sol, j)
    if sol.sd.is_zero and sol.x == 0 and sol.t == 0:
        return 0j
    val = complex(sol.rules.all.integrate(lambda q: sol.f(q) / (q - a) ** 2))
    for const, rule in zip(sol.constants, sol.rules.loops()):
        val += const * complex(rule.integrate(lambda q: 1.0 / (q - a) ** 2))
    return val / TWO_PI_I


def cj_fit(sol: RHPSolution, j: int, deltas=(1e-4, 1e-3), direction: complex | None = None) -> complex:
    """c_j from (h(z) - h(alpha)) / ((z - alpha) R(z)) at two offsets, linearly extrapolated."""
    a = _upper_alpha(sol, j)
    u = 1j * np.exp(0.2j) if direction is None else direction
    vals = []
    for d in deltas:
        z = a + d * u
        loc = locations(sol, [z])
        const = sum(sol.W[i] for i, v in enumerate(loc[0].inside_m) if v)
        const += sum(s * sol.Omega[i] for i, s in enumerate(loc[0].inside_c) if s)
        h = eval_h(sol, z, loc)
        vals.append((h - const) / ((z - a) * sol.cs.radical(np.array([z]))[0]))
    d1, d2 = deltas
    return complex((vals[0] * d2 - vals[1] * d1) / (d2 - d1))


def jacobian_diagonal(sol: RHPSolution, c=None) -> np.ndarray:
    """(3/2) c_j D for every upper branchpoint."""
    c = np.array([eval_cj(sol, j) for j in range(len(sol.bps.upper))]) if c is None else np.asarray(c)
    diag = 1.5 * c * sol.D
    if np.any(np.abs(diag) < SINGULAR_JACOBIAN):
        raise ModulationError("singular Jacobian: some c_j D vanishes")
    return diag


def jacobian_fd(sol: RHPSolution, step: float = 1e-6, columns=None) -> np.ndarray:
    """Central differences of K(alpha_2l) in every branchpoint (upper then lower).

    Column order is alpha_0, alpha_1, ..., alpha_{4N+1}; each column moves one
    branchpoint alone, so the lower set is no longer the mirror of the upper one.
    """
    n = 2 * len(sol.bps.upper)
    columns = range(n) if columns is None else columns
    out = np.zeros((len(sol.bps.upper), n), dtype=complex)
    for i in columns:
        vals = []
        for s in (step, -step):
            b = sol.bps.with_alpha(i, sol.bps.alpha(i) + s)
            cs = build_contours(b, sol.cs.margin, singularities=sol.sd.singularities)
            sp = solve_constants(b, cs, sol.sd, sol.x, sol.t, sol.quad, check_real=False)
            vals.append(modulation_residual(sp))
        out[:, i] = (vals[0] - vals[1]) / (2 * step)
    return out


# --------------------------------------------------------------------------
# Newton


@dataclass
class NewtonReport:
    iterations: int
    residual_history: list
    final_alphas: BranchpointSet
    c_values: list
    converged: bool
    status: str = "converged"
    D: complex = 0j
    moment_matrix_cond: float = 0.0
    solution: RHPSolution | None = field(default=None, repr=False)

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "residual_history": list(self.residual_history),
            "final_alphas": [[a.real, a.imag] for a in self.final_alphas.upper],
            "c_values": [[c.real, c.imag] for c in self.c_values],
            "D": [self.D.real, self.D.imag],
            "moment_matrix_cond": self.moment_matrix_cond,
        }


def _newton_step(sol: RHPSolution, K: np.ndarray, c: np.ndarray) -> np.ndarray:
    if sol.sd.schwarz_symmetric:
        return -K / jacobian_diagonal(sol, c)
    J = jacobian_fd(sol)
    A, B = J[:, 0::2], J[:, 1::2]  # d/d upper, d/d lower (= conjugate of upper)
    real = np.block([[A.real + B.real, B.imag - A.imag], [A.imag + B.imag, A.real - B.real]])
    if not np.isfinite(np.linalg.cond(real)) or np.linalg.cond(real) > 1.0 / SINGULAR_JACOBIAN:
        raise ModulationError("singular Jacobian")
    d = np.linalg.solve(real, -np.concatenate([K.real, K.imag]))
    n = len(K)
    return d[:n] + 1j * d[n:]


def _solve_at(upper, sd, x, t, quad, margin, custom_arcs=None):
    bps = BranchpointSet.from_upper(upper)
    cs = None
    if custom_arcs:
        cs = build_contours(bps, margin, custom_arcs, sd.singularities)
    return solve_constants(bps, cs, sd, x, t, quad, margin)


def newton_solve(
    guess: BranchpointSet,
    sd: ScatteringData,
    x: float,
    t: float,
    tol: float = 1e-10,
    max_iter: int = 30,
    quad: QuadConfig = DEFAULT,
    margin: float | None = None,
    max_halvings: int = 8,
    custom_arcs: dict | None = None,
) -> NewtonReport:
    """Damped Newton on the upper branchpoints; the lower ones stay their conjugates.

    For Schwarz-symmetric data the step is -K(alpha_2j) / ((3/2) c_j D).
    Otherwise K(alpha_2j) also moves with the conjugate lower branchpoints
    even at a root, so the step solves the real-linear system built from
    finite differences in every branchpoint.  Convergence is declared when
    max |K| <= tol * |D| * max |c_j| (or max |K| = 0).  Contours are rebuilt
    from the current branchpoints at every trial; ``custom_arcs`` keeps the
    given interior arc vertices while the endpoints move.
    """
    upper = np.array(guess.upper, dtype=complex)
    sol = _solve_at(upper, sd, x, t, quad, margin, custom_arcs)
    K = modulation_residual(sol)
    res = float(np.max(np.abs(K)))
    history = [res]
    status = "max_iter"
    c = np.zeros(len(upper), dtype=complex)
    for it in range(max_iter + 1):
        c = np.array([eval_cj(sol, j) for j in range(len(upper))])
        scale = abs(sol.D) * float(np.max(np.abs(c)))
        if res == 0.0 or res <= tol * scale:
            status = "converged"
            break
        if it == max_iter:
            break
        try:
            step = _newton_step(sol, K, c)
        except ModulationError:
            status = "singular_jacobian"
            break
        lam = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            trial = upper + lam * step
            try:
                trial_sol = _solve_at(trial, sd, x, t, quad, margin, custom_arcs)
                trial_K = modulation_residual(trial_sol)
                trial_res = float(np.max(np.abs(trial_K)))
            except (GeometryError, RHPError) as exc:
                log.debug("newton trial rejected: %s", exc)
                lam /= 2
                continue
            if trial_res < res:
                accepted = True
                break
            lam /= 2
        if not accepted:
            status = "stalled"
            break
        upper, sol, K, res = trial, trial_sol, trial_K, trial_res
        history.append(res)
        log.debug("newton iteration %d: residual %.3e (lambda %.3g)", it + 1, res, lam)
    return NewtonReport(
        iterations=len(history) - 1,
        residual_history=history,
        final_alphas=sol.bps,
        c_values=[complex(v) for v in c],
        converged=status == "converged",
        status=status,
        D=sol.D,
        moment_matrix_cond=sol.moment_matrix_cond,
        solution=sol,
    )


# --------------------------------------------------------------------------
# identity checks


@dataclass(frozen=True)
class DerivativeReport:
    index: int
    z: complex
    finite_difference: complex
    formula: complex
    deviation: float

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "z": [self.z.real, self.z.imag],
            "finite_difference": [self.finite_difference.real, self.finite_difference.imag],
            "formula": [self.formula.real, self.formula.imag],
            "deviation": self.deviation,
        }


def _resolve(sol: RHPSolution, bps: BranchpointSet) -> RHPSolution:
    cs = build_contours(bps, sol.cs.margin, singularities=sol.sd.singularities)
    return solve_constants(bps, cs, sol.sd, sol.x, sol.t, sol.quad, check_real=False)


def dD_dalpha(sol: RHPSolution, i: int) -> complex:
    """Derivative of D in branchpoint i, from d(1/R)/d alpha = 1/(2 (zeta - alpha) R)."""
    if sol.N == 0:
        return 0j
    a = sol.bps.alpha(i)
    n = 2 * sol.N
    dM = np.array(
        [rule.integrate(lambda q: np.array([q**k for k in range(n)]) / (2 * (q - a))[None, :]) for rule in sol.rules.loops()]
    )
    return complex(sol.D * np.trace(np.linalg.solve(sol.M, dM)))


def lemma_derKa_check(sol: RHPSolution, i: int, z: complex, step: float = 1e-6) -> DerivativeReport:
    """Finite difference of K(z) in branchpoint ``i`` against (K/D)(D/(2(z - alpha)) + dD/dalpha).

    In the standard region K/D equals h/R; the K/D form is used so that the
    check also applies outside the big loop.  The identity presumes
    K(alpha_2j) = 0 at every upper branchpoint.
    """
    z = complex(z)
    a = sol.bps.alpha(i)
    vals = []
    for s in (step, -step):
        sp = _resolve(sol, sol.bps.with_alpha(i, a + s))
        vals.append(eval_K(sp, z))
    fd = (vals[0] - vals[1]) / (2 * step)
    K = eval_K(sol, z)
    rhs = K / sol.D * (sol.D / (2 * (z - a)) + dD_dalpha(sol, i))
    dev = abs(fd - rhs) / max(abs(rhs), abs(fd), 1e-300)
    return DerivativeReport(i, z, complex(fd), complex(rhs), float(dev))


@dataclass(frozen=True)
class TheoremReport:
    index: int
    points: tuple
    derivatives: tuple
    max_abs: float

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "points": [[z.real, z.imag] for z in self.points],
            "derivatives": [[d.real, d.imag] for d in self.derivatives],
            "max_abs": self.max_abs,
        }


DEFAULT_TEST_POINTS = (0.5 + 2j, -1.5 + 0.4j, 3.5 - 1j, 0.7 + 0.35j, 1.5 - 0.25j)


def theorem_dhda_check(sol: RHPSolution, i: int, points=DEFAULT_TEST_POINTS, step: float = 1e-6) -> TheoremReport:
    """Finite-difference d h(z) / d alpha_i with constants re-solved at each perturbed set."""
    a = sol.bps.alpha(i)
    pts = np.array(points, dtype=complex)
    vals = []
    for s in (step, -step):
        sp = _resolve(sol, sol.bps.with_alpha(i, a + s))
        vals.append(np.asarray(eval_h(sp, pts)))
    d = (vals[0] - vals[1]) / (2 * step)
    return TheoremReport(i, tuple(complex(p) for p in pts), tuple(complex(v) for v in d), float(np.max(np.abs(d))))


# --------------------------------------------------------------------------
# fixture design


def _sqrt_series(alphas, n: int) -> np.ndarray:
    """Coefficients s_k of sqrt(prod(1 - alpha w)) = sum s_k w^k, k = 0..n."""
    Q = np.array([1.0 + 0j])
    for a in alphas:
        Q = np.convolve(Q, [1.0, -a])
    Q = np.concatenate([Q, np.zeros(n + 1)])
    s = np.zeros(n + 1, dtype=complex)
    s[0] = 1.0
    for k in range(1, n + 1):
        s[k] = (Q[k] - np.dot(s[1:k], s[k - 1 : 0 : -1])) / 2
    return s


def _f0_from_q(bps: BranchpointSet, q: np.ndarray, x: float, t: float) -> np.ndarray:
    """Ascending coefficients of f_0 with f' = -(polynomial part of R q)."""
    N = bps.N
    m = len(q) - 1
    deg = m + 2 * N + 2
    s = _sqrt_series(bps.all, deg + 2)
    fp = np.zeros(deg, dtype=complex)
    for n, sn in enumerate(s):
        for i, qi in enumerate(q):
            p = 2 * N + 1 - n + i
            if 0 <= p < deg:
                fp[p] -= sn * qi
    fp[0] += x
    if deg > 1:
        fp[1] += 4 * t
    f0 = np.zeros(deg + 1, dtype=complex)
    f0[1:] = fp / np.arange(1, deg + 1)
    return f0


def poly_expr(coeffs) -> str:
    terms = []
    for k, c in enumerate(coeffs):
        c = complex(c)
        if c == 0:
            continue
        lit = repr(c.real) if c.imag == 0 else f"({c.real!r}{'+' if c.imag >= 0 else '-'}{abs(c.imag)!r}i)"
        terms.append(lit if k == 0 else f"({lit})*z^{k}")
    return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class DesignedFixture:
    f0_text: str
    coefficients: tuple
    q: tuple
    residual: float

    def q_at(self, z):
        return np.polyval(np.asarray(self.q)[::-1], z)


def design_polynomial_f0(bps: BranchpointSet, x: float, t: float, quad: QuadConfig = DEFAULT) -> DesignedFixture:
    """A real polynomial f_0 of degree 4N+3 for which ``bps`` solves K(alpha_2j) = 0.

    At a solution h'/R is a polynomial q; q has leading coefficient -(4N+3) and
    2N+1 free real coefficients.  f' is minus the polynomial part of R q, and
    the free coefficients are fixed by the modulation equations, which are
    affine in them.  ``bps`` must be Schwarz symmetric.
    """
    if not bps.is_schwarz_symmetric:
        raise ValueError("fixture design needs a Schwarz-symmetric branchpoint set")
    N = bps.N
    m = 2 * N + 1
    base = np.zeros(m + 1)
    base[m] = -(m + 2 * N + 2)
    cs = build_contours(bps)

    def residual(q):
        text = poly_expr(_f0_from_q(bps, q, x, t).real)
        sol = solve_constants(bps, cs, parse_f0(text), x, t, quad)
        return modulation_residual(sol)

    K0 = residual(base)
    cols = []
    for i in range(m):
        e = base.copy()
        e[i] = 1.0
        cols.append(residual(e) - K0)
    A = np.array(cols).T
    lhs = np.vstack([A.real, A.imag])
    rhs = -np.concatenate([K0.real, K0.imag])
    b = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    q = base.copy()
    q[:m] = b
    coeffs = _f0_from_q(bps, q, x, t).real
    final = residual(q)
    return DesignedFixture(poly_expr(coeffs), tuple(float(c) for c in coeffs), tuple(float(v) for v in q), float(np.max(np.abs(final))))
