import json

import numpy as np
import pytest

from nlsmod.evolution import (
    EvolveOptions,
    Sweep,
    alpha_rates,
    constants_rates,
    corollary_check,
    dK_dt,
    dK_dt_first,
    dK_dx,
    dK_dx_explicit,
    evolve,
    velocities,
    velocities_explicit,
)
from nlsmod.geometry import BranchpointSet, point_location
from nlsmod.modulation import newton_solve
from nlsmod.rhp import eval_h, eval_K, solve_constants
from nlsmod.scattering import parse_f0

from conftest import F1_T, F1_UPPER, F1_X

# standard-region points: inside the big loop, outside every small loop
INSIDE = np.array([-0.2 + 0.5j, 0.2 - 0.3j, 1.5 + 0.45j])


def _K_at(bps, sd, x, t, z):
    return eval_K(solve_constants(bps, None, sd, x, t, check_real=False), z)


@pytest.mark.parametrize("axis", ["x", "t"])
def test_partial_derivatives_of_K(f1_sol, f1_bps, f1_sd, axis):
    z = np.array([0.5 + 2j, 3.5 - 1j, 1.5 + 0.2j])
    eps = 1e-5
    if axis == "x":
        fd = (_K_at(f1_bps, f1_sd, F1_X + eps, F1_T, z) - _K_at(f1_bps, f1_sd, F1_X - eps, F1_T, z)) / (2 * eps)
        got = dK_dx(f1_sol, z)
    else:
        fd = (_K_at(f1_bps, f1_sd, F1_X, F1_T + eps, z) - _K_at(f1_bps, f1_sd, F1_X, F1_T - eps, z)) / (2 * eps)
        got = dK_dt(f1_sol, z)
    assert np.max(np.abs(got - fd) / np.abs(got)) < 1e-7


def test_explicit_forms_inside_the_big_loop(f1_sol):
    assert {point_location(f1_sol.cs, z).label() for z in INSIDE} == {"standard"}
    kx = dK_dx(f1_sol, INSIDE)
    assert np.max(np.abs(dK_dx_explicit(f1_sol, INSIDE) - kx) / np.abs(kx)) < 1e-10
    kt = dK_dt(f1_sol, INSIDE)
    alt = dK_dt_first(f1_sol, INSIDE) + f1_sol.bps.total * kx
    assert np.max(np.abs(alt - kt) / np.abs(kt)) < 1e-10


def test_velocity_routes_agree(f1_sol):
    v, w = velocities(f1_sol), velocities_explicit(f1_sol)
    assert np.max(np.abs(v - w) / np.abs(v)) < 1e-8


def test_velocities_do_not_depend_on_f(f1_sol, f1_bps):
    other = solve_constants(f1_bps, None, parse_f0("0"), 0.0, 0.0)
    third = solve_constants(f1_bps, None, parse_f0("exp(z) + z^2"), 1.2, -0.4, check_real=False)
    v = velocities(f1_sol)
    assert np.max(np.abs(velocities(other) - v) / np.abs(v)) < 1e-10
    assert np.max(np.abs(velocities(third) - v) / np.abs(v)) < 1e-10


def test_velocities_conjugate_under_reflection(f1_sol, f1_sd):
    # the lower branchpoints of the reflected set carry the conjugate velocities
    flipped = BranchpointSet(f1_sol.bps.upper, f1_sol.bps.lower)
    v = velocities(solve_constants(flipped, None, parse_f0("0"), 0, 0))
    assert np.allclose(v, velocities(f1_sol), rtol=1e-12)
    K_lo = dK_dt(f1_sol, np.array(f1_sol.bps.lower)) / dK_dx(f1_sol, np.array(f1_sol.bps.lower))
    assert np.max(np.abs(K_lo - v.conj()) / np.abs(v)) < 1e-9


def test_alpha_rates_match_newton_differences(f1_sol, f1_sd):
    r = alpha_rates(f1_sol)
    assert r.consistency < 1e-9
    eps = 1e-5
    for axis, want in (("x", r.x), ("t", r.t)):
        ends = []
        for s in (eps, -eps):
            x = F1_X + (s if axis == "x" else 0)
            t = F1_T + (s if axis == "t" else 0)
            ends.append(np.array(newton_solve(f1_sol.bps, f1_sd, x, t).final_alphas.upper))
        fd = (ends[0] - ends[1]) / (2 * eps)
        assert np.max(np.abs(fd - want) / np.abs(want)) < 1e-6


def test_wronskian_identity(f1_sol):
    rates = constants_rates(f1_sol)
    assert rates.closed_form
    ref = -8 * np.pi**2 / f1_sol.D
    assert abs(rates.wronskian() - ref) < 1e-7 * abs(ref)


def test_constant_rates_match_differences(f1_sol, f1_sd):
    rates = constants_rates(f1_sol)
    eps = 1e-5
    up = newton_solve(f1_sol.bps, f1_sd, F1_X + eps, F1_T).solution
    dn = newton_solve(f1_sol.bps, f1_sd, F1_X - eps, F1_T).solution
    Wx = (up.W[0] - dn.W[0]) / (2 * eps)
    Ox = (up.Omega[0] - dn.Omega[0]) / (2 * eps)
    assert abs(Wx - rates.W_x[0]) < 1e-6 * abs(Wx)
    assert abs(Ox - rates.Omega_x[0]) < 1e-6 * abs(Ox)


@pytest.mark.parametrize("z", [0.5 + 2j, 6 + 4j, 1.5 + 0.2j])
def test_total_x_derivative_of_h(f1_sol, z):
    assert corollary_check(f1_sol, z)["deviation"] < 1e-6


@pytest.mark.parametrize("delta", [1e-3, 1e-2])
def test_h_x_near_a_branchpoint_is_half_power(f1_sol, delta):
    # h_x = R K_x / D is of order (z - alpha)^(1/2) since K_x(alpha) != 0
    a = f1_sol.bps.upper[1]
    u = 1j * np.exp(0.2j)
    z1, z2 = a + delta * u, a + 2 * delta * u
    h1 = f1_sol.cs.radical(np.array([z1]))[0] * dK_dx(f1_sol, z1) / f1_sol.D
    h2 = f1_sol.cs.radical(np.array([z2]))[0] * dK_dx(f1_sol, z2) / f1_sol.D
    slope = np.log(abs(h2) / abs(h1)) / np.log(2)
    assert abs(slope - 0.5) < 0.05 * 0.5


@pytest.fixture(scope="module")
def sweep(f1_bps, f1_sd):
    return evolve(f1_bps, f1_sd, Sweep("x", F1_X, 0.35, 0.01), F1_T)


def test_sweep_endpoint_matches_direct_solve(sweep, f1_sd):
    assert not sweep.truncated
    assert len(sweep.states) == 6
    end = np.array(sweep.states[-1].upper)
    direct = newton_solve(sweep.states[-2], f1_sd, 0.35, F1_T, tol=1e-13)
    assert direct.converged
    assert np.max(np.abs(end - np.array(direct.final_alphas.upper))) < 1e-8
    assert abs(sweep.grid[-1][0] - 0.35) < 1e-14


def test_reverse_sweep_returns(sweep, f1_sd):
    back = evolve(sweep.states[-1], f1_sd, Sweep("x", 0.35, F1_X, 0.01), F1_T)
    assert np.max(np.abs(np.array(back.states[-1].upper) - np.array(F1_UPPER))) < 1e-8


def test_sweep_diagnostics(sweep):
    for d in sweep.diagnostics:
        assert d["residual"] < 1e-9
        assert d["wronskian_deviation"] < 1e-7


def test_t_sweep(f1_bps, f1_sd):
    tr = evolve(f1_bps, f1_sd, Sweep("t", F1_T, 0.12, 0.01), F1_X)
    assert not tr.truncated
    direct = newton_solve(tr.states[-2], f1_sd, F1_X, 0.12, tol=1e-13)
    assert np.max(np.abs(np.array(tr.states[-1].upper) - np.array(direct.final_alphas.upper))) < 1e-8


def test_zero_length_sweep(f1_bps, f1_sd):
    tr = evolve(f1_bps, f1_sd, Sweep("x", F1_X, F1_X), F1_T)
    assert len(tr.states) == 1 and not tr.truncated


def test_zero_data_stops_and_marks(f1_bps):
    tr = evolve(f1_bps, parse_f0("0"), Sweep("x", 0.0, 0.1), 0.0)
    assert tr.truncated and tr.reason == "c_j collapsed"
    assert len(tr.states) == 1


def test_exports(sweep):
    text = sweep.to_csv()
    lines = text.strip().split("\n")
    assert lines[0].split(",") == sweep.csv_header()
    assert len(lines) == 1 + len(sweep.states)
    assert float(lines[-1].split(",")[0]) == 0.35
    data = json.loads(json.dumps(sweep.to_json()))
    assert data["axis"] == "x" and len(data["points"]) == len(sweep.states)


def test_bad_sweeps_rejected():
    with pytest.raises(ValueError):
        Sweep("z", 0, 1)
    with pytest.raises(ValueError):
        Sweep("x", 0, 1, 0)


def test_h_changes_along_the_sweep(sweep, f1_sd):
    a = solve_constants(sweep.states[0], None, f1_sd, *sweep.grid[0])
    b = solve_constants(sweep.states[-1], None, f1_sd, *sweep.grid[-1])
    assert abs(eval_h(a, 0.5 + 2j) - eval_h(b, 0.5 + 2j)) > 1e-3


def test_options_are_frozen():
    with pytest.raises(Exception):
        EvolveOptions().newton_tol = 1
