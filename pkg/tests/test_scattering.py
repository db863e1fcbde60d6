import numpy as np
import pytest

from nlsmod.scattering import PRESETS, Singularity, eval_f, eval_f_prime, parse_f0, schwarz_defect


def test_f_carries_linear_xt_dependence():
    sd = parse_f0("z^3")
    z = np.array([0.5 + 1j, -1 + 0.2j])
    assert np.allclose(eval_f(sd, z, 0.3, 0.1), z**3 - 0.3 * z - 0.2 * z**2)
    assert np.allclose(eval_f_prime(sd, z, 0.3, 0.1), 3 * z**2 - 0.3 - 0.4 * z)


def test_zero_preset():
    sd = parse_f0(PRESETS["zero"])
    assert sd.is_zero
    assert eval_f(sd, 2 + 1j, 0, 0) == 0


@pytest.mark.parametrize("name", ["cubic", "quadratic", "zero"])
def test_real_presets_are_schwarz_symmetric(name):
    assert parse_f0(PRESETS[name]).schwarz_symmetric


def test_complex_coefficient_is_not_schwarz_symmetric():
    sd = parse_f0("z^2 + (0.5 - 1i)*z + 1")
    assert not sd.schwarz_symmetric
    with pytest.raises(ValueError):
        parse_f0("i*z", schwarz_symmetric=True)


def test_log_preset_registers_branch_point_and_ray():
    sd = parse_f0(PRESETS["log"])
    assert len(sd.singularities) == 1
    s = sd.singularities[0]
    assert s.point == pytest.approx(-5)
    assert s.direction == pytest.approx(-1)


def test_division_registers_pole_and_declared_points_are_kept():
    sd = parse_f0("1/(2*z - 4)", singularities=[3j])
    pts = sorted((s.point for s in sd.singularities), key=abs)
    assert pts[0] == pytest.approx(2)
    assert pts[1] == pytest.approx(3j)
    assert Singularity(3j) in sd.singularities


def test_evaluation_at_singularity_is_rejected():
    sd = parse_f0("1/(z - 2)")
    with pytest.raises(ValueError):
        eval_f(sd, 2.0, 0, 0)


def test_reflected_lower_half_plane_is_schwarz_symmetric():
    sd = parse_f0("i*log(z + 5)", reflect_lower=True)
    z = np.array([1 + 1j, -2 + 0.3j, 4 + 2j])
    assert schwarz_defect(sd, z) < 1e-15
    # Im f jumps across the real axis to the right of the log branch point
    up, lo = sd.f0(3 + 1e-12j), sd.f0(3 - 1e-12j)
    assert up.real == pytest.approx(lo.real, abs=1e-9)
    assert up.imag == pytest.approx(-lo.imag, abs=1e-9)
    assert abs(up.imag) > 1


def test_derivative_tree_is_used_for_f_prime():
    sd = parse_f0("exp(z) + z^4")
    z = 0.3 - 0.2j
    assert eval_f_prime(sd, z, 0, 0) == pytest.approx(np.exp(z) + 4 * z**3)
