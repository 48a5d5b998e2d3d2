import math

import numpy as np
import pytest

from blowup.errors import DomainError
from blowup.shoot import calibrate_alpha, compare_to_expansion, diagnostics, shoot, shoot_profile

# sqrt(2) * int_1^inf dt / sqrt(t^4 - 1), from the lemniscate constant Gamma(1/4)^2 / (4 sqrt(2 pi))
LEMNISCATE_R = math.sqrt(2) * math.gamma(0.25) ** 2 / (4 * math.sqrt(2 * math.pi))


@pytest.fixture(scope="module")
def pow3_alpha_grid(pow3):
    return {a: shoot(pow3, 3, float(a)) for a in (1, 2, 4, 8, 16)}


def test_one_dimensional_blow_up_radius(pow3):
    res = shoot(pow3, 1, 1.0)
    assert res.status == "blow-up"
    assert res.R_est == pytest.approx(LEMNISCATE_R, abs=1e-9)
    assert res.R_est >= res.r[-1]


def test_energy_identity_in_one_dimension(pow3):
    res = shoot(pow3, 1, 1.0, tol=1e-12)
    F_alpha = float(pow3.F(1.0))
    drift = np.abs(res.g - F_alpha) / np.maximum(1.0, pow3.F(res.u))
    assert drift.max() < 10 * 1e-12  # relative to the size of F along the path
    assert np.all(res.g_ode == res.g_ode[0])
    d = diagnostics(res)
    assert d.ratio is None and len(d.rows()[0]) == 3


def test_trajectory_invariants(pow3_alpha_grid):
    for res in pow3_alpha_grid.values():
        assert np.all(np.diff(res.r) > 0)
        assert np.all(res.v >= 0)
        assert np.all(np.diff(res.g_ode) >= 0)
        assert res.R_est >= res.r[-1]


def test_radius_decreases_with_alpha(pow3_alpha_grid):
    R = [pow3_alpha_grid[a].R_est for a in sorted(pow3_alpha_grid)]
    assert np.all(np.diff(R) < 0)


def test_scaling_law(pow3_alpha_grid):
    scaled = [res.R_est * a for a, res in pow3_alpha_grid.items()]  # (p-1)/2 = 1
    assert max(scaled) / min(scaled) - 1 < 0.005
    assert pow3_alpha_grid[4].R_est / pow3_alpha_grid[1].R_est == pytest.approx(0.25, rel=0.005)


def test_cap_stability(pow3):
    a = shoot(pow3, 3, 2.0, u_cap=1e6)
    b = shoot(pow3, 3, 2.0, u_cap=1e8)
    assert abs(a.R_est - b.R_est) < 1e-6


def test_slow_growth_is_no_blow_up(pow3):
    res = shoot(pow3, 1, 1e-5)
    assert res.status == "no-blow-up" and math.isinf(res.R_est)


def test_shoot_preconditions(pow3):
    with pytest.raises(DomainError):
        shoot(pow3, 3, 0.0)
    with pytest.raises(DomainError):
        shoot(pow3, 3, 1.0, u_cap=1e4)


def test_calibration(pow3):
    assert calibrate_alpha(pow3, 1, 1.0, tol=1e-6) == pytest.approx(LEMNISCATE_R, abs=1e-3)
    a3 = calibrate_alpha(pow3, 3, 1.0, tol=1e-3)
    a4 = calibrate_alpha(pow3, 3, 1.0, tol=1e-4)
    assert abs(a3 - a4) < 10 * 1e-3
    target = shoot(pow3, 3, 2.0).R_est
    assert calibrate_alpha(pow3, 3, target, tol=1e-10) == pytest.approx(2.0, abs=1e-6)


def test_error_function_ratios(pow3_shot, pow5_shot):
    d3 = diagnostics(pow3_shot)
    assert d3.u[-1] >= 1e3
    assert 0.9 <= d3.ratio[-1] <= 1.1
    assert d3.g_over_F[-1] < 0.05
    marks = [np.argmin(np.abs(d3.u - u)) for u in (1e1, 1e2, 1e3, 1e4)]
    assert np.all(np.diff(np.abs(d3.ratio[marks] - 1)) < 0)
    # pow:5 in three dimensions is the conformally critical case: g = (N-1)G holds identically
    d5 = diagnostics(pow5_shot)
    assert np.abs(d5.ratio - 1).max() < 1e-9


def test_pow5_gaps_follow_the_prediction(pow5_shot, pow5_profiles):
    cmp = compare_to_expansion(pow5_shot, pow5_profiles[:3], [1e-2, 1e-3, 1e-4])
    gap0 = cmp.gaps[:, 0]
    assert abs(gap0[1]) < 0.05
    assert np.all(np.diff(np.abs(gap0)) < 0)
    assert np.all((0.5 * cmp.predicted <= gap0) & (gap0 <= 2 * cmp.predicted))
    assert np.all(np.diff(cmp.normalized[:, 1]) < 0)
    assert not cmp.flagged.any()
    assert cmp.ks == [0, 1, 2]


def test_pow3_gap_plateau(pow3_shot, pow3_profiles):
    cmp = compare_to_expansion(pow3_shot, pow3_profiles[:1], [1e-2, 1e-3, 1e-4])
    gap = cmp.gaps[:, 0]
    assert np.all((0.2 <= gap) & (gap <= 1.0))
    assert gap[-1] == pytest.approx(math.sqrt(2) / 3, rel=0.01)


def test_shoot_profile_past_the_trajectory(pow5_shot):
    assert shoot_profile(pow5_shot, 1e-300) is None
    assert shoot_profile(pow5_shot, 0.5) < shoot_profile(pow5_shot, 0.1)
