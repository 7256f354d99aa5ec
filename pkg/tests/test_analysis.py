import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noonphase.analysis import (
    Baseline,
    default_theta_scan,
    fig_m_optima,
    fit_prefactor,
    gain_db,
    gain_scan,
    gaussian_prediction,
    heisenberg_limit,
    report,
    scaling_points,
    shot_noise_limit,
    write_table,
)
from noonphase.fringe import CalibrationTable


def test_limits():
    assert shot_noise_limit(100) == pytest.approx(0.1)
    assert heisenberg_limit(100) == pytest.approx(0.01)
    for f in (shot_noise_limit, heisenberg_limit):
        with pytest.raises(ValueError):
            f(0)


def test_gain_at_shot_noise_is_zero():
    assert gain_db(0.1, 100) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        gain_db(0.0, 10)


@given(st.integers(1, 10**9))
def test_heisenberg_gain_identity(n_total):
    assert gain_db(heisenberg_limit(n_total), n_total) == pytest.approx(5 * math.log10(n_total), abs=1e-9)


def test_report_baselines():
    r = report(0.01, 100, Baseline.HEISENBERG)
    assert r.gain_db == pytest.approx(0.0, abs=1e-12)
    assert report(0.01, 100).gain_db == pytest.approx(10.0)


def test_ion_gain_from_closed_form():
    for m in (1, 10, 1000):
        width = gaussian_prediction("ion", n_max=6, m=m)
        assert gain_db(width, 21 * m) == pytest.approx(3.18, abs=0.01)
    # the Gaussian form and the exact curvature sum differ slightly
    assert gain_db(gaussian_prediction("ion", m=1), 21) == pytest.approx(2.5 * math.log10(168 / 9), abs=1e-12)


@pytest.mark.parametrize("n_tilde, expected", [(2, 1.505), (3, 2.386), (6, 3.891)])
def test_fixed_gain_from_closed_form(n_tilde, expected):
    width = gaussian_prediction("fixed", n_tilde=n_tilde, m=50)
    assert gain_db(width, 50 * n_tilde) == pytest.approx(expected, abs=1e-3)


def test_gaussian_predictions():
    assert gaussian_prediction("geom", p=4) == pytest.approx(math.sqrt(6) / 15)
    assert gaussian_prediction("arith", p=6) == pytest.approx((9 / 2) ** 0.25 / 21**0.75)
    ratio = gaussian_prediction("geom-rep", p=8, m=1) / gaussian_prediction("geom", p=8)
    assert ratio == pytest.approx(2.55 / math.sqrt(6))
    assert abs(ratio - 1) < 0.05
    with pytest.raises(ValueError):
        gaussian_prediction("spiral", p=3)


@given(st.floats(0.1, 10), st.floats(0.5, 1.5), st.lists(st.integers(2, 10**6), min_size=2, max_size=8, unique=True))
def test_fit_recovers_exact_power_law(c, alpha, ns):
    fit = fit_prefactor([(n, c * n**-alpha) for n in ns], alpha)
    assert fit.prefactor == pytest.approx(c, rel=1e-9)
    assert fit.residual < 1e-9


@given(st.floats(0.01, 100))
def test_fit_scale_consistent(k):
    pts = [(3, 0.4), (15, 0.11), (63, 0.03)]
    base = fit_prefactor(pts, 1.0)
    scaled = fit_prefactor([(n, k * d) for n, d in pts], 1.0)
    assert scaled.prefactor == pytest.approx(k * base.prefactor, rel=1e-9)
    assert scaled.residual == pytest.approx(base.residual, abs=1e-9)


@pytest.mark.parametrize("pts", [[(3, 0.1)], [(3, 0.1), (3, 0.2)], [(3, 0.1), (5, 0.0)], [(0, 1.0), (2, 1.0)]])
def test_fit_rejects_degenerate_input(pts):
    with pytest.raises(ValueError):
        fit_prefactor(pts, 1.0)


def test_scaling_points_small_geometric():
    rows = scaling_points("geom", [6, 7])
    assert [r[1] for r in rows] == [63, 127]
    for _, n_total, w, sat in rows:
        assert not sat
        assert 2.0 < w * n_total < 3.0
    with pytest.raises(ValueError):
        scaling_points("ions", [3])


def test_fig_m_optima_first_wins_ties():
    rows = [(2, 4, 1, 15, 0.2, 3.0), (2, 4, 2, 30, 0.1, 3.0), (3, 3, 1, 13, 0.3, 3.9), (3, 3, 2, 26, 0.1, 2.6)]
    assert fig_m_optima(rows) == {2: 1, 3: 2}


def test_default_theta_scan_avoids_edges():
    t = default_theta_scan(math.pi / 3)
    assert len(t) == 50
    assert t[0] > 0 and t[-1] < math.pi / 3


def test_fixed_gain_scan_flat():
    pts = gain_scan([3], None, default_theta_scan(math.pi / 3, count=6), M=1e4, grid_points=200_001)
    for pt in pts:
        assert pt.prior_bound == pytest.approx(math.pi / 3)
        assert pt.estimate == pytest.approx(pt.theta, abs=1e-3)
        assert pt.gain_db == pytest.approx(2.386, abs=0.02)


def test_ion_gain_scan_reaches_closed_form():
    thetas = [0.3, 1.0, 2.0]
    pts = gain_scan(range(1, 7), None, thetas, M=1e5)
    for pt in pts:
        assert pt.n_total == 21e5
        assert pt.prior_bound is None
        assert pt.gain_db == pytest.approx(5 * math.log10(91 / 21), abs=0.01)


def test_ion_gain_dips_at_dark_fringes():
    # at theta = pi/4 the N=4 fringe is exactly dark and its curvature halves
    pt = gain_scan(range(1, 7), None, [math.pi / 4], M=1e5)[0]
    assert pt.gain_db == pytest.approx(2.984, abs=0.01)


def test_calibrated_gain_below_ideal():
    table = CalibrationTable({n: (0.5, 0.9) for n in range(1, 7)})
    thetas = [0.2, 0.9, 1.7]
    ideal = gain_scan(range(1, 7), None, thetas, M=1e4, grid_points=200_001)
    real = gain_scan(range(1, 7), table, thetas, M=1e4, grid_points=200_001)
    assert all(r.gain_db < i.gain_db for r, i in zip(real, ideal))


def test_gain_scan_needs_sizes():
    with pytest.raises(ValueError):
        gain_scan([], None, [0.1])


def test_write_table_format():
    buf = io.StringIO()
    write_table(buf, ["a", "b", "c", "d"], [(1, 0.1, True, None), (np.int64(2), np.float64(1e-20), False, "x")])
    assert buf.getvalue() == "a\tb\tc\td\n1\t0.1\t1\t\n2\t1e-20\t0\tx\n"
