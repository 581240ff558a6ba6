import numpy as np
import pytest

from carnot import probes
from carnot.distance import SolverOptions
from carnot.errors import OrthogonalityError
from carnot.groups import free, h_times_r, heisenberg
from carnot.linalg_skew import wedge

FAST = SolverOptions(n_starts=8)


def tol(d, opts=FAST):
    return probes.combined_tolerance(d, opts)


# -- report type ---------------------------------------------------------------------


def test_report_csv():
    pts = [
        probes.ProbePoint(0.1, 1.5, 1.0, 5.0, 1.2, True),
        probes.ProbePoint(0.2, 2.0, 1.0, 5.0, None, False),
    ]
    report = probes.ProbeReport("demo", pts, probes.CONSISTENT, FAST)
    lines = report.csv_text().splitlines()
    assert lines[0] == ",".join(probes.CSV_COLUMNS)
    assert lines[1] == "0.1,1.5,1.0,5.0,1.2,true"
    assert lines[2] == "0.2,2.0,1.0,5.0,,false"
    np.testing.assert_array_equal(report.quotients, [5.0, 5.0])
    np.testing.assert_array_equal(report.parameters, [0.1, 0.2])


def test_verdict_ordering():
    ok = probes.ProbePoint(0.1, 1.5, 1.0, 5.0, 1.2, True)
    below = probes.ProbePoint(0.1, 1.0, 1.0, 0.0, 1.2, True)
    failed = probes.ProbePoint(0.1, 1.5, 1.0, 5.0, None, False)
    assert probes._verdict([ok], FAST) == probes.CONSISTENT
    assert probes._verdict([ok, failed], FAST) == probes.INCONCLUSIVE
    assert probes._verdict([below, failed], FAST) == probes.VIOLATION
    assert probes._verdict([ok], FAST, extra_ok=False) == probes.INCONCLUSIVE


def test_parameters_below_floor_refused():
    with pytest.raises(ValueError):
        probes.engel_vertical_probe(lambdas=(0.001,), opts=FAST)


# -- second differences --------------------------------------------------------------


def test_second_difference_heisenberg_bounded():
    report = probes.second_difference(heisenberg(), [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], opts=FAST)
    assert report.verdict == probes.CONSISTENT
    q = report.quotients
    assert np.all(np.isfinite(q))
    assert np.ptp(q) < 0.5 * np.max(np.abs(q))


def test_second_difference_zero_direction():
    report = probes.second_difference(heisenberg(), [1.0, 0.0, 0.0], [0.0, 0.0, 0.0], scales=(0.1,), opts=FAST)
    np.testing.assert_array_equal(report.quotients, [0.0])


def test_second_difference_needs_base():
    with pytest.raises(ValueError):
        probes.second_difference(heisenberg(), [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], opts=FAST)


def test_second_difference_cusp_grows():
    report = probes.second_difference(h_times_r(), [0, 0, 1.0, 0], [0, 0, 0, 1.0], opts=FAST)
    q = report.quotients
    # a cusp makes the second difference blow up like 1/s
    assert q[1] > 1.5 * q[0] and q[2] > 1.5 * q[1]
    assert report.verdict == probes.INCONCLUSIVE


# -- vertical cusps ------------------------------------------------------------------


def test_cusp_probe_needs_orthogonal_pair():
    with pytest.raises(OrthogonalityError):
        probes.vertical_cusp_probe(heisenberg(), [1.0, 0.0], [1.0], opts=FAST)
    with pytest.raises(OrthogonalityError):
        probes.vertical_cusp_probe(h_times_r(), [1.0, 0.0, 0.0], [1.0], opts=FAST)


def test_cusp_probe_h_times_r():
    report = probes.vertical_cusp_probe(h_times_r(), [0, 0, 1.0], [1.0], betas=(0.1,), opts=FAST)
    assert report.verdict == probes.CONSISTENT
    p = report.points[0]
    slope = (np.sqrt(1 + 0.4 * np.pi) - 1) / 0.1
    assert p.quotient >= slope - tol(p.distance) / 0.1
    assert p.lower_bound <= p.distance + FAST.feas_tol


def test_cusp_bound_slope_near_zero():
    # (sqrt(1 + 4 pi b) - 1) / b -> 2 pi as b -> 0
    for b in (0.01, 0.001):
        slope = (np.sqrt(1 + 4 * np.pi * b) - 1) / b
        assert slope == pytest.approx(2 * np.pi, rel=4 * np.pi * b)


def test_free_cusp_probe_rejections():
    G = free(4)
    base = np.concatenate([np.eye(4)[0], np.zeros(6)])
    with pytest.raises(ValueError):
        probes.free_vertical_cusp_probe(G, base, wedge(np.eye(4)[0], np.eye(4)[1]), opts=FAST)
    generic = np.concatenate([np.eye(4)[0], wedge(np.eye(4)[1], np.eye(4)[2]).coeffs])
    with pytest.raises(ValueError):
        probes.free_vertical_cusp_probe(G, generic, wedge(np.eye(4)[2], np.eye(4)[3]), opts=FAST)
    with pytest.raises(TypeError):
        probes.free_vertical_cusp_probe(h_times_r(), np.zeros(4), [1.0], opts=FAST)


def test_free_cusp_probe_zero_beta():
    G = free(4)
    base = np.concatenate([np.eye(4)[0], np.zeros(6)])
    report = probes.free_vertical_cusp_probe(G, base, wedge(np.eye(4)[2], np.eye(4)[3]), betas=(0.0,), opts=FAST)
    assert report.quotients[0] == 0.0
    assert report.points[0].distance == pytest.approx(1.0, abs=1e-6)


# -- Engel and Martinet --------------------------------------------------------------


def test_engel_vertical_bound_values():
    assert probes.engel_vertical_bound(1.0, 0.1) == pytest.approx(np.sqrt(1.4))
    assert probes.engel_vertical_bound(1.0, -0.05) == pytest.approx(np.sqrt(1.2))
    # dilation by r maps (0, 1, 0, lam) to (0, r, 0, r^3 lam)
    r = 2.0
    assert probes.engel_vertical_bound(r, r**3 * 0.1) == pytest.approx(r * np.sqrt(1.4))


def test_engel_vertical_probe():
    report = probes.engel_vertical_probe(lambdas=(0.0, 0.05, 0.1), opts=FAST)
    assert report.verdict == probes.CONSISTENT
    zero, p05, p10 = report.points
    assert zero.distance == 1.0 and zero.quotient == 0.0
    assert p10.distance >= np.sqrt(1.4) - FAST.feas_tol
    assert p10.quotient >= (np.sqrt(1.4) - 1) / 0.1 - tol(p10.distance) / 0.1
    assert p05.quotient >= (np.sqrt(1.2) - 1) / 0.05 - tol(p05.distance) / 0.05


def test_engel_horizontal_probe():
    report = probes.engel_horizontal_probe(opts=FAST)
    assert report.verdict == probes.CONSISTENT, report.notes
    np.testing.assert_array_equal(report.parameters, [0.4, 0.2, 0.1])
    assert np.all(np.diff(report.quotients) > 0)
    with pytest.raises(ValueError):
        probes.engel_horizontal_probe(lambdas=(0.0, 0.1), opts=FAST)


def test_horizontal_semiconcavity_free3():
    G = free(3)
    g = np.concatenate([np.eye(3)[0], np.zeros(3)])
    ys = [0.1 * np.array([0.0, np.cos(a), np.sin(a)]) for a in np.linspace(0, np.pi / 2, 3)]
    report = probes.horizontal_semiconcavity_probe(G, g, ys + [np.zeros(3)], opts=FAST)
    q = report.quotients
    assert np.all(np.isfinite(q))
    assert q[-1] == 0.0
    assert report.verdict == probes.CONSISTENT
    assert q[:3].max() < 1.5 * q[:3].min()


def test_horizontal_semiconcavity_rejections():
    G = free(3)
    g = np.concatenate([np.eye(3)[0], np.zeros(3)])
    with pytest.raises(ValueError):
        probes.horizontal_semiconcavity_probe(G, g, [np.array([0.0, 1.0, 0.0])], delta=0.5, opts=FAST)
    generic = np.concatenate([np.zeros(3), wedge(np.eye(3)[0], np.eye(3)[1]).coeffs])
    with pytest.raises(ValueError):
        probes.horizontal_semiconcavity_probe(G, generic, [np.array([0.0, 0.1, 0.0])], opts=FAST)


def test_martinet_probes():
    vertical = probes.martinet_probes("vertical", (0.0, 0.1), opts=FAST)
    assert vertical.points[0].distance == 1.0
    p = vertical.points[1]
    assert p.quotient >= (np.sqrt(1.4) - 1) / 0.1 - tol(p.distance) / 0.1
    assert vertical.verdict == probes.CONSISTENT

    horizontal = probes.martinet_probes("horizontal", opts=FAST)
    assert horizontal.verdict == probes.CONSISTENT, horizontal.notes
    assert np.all(np.diff(horizontal.quotients) > 0)
    with pytest.raises(ValueError):
        probes.martinet_probes("diagonal")


def test_probe_csv_is_deterministic(tmp_path):
    probes.engel_vertical_probe(lambdas=(0.1,), opts=FAST).to_csv(tmp_path / "a.csv")
    probes.engel_vertical_probe(lambdas=(0.1,), opts=FAST).to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
