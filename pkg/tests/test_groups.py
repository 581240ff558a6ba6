import json
from fractions import Fraction

import numpy as np
import pytest

from carnot.errors import ConfigError, HormanderError, NotSkewError
from carnot.groups import (
    EngelSystem,
    MartinetSystem,
    StepTwoGroup,
    check_metivier,
    engel,
    free,
    group_from_config,
    h_alpha,
    h_times_r,
    heisenberg,
    j_map,
    load_group,
    make_step_two,
    pfaffian,
    preset,
)
from carnot.linalg_skew import wedge

STEP_TWO = ["heisenberg", "free(2)", "free(3)", "free(4)", "h_times_r", "h_alpha(2)"]


def random_element(G, rng):
    return rng.standard_normal(G.dim)


def left_field(G, g, k, eps=1e-6):
    """``X_k(g) = d/ds g . exp(s e_k)`` by central differences."""
    e = np.zeros(G.dim)
    e[k] = eps
    return (G.multiply(g, e) - G.multiply(g, -e)) / (2 * eps)


def bracket_fd(G, j, k, g, eps=1e-4):
    """Vertical part of ``[X_j, X_k](g)`` from directional derivatives of the fields."""

    def along(field, direction):
        return (field(g + eps * direction) - field(g - eps * direction)) / (2 * eps)

    Xj, Xk = left_field(G, g, j), left_field(G, g, k)
    dXk = along(lambda p: left_field(G, p, k), Xj)
    dXj = along(lambda p: left_field(G, p, j), Xk)
    return (dXk - dXj)[G.m :]


# -- construction -----------------------------------------------------------------


def test_make_heisenberg_matrix():
    G = make_step_two([[0.0, -1.0], [1.0, 0.0]])
    assert (G.m, G.ell) == (2, 1)


def test_make_h_times_r():
    A = np.zeros((3, 3))
    A[0, 1], A[1, 0] = 1.0, -1.0
    G = make_step_two(A)
    assert (G.m, G.ell) == (3, 1)


def test_make_rejects_zero_and_nonskew():
    with pytest.raises(HormanderError):
        make_step_two(np.zeros((1, 3, 3)))
    with pytest.raises(NotSkewError):
        make_step_two([[0.0, 1.0], [1.0, 0.0]])


def test_make_antisymmetrizes_exactly():
    A = np.array([[0.0, 1.0], [-1.0 - 1e-14, 0.0]])
    G = make_step_two(A)
    np.testing.assert_array_equal(G.A[0], -G.A[0].T)


def test_presets():
    assert free(2).ell == 1
    np.testing.assert_array_equal(free(2).A, heisenberg().A)
    G = preset("h_alpha(2)")
    assert (G.m, G.ell) == (4, 1)
    g, h = np.array([1.0, 2, 3, 4, 0]), np.array([-1.0, 1, 2, -1, 0])
    expected = 0.5 * ((1 * 1 - 2 * -1) + 2 * (3 * -1 - 4 * 2))
    assert G.multiply(g, h)[-1] == pytest.approx(expected)
    assert isinstance(preset("engel"), EngelSystem) and preset("engel").dim == 4
    assert isinstance(preset("martinet"), MartinetSystem)
    assert preset("free", m=5).ell == 10
    with pytest.raises(ValueError):
        preset("lie(3)")
    with pytest.raises(ValueError):
        h_alpha(1.0)
    with pytest.raises(ValueError):
        free(9)


def test_free_structure_matches_wedge():
    rng = np.random.default_rng(0)
    for m in range(2, 7):
        G = free(m)
        x, xi = rng.standard_normal((2, m))
        np.testing.assert_allclose(G.bracket(x, xi), wedge(x, xi).coeffs, atol=1e-14)
    G = free(4)
    e = np.eye(4)
    np.testing.assert_array_equal(G.bracket(e[1], e[3]), wedge(e[1], e[3]).coeffs)


# -- group law --------------------------------------------------------------------


def test_multiply_examples():
    G = heisenberg()
    np.testing.assert_array_equal(G.multiply([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])
    np.testing.assert_array_equal(engel().multiply([1, 0, 0, 0], [0, 1, 0, 0]), [1, 1, 1, 0.5])
    g = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(G.multiply(g, G.identity()), g)
    np.testing.assert_array_equal(G.multiply(G.identity(), g), g)


def test_inverse_and_dilation_examples():
    G = heisenberg()
    g = np.array([1.0, 1.0, 0.5])
    np.testing.assert_array_equal(G.inverse(g), [-1, -1, -0.5])
    np.testing.assert_array_equal(G.multiply(g, G.inverse(g)), [0, 0, 0])
    np.testing.assert_array_equal(G.dilate([1.0, 0.0, 0.0], 2.0), [2, 0, 0])
    r = 1.7
    np.testing.assert_allclose(engel().dilate([1, 1, 1, 1], r), [r, r, r**2, r**3])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        heisenberg().multiply([1, 0], [0, 1, 0])
    with pytest.raises(ValueError):
        engel().multiply([1, 0, 0], [0, 1, 0, 0])


@pytest.mark.parametrize("name", STEP_TWO + ["engel"])
def test_law_properties(name):
    G = preset(name)
    rng = np.random.default_rng(1)
    for _ in range(20):
        g, h, k = (random_element(G, rng) for _ in range(3))
        np.testing.assert_allclose(G.multiply(G.multiply(g, h), k), G.multiply(g, G.multiply(h, k)), atol=1e-12)
        np.testing.assert_allclose(G.multiply(g, G.inverse(g)), G.identity(), atol=1e-12)
        np.testing.assert_allclose(G.multiply(G.inverse(g), g), G.identity(), atol=1e-12)
        r = rng.uniform(0.2, 3.0)
        np.testing.assert_allclose(G.dilate(G.multiply(g, h), r), G.multiply(G.dilate(g, r), G.dilate(h, r)), atol=1e-12)
        np.testing.assert_allclose(G.dilate(G.dilate(g, r), 1 / r), g, atol=1e-12)


def test_associativity_exact_on_rationals():
    A = [[Fraction(0), Fraction(1)], [Fraction(-1), Fraction(0)]]

    def mul(g, h):
        b = sum(g[i] * A[i][j] * h[j] for i in range(2) for j in range(2))
        return (g[0] + h[0], g[1] + h[1], g[2] + h[2] + b / 2)

    g = (Fraction(1, 3), Fraction(2), Fraction(-1, 7))
    h = (Fraction(-5, 2), Fraction(1, 4), Fraction(3))
    k = (Fraction(2, 5), Fraction(-1), Fraction(1, 6))
    exact = mul(mul(g, h), k)
    assert exact == mul(g, mul(h, k))
    G = heisenberg()
    got = G.multiply(G.multiply(np.array(g, float), np.array(h, float)), np.array(k, float))
    np.testing.assert_allclose(got, np.array(exact, float), rtol=1e-15)


def test_engel_fields_from_law():
    """Left-invariant fields of the Engel law are X1 = d1, X2 = d2 + x1 d3 + x1^2/2 d4."""
    G = engel()
    g = np.array([0.7, -0.3, 1.1, 0.4])
    np.testing.assert_allclose(left_field(G, g, 0), [1, 0, 0, 0], atol=1e-8)
    np.testing.assert_allclose(left_field(G, g, 1), [0, 1, 0.7, 0.7**2 / 2], atol=1e-8)


def test_martinet_has_no_law():
    G = preset("martinet")
    with pytest.raises(TypeError):
        G.multiply([1, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(G.dilate([1, 1, 1], 2.0), [2, 2, 8])


# -- J map and Metivier -----------------------------------------------------------


def test_j_map_heisenberg():
    np.testing.assert_array_equal(j_map(heisenberg(), [1.0]), [[0, -1], [1, 0]])
    np.testing.assert_array_equal(j_map(heisenberg(), [0.0]), np.zeros((2, 2)))


@pytest.mark.parametrize("name", STEP_TWO)
def test_j_map_from_brackets(name):
    """<J_eta X_j, X_k> = eta([X_j, X_k]) with brackets from finite differences of the law."""
    G = preset(name)
    rng = np.random.default_rng(2)
    eta = rng.standard_normal(G.ell)
    g = rng.standard_normal(G.dim)
    J = j_map(G, eta)
    for j in range(G.m):
        for k in range(G.m):
            assert J[k, j] == pytest.approx(eta @ bracket_fd(G, j, k, g), abs=1e-6)


def test_pfaffian():
    M = np.zeros((4, 4))
    M[0, 1], M[2, 3] = 2.0, 3.0
    M = M - M.T
    assert pfaffian(M) == pytest.approx(6.0)
    rng = np.random.default_rng(4)
    B = rng.standard_normal((6, 6))
    S = B - B.T
    assert pfaffian(S) ** 2 == pytest.approx(np.linalg.det(S), rel=1e-10)


def test_metivier_examples():
    assert check_metivier(heisenberg()).is_metivier is True
    rep = check_metivier(h_times_r())
    assert rep.is_metivier is False
    np.testing.assert_allclose(np.abs(rep.witness_sigma), [1.0])
    np.testing.assert_allclose(rep.witness_sigma[0] * h_times_r().A[0] @ np.eye(3)[2], 0.0)
    assert check_metivier(free(3)).is_metivier is False
    assert check_metivier(h_alpha(2)).is_metivier is True


def test_metivier_h_type():
    """Complex Heisenberg group: (sigma A)^2 = -|sigma|^2 I, hence Metivier."""
    J1 = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], float)
    J2 = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], float)
    np.testing.assert_array_equal(J1 @ J2 + J2 @ J1, 0)
    rep = check_metivier(make_step_two([J1, J2]), n_samples=2000)
    assert rep.verdict == "yes"
    assert rep.min_singular_value == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("name", ["free(4)", "free(5)"])
def test_metivier_witness_free(name):
    G = preset(name)
    rep = check_metivier(G, n_samples=2000)
    assert rep.verdict == "no"
    assert np.linalg.norm(rep.witness_sigma) == pytest.approx(1.0)
    s = np.linalg.svd(G.sigma_A(rep.witness_sigma), compute_uv=False)
    assert s[-1] < 1e-8


@pytest.mark.parametrize("name", STEP_TWO)
def test_metivier_cross_check(name):
    """Not Metivier iff some unit w has <A w, y> spanning a proper subspace of R^ell."""
    G = preset(name)
    rep = check_metivier(G, n_samples=2000)
    if rep.is_metivier:
        rng = np.random.default_rng(3)
        for w in rng.standard_normal((20, G.m)):
            assert np.linalg.matrix_rank(G.A @ w) == G.ell
    else:
        w = np.linalg.svd(G.sigma_A(rep.witness_sigma))[2][-1]
        assert np.linalg.matrix_rank(G.A @ w, tol=1e-8) < G.ell


# -- configs ----------------------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = {"name": "h3", "m": 2, "ell": 1, "A": [[[0, 1], [-1, 0]]]}
    path = tmp_path / "h3.json"
    path.write_text(json.dumps(cfg))
    G = load_group(path)
    assert isinstance(G, StepTwoGroup) and G.name == "h3"
    np.testing.assert_array_equal(G.A, heisenberg().A)
    assert load_group("free(3)").ell == 3
    assert group_from_config({"preset": "free", "m": 4}).ell == 6


@pytest.mark.parametrize(
    "cfg, field",
    [
        ({"m": 2, "ell": 1}, "A"),
        ({"m": 2, "ell": 1, "A": [[[0, 1], [1, 0]]]}, "A"),
        ({"m": 2, "ell": 2, "A": [[[0, 1], [-1, 0]]]}, "A"),
        ({"m": 3, "ell": 1, "A": [[[0, 0, 0], [0, 0, 0], [0, 0, 0]]]}, "A"),
        ({"m": "two", "ell": 1, "A": []}, "m"),
        ({"preset": "nope"}, "preset"),
        ([1, 2], "<root>"),
    ],
)
def test_config_errors_name_field(cfg, field):
    with pytest.raises(ConfigError) as err:
        group_from_config(cfg)
    assert err.value.field == field


def test_load_group_errors(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_group(tmp_path / "missing.json")
    assert err.value.field == "group"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_group(bad)
    with pytest.raises(ConfigError):
        load_group("unknown_group")
