import numpy as np
import pytest

from conftest import dense_u
from semipc.core import IdentifiabilityError
from semipc.design import DesignOperator, UnsupportedModeError


def dense_d(op):
    u = dense_u(op.pairs, op.n)
    return np.eye(op.n_pairs) - u @ np.linalg.solve(u.T @ u, u.T)


def test_u_apply_small():
    op = DesignOperator.complete(2)
    assert op.u_apply(np.array([1.0, 3.0])).tolist() == [-1.0, -3.0, -2.0]
    assert not op.u_apply(np.zeros(2)).any()


def test_u_apply_length_check():
    with pytest.raises(ValueError):
        DesignOperator.complete(3).u_apply(np.zeros(2))


def test_u_transpose_small():
    op = DesignOperator.complete(2)
    assert op.u_transpose_apply(np.ones(3)).tolist() == [0.0, -2.0]


def test_v_inverse_small():
    op = DesignOperator.complete(2)
    np.testing.assert_allclose(op.v_inverse_apply(np.array([1.0, 0.0])), [2 / 3, 1 / 3], rtol=1e-15)
    np.testing.assert_allclose(op.v_inverse_apply(np.ones(2)), np.ones(2), rtol=1e-15)


@pytest.mark.parametrize("n", [10, 12, 15])
def test_operators_match_dense(rng, n):
    op = DesignOperator.complete(n)
    u = dense_u(op.pairs, n)
    theta, y, x = rng.normal(size=n), rng.normal(size=op.n_pairs), rng.normal(size=n)
    np.testing.assert_allclose(op.u_apply(theta), u @ theta, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(op.u_transpose_apply(y), u.T @ y, rtol=1e-12, atol=1e-12)
    v = (n + 1) * np.eye(n) - np.ones((n, n))
    np.testing.assert_allclose(op.v_inverse_apply(x), np.linalg.solve(v, x), rtol=1e-12)
    np.testing.assert_allclose(op.d_apply(y), dense_d(op) @ y, rtol=1e-10, atol=1e-12)


def test_projector_identities(rng):
    op = DesignOperator.complete(9)
    theta = rng.normal(size=9)
    assert np.linalg.norm(op.d_apply(op.u_apply(theta))) <= 1e-12 * np.linalg.norm(theta)
    y1, y2 = rng.normal(size=(2, op.n_pairs))
    dy = op.d_apply(y1)
    np.testing.assert_allclose(op.d_apply(dy), dy, atol=1e-12)
    assert op.d_apply(y1) @ y2 == pytest.approx(y1 @ op.d_apply(y2), abs=1e-12)


def test_projected_gram_zero_on_merit_space(rng):
    op = DesignOperator.complete(6)
    zbar = op.u_apply(rng.normal(size=6))[:, None]
    assert np.abs(op.projected_gram(zbar)).max() < 1e-12


def test_projected_gram_ones_column():
    op = DesignOperator.complete(5)
    zbar = np.ones((op.n_pairs, 1))
    s = op.incidence_sums(zbar[:, 0])
    expected = op.n_pairs - (s @ s) / 6
    dense = zbar.T @ dense_d(op) @ zbar
    assert op.projected_gram(zbar)[0, 0] == pytest.approx(expected, rel=1e-12)
    assert op.projected_gram(zbar)[0, 0] == pytest.approx(dense[0, 0], rel=1e-10)


def test_projected_gram_random(rng):
    op = DesignOperator.complete(20)
    zbar = rng.normal(size=(op.n_pairs, 3))
    g = op.projected_gram(zbar)
    np.testing.assert_allclose(g, zbar.T @ dense_d(op) @ zbar, rtol=1e-10)
    assert np.array_equal(g, g.T)
    assert np.linalg.eigvalsh(g)[0] >= -1e-10 * np.trace(g)


def test_projected_gram_rejects_nan():
    op = DesignOperator.complete(3)
    z = np.ones((op.n_pairs, 1))
    z[0, 0] = np.nan
    with pytest.raises(ValueError):
        op.projected_gram(z)


def test_closed_form_only_operators_refuse_general_mode():
    op = DesignOperator.from_pairs(3, [[0, 1], [1, 2], [2, 3]])
    assert op.mode == "general"
    with pytest.raises(UnsupportedModeError):
        op.v_inverse_apply(np.ones(3))
    with pytest.raises(UnsupportedModeError):
        op.d_apply(np.ones(3))


def test_general_path_matches_closed_form(rng):
    n = 8
    closed = DesignOperator.complete(n)
    general = DesignOperator(n, closed.pairs, "general")
    zbar = rng.normal(size=(closed.n_pairs, 2))
    y = rng.normal(size=closed.n_pairs)
    th_g, eta_g = general.solve_normal_equations(zbar, y)
    a = closed.projected_gram(zbar)
    eta_c = np.linalg.solve(a, closed.d_apply(zbar).T @ y)
    th_c = closed.v_inverse_apply(closed.u_transpose_apply(y - zbar @ eta_c))
    np.testing.assert_allclose(eta_g, eta_c, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(th_g, th_c, rtol=1e-8, atol=1e-10)


def test_general_path_noiseless_recovery(rng):
    n = 30
    full = DesignOperator.complete(n).pairs
    keep = rng.random(full.shape[0]) < 0.3
    keep[:n] = True  # star around item 0 keeps the graph connected
    op = DesignOperator.from_pairs(n, full[keep])
    theta, eta = rng.normal(size=n), np.array([0.7, -1.2])
    zbar = rng.normal(size=(op.n_pairs, 2))
    th, et = op.solve_normal_equations(zbar, op.u_apply(theta) + zbar @ eta)
    np.testing.assert_allclose(th, theta, atol=1e-8)
    np.testing.assert_allclose(et, eta, atol=1e-8)


def test_disconnected_graph_names_components():
    op = DesignOperator.from_pairs(3, [[0, 1], [2, 3]])
    with pytest.raises(IdentifiabilityError, match=r"\{0, 1\}.*\{2, 3\}"):
        op.solve_normal_equations(np.ones((2, 1)), np.ones(2))


def test_theta_sandwich_homoscedastic_identity(rng):
    n = 7
    op = DesignOperator.complete(n)
    v_inv = np.linalg.inv((n + 1) * np.eye(n) - np.ones((n, n)))
    sigma2 = 0.37
    got = op.theta_sandwich_diag(np.full(op.n_pairs, sigma2))
    np.testing.assert_allclose(got, sigma2 * np.diag(v_inv), rtol=1e-10)


def test_theta_sandwich_matches_dense(rng):
    n = 6
    op = DesignOperator.complete(n)
    u = dense_u(op.pairs, n)
    s2 = rng.random(op.n_pairs)
    v_inv = np.linalg.inv(u.T @ u)
    dense = np.diag(v_inv @ u.T @ np.diag(s2) @ u @ v_inv)
    np.testing.assert_allclose(op.theta_sandwich_diag(s2), dense, rtol=1e-10)
    general = DesignOperator(n, op.pairs, "general")
    np.testing.assert_allclose(general.theta_sandwich_diag(s2), dense, rtol=1e-10)


def test_laplacian_solve_matches_dense(rng):
    n = 12
    op = DesignOperator.from_pairs(n, DesignOperator.complete(n).pairs[::2])
    op.check_connected()
    w = rng.random(op.n_pairs) + 0.5
    b = rng.normal(size=n)
    u = dense_u(op.pairs, n)
    np.testing.assert_allclose(op.laplacian_solve(b, w), np.linalg.solve(u.T @ (w[:, None] * u), b), rtol=1e-9)


def test_general_path_collinear_covariate(rng):
    n = 6
    op = DesignOperator.from_pairs(n, DesignOperator.complete(n).pairs[1:])
    zbar = op.u_apply(rng.normal(size=n))[:, None]
    with pytest.raises(IdentifiabilityError, match="collinear"):
        op.solve_normal_equations(zbar, rng.normal(size=op.n_pairs))
