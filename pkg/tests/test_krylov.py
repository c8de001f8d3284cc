import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocksolve.exceptions import Breakdown, DimensionMismatch, NonlinearOperator
from blocksolve.krylov import GmresSettings, LinearOperator, audit_linearity, gmres
from blocksolve.report import Status


def test_identity_one_iteration():
    b = np.array([3.0, -1.0, 2.0])
    x, rep = gmres(LinearOperator.from_matrix(np.eye(3)), b)
    np.testing.assert_allclose(x, b, atol=1e-15)
    assert rep.iterations == 1
    assert rep.status is Status.CONVERGED


def test_diagonal_three_iterations():
    x, rep = gmres(LinearOperator.from_matrix(np.diag([1.0, 2.0, 3.0])), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0], atol=1e-12)
    assert rep.iterations <= 3


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 30), seed=st.integers(0, 2**31 - 1))
def test_exact_within_dimension(d, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d)) + d * np.eye(d)
    b = rng.standard_normal(d)
    x, rep = gmres(LinearOperator.from_matrix(M), b, settings=GmresSettings(tol=1e-10))
    assert rep.iterations <= d
    assert np.linalg.norm(b - M @ x) <= 1e-10 * np.linalg.norm(b) * 10
    res = np.array(rep.residuals)
    assert np.all(np.diff(res) <= 1e-12 * res[0])


def test_estimates_track_true_residual():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((40, 40)) + 8 * np.eye(40)
    b = rng.standard_normal(40)
    iterates = []
    _, rep = gmres(LinearOperator.from_matrix(M), b, callback=iterates.append)
    true = [np.linalg.norm(b - M @ x) for x in iterates]
    np.testing.assert_allclose(rep.residuals[1:], true, rtol=1e-8, atol=1e-13)


def test_restarted_converges():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((60, 60)) + 12 * np.eye(60)
    b = rng.standard_normal(60)
    x, rep = gmres(LinearOperator.from_matrix(M), b, settings=GmresSettings(tol=1e-10, restart=5))
    assert rep.converged
    assert np.linalg.norm(b - M @ x) <= 1e-9 * np.linalg.norm(b)


def test_max_iterations_status():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((30, 30)) + 2 * np.eye(30)
    _, rep = gmres(LinearOperator.from_matrix(M), rng.standard_normal(30), settings=GmresSettings(max_iter=3))
    assert rep.status is Status.MAX_ITERATIONS
    assert rep.iterations == 3


def test_initial_guess_at_solution():
    M = np.diag([2.0, 4.0])
    x, rep = gmres(LinearOperator.from_matrix(M), np.array([2.0, 4.0]), x0=np.ones(2))
    assert rep.iterations == 0
    np.testing.assert_array_equal(x, np.ones(2))


def test_breakdown_on_singular():
    M = np.diag([1.0, 0.0])
    with pytest.raises(Breakdown):
        gmres(LinearOperator.from_matrix(M), np.array([0.0, 1.0]), settings=GmresSettings(audit=False))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        gmres(LinearOperator.from_matrix(np.eye(3)), np.ones(2))


def test_audit_rejects_affine_map():
    op = LinearOperator(3, lambda v: v + 1.0)
    with pytest.raises(NonlinearOperator, match="superposition"):
        gmres(op, np.ones(3))


def test_audit_accepts_linear():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((10, 10))
    assert audit_linearity(LinearOperator.from_matrix(M)) <= 1e-14


@pytest.mark.parametrize("kwargs", [dict(tol=0.0), dict(max_iter=0), dict(restart=-1)])
def test_invalid_settings(kwargs):
    with pytest.raises(ValueError):
        GmresSettings(**kwargs)
