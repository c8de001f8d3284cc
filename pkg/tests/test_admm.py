import numpy as np
import pytest

from blocksolve.admm import AdmmSettings, admm_setup, admm_solve, admm_step, sigma_matrix
from blocksolve.model import Iterate, assemble_kkt, assemble_regularized_kkt
from blocksolve.problems import StochasticQpSpec, gen_stochastic_qp, random_block_qp
from blocksolve.report import Status
from blocksolve.schur import schur_solve

from conftest import dense_kkt


class TestSetup:
    def test_tiny(self, tiny_qp):
        f = admm_setup(tiny_qp, 1.0)
        np.testing.assert_allclose(f.K_rho[0].solve(np.array([3.0])), [1.0])
        np.testing.assert_array_equal(sigma_matrix(tiny_qp), [[1.0]])
        np.testing.assert_array_equal(tiny_qp.partitions[0].K_rho(1.0).toarray(), [[3.0]])

    def test_rho_ten(self, tiny_qp):
        np.testing.assert_array_equal(tiny_qp.partitions[0].K_rho(10.0).toarray(), [[12.0]])

    def test_stochastic_sigma(self):
        qp = gen_stochastic_qp(StochasticQpSpec(P=3, nx=8, nz=2, m=2, hessian_blocks=2, seed=1))
        np.testing.assert_array_equal(sigma_matrix(qp), 3.0 * np.eye(2))

    def test_rejects_nonpositive_rho(self, tiny_qp):
        with pytest.raises(ValueError):
            admm_setup(tiny_qp, 0.0)


class TestStep:
    def test_from_zero(self, tiny_qp):
        f = admm_setup(tiny_qp, 1.0)
        np.testing.assert_allclose(admm_step(tiny_qp, f, Iterate.zeros(tiny_qp)).vec, [2 / 3, 2 / 3, 0.0], atol=1e-15)

    def test_from_dual(self, tiny_qp):
        f = admm_setup(tiny_qp, 1.0)
        np.testing.assert_allclose(admm_step(tiny_qp, f, np.array([0.0, 0.0, 1.0])).vec, [1 / 3, 4 / 3, 0.0], atol=1e-15)

    def test_fixed_point(self, tiny_qp):
        f = admm_setup(tiny_qp, 1.0)
        np.testing.assert_allclose(admm_step(tiny_qp, f, np.array([1.0, 1.0, 0.0])).vec, [1.0, 1.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize("seed", range(6))
    def test_affine(self, seed):
        qp = random_block_qp(seed)
        f = admm_setup(qp, 0.7)
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, qp.dim))
        T = lambda u: admm_step(qp, f, u).vec  # noqa: E731
        T0 = T(np.zeros(qp.dim))
        lin = lambda u: T(u) - T0  # noqa: E731
        lhs = lin(2.0 * a - 3.0 * b)
        rhs = 2.0 * lin(a) - 3.0 * lin(b)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + np.linalg.norm(lhs))

    @pytest.mark.parametrize("seed", range(6))
    def test_fixed_point_solves_both_systems(self, seed):
        qp = random_block_qp(seed)
        u, _ = schur_solve(qp)
        f = admm_setup(qp, 2.0)
        np.testing.assert_allclose(admm_step(qp, f, u).vec, u.vec, atol=1e-9 * (1 + np.linalg.norm(u.vec)))
        H_rho = assemble_regularized_kkt(qp, 2.0).H.toarray()
        assert np.linalg.norm(H_rho @ u.vec - qp.rhs) <= 1e-9 * (1 + np.linalg.norm(u.vec))


class TestSolve:
    def test_tiny_converges(self, tiny_qp):
        u, rep = admm_solve(tiny_qp, AdmmSettings(rho=1.0, tol=1e-8))
        assert rep.status is Status.CONVERGED
        assert rep.final_residual <= 1e-8
        assert len(rep.residuals) == rep.iterations + 1
        np.testing.assert_allclose(u.vec, [1, 1, 0], atol=1e-8)

    def test_single_iteration(self, tiny_qp):
        u, rep = admm_solve(tiny_qp, AdmmSettings(rho=1.0, max_iter=1))
        assert rep.iterations == 1
        assert rep.status is Status.MAX_ITERATIONS
        np.testing.assert_allclose(u.vec, [2 / 3, 2 / 3, 0.0], atol=1e-15)

    def test_start_at_solution(self, tiny_qp):
        u0 = Iterate(tiny_qp, np.array([1.0, 1.0, 0.0]))
        _, rep = admm_solve(tiny_qp, AdmmSettings(rho=1.0), u0=u0)
        assert rep.status is Status.CONVERGED
        assert rep.iterations == 1
        assert rep.extra["dy"] == [0.0] and rep.extra["dz"] == [0.0]

    def test_residual_criterion(self):
        qp = random_block_qp(4)
        _, rep = admm_solve(qp, AdmmSettings(rho=1.0, tol=1e-9, max_iter=5000, criterion="residual"))
        assert rep.converged
        assert rep.final_residual <= 1e-9
        assert rep.residuals[-2] > 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_step_rule_residual_constant(self, seed):
        # ||Hu - r|| <= C * eps after the step-norm rule fires; C <= 1e2 here
        qp = random_block_qp(seed)
        eps = 1e-8
        _, rep = admm_solve(qp, AdmmSettings(rho=1.0, tol=eps, max_iter=20000, record_history=False))
        assert rep.converged
        assert rep.final_residual <= 1e2 * eps

    def test_matches_dense_solution(self):
        qp = random_block_qp(9)
        H, r = dense_kkt(qp)
        ref = np.linalg.solve(H, r)
        u, rep = admm_solve(qp, AdmmSettings(rho=1.0, tol=1e-11, max_iter=20000, criterion="residual"))
        assert rep.converged
        assert np.linalg.norm(u.vec - ref) <= 1e-8 * (1 + np.linalg.norm(ref))

    def test_factors_rho_mismatch(self, tiny_qp):
        f = admm_setup(tiny_qp, 2.0)
        with pytest.raises(ValueError):
            admm_solve(tiny_qp, AdmmSettings(rho=1.0), factors=f)

    @pytest.mark.parametrize(
        "kwargs", [dict(rho=0.0), dict(tol=0.0), dict(max_iter=0), dict(criterion="nope")]
    )
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ValueError):
            AdmmSettings(**kwargs)

    def test_history_off(self, tiny_qp):
        _, rep = admm_solve(tiny_qp, AdmmSettings(rho=1.0, record_history=False))
        assert len(rep.residuals) == 2


def test_unregularized_H_unchanged(tiny_qp):
    # the solver must not mutate the cached compact system
    before = assemble_kkt(tiny_qp).H.toarray()
    admm_solve(tiny_qp, AdmmSettings(rho=3.0))
    np.testing.assert_array_equal(tiny_qp.kkt.H.toarray(), before)
