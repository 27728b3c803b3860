import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowrank_sysid import estimator as es
from lowrank_sysid.datagen import ModelConfig, generate_iid_dataset, sample_orthonormal_frame
from lowrank_sysid.errors import DimensionError, EstimationError, InputError
from lowrank_sysid.metrics import sin_theta_op


class TestPseudoinverse:
    def test_identity(self):
        np.testing.assert_allclose(es.pseudoinverse(np.eye(3)), np.eye(3), atol=1e-15)

    def test_zero_singular_value_stays_zero(self):
        np.testing.assert_allclose(es.pseudoinverse([[2.0, 0.0], [0.0, 0.0]]),
                                   [[0.5, 0.0], [0.0, 0.0]], atol=1e-15)

    def test_row_vector(self):
        np.testing.assert_allclose(es.pseudoinverse([[1.0, 1.0]]), [[0.5], [0.5]], atol=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            es.pseudoinverse([[1.0, np.nan]])

    def test_rel_tol_cuts_small_singular_values(self):
        X = np.diag([1.0, 1e-6])
        np.testing.assert_allclose(es.pseudoinverse(X, rel_tol=1e-3), np.diag([1.0, 0.0]))
        np.testing.assert_allclose(es.pseudoinverse(X), np.diag([1.0, 1e6]))

    @pytest.mark.parametrize("T,d", [(3, 8), (6, 6), (10, 4)])
    def test_penrose_identities(self, rng, T, d):
        for _ in range(20):
            X = rng.standard_normal((T, d))
            P = es.pseudoinverse(X)

            def rel(a, b):
                return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)

            assert rel(X @ P @ X, X) <= 1e-8
            assert rel(P @ X @ P, P) <= 1e-8
            assert rel((X @ P).T, X @ P) <= 1e-8
            assert rel((P @ X).T, P @ X) <= 1e-8


class TestFirstStep:
    def test_identity_design(self):
        beta = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(es.first_step(np.eye(3), beta), beta)

    def test_unobserved_coordinate_is_zero(self):
        np.testing.assert_allclose(es.first_step([[1.0, 0.0]], [3.0]), [3.0, 0.0])

    def test_minimum_norm_solution(self):
        np.testing.assert_allclose(es.first_step([[1.0, 1.0]], [2.0]), [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            es.first_step(np.eye(3), np.ones(2))

    def test_mom(self):
        beta = np.array([1.0, 2.0])
        np.testing.assert_allclose(es.mom_first_step(np.eye(2), beta), beta)
        np.testing.assert_allclose(es.mom_first_step([[1.0, 0.0]], [3.0]), [3.0, 0.0])
        np.testing.assert_allclose(es.mom_first_step([[2.0, 0.0]], [1.0]), [2.0, 0.0])
        np.testing.assert_allclose(es.first_step([[2.0, 0.0]], [1.0]), [0.5, 0.0])
        with pytest.raises(DimensionError):
            es.mom_first_step(np.eye(2), np.ones(3))

    @pytest.mark.slow
    def test_rescaled_first_step_is_unbiased(self):
        # E[P_X] = (T/d) I, so (d/T) X^+ X beta is unbiased for beta.
        d, T, draws = 6, 2, 100_000
        beta = np.array([0.6, -0.3, 0.2, 0.5, -0.4, 0.1])
        X = np.random.default_rng(1).standard_normal((draws, T, d))
        est = np.einsum("ndt,nt->nd", np.linalg.pinv(X), X @ beta)
        mean = (d / T) * est.mean(axis=0)
        assert np.linalg.norm(mean - beta) / np.linalg.norm(beta) <= 0.02


class TestProcess:
    def test_normalize(self):
        out = es.process_first_step([[3.0, 4.0]], "normalize")
        np.testing.assert_allclose(out.processed, [[0.6, 0.8]])

    def test_normalize_drops_zero_vectors(self):
        out = es.process_first_step([[0.0, 0.0], [1.0, 0.0]], "normalize")
        np.testing.assert_allclose(out.processed, [[1.0, 0.0]])
        np.testing.assert_array_equal(out.kept_indices, [1])

    def test_truncate(self):
        out = es.process_first_step([[1.0, 2.0], [3.0, 4.0]], "truncate",
                                    pinv_norms=[0.4, 0.9], threshold=0.5)
        np.testing.assert_array_equal(out.kept_indices, [0])
        np.testing.assert_allclose(out.processed, [[1.0, 2.0]])

    def test_all_dropped(self):
        with pytest.raises(EstimationError, match="no surviving"):
            es.process_first_step([[1.0, 0.0]], "truncate", pinv_norms=[2.0], threshold=1.0)
        with pytest.raises(EstimationError):
            es.process_first_step([[0.0, 0.0]], "normalize")

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            es.process_first_step([[1.0]], "bogus")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 8), st.integers(0, 10_000))
    def test_normalized_vectors_have_unit_norm(self, n, d, seed):
        raw = np.random.default_rng(seed).standard_normal((n, d))
        out = es.process_first_step(raw, "normalize")
        assert np.all(np.abs(np.linalg.norm(out.processed, axis=1) - 1.0) <= 1e-12)


class TestThreshold:
    def test_below_d(self):
        # 1 / (0.5 * (sqrt(50) - 3)), 30-digit decimal arithmetic
        assert es.default_threshold(50, 10, 0.5) == pytest.approx(0.49127160057880367, rel=1e-12)

    def test_above_d(self):
        # 1 / (0.5 * (sqrt(80) - sqrt(50))), 30-digit decimal arithmetic
        assert es.default_threshold(50, 80, 0.5) == pytest.approx(1.0676893147909756, rel=1e-12)

    def test_square_is_vacuous(self):
        with pytest.warns(es.VacuousThresholdWarning):
            assert math.isinf(es.default_threshold(50, 50))


class TestRecoverSubspace:
    def test_rank_one(self):
        frame = es.recover_subspace(np.tile([1.0, 0.0, 0.0], (5, 1)), 1).frame
        assert abs(abs(frame[0, 0]) - 1.0) <= 1e-12

    def test_two_dim_span(self):
        e = np.eye(4)
        frame = es.recover_subspace([e[0], e[1], e[0], e[1]], 2).frame
        assert sin_theta_op(frame, e[:, :2]) <= 1e-12

    def test_sign_convention(self, rng):
        frame = es.recover_subspace(rng.standard_normal((30, 6)), 3).frame
        idx = np.argmax(np.abs(frame), axis=0)
        assert np.all(frame[idx, np.arange(3)] > 0)

    def test_padding_when_few_estimates(self):
        with pytest.warns(es.RankDeficientSubspaceWarning):
            frame = es.recover_subspace([[1.0, 0.0, 0.0, 0.0]], 3).frame
        assert np.linalg.norm(frame.T @ frame - np.eye(3)) <= 1e-10
        assert abs(abs(frame[0, 0]) - 1.0) <= 1e-12

    def test_empty(self):
        with pytest.raises(EstimationError):
            es.recover_subspace(np.zeros((0, 3)), 1)

    def test_noiseless_estimates_find_subspace(self):
        cfg = ModelConfig(d=10, r=2, T=3, N=2000, sigma_w=0.0, seed=21)
        ds = generate_iid_dataset(cfg)
        raw, _ = es.batched_first_step(ds)
        processed = es.process_first_step(raw, "normalize").processed
        frame = es.recover_subspace(processed, 2).frame
        assert sin_theta_op(frame, ds.truth.frame) <= 0.15

    def test_minimizes_residual_objective(self, rng):
        data = rng.standard_normal((40, 7)) @ np.diag([3, 2, 1.5, 1, 0.5, 0.3, 0.1])
        frame = es.recover_subspace(data, 3).frame

        def resid(F):
            return np.sum((data - data @ F @ F.T) ** 2)

        best = resid(frame)
        for _ in range(100):
            V = sample_orthonormal_frame(7, 3, rng)
            assert best <= resid(V) + 1e-12
        trace_form = np.sum(data ** 2) - np.trace(frame @ frame.T @ data.T @ data)
        assert abs(best - trace_form) <= 1e-8


class TestRefine:
    def test_true_frame_noiseless(self, rng):
        ds = generate_iid_dataset(ModelConfig(d=12, r=3, T=5, N=10, sigma_w=0.0, seed=7))
        for X, Y, beta in zip(ds.X, ds.Y, ds.truth.parameters):
            phi, b2 = es.refine(X, Y, ds.truth.frame)
            assert np.linalg.norm(b2 - beta) <= 1e-8
            np.testing.assert_allclose(ds.truth.frame @ phi, b2, atol=1e-12)

    def test_projection_onto_axis(self):
        phi, beta = es.refine(np.eye(2), [3.0, 4.0], np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(phi, [3.0])
        np.testing.assert_allclose(beta, [3.0, 0.0])

    def test_underdetermined_is_minimum_norm(self, rng):
        X = rng.standard_normal((2, 6))
        B = sample_orthonormal_frame(6, 3, rng)
        Y = rng.standard_normal(2)
        phi, _ = es.refine(X, Y, B)
        Z = X @ B
        null = np.linalg.svd(Z)[2][2:].T
        for _ in range(20):
            other = phi + null @ rng.standard_normal(null.shape[1])
            np.testing.assert_allclose(Z @ other, Z @ phi, atol=1e-10)
            assert np.linalg.norm(phi) <= np.linalg.norm(other) + 1e-12

    def test_oracle_matches_refine(self, rng):
        X = rng.standard_normal((4, 5))
        Y = rng.standard_normal(4)
        B = sample_orthonormal_frame(5, 2, rng)
        np.testing.assert_array_equal(es.oracle_estimate(X, Y, B), es.refine(X, Y, B)[1])

    def test_oracle_projects_onto_known_axis(self):
        np.testing.assert_allclose(
            es.oracle_estimate([[1.0, 1.0]], [2.0], np.array([[1.0], [0.0]])), [2.0, 0.0])

    def test_frame_shape_checked(self):
        with pytest.raises(DimensionError):
            es.refine(np.eye(3), np.ones(3), np.eye(2))


class TestEstimate:
    def test_pipeline_improves_on_first_step(self):
        ds = generate_iid_dataset(ModelConfig(d=5, r=1, T=3, N=200, sigma_w=0.0, seed=13))
        sub, refined, first = es.estimate(ds, 1, "normalize")
        assert sin_theta_op(sub.frame, ds.truth.frame) <= 0.2
        err1 = np.linalg.norm(first.raw - ds.truth.parameters, axis=1).mean()
        err2 = np.linalg.norm(refined.parameters - ds.truth.parameters, axis=1).mean()
        assert err2 < err1

    def test_single_determined_system(self):
        ds = generate_iid_dataset(ModelConfig(d=4, r=1, T=6, N=1, sigma_w=0.0, seed=14))
        _, refined, _ = es.estimate(ds, 1, "normalize")
        assert np.linalg.norm(refined.parameters[0] - ds.truth.parameters[0]) <= 1e-6

    def test_truncation_dropping_everything(self):
        ds = generate_iid_dataset(ModelConfig(d=8, r=2, T=3, N=50, seed=15))
        with pytest.raises(EstimationError, match="no surviving"):
            es.estimate(ds, 2, "truncate", threshold=1e-6)

    def test_refined_estimates_lie_in_estimated_span(self):
        ds = generate_iid_dataset(ModelConfig(d=10, r=3, T=4, N=100, seed=16))
        for variant in ("normalize", "truncate", "mom"):
            sub, refined, _ = es.estimate(ds, 3, variant)
            B = sub.frame
            assert np.linalg.norm(B.T @ B - np.eye(3)) <= 1e-10
            resid = refined.parameters - refined.parameters @ B @ B.T
            assert np.max(np.linalg.norm(resid, axis=1)) <= 1e-10
            np.testing.assert_allclose(refined.coefficients @ B.T, refined.parameters, atol=1e-12)

    def test_truncate_keeps_only_small_pinv_norms(self):
        ds = generate_iid_dataset(ModelConfig(d=6, r=2, T=5, N=300, seed=17))
        s = es.default_threshold(6, 5)
        _, _, first = es.estimate(ds, 2, "truncate")
        norms = 1.0 / np.linalg.svd(ds.X, compute_uv=False)[:, -1]
        np.testing.assert_array_equal(first.kept_indices, np.flatnonzero(norms <= s))
        assert 0 < first.kept_indices.size < 300

    def test_vacuous_truncation_warns(self):
        ds = generate_iid_dataset(ModelConfig(d=4, r=1, T=4, N=10, seed=18))
        with pytest.warns(es.VacuousThresholdWarning):
            _, _, first = es.estimate(ds, 1, "truncate")
        assert first.kept_indices.size == 10

    def test_rotation_equivariance(self, rng):
        ds = generate_iid_dataset(ModelConfig(d=8, r=2, T=3, N=400, sigma_w=0.1, seed=19))
        Q = np.linalg.qr(rng.standard_normal((8, 8)))[0]
        rotated = generate_iid_dataset(ModelConfig(d=8, r=2, T=3, N=400, sigma_w=0.1, seed=19))
        rotated.X = ds.X @ Q
        frame_rot = Q.T @ ds.truth.frame
        for variant in ("normalize", "truncate", "mom"):
            a = sin_theta_op(es.estimate(ds, 2, variant)[0].frame, ds.truth.frame)
            b = sin_theta_op(es.estimate(rotated, 2, variant)[0].frame, frame_rot)
            assert abs(a - b) <= 1e-8

    def test_timeseries_noiseless_exact_identification(self):
        from lowrank_sysid.datagen import TimeSeriesConfig, generate_timeseries_dataset
        # Noiseless states after x_0 stay in an r-dim range, so rank(X) <= r + 1;
        # exact identification needs d <= r + 1.
        ds = generate_timeseries_dataset(
            TimeSeriesConfig(d=3, r=2, T=4, N=1, sigma_w=0.0, seed=3))
        raw, _ = es.batched_first_step(ds)
        np.testing.assert_allclose(raw, ds.truth.parameters, atol=1e-6)
        sub, _, _ = es.estimate(ds, 2, "normalize")
        assert sin_theta_op(sub.frame, ds.truth.frame) <= 1e-6

    def test_rejects_unknown_variant(self):
        ds = generate_iid_dataset(ModelConfig(d=3, r=1, T=2, N=3, seed=1))
        with pytest.raises(ValueError):
            es.estimate(ds, 1, "average")
