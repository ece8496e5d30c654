import math

import numpy as np
import pytest

from imbalance_lab import (
    Dataset,
    InfeasibleProblemError,
    MarginProblem,
    decision_scores,
    direction_cosine,
    load_predictor_json,
    make_instance,
    mm_coefficients,
    predict,
    sample_train,
    save_predictor_json,
    solve_kernel,
    solve_primal,
    training_error,
)
from imbalance_lab.margin import Predictor


def two_point_dataset():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    return Dataset(X, np.array([0, 1]), c=2)


class TestHandSolvedCases:
    def test_symmetric_two_point_max_margin(self):
        pred = solve_primal(two_point_dataset(), MarginProblem.max_margin(2, math.inf))
        np.testing.assert_allclose(pred.W[:, 0], [0.5, 0.0], atol=1e-8)
        np.testing.assert_allclose(pred.W[:, 1], [-0.5, 0.0], atol=1e-8)
        assert np.all(pred.b == 0.0)

    def test_margin_scaling_doubles_weights(self):
        base = solve_primal(two_point_dataset(), MarginProblem.max_margin(2, math.inf))
        doubled = solve_primal(
            two_point_dataset(), MarginProblem.margin_adjust((2.0, 2.0), math.inf)
        )
        np.testing.assert_allclose(doubled.W, 2.0 * base.W, atol=1e-7)

    def test_kkt_certificate_is_tight(self):
        pred = solve_primal(two_point_dataset(), MarginProblem.max_margin(2, math.inf))
        assert pred.meta["kkt_max_residual"] <= 1e-8


class TestKernelPrimalAgreement:
    def test_linear_kernel_matches_primal_scores(self, balanced_instance):
        ds = sample_train(balanced_instance)
        problem = MarginProblem.margin_adjust((1.5, 1.0, 0.7), 2.0)
        primal = solve_primal(ds, problem)
        kernel = solve_kernel(ds.X @ ds.X.T, ds.y, problem)
        s1 = decision_scores(primal, ds.X)
        s2 = ds.X @ ds.X.T @ kernel.beta + kernel.bias[None, :]
        assert np.abs(s1 - s2).max() < 1e-6

    def test_resolve_after_permutation_gives_same_weights(self, balanced_instance):
        ds = sample_train(balanced_instance)
        problem = MarginProblem.max_margin(3, 5.0)
        a = solve_primal(ds, problem)
        rng = np.random.default_rng(0)
        perm = rng.permutation(ds.n)
        b = solve_primal(Dataset(ds.X[perm], ds.y[perm], c=3), problem)
        assert np.abs(a.W - b.W).max() < 1e-6
        assert np.abs(a.b - b.b).max() < 1e-6


class TestAgainstExpectedKernelApproximation:
    def test_beta_block_means_near_alpha(self):
        inst = make_instance(4, 10_000, (5, 50, 100, 200), (0.5,) * 4, seed=0)
        ds = sample_train(inst)
        pred = solve_primal(ds, MarginProblem.max_margin(4, math.inf))
        alpha = mm_coefficients(inst, math.inf).alpha
        agg = np.stack([pred.beta[ds.y == k].mean(axis=0) for k in range(4)], axis=1)
        assert np.linalg.norm(agg - alpha) / np.linalg.norm(alpha) < 0.10

    def test_beta_block_means_converge_with_dimension(self):
        errs = []
        for d in (10_000, 100_000):
            inst = make_instance(4, d, (5, 50, 100, 200), (0.5,) * 4, seed=0)
            ds = sample_train(inst)
            pred = solve_primal(ds, MarginProblem.max_margin(4, math.inf))
            alpha = mm_coefficients(inst, math.inf).alpha
            agg = np.stack([pred.beta[ds.y == k].mean(axis=0) for k in range(4)], axis=1)
            errs.append(np.linalg.norm(agg - alpha) / np.linalg.norm(alpha))
        assert errs[1] < errs[0]


class TestBiasModes:
    def test_rho_zero_bias_sums_to_zero(self, balanced_instance):
        ds = sample_train(balanced_instance)
        pred = solve_primal(ds, MarginProblem.max_margin(3, 0.0))
        assert abs(pred.b.sum()) < 1e-8 * max(1.0, np.abs(pred.b).max())

    def test_rho_inf_means_zero_bias(self, balanced_instance):
        ds = sample_train(balanced_instance)
        pred = solve_primal(ds, MarginProblem.max_margin(3, math.inf))
        assert np.all(pred.b == 0.0)

    def test_mm_requires_unit_margins(self):
        with pytest.raises(ValueError):
            MarginProblem(kind="mm", delta=(2.0, 1.0), rho=1.0)

    def test_rejects_negative_rho_and_delta(self):
        with pytest.raises(ValueError):
            MarginProblem.margin_adjust((1.0, -1.0), 1.0)
        with pytest.raises(ValueError):
            MarginProblem.max_margin(2, -0.5)


class TestTrainingError:
    def test_zero_for_feasible_max_margin(self, balanced_instance):
        ds = sample_train(balanced_instance)
        pred = solve_primal(ds, MarginProblem.max_margin(3, 1.0))
        assert training_error(pred, ds) == 0.0

    def test_cdt_can_misclassify_training_points(self):
        # planar three-class set, separable (max margin fits it exactly),
        # where extreme temperatures leave training error behind
        mus = np.array([[3.0, 0.0], [0.0, 3.0], [3.0, 3.0]])
        sizes = [40, 30, 4]
        rng = np.random.default_rng(0)
        pts, labs = [], []
        for k, m in enumerate(mus):
            Q = rng.standard_normal((2, 2)) * 0.5
            pts.append(m + rng.standard_normal((sizes[k], 2)) @ Q.T)
            labs.append(np.full(sizes[k], k))
        ds = Dataset(np.vstack(pts), np.concatenate(labs), c=3)
        mm = solve_primal(ds, MarginProblem.max_margin(3, math.inf))
        assert training_error(mm, ds) == 0.0
        delta = np.asarray(sizes, dtype=float) ** (-1.5)
        cdt = solve_primal(ds, MarginProblem.class_temperature(delta))
        assert training_error(cdt, ds) > 0.0
        assert cdt.meta["kkt_max_residual"] <= 1e-8  # feasible, just not fitting

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), c=2)


class TestBinaryCdtEqualsMm:
    def test_directions_match_for_any_delta(self):
        inst = make_instance(2, 50, (10, 15), (1.2, 0.8), seed=2)
        ds = sample_train(inst)
        mm = solve_primal(ds, MarginProblem.max_margin(2, math.inf))
        for delta in ((1.0, 1.0), (4.0, 0.2), (0.05, 3.0)):
            cdt = solve_primal(ds, MarginProblem.class_temperature(delta))
            for y in range(2):
                a, b = cdt.W[:, y], mm.W[:, y]
                cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
                assert cos >= 1 - 1e-6


class TestInfeasibility:
    def test_conflicting_duplicates_reported(self):
        X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        ds = Dataset(X, np.array([0, 1, 2]), c=3)
        with pytest.raises(InfeasibleProblemError) as exc:
            solve_kernel(ds.X @ ds.X.T, ds.y, MarginProblem.max_margin(3, math.inf))
        assert len(exc.value.violations) > 0


class TestPredictAndSerialization:
    def test_argmax_ties_go_to_smallest_index(self):
        pred = Predictor(W=np.zeros((2, 3)), b=np.zeros(3))
        labels = predict(pred, np.array([[1.0, 2.0]]))
        assert labels[0] == 0

    def test_json_round_trip(self, tmp_path, balanced_instance):
        ds = sample_train(balanced_instance)
        pred = solve_primal(ds, MarginProblem.max_margin(3, math.inf))
        path = tmp_path / "predictor.json"
        save_predictor_json(pred, path)
        back = load_predictor_json(path)
        np.testing.assert_array_equal(back.W, pred.W)
        np.testing.assert_array_equal(back.b, pred.b)
        assert back.meta["rho"] == math.inf

    def test_direction_cosine_bias_scaling(self):
        p1 = Predictor(W=np.array([[1.0], [0.0]]), b=np.array([1.0]))
        p2 = Predictor(W=np.array([[1.0], [0.0]]), b=np.array([-1.0]))
        assert direction_cosine(p1, p2, rho=math.inf) == pytest.approx(1.0)
        assert direction_cosine(p1, p2, rho=1.0) == pytest.approx(0.0, abs=1e-12)
