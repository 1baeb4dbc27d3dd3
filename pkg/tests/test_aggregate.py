"""Tests for vassar_dawid_skene.aggregate module."""

import itertools

import numpy as np
import pytest

from vassar_dawid_skene.aggregate import (
    AggregationOutcome,
    EstimatedPool,
    PosteriorMatrix,
    Rule,
    aggregate_labels,
    em_e_step,
    em_m_step,
    em_run,
    log_likelihoods,
    majority_vote,
    one_coin_estimate,
    oracle_mle,
    plugin_log_deviation,
    plugin_mle,
    smooth_confusion,
)
from vassar_dawid_skene.exceptions import (
    DegenerateEstimateError,
    ExponentDomainError,
    ValidationError,
)
from vassar_dawid_skene.harness import OneCoinSpec
from vassar_dawid_skene.model import (
    GroundTruth,
    LabelMatrix,
    OneCoinPool,
    WorkerPool,
    generate_labels,
    misclassification_rate,
    sample_truth,
)


def all_columns(m, k):
    """Every possible label column for m workers, as an m x k**m matrix."""
    columns = np.array(list(itertools.product(range(1, k + 1), repeat=m))).T
    return LabelMatrix(columns, k)


@pytest.fixture(scope="module")
def crowd():
    """Twenty one-coin workers with accuracies in [0.65, 0.9], 30% of items labelled 2."""
    pool = OneCoinSpec(p_range=(0.65, 0.9), seed=3).take(20)
    truth = sample_truth(2, 10000, seed=17, class_prior=[0.7, 0.3])
    labels = generate_labels(pool, truth, seed=18)
    return pool, truth, labels


class TestRule:
    """Tests for Rule parsing."""

    def test_parse(self):
        """Test names map to rules."""
        assert Rule.parse("onecoin-plugin") is Rule.ONECOIN_PLUGIN
        assert Rule.parse(Rule.EM) is Rule.EM

    def test_unknown(self):
        """Test unknown names list the valid choices."""
        with pytest.raises(ValidationError, match="mv, oracle"):
            Rule.parse("median")


class TestPosteriorMatrix:
    """Tests for PosteriorMatrix."""

    def test_rows_must_sum_to_one(self):
        """Test unnormalised rows are rejected."""
        with pytest.raises(ValidationError, match="sum to 1"):
            PosteriorMatrix([[0.5, 0.6]])

    def test_from_labels(self):
        """Test soft posteriors put the confidence on the given label."""
        posterior = PosteriorMatrix.from_labels(GroundTruth([2, 1]), 3, confidence=0.8)
        assert np.allclose(posterior.probs, [[0.1, 0.8, 0.1], [0.8, 0.1, 0.1]])
        assert posterior.hard_labels().y.tolist() == [2, 1]

    def test_uniform(self):
        """Test the uniform posterior."""
        assert np.allclose(PosteriorMatrix.uniform(4, 2).probs, 0.5)


class TestMajorityVote:
    """Tests for majority_vote."""

    def test_plurality(self):
        """Test column (2, 2, 1) votes 2."""
        assert majority_vote(LabelMatrix([[2], [2], [1]], 2)).y.tolist() == [2]

    def test_tie_to_smallest(self):
        """Test a tie goes to the smallest label."""
        assert majority_vote(LabelMatrix([[1], [2]], 2)).y.tolist() == [1]
        assert majority_vote(LabelMatrix([[3], [2]], 3)).y.tolist() == [2]

    def test_missing_cast_no_vote(self):
        """Test missing entries are ignored."""
        labels = LabelMatrix([[0, 2], [2, 0], [0, 1]], 2)
        assert majority_vote(labels).y.tolist() == [2, 1]

    def test_num_classes(self):
        """Test remapped missing labels never win."""
        labels = LabelMatrix([[3, 3], [3, 1], [2, 3]], 3)
        assert majority_vote(labels, num_classes=2).y.tolist() == [2, 1]


class TestOracleMle:
    """Tests for oracle_mle and plugin_mle."""

    def test_single_dominant_worker(self):
        """Test a diagonal-dominant single worker is copied."""
        pool = WorkerPool.from_array([[[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]]])
        labels = LabelMatrix([[3, 1, 2, 2]], 3)
        assert oracle_mle(labels, pool).y.tolist() == [3, 1, 2, 2]

    def test_uninformative_ties(self):
        """Test identical rows tie and resolve to label 1."""
        pool = WorkerPool.from_array([[[0.3, 0.7], [0.3, 0.7]]] * 3)
        labels = LabelMatrix([[1, 2], [2, 2], [1, 1]], 2)
        assert oracle_mle(labels, pool).y.tolist() == [1, 1]

    def test_brute_force_posterior(self):
        """Test decisions on all 16 columns match an independent posterior argmax."""
        p = np.array([0.9, 0.75, 0.6, 0.55])
        pool = OneCoinPool(p).to_worker_pool()
        columns = all_columns(4, 2)
        decisions = oracle_mle(columns, pool).y
        for j in range(columns.n):
            column = columns.entries[:, j]
            like = [np.prod(np.where(column == g, p, 1 - p)) for g in (1, 2)]
            expected = 1 if like[0] >= like[1] else 2
            assert decisions[j] == expected

    def test_zero_entry(self):
        """Test a zero probability is a domain error."""
        pool = WorkerPool.from_array([np.eye(2)])
        with pytest.raises(ExponentDomainError):
            oracle_mle(LabelMatrix([[1]], 2), pool)

    def test_shape_mismatch(self, ternary_pool):
        """Test worker and label counts must agree."""
        with pytest.raises(ValidationError, match="workers"):
            oracle_mle(LabelMatrix([[1], [2], [3]], 3), ternary_pool)

    def test_missing_rejected(self, binary_pool):
        """Test missing labels must be remapped first."""
        with pytest.raises(ValidationError, match="remap_missing"):
            oracle_mle(LabelMatrix([[1], [0], [2]], 2), binary_pool)

    def test_plugin_with_true_pool(self, ternary_pool):
        """Test plugging in the true pool reproduces the oracle."""
        columns = all_columns(2, 3)
        assert np.array_equal(plugin_mle(columns, ternary_pool).y, oracle_mle(columns, ternary_pool).y)

    def test_plugin_row_swap(self):
        """Test swapping two labels' rows permutes the decisions."""
        pool = OneCoinPool([0.9, 0.75, 0.6, 0.55]).to_worker_pool()
        swapped = WorkerPool.from_array(pool.tensor[:, ::-1, :])
        columns = all_columns(4, 2)
        assert np.array_equal(plugin_mle(columns, swapped).y, 3 - oracle_mle(columns, pool).y)

    def test_plugin_margin(self, ternary_pool):
        """Test small log deviations only flip decisions with small likelihood margins."""
        rng = np.random.default_rng(3)
        noisy = ternary_pool.tensor * np.exp(rng.uniform(-0.01, 0.01, ternary_pool.tensor.shape))
        estimate = WorkerPool.from_array(noisy / noisy.sum(axis=2, keepdims=True))
        delta = plugin_log_deviation(estimate, ternary_pool)
        columns = all_columns(2, 3)
        ll = log_likelihoods(columns, ternary_pool)
        oracle = oracle_mle(columns, ternary_pool).y
        plugin = plugin_mle(columns, estimate).y
        for j in np.flatnonzero(oracle != plugin):
            margin = ll[j, oracle[j] - 1] - ll[j, plugin[j] - 1]
            assert margin <= 2 * delta

    def test_log_likelihood_values(self, binary_pool):
        """Test per-item log-likelihoods."""
        ll = log_likelihoods(LabelMatrix([[1], [1], [2]], 2), binary_pool)
        assert ll[0, 0] == pytest.approx(np.log(0.8 * 0.7 * 0.4))
        assert ll[0, 1] == pytest.approx(np.log(0.2 * 0.3 * 0.6))


class TestSmoothConfusion:
    """Tests for smooth_confusion."""

    def test_zero_counts(self):
        """Test zero counts give uniform rows."""
        pool = smooth_confusion(np.zeros((2, 3, 3)), 1.0)
        assert np.allclose(pool.tensor, 1.0 / 3.0)
        assert isinstance(pool, EstimatedPool)

    def test_arithmetic(self):
        """Test counts (8, 0) with smoothing 0.5."""
        pool = smooth_confusion(np.array([[[8.0, 0.0], [0.0, 8.0]]]), 0.5)
        assert pool.tensor[0, 0].tolist() == pytest.approx([8.5 / 9.0, 0.5 / 9.0])

    def test_small_smoothing(self):
        """Test tiny smoothing recovers the empirical frequencies."""
        pool = smooth_confusion(np.array([[[3.0, 1.0], [2.0, 2.0]]]), 1e-9)
        assert pool.tensor[0].tolist() == [pytest.approx([0.75, 0.25]), pytest.approx([0.5, 0.5])]

    def test_positive_smoothing_required(self):
        """Test smoothing must be positive."""
        with pytest.raises(ValidationError, match="positive"):
            smooth_confusion(np.zeros((1, 2, 2)), 0.0)

    def test_estimated_pool_positive(self):
        """Test an estimated pool rejects zero entries."""
        with pytest.raises(ValidationError, match="strictly positive"):
            EstimatedPool.from_array([np.eye(2)])


class TestEmSteps:
    """Tests for em_m_step and em_e_step."""

    def test_m_step_noiseless(self):
        """Test hard truth on noiseless labels concentrates on the diagonal."""
        truth = GroundTruth([1, 1, 2, 1, 2])
        labels = LabelMatrix([truth.y], 2)
        estimate = em_m_step(labels, PosteriorMatrix.from_labels(truth, 2), smoothing=0.5)
        assert estimate.tensor[0, 0, 0] == pytest.approx(3.5 / 4.0)
        assert estimate.tensor[0, 1, 1] == pytest.approx(2.5 / 3.0)

    def test_m_step_uniform_posterior(self):
        """Test a uniform posterior gives identical rows equal to the label marginal."""
        labels = LabelMatrix([[1, 1, 1, 2], [2, 2, 1, 2]], 2)
        estimate = em_m_step(labels, PosteriorMatrix.uniform(4, 2), smoothing=0.5)
        for i in range(2):
            assert np.allclose(estimate.tensor[i, 0], estimate.tensor[i, 1])
        assert estimate.tensor[0, 0, 0] == pytest.approx((1.5 + 0.5) / (2.0 + 1.0))

    def test_m_step_concentration(self, ternary_pool):
        """Test hard truth on 10**5 simulated items recovers the pool."""
        truth = sample_truth(3, 100000, seed=4)
        labels = generate_labels(ternary_pool, truth, seed=5)
        estimate = em_m_step(labels, PosteriorMatrix.from_labels(truth, 3), smoothing=0.5)
        n_g = np.bincount(truth.y, minlength=4)[1:]
        bound = 4 * np.sqrt(ternary_pool.tensor * (1 - ternary_pool.tensor) / n_g[None, :, None])
        assert np.all(np.abs(estimate.tensor - ternary_pool.tensor) <= bound)

    def test_m_step_shape(self, binary_pool):
        """Test the posterior must match the labels."""
        with pytest.raises(ValidationError, match="does not match"):
            em_m_step(LabelMatrix([[1, 2]], 2), PosteriorMatrix.uniform(3, 2))

    def test_e_step_uninformative(self):
        """Test a worker with uniform rows leaves the prior unchanged."""
        estimate = WorkerPool.from_array([[[0.5, 0.5], [0.5, 0.5]]])
        posterior = em_e_step(LabelMatrix([[1, 2, 2]], 2), estimate, prior=[0.3, 0.7])
        assert np.allclose(posterior.probs, [[0.3, 0.7]] * 3)

    def test_e_step_matches_oracle(self, ternary_pool):
        """Test the posterior argmax under the true pool is the oracle decision."""
        columns = all_columns(2, 3)
        posterior = em_e_step(columns, ternary_pool)
        assert np.array_equal(posterior.hard_labels().y, oracle_mle(columns, ternary_pool).y)

    def test_e_step_unanimous(self):
        """Test three p = 0.9 workers agreeing on label 1."""
        pool = OneCoinPool([0.9, 0.9, 0.9]).to_worker_pool()
        posterior = em_e_step(LabelMatrix([[1], [1], [1]], 2), pool)
        assert posterior.probs[0, 0] == pytest.approx(0.729 / (0.729 + 0.001))

    def test_e_step_zero_prior(self):
        """Test a zero prior entry excludes that class."""
        pool = WorkerPool.from_array([[[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.1, 0.1, 0.8]]])
        posterior = em_e_step(LabelMatrix([[3, 3]], 3), pool, prior=[0.5, 0.5, 0.0])
        assert np.all(posterior.probs[:, 2] == 0.0)


class TestEmRun:
    """Tests for em_run."""

    def test_fixed_point(self):
        """Test a truth start on noiseless data stays at the truth."""
        truth = GroundTruth([1, 2, 2, 1, 2, 1])
        labels = LabelMatrix([truth.y], 2)
        result = em_run(labels, init=PosteriorMatrix.from_labels(truth, 2), max_iters=2)
        assert result.iters <= 2
        assert np.array_equal(result.labels.y, truth.y)

    def test_monotone_and_beats_majority(self, crowd):
        """Test the objective never decreases and EM is no worse than voting."""
        _, truth, labels = crowd
        result = em_run(labels)
        trace = np.array(result.log_likelihoods)
        assert np.all(np.diff(trace) / labels.n >= -1e-9)
        assert result.iters == len(trace)
        em_error = misclassification_rate(result.labels, truth)
        mv_error = misclassification_rate(majority_vote(labels), truth)
        assert em_error <= mv_error

    def test_label_permutation(self):
        """Test permuting the start permutes the output."""
        pool = OneCoinPool([0.85, 0.7, 0.75, 0.65, 0.8]).to_worker_pool()
        truth = sample_truth(2, 400, seed=1)
        labels = generate_labels(pool, truth, seed=2)
        start = PosteriorMatrix.from_labels(majority_vote(labels), 2, confidence=0.9)
        flipped_labels = LabelMatrix(3 - labels.entries, 2)
        flipped_start = PosteriorMatrix(start.probs[:, ::-1])
        a = em_run(labels, init=start, max_iters=20, tol=0.0)
        b = em_run(flipped_labels, init=flipped_start, max_iters=20, tol=0.0)
        assert np.array_equal(b.labels.y, 3 - a.labels.y)

    def test_onecoin_start(self, crowd):
        """Test the one-coin start reaches the voting start's answer."""
        _, truth, labels = crowd
        default = em_run(labels)
        onecoin = em_run(labels, init="onecoin")
        assert misclassification_rate(onecoin.labels, truth) == pytest.approx(
            misclassification_rate(default.labels, truth), abs=2e-3)

    def test_unknown_start(self, binary_pool):
        """Test unknown string starts are rejected."""
        with pytest.raises(ValidationError, match="initialisation"):
            em_run(LabelMatrix([[1], [2], [1]], 2), init="random")


class TestOneCoinEstimate:
    """Tests for one_coin_estimate."""

    def test_perfect_agreement(self):
        """Test workers agreeing with the vote clamp to 1 - 1/(2n)."""
        labels = LabelMatrix([[2, 2, 2, 1]] * 3, 2)
        fit = one_coin_estimate(labels)
        assert fit.gamma_hat == 0.75
        assert np.allclose(fit.p_hat, 1.0 - 1.0 / 8.0)

    def test_perfect_disagreement(self):
        """Test a worker contradicting the vote clamps to 1/(2n)."""
        labels = LabelMatrix([[2, 2, 2, 1], [2, 2, 2, 1], [1, 1, 1, 2]], 2)
        fit = one_coin_estimate(labels)
        assert fit.p_hat[2] == pytest.approx(1.0 / 8.0)
        assert fit.p_hat[0] == pytest.approx(7.0 / 8.0)

    def test_degenerate(self):
        """Test balanced classes are rejected."""
        labels = LabelMatrix([[1, 2, 1, 2]] * 3, 2)
        with pytest.raises(DegenerateEstimateError, match="balanced"):
            one_coin_estimate(labels)

    def test_binary_only(self, ternary_pool):
        """Test k != 2 is rejected."""
        with pytest.raises(ValidationError, match="k = 2"):
            one_coin_estimate(LabelMatrix([[1, 3]], 3))

    def test_accuracy_recovery(self):
        """Test 20 workers with p = 0.75 are recovered within 0.05."""
        pool = OneCoinPool([0.75] * 20).to_worker_pool()
        truth = sample_truth(2, 10000, seed=21, class_prior=[0.7, 0.3])
        labels = generate_labels(pool, truth, seed=22)
        fit = one_coin_estimate(labels)
        assert np.max(np.abs(fit.p_hat - 0.75)) <= 0.05
        assert fit.signal_strength == pytest.approx(0.25, abs=0.03)

    def test_plugin_matches_oracle(self, crowd):
        """Test the one-coin plug-in is within two standard errors of the oracle."""
        pool, truth, labels = crowd
        fit = one_coin_estimate(labels)
        assert np.max(np.abs(fit.p_hat - pool.to_one_coin().p)) <= 0.05
        oracle_error = misclassification_rate(oracle_mle(labels, pool), truth)
        plugin_error = misclassification_rate(plugin_mle(labels, fit.to_pool()), truth)
        std_error = np.sqrt(oracle_error * (1 - oracle_error) / truth.n)
        assert abs(plugin_error - oracle_error) <= 2 * std_error


class TestPluginLogDeviation:
    """Tests for plugin_log_deviation."""

    def test_identical(self, ternary_pool):
        """Test identical pools have zero deviation."""
        assert plugin_log_deviation(ternary_pool, ternary_pool) == 0.0

    def test_one_coin(self):
        """Test the statistic sums per-worker maxima."""
        true = OneCoinPool([0.8, 0.8]).to_worker_pool()
        estimate = OneCoinPool([0.9, 0.8]).to_worker_pool()
        expected = max(abs(np.log(0.9 / 0.8)), abs(np.log(0.1 / 0.2)))
        assert plugin_log_deviation(estimate, true) == pytest.approx(expected)


class TestAggregateLabels:
    """Tests for aggregate_labels."""

    def test_mv(self):
        """Test the mv rule."""
        outcome = aggregate_labels("mv", LabelMatrix([[2], [2], [1]], 2))
        assert isinstance(outcome, AggregationOutcome)
        assert outcome.labels.y.tolist() == [2]
        assert outcome.iters is None

    def test_oracle_needs_pool(self):
        """Test the oracle rule without a pool."""
        with pytest.raises(ValidationError, match="true worker pool"):
            aggregate_labels("oracle", LabelMatrix([[1]], 2))

    def test_plugin_without_estimate(self, crowd):
        """Test the default plug-in estimate comes from the voting labels."""
        _, truth, labels = crowd
        outcome = aggregate_labels(Rule.PLUGIN, labels)
        assert outcome.estimate is not None
        assert misclassification_rate(outcome.labels, truth) <= misclassification_rate(
            majority_vote(labels), truth)

    def test_em_reports_iterations(self, crowd):
        """Test the em rule reports its iteration count."""
        _, _, labels = crowd
        outcome = aggregate_labels("em", labels)
        assert outcome.iters >= 1

    def test_onecoin_reports_gamma(self, crowd):
        """Test the one-coin rule reports gamma_hat near 0.3."""
        _, _, labels = crowd
        outcome = aggregate_labels("onecoin-plugin", labels)
        assert outcome.gamma_hat == pytest.approx(0.3, abs=0.03)
        assert outcome.signal_strength > 0.0
