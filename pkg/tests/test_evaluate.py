import numpy as np
import pytest
import torch

from evaluate import (
    TEST_FUNCTIONS, kl_diag_gaussian, kl_contraction_check, theorem4_bound, verify_theorem4, format_bound_report, score_identity_check,
    mehler_check, commutation_check, score_energy_check, l2_optimality_check, estimate_power_spectrum, orthonormality_check,
    eigenrelation_check, trace_report, loss_ratio_check, time_reversal_check, run_verification
)
from matern import sample_prior
from model_denoiser import PerTimeAffine
from denoisers import GaussianShift, GaussianMixture, Empirical, exact_denoiser
from generate import gaussian_gain_offset
from training import new_model, train
from data_types import MaternParams, TimeGrid
from utils import RunOptions, TrainConfig, rng_stream
from constants import CheckStatus, Purpose, KL_CONTRACTION_TIMES
from errors import DomainError
from test_utils import reference_spectrum, reference_data

def test_kl_diag_gaussian():
    assert kl_diag_gaussian(np.zeros(2), np.ones(2), np.zeros(2), np.ones(2)) == 0.0
    assert kl_diag_gaussian(np.array([1.0]), np.array([1.0]), np.array([0.0]), np.array([1.0])) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        kl_diag_gaussian(np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1))

def test_theorem4_terms():
    report = theorem4_bound(8.0, 0.0, 0.05, 0.5, 0.25)
    assert report["term1"] == pytest.approx(0.5 * np.exp(-4))
    assert report["term2"] == 0.0
    assert report["term3"] == pytest.approx(0.1)
    assert report["bound"] == pytest.approx(0.1091578, abs=1e-7)
    # max(4, h) switches to h for large steps
    assert theorem4_bound(8.0, 0.0, 5.0, 0.0, 1.0)["term3"] == pytest.approx(50.0)
    with pytest.raises(DomainError):
        theorem4_bound(8.0, -1.0, 0.05, 0.5, 0.25)

def test_reference_bound_holds():
    spec = reference_spectrum(0)
    report = verify_theorem4(reference_data(spec), spec, TimeGrid(8.0, 160))
    assert report["bound"] == pytest.approx(0.1091578, abs=1e-7)
    assert report["measured_kind"] == "exact"
    assert 0 < report["measured_kl"] < report["bound"]
    assert report["passed"]
    text = format_bound_report(report)
    assert "bound" in text and text.strip().endswith("PASS")

def test_measured_kl_shrinks_with_step():
    spec = reference_spectrum(0)
    coarse = verify_theorem4(reference_data(spec), spec, TimeGrid(8.0, 40))
    fine = verify_theorem4(reference_data(spec), spec, TimeGrid(8.0, 320))
    assert fine["measured_kl"] < coarse["measured_kl"]

def test_bound_with_learned_affine_model():
    spec = reference_spectrum(0)
    grid = TimeGrid(8.0, 160)
    data = reference_data(spec)
    model = PerTimeAffine(spec, grid)
    report = verify_theorem4(data, spec, grid, use_exact_score=False, learned=model, n_mc=2000)
    assert report["measured_kind"] == "exact"
    assert report["eps_sq"] > 0
    assert report["passed"]

def test_bound_refused():
    spec = reference_spectrum(0)
    with pytest.raises(DomainError):
        verify_theorem4(GaussianShift(np.zeros(1), np.array([0.0])), spec, TimeGrid(8.0, 160))
    with pytest.raises(DomainError):
        verify_theorem4(Empirical(np.ones((2, 1))), spec, TimeGrid(8.0, 160))
    with pytest.raises(DomainError):
        verify_theorem4(reference_data(spec), spec, TimeGrid(8.0, 160), use_exact_score=False)

def test_kl_contraction():
    spec = reference_spectrum(1)
    data = GaussianShift(np.array([1.0, 0.2, 0.0, 0.0]), np.array([0.3, 0.02]))
    for t in (0.1, 1.0, 5.0):
        lhs, rhs, passed = kl_contraction_check(data, spec, t)
        assert passed and lhs <= rhs

def test_kl_contraction_random_models():
    spec = reference_spectrum(3)
    rng = np.random.default_rng(20)
    for _ in range(20):
        data = GaussianShift(rng.normal(0, 0.5, spec.num_coeffs), spec.c * rng.uniform(0.1, 3.0, spec.band_limit + 1))
        for t in KL_CONTRACTION_TIMES:
            lhs, rhs, passed = kl_contraction_check(data, spec, t)
            assert passed and lhs <= rhs

def test_score_identity_check():
    spec = reference_spectrum(2)
    data = GaussianShift(np.linspace(-1, 1, 9), np.array([0.5, 0.1, 0.01]))
    x_grid = sample_prior(spec, rng_stream(0, Purpose.VERIFY), 10)
    assert score_identity_check(data, spec, 0.7, x_grid) < 1e-10
    with pytest.raises(DomainError):
        score_identity_check(data, spec, 0.0, x_grid)

def test_mehler():
    for order in (1, 2, 3):
        _, _, _, passed = mehler_check(1.0, 1.0, order, 0.7, 50000, rng_stream(0, Purpose.VERIFY, order))
        assert passed
    _, _, analytic, _ = mehler_check(4.0, 2.0, 1, 2.0, 10, rng_stream(0, Purpose.VERIFY))
    assert analytic == pytest.approx(np.exp(-1) * 1.0)
    with pytest.raises(DomainError):
        mehler_check(1.0, 1.0, 4, 0.7, 10, rng_stream(0, Purpose.VERIFY))

def test_commutation():
    for func_num, (func, deriv) in enumerate(TEST_FUNCTIONS.values()):
        _, _, _, passed = commutation_check(func, deriv, 1.0, 0.5, 0.8, 50000, rng_stream(0, Purpose.VERIFY, 10 + func_num))
        assert passed

def test_score_energy():
    spec = reference_spectrum(1)
    data = GaussianShift(np.array([1.0, 0.0, 0.5, 0.0]), np.array([0.4, 0.05]))
    analytic, _, _, passed = score_energy_check(data, spec, [2.0, 0.5, 1.0], 20000, rng_stream(0, Purpose.VERIFY))
    assert passed
    assert np.all(np.diff(analytic) < 0)

def test_l2_optimality():
    spec = reference_spectrum(1)
    data = GaussianMixture(np.array([0.5, 0.5]), np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]]), spec.c * 0.5)
    results = l2_optimality_check(data, spec, TimeGrid(2.0, 10), 5000, rng_stream(0, Purpose.VERIFY))
    assert set(results) == {"zero", "identity", "stationary"}
    for gap, _, passed in results.values():
        assert passed and gap > 0

def _mixture() -> GaussianMixture:
    return GaussianMixture(np.array([0.5, 0.5]), np.array([[1.5], [-1.5]]), 0.05)

def test_loss_ratio():
    spec = reference_spectrum(1)
    grid = TimeGrid(2.0, 10)
    data = reference_data(spec)
    loss, bayes_loss, ratio, passed = loss_ratio_check(exact_denoiser(data, spec), data, spec, grid, 1000, rng_stream(0, Purpose.VERIFY))
    assert loss == bayes_loss and ratio == 1.0 and passed
    _, _, ratio, passed = loss_ratio_check(lambda t, x: np.zeros_like(x), data, spec, grid, 1000, rng_stream(0, Purpose.VERIFY))
    assert ratio > 1.25 and not passed
    # A single atom is predicted perfectly, so the ratio is undefined
    atom = Empirical(np.array([[1.0, 0.0, 0.5, 0.0]]))
    _, bayes_loss, ratio, passed = loss_ratio_check(lambda t, x: np.zeros_like(x), atom, spec, grid, 100, rng_stream(0, Purpose.VERIFY))
    assert bayes_loss == 0.0 and np.isnan(ratio) and passed is None
    with pytest.raises(DomainError):
        loss_ratio_check(lambda t, x: x, data, spec, grid, 1, rng_stream(0, Purpose.VERIFY))

def test_trained_affine_model_above_bayes_loss():
    # The posterior mean of a two-mode mixture is not affine, so the best affine fit keeps a loss gap
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    data = _mixture()
    cfg = TrainConfig({"n_samples": 2000, "epochs": 100, "batch_size": 4000, "lr": 0.5, "fixed_dataset": True})
    model, _, _ = train(new_model(cfg, spec, grid, 0), data, spec, grid, cfg, 0)
    loss, bayes_loss, ratio, _ = loss_ratio_check(model.as_denoiser(), data, spec, grid, 20000, rng_stream(0, Purpose.VERIFY, 40))
    assert loss > bayes_loss > 0
    assert ratio > 1

def test_time_reversal():
    spec = reference_spectrum(0)
    step_sizes, deviations, passed = time_reversal_check(reference_data(spec), spec, 8.0, [0.025, 0.2, 0.05, 0.1])
    assert passed
    assert step_sizes == pytest.approx([0.2, 0.1, 0.05, 0.025])
    # First order in h: halving the step roughly halves the deviation
    for coarse, fine in zip(deviations, deviations[1:]):
        assert fine < 0.7 * coarse

    spec = reference_spectrum(1)
    data = GaussianShift(np.array([1.0, 0.2, -0.3, 0.0]), np.array([0.5, 0.05]))
    _, deviations, passed = time_reversal_check(data, spec, 4.0, [0.2, 0.1, 0.05])
    assert passed
    assert deviations[-1] < deviations[0]

def test_power_spectrum_estimate():
    spec = reference_spectrum(3)
    samples = sample_prior(spec, rng_stream(0, Purpose.SPECTRUM), 2000)
    c_hat, lower, upper = estimate_power_spectrum(samples, 1 - 0.01 / 4)
    assert c_hat.shape == (4,)
    assert np.all(lower < c_hat) and np.all(c_hat < upper)
    assert np.all((lower <= spec.c) & (spec.c <= upper))
    with pytest.raises(DomainError):
        estimate_power_spectrum(np.zeros((0, 4)))

def test_harmonic_checks():
    gram_err, roundtrip_err = orthonormality_check(16)
    assert gram_err < 1e-10 and roundtrip_err < 1e-10
    assert eigenrelation_check(3) < 1e-2

def test_trace_report():
    report = trace_report(MaternParams(1.0, 1.0))
    assert report["converged"]
    assert report["reference"] == pytest.approx(1.0)
    assert report["ell0_term"] == pytest.approx(1.0)
    assert report["reference_exceeded"]

def _options(tmp_path, **overrides) -> RunOptions:
    options = RunOptions({
        "band_limit": 0,
        "time": {"T": 8.0, "M": 160},
        "verify": {"n_mc": 20000, "n_fit_samples": 2000},
        "out_dir": str(tmp_path),
    })
    options.update(overrides)
    return options

def _statuses(report: dict):
    return {check["name"]: check["status"] for check in report["checks"]}

def test_reference_verification(tmp_path):
    spec = reference_spectrum(0)
    report = run_verification(_options(tmp_path), reference_data(spec), spec, MaternParams(1.0, 1.0))
    statuses = _statuses(report)
    assert report["passed"], report["failed"]
    assert statuses["theorem4"] == CheckStatus.PASS.value
    assert statuses["time_reversal"] == CheckStatus.PASS.value
    assert statuses["generation"] == CheckStatus.PASS.value
    assert report["bound"]["bound"] == pytest.approx(0.1091578, abs=1e-7)
    assert len(report["bound_sweep"]) == 4

def test_verification_with_corrupted_score(tmp_path):
    spec = reference_spectrum(0)
    report = run_verification(_options(tmp_path, score_offset=0.3, n_fit_samples=500), reference_data(spec), spec, MaternParams(1.0, 1.0))
    check = next(check for check in report["checks"] if check["name"] == "corrupted_score")
    assert check["status"] == CheckStatus.PASS.value
    assert check["values"]["eps_sq"] == pytest.approx(0.09)
    assert check["values"]["bound_report"]["term2"] == pytest.approx(8.0 * 0.09)

def test_verification_empirical_data(tmp_path):
    spec = reference_spectrum(1)
    atoms = np.array([[1.0, 0.0, 0.5, 0.0], [-1.0, 0.2, 0.0, 0.0]])
    report = run_verification(_options(tmp_path, band_limit=1, n_fit_samples=1000), Empirical(atoms), spec, MaternParams(1.0, 1.0))
    statuses = _statuses(report)
    assert report["bound"] is None
    assert statuses["theorem4"] == CheckStatus.UNDEFINED.value
    assert statuses["kl_contraction"] == CheckStatus.UNDEFINED.value
    assert statuses["l2_optimality"] == CheckStatus.PASS.value
    assert "generation" not in statuses

def test_verification_mixture_data(tmp_path):
    spec = reference_spectrum(0)
    report = run_verification(_options(tmp_path), _mixture(), spec, MaternParams(1.0, 1.0))
    statuses = _statuses(report)
    assert report["passed"], report["failed"]
    kl_check = next(check for check in report["checks"] if check["name"] == "kl_contraction")
    assert kl_check["status"] == CheckStatus.UNDEFINED.value
    assert kl_check["values"]["kl0"] > 0 and kl_check["values"]["fisher"] > 0
    assert statuses["theorem4"] == CheckStatus.UNDEFINED.value
    assert statuses["time_reversal"] == CheckStatus.UNDEFINED.value
    assert statuses["generation"] == CheckStatus.PASS.value
    assert "h1_error" not in statuses

def _exact_affine_model(data: GaussianShift, spec, grid: TimeGrid) -> PerTimeAffine:
    model = PerTimeAffine(spec, grid)
    gain_offset = gaussian_gain_offset(data, spec)
    with torch.no_grad():
        for idx, t in enumerate(grid.times[1:]):
            gain, offset = gain_offset(t)
            model.gain[idx] = torch.from_numpy(gain)
            model.offset[idx] = torch.from_numpy(offset / np.sqrt(spec.per_coeff()))
    return model

def test_verification_with_learned_model(tmp_path):
    spec = reference_spectrum(0)
    data = reference_data(spec)
    model = _exact_affine_model(data, spec, TimeGrid(8.0, 160))
    report = run_verification(_options(tmp_path), data, spec, MaternParams(1.0, 1.0), model, use_exact_score=False)
    statuses = _statuses(report)
    assert report["passed"], report["failed"]
    for name in ("h1_error", "learned_loss", "theorem4", "generation"):
        assert statuses[name] == CheckStatus.PASS.value
    assert report["bound"]["measured_kind"] == "exact"
    assert report["bound"]["eps_sq"] < 1e-12

def test_verification_fails_broken_model(tmp_path):
    spec = reference_spectrum(0)
    model = PerTimeAffine(spec, TimeGrid(8.0, 160))
    with torch.no_grad():
        model.offset.fill_(25.0)
    report = run_verification(_options(tmp_path), _mixture(), spec, MaternParams(1.0, 1.0), model, use_exact_score=False)
    statuses = _statuses(report)
    assert not report["passed"]
    for name in ("h1_error", "learned_loss", "generation"):
        assert statuses[name] == CheckStatus.FAIL.value
    h1_check = next(check for check in report["checks"] if check["name"] == "h1_error")
    assert h1_check["values"]["eps_sq"] > 600
