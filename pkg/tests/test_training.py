import numpy as np
import torch
import pytest

from training import (
    sample_pairs, loss_weights, pair_losses, empirical_loss, new_model, train, train_score_model, pair_loader, h1_error, save_checkpoint,
    load_checkpoint
)
from denoisers import GaussianShift, Empirical, OffsetDenoiser, exact_denoiser, sample_data
from data_types import TimeGrid
from utils import TrainConfig, rng_stream
from constants import LossNorm, Purpose
from errors import ConfigError, DomainError, TrainingDivergence
from test_utils import assert_arrays_close, reference_spectrum, reference_data

def test_sample_pairs_order():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 3)
    x0 = np.arange(8, dtype=float).reshape(2, 4)
    pairs = sample_pairs(x0, spec, grid, rng_stream(0, Purpose.TRAIN_PAIRS))
    assert pairs["t"].shape == (6,)
    assert pairs["xt"].shape == (6, 4)
    assert_arrays_close(pairs["t"], np.tile(grid.times[1:], 2))
    assert_arrays_close(pairs["x0"][:3], np.tile(x0[0], (3, 1)))
    assert_arrays_close(pairs["x0"][3:], np.tile(x0[1], (3, 1)))

def test_loss_weights():
    spec = reference_spectrum(1)
    assert_arrays_close(loss_weights(spec, LossNorm.CM.value), [1, 9, 9, 9])
    assert_arrays_close(loss_weights(spec, LossNorm.H.value), np.ones(4))

def test_exact_denoiser_has_lowest_loss():
    spec = reference_spectrum(1)
    grid = TimeGrid(2.0, 10)
    model = reference_data(spec)
    x0 = sample_data(model, rng_stream(0, Purpose.DATA), 2000)
    pairs = sample_pairs(x0, spec, grid, rng_stream(0, Purpose.TRAIN_PAIRS))
    exact_loss = empirical_loss(exact_denoiser(model, spec), pairs, spec)
    assert exact_loss < empirical_loss(lambda t, x: np.zeros_like(x), pairs, spec)
    assert exact_loss < empirical_loss(lambda t, x: x, pairs, spec)
    assert pair_losses(exact_denoiser(model, spec), pairs, spec, LossNorm.H.value).shape == (20000,)

def test_empirical_loss_needs_pairs():
    spec = reference_spectrum(0)
    pairs = {"t": np.zeros(0), "x0": np.zeros((0, 1)), "xt": np.zeros((0, 1))}
    with pytest.raises(DomainError):
        empirical_loss(lambda t, x: x, pairs, spec)

def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig({"n_samples": 2, "batch_size": 100}).validate(10)
    with pytest.raises(ConfigError):
        TrainConfig({"optim": "adam"}).validate(10)
    with pytest.raises(ConfigError):
        TrainConfig({"lr": 0.0}).validate(10)

def test_affine_training_recovers_posterior_mean():
    # Single mode, two grid times: the per-time affine fit should approach the exact Gaussian posterior mean
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    data = GaussianShift(np.array([0.5]), np.array([0.25]))
    cfg = TrainConfig({"n_samples": 4000, "epochs": 30, "batch_size": 400, "lr": 0.2})
    model, loss_history, _ = train(new_model(cfg, spec, grid, 0), data, spec, grid, cfg, 0)
    assert len(loss_history) == 30
    assert loss_history[-1] < loss_history[0]
    for t in grid.times[1:]:
        noised_var = np.exp(-t) * 0.25 + 1 - np.exp(-t)
        gain, offset = model.affine_coefficients(t)
        assert abs(gain[0] - np.exp(-t / 2) * 0.25 / noised_var) < 0.1
        assert abs(offset[0] - (1 - np.exp(-t)) * 0.5 / noised_var) < 0.1

def test_training_reproducible():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 4)
    data = reference_data(spec)
    cfg = TrainConfig({"n_samples": 50, "epochs": 2, "batch_size": 20, "architecture": "time_mlp", "hidden_size": 8})
    first, first_history, _ = train(new_model(cfg, spec, grid, 11), data, spec, grid, cfg, 11)
    second, second_history, _ = train(new_model(cfg, spec, grid, 11), data, spec, grid, cfg, 11)
    assert first_history == second_history
    x = np.ones((4, 4))
    assert_arrays_close(first.as_denoiser()(grid.times[1:], x), second.as_denoiser()(grid.times[1:], x), 1e-12)

def test_training_divergence():
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    data = GaussianShift(np.array([np.nan]), np.array([1.0]))
    cfg = TrainConfig({"n_samples": 10, "epochs": 1, "batch_size": 5})
    with pytest.raises(TrainingDivergence) as exc_info:
        train(new_model(cfg, spec, grid, 0), data, spec, grid, cfg, 0)
    assert exc_info.value.epoch == 0
    assert exc_info.value.batch == 0
    assert exc_info.value.last_finite_loss is None

def test_h1_error():
    spec = reference_spectrum(1)
    grid = TimeGrid(2.0, 8)
    data = reference_data(spec)
    exact = exact_denoiser(data, spec)
    eps_sq, std_err = h1_error(exact, exact, spec, grid, data, 100, rng_stream(0, Purpose.H1))
    assert eps_sq == 0.0 and std_err == 0.0
    offset = np.zeros(4)
    offset[0] = 0.3
    eps_sq, _ = h1_error(OffsetDenoiser(exact, offset), exact, spec, grid, data, 100, rng_stream(0, Purpose.H1))
    assert eps_sq == pytest.approx(0.09 / spec.c[0])
    with pytest.raises(DomainError):
        h1_error(exact, exact, spec, grid, data, 1, rng_stream(0, Purpose.H1))

def test_checkpoint_roundtrip(tmp_path):
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 3)
    cfg = TrainConfig({"architecture": "time_mlp", "hidden_size": 5, "num_layers": 1})
    model = new_model(cfg, spec, grid, 4)
    path = str(tmp_path / "model.json")
    save_checkpoint(model, path, 7)
    loaded, checkpoint = load_checkpoint(path)
    assert checkpoint["epoch"] == 7
    assert checkpoint["architecture"] == "time_mlp"
    assert loaded.band_limit == 1
    x = np.random.default_rng(0).standard_normal((3, 4))
    assert_arrays_close(loaded.as_denoiser()(grid.times[1:], x), model.as_denoiser()(grid.times[1:], x), 1e-12)

def test_pair_loader_covers_every_pair():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 5)
    x0 = np.arange(12, dtype=float).reshape(3, 4)
    pairs = sample_pairs(x0, spec, grid, rng_stream(0, Purpose.TRAIN_PAIRS))
    first = [batch[0] for batch in pair_loader(pairs, 4, torch.Generator().manual_seed(5))]
    second = [batch[0] for batch in pair_loader(pairs, 4, torch.Generator().manual_seed(5))]
    assert [len(t_batch) for t_batch in first] == [4, 4, 4, 3]
    assert_arrays_close(np.sort(torch.cat(first).numpy()), np.sort(pairs["t"]), 1e-12)
    assert all(torch.equal(t_first, t_second) for t_first, t_second in zip(first, second))

def test_checkpoint_keeps_best_epoch(tmp_path):
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    data = GaussianShift(np.array([0.5]), np.array([0.25]))
    cfg = TrainConfig({"n_samples": 100, "epochs": 5, "batch_size": 50, "lr": 0.2})
    path = str(tmp_path / "model.json")
    model, loss_history, best_epoch = train_score_model(data, spec, grid, cfg, 3, path)
    assert best_epoch == int(np.argmin(loss_history))
    loaded, checkpoint = load_checkpoint(path)
    assert checkpoint["epoch"] == best_epoch
    assert_arrays_close(loaded.as_denoiser()(grid.times[1:], np.ones((2, 1))), model.as_denoiser()(grid.times[1:], np.ones((2, 1))), 1e-12)

def _affine_fit_error(data: GaussianShift, num_samples: int) -> float:
    # Full-batch gradient descent on a fixed pair set converges to the least-squares fit of those pairs
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    cfg = TrainConfig({"n_samples": num_samples, "epochs": 100, "batch_size": 2 * num_samples, "lr": 0.5, "fixed_dataset": True})
    model, _, _ = train(new_model(cfg, spec, grid, 0), data, spec, grid, cfg, 0)
    error = 0.0
    for t in grid.times[1:]:
        noised_var = np.exp(-t) * data.var_scale[0] + 1 - np.exp(-t)
        gain, offset = model.affine_coefficients(t)
        error += (gain[0] - np.exp(-t / 2) * data.var_scale[0] / noised_var) ** 2
        error += (offset[0] - (1 - np.exp(-t)) * data.mean0[0] / noised_var) ** 2
    return error

def test_affine_fit_improves_with_more_samples():
    data = GaussianShift(np.array([0.5]), np.array([0.25]))
    errors = [_affine_fit_error(data, num_samples) for num_samples in (100, 1000, 10000)]
    assert errors[0] > errors[1] > errors[2]

def test_single_atom_training():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 2)
    atom = np.array([0.7, -0.2, 0.1, 0.3])
    cfg = TrainConfig({"n_samples": 200, "epochs": 150, "batch_size": 400, "lr": 0.5, "fixed_dataset": True})
    model, loss_history, _ = train(new_model(cfg, spec, grid, 0), Empirical(atom[None, :]), spec, grid, cfg, 0)
    assert loss_history[-1] < 1e-8
    x = np.random.default_rng(2).uniform(-2, 2, (2, 4))
    assert_arrays_close(model.as_denoiser()(grid.times[1:], x), np.tile(atom, (2, 1)), 1e-3)
