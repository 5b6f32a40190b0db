import warnings
import numpy as np
import pytest
import torch

from model_denoiser import PerTimeAffine, TimeMLP, build_model
from training import batch_loss, loss_weights
from data_types import Spectrum, TimeGrid
from constants import LossNorm
from errors import DomainError
from test_utils import assert_arrays_close, reference_spectrum

def test_affine_starts_stationary():
    spec = reference_spectrum(2)
    grid = TimeGrid(2.0, 4)
    model = PerTimeAffine(spec, grid)
    x = np.random.default_rng(0).standard_normal((4, 9))
    out = model.as_denoiser()(grid.times[1:], x)
    assert_arrays_close(out, np.exp(-grid.times[1:] / 2)[:, None] * x)

def test_time_index():
    model = PerTimeAffine(reference_spectrum(0), TimeGrid(1.0, 4))
    t = torch.tensor([0.01, 0.25, 0.3, 0.5, 0.999, 1.0, 1.7], dtype=torch.float64)
    assert model.time_index(t).tolist() == [0, 0, 0, 1, 2, 3, 3]

def test_dense_affine():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 2)
    dense = PerTimeAffine(spec, grid, diagonal=False)
    diagonal = PerTimeAffine(spec, grid)
    x = np.random.default_rng(1).standard_normal((3, 4))
    assert_arrays_close(dense.as_denoiser()(0.5, x), diagonal.as_denoiser()(0.5, x))
    with pytest.raises(DomainError):
        dense.affine_coefficients(0.5)

def test_affine_coefficients_raw_offset():
    spec = reference_spectrum(1)
    model = PerTimeAffine(spec, TimeGrid(1.0, 2))
    with torch.no_grad():
        model.offset[1] = 1.0
    gain, offset = model.affine_coefficients(1.0)
    assert_arrays_close(gain, np.exp(-0.5) * np.ones(4))
    assert_arrays_close(offset, np.sqrt(spec.per_coeff()))

def test_mlp_shapes():
    spec = reference_spectrum(2)
    model = TimeMLP(spec, TimeGrid(1.0, 5), hidden_size=8, num_layers=1)
    out = model(torch.tensor([0.2, 0.4], dtype=torch.float64), torch.zeros(2, 9, dtype=torch.float64))
    assert out.shape == (2, 9)
    assert out.dtype == torch.float64
    assert model.as_denoiser()(0.3, np.zeros(9)).shape == (9,)
    with pytest.raises(DomainError):
        TimeMLP(spec, TimeGrid(1.0, 5), num_layers=3)

def test_build_model():
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 2)
    assert isinstance(build_model("per_time_affine", spec, grid, {"diagonal": True}), PerTimeAffine)
    mlp = build_model("time_mlp", spec, grid, {"hidden_size": 4, "num_layers": 2})
    assert isinstance(mlp, TimeMLP)
    assert mlp.hyperparameters() == {"hidden_size": 4, "num_layers": 2}
    with pytest.raises(DomainError):
        build_model("unet", spec, grid, {})
    with pytest.raises(DomainError):
        PerTimeAffine(Spectrum(np.array([1.0, 0.0])), grid)

def test_loss_gradient_matches_finite_differences():
    torch.manual_seed(0)
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 4)
    model = TimeMLP(spec, grid, hidden_size=6, num_layers=2)
    rng = np.random.default_rng(3)
    t = torch.tensor(grid.times[1:])
    x0 = torch.tensor(rng.standard_normal((4, 4)))
    xt = torch.tensor(rng.standard_normal((4, 4)))
    weights = torch.tensor(loss_weights(spec, LossNorm.CM.value))

    loss = batch_loss(model, t, x0, xt, weights)
    loss.backward()
    step = 1e-6
    with torch.no_grad():
        for param in model.parameters():
            flat = param.view(-1)
            grad = param.grad.view(-1)
            for idx in range(0, len(flat), max(1, len(flat) // 5)):
                original = float(flat[idx])
                flat[idx] = original + step
                loss_plus = float(batch_loss(model, t, x0, xt, weights))
                flat[idx] = original - step
                loss_minus = float(batch_loss(model, t, x0, xt, weights))
                flat[idx] = original
                finite_diff = (loss_plus - loss_minus) / (2 * step)
                assert abs(finite_diff - float(grad[idx])) <= 1e-6 * max(1.0, abs(finite_diff))

def test_scalar_time_without_warnings():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 2)
    model = PerTimeAffine(spec, grid)
    x = np.broadcast_to(np.ones(4), (3, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = model.as_denoiser()(0.5, x)
    assert_arrays_close(out, np.exp(-0.25) * np.ones((3, 4)))
