import numpy as np
import pytest

from generate import em_step, sample_backward, generate_samples, affine_em_law, exact_em_law, gaussian_gain_offset
from model_denoiser import PerTimeAffine
from denoisers import GaussianShift, exact_denoiser
from data_types import TimeGrid
from utils import rng_stream
from constants import Purpose
from errors import DomainError
from test_utils import assert_arrays_close, reference_spectrum, reference_data

def test_em_step_without_noise():
    # Stationary data: the exact score vanishes and only the -y/2 drift remains
    spec = reference_spectrum(1)
    grid = TimeGrid(2.0, 10)
    denoiser = exact_denoiser(GaussianShift(np.zeros(4), spec.c), spec)
    y = np.array([[1.0, -2.0, 0.5, 3.0]])
    assert_arrays_close(em_step(y, 3, grid, spec, denoiser, noise=np.zeros_like(y)), (1 - grid.h / 2) * y)

def test_em_step_domain():
    spec = reference_spectrum(0)
    grid = TimeGrid(1.0, 4)
    denoiser = exact_denoiser(reference_data(spec), spec)
    with pytest.raises(DomainError):
        em_step(np.zeros(1), 0, grid, spec, denoiser, noise=np.zeros(1))
    with pytest.raises(DomainError):
        em_step(np.zeros(1), 5, grid, spec, denoiser, noise=np.zeros(1))
    with pytest.raises(DomainError):
        em_step(np.zeros(1), 1, grid, spec, denoiser)

def test_sample_backward_shapes():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 5)
    denoiser = exact_denoiser(reference_data(spec), spec)
    assert sample_backward(spec, grid, denoiser, rng_stream(0, Purpose.GENERATE)).shape == (4,)
    final, path = sample_backward(spec, grid, denoiser, rng_stream(0, Purpose.GENERATE), 3, return_path=True)
    assert final.shape == (3, 4)
    assert path.shape == (6, 3, 4)
    assert np.array_equal(path[-1], final)

def test_generation_independent_of_chunking():
    spec = reference_spectrum(1)
    grid = TimeGrid(1.0, 6)
    denoiser = exact_denoiser(reference_data(spec), spec)
    chunked, _ = generate_samples(spec, grid, denoiser, 9, 7, chunk_size=3)
    whole, paths = generate_samples(spec, grid, denoiser, 9, 7, return_path=True)
    fewer, _ = generate_samples(spec, grid, denoiser, 9, 4)
    assert_arrays_close(chunked, whole, 1e-12)
    assert_arrays_close(fewer, whole[:4], 1e-12)
    assert paths.shape == (7, 7, 4)
    assert_arrays_close(paths[:, -1], whole, 1e-12)
    other_seed, _ = generate_samples(spec, grid, denoiser, 10, 4)
    assert not np.allclose(other_seed, fewer)

def test_stationary_em_variance():
    # (1 - h/2)^2 var + h C has fixed point C / (1 - h/4)
    spec = reference_spectrum(0)
    grid = TimeGrid(8.0, 160)
    law = exact_em_law(spec, grid, GaussianShift(np.zeros(1), spec.c))
    ratio = (1 - grid.h / 2) ** 2
    fixed_point = 1 / (1 - grid.h / 4)
    expected = fixed_point + (1 - fixed_point) * ratio ** grid.M
    assert law["mean"][0] == 0.0
    assert law["var"][0] == pytest.approx(expected, rel=1e-12)

def test_exact_em_law_mean():
    # Closed form of the mean recursion for s = C: h e^{-h/2} (1 - q^M) / (1 - q) with q = (1 - h/2) e^{-h/2}
    spec = reference_spectrum(0)
    grid = TimeGrid(8.0, 160)
    h = grid.h
    q = (1 - h / 2) * np.exp(-h / 2)
    laws = exact_em_law(spec, grid, reference_data(spec), return_path=True)
    assert len(laws) == grid.M + 1
    assert laws[0]["mean"][0] == 0.0
    assert laws[-1]["mean"][0] == pytest.approx(h * np.exp(-h / 2) * (1 - q ** grid.M) / (1 - q), rel=1e-10)

def test_exact_em_law_band_limit():
    with pytest.raises(DomainError):
        exact_em_law(reference_spectrum(1), TimeGrid(1.0, 2), reference_data(reference_spectrum(0)))

def test_generated_samples_follow_em_law():
    spec = reference_spectrum(1)
    grid = TimeGrid(2.0, 20)
    data = GaussianShift(np.array([1.0, 0.3, 0.0, -0.2]), np.array([0.5, 0.05]))
    num_samples = 4000
    samples, _ = generate_samples(spec, grid, exact_denoiser(data, spec), 0, num_samples)
    law = exact_em_law(spec, grid, data)
    mean_z = np.abs(samples.mean(axis=0) - law["mean"]) / np.sqrt(law["var"] / num_samples)
    var_z = np.abs(samples.var(axis=0, ddof=1) - law["var"]) / (law["var"] * np.sqrt(2 / (num_samples - 1)))
    assert np.all(mean_z <= 5)
    assert np.all(var_z <= 5)

def test_affine_law_of_initial_affine_model():
    # A fresh per-time affine model is the exact denoiser of the prior itself
    spec = reference_spectrum(2)
    grid = TimeGrid(4.0, 40)
    model = PerTimeAffine(spec, grid)
    learned = affine_em_law(spec, grid, model.affine_coefficients)
    exact = affine_em_law(spec, grid, gaussian_gain_offset(GaussianShift(np.zeros(9), spec.c), spec))
    assert_arrays_close(learned["mean"], exact["mean"], 1e-12)
    assert_arrays_close(learned["var"], exact["var"], 1e-12)
