import numpy as np
import pytest

from matern import matern_spectrum, spectrum_from_table, sample_prior, sample_prior_field, cm_norm_sq, trace, trace_reference, trace_doubling
from data_types import MaternParams, Spectrum
from utils import rng_stream
from constants import Purpose
from errors import DomainError
from test_utils import assert_arrays_close

def test_matern_spectrum():
    spec = matern_spectrum(MaternParams(1.0, 1.0), 3)
    assert_arrays_close(spec.c, [1, 1 / 9, 1 / 49, 1 / 169])
    assert spec.num_coeffs == 16
    assert_arrays_close(spec.per_coeff()[:4], [1, 1 / 9, 1 / 9, 1 / 9])

def test_matern_params_domain():
    with pytest.raises(DomainError):
        MaternParams(0.0, 1.0)
    with pytest.raises(DomainError):
        MaternParams(1.0, 0.5)
    with pytest.raises(DomainError):
        Spectrum(np.array([1.0, -0.1]))

def test_spectrum_from_table():
    spec = spectrum_from_table(np.array([2, 0, 1]), np.array([0.1, 1.0, 0.5]))
    assert_arrays_close(spec.c, [1.0, 0.5, 0.1])
    with pytest.raises(DomainError):
        spectrum_from_table(np.array([0, 2]), np.array([1.0, 0.1]))

def test_sample_prior_reproducible():
    spec = matern_spectrum(MaternParams(1.0, 1.0), 2)
    first = sample_prior(spec, rng_stream(7, Purpose.PRIOR, 3))
    second = sample_prior(spec, rng_stream(7, Purpose.PRIOR, 3))
    other = sample_prior(spec, rng_stream(7, Purpose.PRIOR, 4))
    assert first.shape == (9,)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)
    assert sample_prior(spec, rng_stream(7, Purpose.PRIOR), 5).shape == (5, 9)
    assert sample_prior_field(spec, rng_stream(7, Purpose.PRIOR)).band_limit == 2

def test_sample_prior_zero_degree():
    spec = Spectrum(np.array([1.0, 0.0]))
    samples = sample_prior(spec, rng_stream(0, Purpose.PRIOR), 10)
    assert np.all(samples[:, 1:] == 0)

def test_cm_norm():
    spec = matern_spectrum(MaternParams(1.0, 1.0), 1)
    assert cm_norm_sq(np.array([0.0, 1.0, 0.0, 0.0]), spec) == pytest.approx(9.0)
    assert_arrays_close(cm_norm_sq(np.ones((2, 4)), spec), [28.0, 28.0])
    with pytest.raises(DomainError):
        cm_norm_sq(np.ones(4), Spectrum(np.array([1.0, 0.0])))
    with pytest.raises(DomainError):
        cm_norm_sq(np.ones(9), spec)

def test_trace():
    params = MaternParams(1.0, 1.0)
    assert trace(matern_spectrum(params, 1)) == pytest.approx(4 / 3)
    assert trace_reference(params) == pytest.approx(1.0)
    doubling = trace_doubling(params, 1, 256)
    assert [band_limit for band_limit, _ in doubling] == [1, 2, 4, 8, 16, 32, 64, 128, 256]
    values = [value for _, value in doubling]
    assert all(later > earlier for earlier, later in zip(values, values[1:]))
    assert abs(values[-1] - values[-2]) / values[-1] < 1e-4
