from typing import List, Optional, Tuple, Union
import numpy as np

from errors import DomainError
from data_types import Array, CoeffField, MaternParams, Spectrum

def matern_spectrum(params: MaternParams, band_limit: int) -> Spectrum:
    """
    C_l = (kappa^2 + l(l+1))^(-2 beta), l = 0..L
    """
    if band_limit < 0:
        raise DomainError(f"Band limit must be >= 0, got {band_limit}")
    ells = np.arange(band_limit + 1, dtype=float)
    return Spectrum((params.kappa ** 2 + ells * (ells + 1)) ** (-2 * params.beta))

def spectrum_from_table(ells: Array, values: Array) -> Spectrum:
    """
    User-supplied spectrum table, must list every degree 0..L exactly once
    """
    ells = np.asarray(ells, dtype=int)
    order = np.argsort(ells)
    if not np.array_equal(ells[order], np.arange(len(ells))):
        raise DomainError("Spectrum table must contain each degree 0..L exactly once")
    return Spectrum(np.asarray(values, dtype=float)[order])

def sample_prior(spec: Spectrum, rng: np.random.Generator, num_samples: Optional[int] = None) -> Array:
    """
    Independent a_{l,m} ~ N(0, C_l); shape (n_coeffs,) or (num_samples, n_coeffs)
    """
    shape = (spec.num_coeffs,) if num_samples is None else (num_samples, spec.num_coeffs)
    return rng.standard_normal(shape) * np.sqrt(spec.per_coeff())

def sample_prior_field(spec: Spectrum, rng: np.random.Generator) -> CoeffField:
    return CoeffField(spec.band_limit, sample_prior(spec, rng))

def cm_norm_sq(x: Union[CoeffField, Array], spec: Spectrum) -> Union[float, Array]:
    """
    Cameron-Martin norm sum a_{l,m}^2 / C_l
    """
    values = x.coeffs if isinstance(x, CoeffField) else np.asarray(x, dtype=float)
    if values.shape[-1] != spec.num_coeffs:
        raise DomainError(f"Field has {values.shape[-1]} coefficients, spectrum covers {spec.num_coeffs}")
    if not spec.is_positive():
        raise DomainError("Cameron-Martin norm needs C_l > 0 for every degree")
    return np.sum(values ** 2 / spec.per_coeff(), axis=-1)

def trace(spec: Spectrum) -> float:
    ells = np.arange(spec.band_limit + 1)
    return float(np.sum((2 * ells + 1) * spec.c))

def trace_reference(params: MaternParams) -> float:
    """
    Closed-form value kappa^(2(1 - 2 beta)) / (2 beta - 1) printed as an upper bound on the trace
    Only reported next to the summed trace, see trace_report
    """
    if params.beta <= 0.5:
        raise DomainError(f"Trace reference needs beta > 1/2, got {params.beta}")
    return params.kappa ** (2 * (1 - 2 * params.beta)) / (2 * params.beta - 1)

def trace_doubling(params: MaternParams, start: int = 1, stop: int = 256) -> List[Tuple[int, float]]:
    """
    Summed trace at L = start, 2 start, 4 start, ... up to stop
    """
    results = []
    band_limit = start
    while band_limit <= stop:
        results.append((band_limit, trace(matern_spectrum(params, band_limit))))
        band_limit *= 2
    return results
