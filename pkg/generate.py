from typing import Callable, List, Optional, Tuple, Union
import numpy as np
from tqdm import tqdm

from denoisers import GaussianShift, sigma
from matern import sample_prior
from utils import rng_stream
from errors import DomainError
from data_types import Array, Denoiser, GaussianLaw, Spectrum, TimeGrid
from constants import Purpose, GENERATION_CHUNK

# Euler-Maruyama on the approximate backward SDE; backward step j uses the frozen drift at forward time s = T - t_{j-1}

GainOffset = Callable[[float], Tuple[Array, Array]]

__all__ = ["sigma", "em_step", "sample_backward", "generate_samples", "affine_em_law", "exact_em_law", "gaussian_gain_offset"]

def _forward_time(grid: TimeGrid, j: int) -> float:
    if not 1 <= j <= grid.M:
        raise DomainError(f"Step index must be in [1, {grid.M}], got {j}")
    return grid.T - grid.time(j - 1)

def em_step(y: Array, j: int, grid: TimeGrid, spec: Spectrum, d: Denoiser, rng: Optional[np.random.Generator] = None,
            noise: Optional[Array] = None) -> Array:
    """
    y' = y - (h/2) y + (h / sigma_s) (d(s, y) - e^{-s/2} y) + sqrt(h) xi, xi ~ N(0, C)
    noise, when given, holds the standard normal draws behind xi (zeros switch the noise off)
    """
    y = np.asarray(y, dtype=float)
    s = _forward_time(grid, j)
    h = grid.h
    if noise is None:
        if rng is None:
            raise DomainError("em_step needs an RNG or explicit noise")
        noise = rng.standard_normal(y.shape)
    score_term = (h / sigma(s)) * (d(s, y) - np.exp(-s / 2) * y)
    return y - (h / 2) * y + score_term + np.sqrt(h) * np.sqrt(spec.per_coeff()) * noise

def sample_backward(spec: Spectrum, grid: TimeGrid, d: Denoiser, rng: np.random.Generator, num_samples: Optional[int] = None,
                    return_path: bool = False) -> Union[Array, Tuple[Array, Array]]:
    """
    Y_0 ~ N(0, C), then em_step for j = 1..M; returns Y_{t_M} and optionally the path of shape (M + 1,) + Y.shape
    """
    y = sample_prior(spec, rng, num_samples)
    path = [y] if return_path else []
    for j in range(1, grid.M + 1):
        y = em_step(y, j, grid, spec, d, rng)
        if return_path:
            path.append(y)
    if return_path:
        return y, np.stack(path)
    return y

def _run_with_noise(spec: Spectrum, grid: TimeGrid, d: Denoiser, noise: Array, return_path: bool):
    """
    noise has shape (batch, M + 1, n_coeffs): row 0 draws Y_0, row j drives step j
    """
    y = noise[:, 0] * np.sqrt(spec.per_coeff())
    path = [y]
    for j in range(1, grid.M + 1):
        y = em_step(y, j, grid, spec, d, noise=noise[:, j])
        if return_path:
            path.append(y)
    return y, (np.stack(path, axis=1) if return_path else None)

def generate_samples(spec: Spectrum, grid: TimeGrid, d: Denoiser, seed: int, num_samples: int, chunk_size: int = GENERATION_CHUNK,
                     return_path: bool = False) -> Tuple[Array, Optional[Array]]:
    """
    Generate num_samples outputs; sample i draws all of its randomness from stream (GENERATE, i)
    Chunks are vectorized over samples, so results do not depend on chunk_size
    Returns (samples (num_samples, n_coeffs), paths (num_samples, M + 1, n_coeffs) or None)
    """
    samples = np.empty((num_samples, spec.num_coeffs))
    paths = np.empty((num_samples, grid.M + 1, spec.num_coeffs)) if return_path else None
    for start in tqdm(range(0, num_samples, chunk_size)):
        stop = min(start + chunk_size, num_samples)
        noise = np.stack([
            rng_stream(seed, Purpose.GENERATE, sample_id).standard_normal((grid.M + 1, spec.num_coeffs))
            for sample_id in range(start, stop)
        ])
        samples[start:stop], chunk_paths = _run_with_noise(spec, grid, d, noise, return_path)
        if paths is not None:
            paths[start:stop] = chunk_paths
    return samples, paths

def affine_em_law(spec: Spectrum, grid: TimeGrid, gain_offset: GainOffset, return_path: bool = False,
                  initial: Optional[GaussianLaw] = None) -> Union[GaussianLaw, List[GaussianLaw]]:
    """
    Exact law of the Euler-Maruyama output when the denoiser is diagonal affine, d(s, y) = g(s) y + o(s)
    Each step maps (mean, var) -> (A mean + B, A^2 var + h C) with A = 1 - h/2 + (h/sigma_s)(g - e^{-s/2}), B = (h/sigma_s) o
    The recursion starts from N(0, C) unless an initial law is given
    With return_path the laws at every backward time t_0..t_M are returned
    """
    c_per_coeff = spec.per_coeff()
    h = grid.h
    if initial is None:
        mean = np.zeros(spec.num_coeffs)
        var = c_per_coeff.copy()
    else:
        mean = np.asarray(initial["mean"], dtype=float)
        var = np.asarray(initial["var"], dtype=float)
    laws: List[GaussianLaw] = [{"mean": mean, "var": var}]
    for j in range(1, grid.M + 1):
        s = _forward_time(grid, j)
        gain, offset = gain_offset(s)
        step = h / sigma(s)
        slope = 1 - h / 2 + step * (gain - np.exp(-s / 2))
        mean = slope * mean + step * offset
        var = slope ** 2 * var + h * c_per_coeff
        laws.append({"mean": mean, "var": var})
    return laws if return_path else laws[-1]

def gaussian_gain_offset(model: GaussianShift, spec: Spectrum) -> GainOffset:
    """
    Gain and offset of the exact Gaussian denoiser at forward time s
    """
    c_per_coeff = spec.per_coeff()
    def gain_offset(s: float):
        noised_var = np.exp(-s) * model.var_scale + c_per_coeff * -np.expm1(-s)
        return np.exp(-s / 2) * model.var_scale / noised_var, c_per_coeff * -np.expm1(-s) * model.mean0 / noised_var
    return gain_offset

def exact_em_law(spec: Spectrum, grid: TimeGrid, model: GaussianShift, return_path: bool = False) -> Union[GaussianLaw, List[GaussianLaw]]:
    """
    Closed-form law of Y_T under Euler-Maruyama with the exact score of Gaussian data, no Monte Carlo error
    """
    if model.band_limit != spec.band_limit:
        raise DomainError(f"Data model band limit {model.band_limit} differs from spectrum band limit {spec.band_limit}")
    return affine_em_law(spec, grid, gaussian_gain_offset(model, spec), return_path)
