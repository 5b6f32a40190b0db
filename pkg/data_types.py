from typing import Callable, Dict, List, Optional, TypedDict, Union
import numpy as np

from errors import DomainError

Array = np.ndarray

# Any map (forward time, noisy coefficients) -> predicted clean coefficients
# Time is a scalar or an array with one entry per row of x
Denoiser = Callable[[Union[float, Array], Array], Array]

def num_coeffs(band_limit: int):
    return (band_limit + 1) ** 2

def band_limit_from_size(size: int):
    band_limit = int(round(np.sqrt(size))) - 1
    if band_limit < 0 or num_coeffs(band_limit) != size:
        raise DomainError(f"Coefficient vector of length {size} is not (L+1)^2 for any band limit L")
    return band_limit

class HarmonicIndex:
    def __init__(self, ell: int, m: int):
        if ell < 0 or abs(m) > ell:
            raise DomainError(f"Invalid harmonic index (ell={ell}, m={m}), need |m| <= ell")
        self.ell = ell
        self.m = m

    @property
    def flat(self):
        return self.ell ** 2 + self.m + self.ell

    @staticmethod
    def from_flat(flat: int):
        ell = int(np.floor(np.sqrt(flat)))
        return HarmonicIndex(ell, flat - ell ** 2 - ell)

    def __eq__(self, other: object):
        return isinstance(other, HarmonicIndex) and self.ell == other.ell and self.m == other.m

    def __hash__(self):
        return hash((self.ell, self.m))

    def __repr__(self):
        return f"HarmonicIndex(ell={self.ell}, m={self.m})"

def all_indices(band_limit: int) -> List[HarmonicIndex]:
    return [HarmonicIndex(ell, m) for ell in range(band_limit + 1) for m in range(-ell, ell + 1)]

def ell_of_flat(band_limit: int) -> Array:
    """
    Degree of every flat index, e.g. [0, 1, 1, 1, 2, ...]
    """
    return np.repeat(np.arange(band_limit + 1), 2 * np.arange(band_limit + 1) + 1)

class CoeffField:
    """
    Karhunen-Loeve coefficients a_{ell,m} up to band limit L, in flat index order ell^2 + (m + ell)
    """
    def __init__(self, band_limit: int, coeffs: Optional[Array] = None):
        self.band_limit = band_limit
        if coeffs is None:
            coeffs = np.zeros(num_coeffs(band_limit))
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (num_coeffs(band_limit),):
            raise DomainError(f"Expected {num_coeffs(band_limit)} coefficients for band limit {band_limit}, got shape {self.coeffs.shape}")

    @staticmethod
    def from_array(coeffs: Array):
        return CoeffField(band_limit_from_size(len(coeffs)), coeffs)

    def __getitem__(self, idx: HarmonicIndex) -> float:
        return float(self.coeffs[idx.flat])

    def __setitem__(self, idx: HarmonicIndex, value: float):
        self.coeffs[idx.flat] = value

    def __len__(self):
        return len(self.coeffs)

class GridField:
    """
    Real field values sampled on the points of a SphereGrid, shape (n_theta, n_phi)
    """
    def __init__(self, grid, values: Array):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[-2:] != (grid.n_theta, grid.n_phi):
            raise DomainError(f"Field shape {self.values.shape} does not match grid ({grid.n_theta}, {grid.n_phi})")

class MaternParams:
    def __init__(self, kappa: float, beta: float):
        if kappa <= 0:
            raise DomainError(f"kappa must be > 0, got {kappa}")
        if beta <= 0.5:
            raise DomainError(f"beta must be > 0.5, got {beta}")
        self.kappa = kappa
        self.beta = beta

class Spectrum:
    """
    Angular power spectrum (C_ell) for ell = 0..L
    """
    def __init__(self, c: Array):
        self.c = np.asarray(c, dtype=float)
        if self.c.ndim != 1 or len(self.c) == 0:
            raise DomainError("Spectrum needs a non-empty 1-D array of C_ell")
        if np.any(self.c < 0) or not np.all(np.isfinite(self.c)):
            raise DomainError("Spectrum entries must be finite and >= 0")

    @property
    def band_limit(self):
        return len(self.c) - 1

    @property
    def num_coeffs(self):
        return num_coeffs(self.band_limit)

    def per_coeff(self) -> Array:
        return np.repeat(self.c, 2 * np.arange(len(self.c)) + 1)

    def is_positive(self):
        return bool(np.all(self.c > 0))

class TimeGrid:
    def __init__(self, T: float, M: int):
        if T <= 0:
            raise DomainError(f"Horizon T must be > 0, got {T}")
        if M < 1:
            raise DomainError(f"Step count M must be >= 1, got {M}")
        self.T = float(T)
        self.M = int(M)

    @property
    def h(self):
        return self.T / self.M

    @property
    def times(self) -> Array:
        # Same expression as time(j) so that t_M == T exactly
        return self.T * np.arange(self.M + 1) / self.M

    def time(self, j: int):
        return self.T * j / self.M

class ForwardTrajectory:
    """
    States X_{t_0}, ..., X_{t_M}; states has shape (M + 1, ..., n_coeffs)
    """
    def __init__(self, grid: TimeGrid, states: Array):
        self.grid = grid
        self.states = states

class ForwardPairs(TypedDict):
    t: Array # (P,) forward times
    x0: Array # (P, n_coeffs) clean coefficients
    xt: Array # (P, n_coeffs) noised coefficients

class GaussianLaw(TypedDict):
    mean: Array
    var: Array

class BoundReport(TypedDict):
    T: float
    h: float
    eps_sq: float
    eps_sq_se: float
    kl0: float
    fisher: float
    term1: float
    term2: float
    term3: float
    bound: float
    measured_kl: Optional[float]
    measured_kind: Optional[str]
    passed: Optional[bool]

class CheckResult(TypedDict):
    name: str
    status: str
    detail: str
    values: Dict[str, Union[float, int, str, bool, None, list]]

class Checkpoint(TypedDict):
    architecture: str
    band_limit: int
    grid: Dict[str, float]
    spectrum: List[float]
    hyperparameters: Dict[str, Union[int, bool]]
    parameters: List[float]
    epoch: int
