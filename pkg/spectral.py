from functools import cached_property
from typing import Optional, Union
import numpy as np

from errors import DomainError, ConfigError
from data_types import Array, HarmonicIndex, CoeffField, GridField, num_coeffs, ell_of_flat
from constants import FOUR_PI

# Real orthonormal harmonics, Condon-Shortley phase included in P_ell^m:
#   Y_{l,0}  = Pbar_l^0(cos theta)
#   Y_{l,m}  = sqrt(2) Pbar_l^m(cos theta) cos(m phi),  m > 0
#   Y_{l,-m} = sqrt(2) Pbar_l^m(cos theta) sin(m phi),  m > 0
# where Pbar_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m

def normalized_legendre(band_limit: int, x: Union[float, Array]) -> Array:
    """
    Fully normalized associated Legendre functions Pbar_l^m(x) for 0 <= m <= l <= L
    Returns array of shape (L + 1, L + 1) + x.shape indexed [l, m], zero where m > l
    The normalization is folded into the recurrence so nothing overflows at large l
    """
    x = np.asarray(x, dtype=float)
    sin_theta = np.sqrt(np.clip(1.0 - x ** 2, 0.0, None))
    table = np.zeros((band_limit + 1, band_limit + 1) + x.shape)
    table[0, 0] = np.sqrt(1.0 / FOUR_PI)
    for m in range(1, band_limit + 1):
        table[m, m] = -np.sqrt((2 * m + 1) / (2 * m)) * sin_theta * table[m - 1, m - 1]
    for m in range(0, band_limit):
        table[m + 1, m] = np.sqrt(2 * m + 3) * x * table[m, m]
    for m in range(0, band_limit + 1):
        for ell in range(m + 2, band_limit + 1):
            a_lm = np.sqrt((4 * ell ** 2 - 1) / (ell ** 2 - m ** 2))
            b_lm = np.sqrt(((ell - 1) ** 2 - m ** 2) / (4 * (ell - 1) ** 2 - 1))
            table[ell, m] = a_lm * (x * table[ell - 1, m] - b_lm * table[ell - 2, m])
    return table

def harmonic_basis(band_limit: int, theta: Array, phi: Array) -> Array:
    """
    All Y_{l,m} up to L on the outer product of theta and phi
    Returns shape (n_coeffs, len(theta), len(phi))
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    legendre = normalized_legendre(band_limit, np.cos(theta))
    basis = np.zeros((num_coeffs(band_limit), len(theta), len(phi)))
    for ell in range(band_limit + 1):
        basis[ell ** 2 + ell] = legendre[ell, 0][:, None]
        for m in range(1, ell + 1):
            scaled = np.sqrt(2.0) * legendre[ell, m][:, None]
            basis[ell ** 2 + ell + m] = scaled * np.cos(m * phi)[None, :]
            basis[ell ** 2 + ell - m] = scaled * np.sin(m * phi)[None, :]
    return basis

def eval_harmonic(idx: HarmonicIndex, theta: float, phi: float) -> float:
    if abs(idx.m) > idx.ell:
        raise DomainError(f"Invalid harmonic index {idx}")
    if not 0 <= theta <= np.pi:
        raise DomainError(f"Colatitude must lie in [0, pi], got {theta}")
    legendre = normalized_legendre(idx.ell, np.cos(theta))[idx.ell, abs(idx.m)]
    if idx.m == 0:
        return float(legendre)
    trig = np.cos(idx.m * phi) if idx.m > 0 else np.sin(-idx.m * phi)
    return float(np.sqrt(2.0) * legendre * trig)

class SphereGrid:
    """
    Gauss-Legendre nodes in cos(theta) times equispaced longitudes
    Integrates all products Y_{l,m} Y_{l',m'} with l, l' <= L exactly when n_theta >= L + 1 and n_phi >= 2L + 1
    """
    def __init__(self, band_limit: int, n_theta: Optional[int] = None, n_phi: Optional[int] = None):
        n_theta = band_limit + 2 if n_theta is None else n_theta
        n_phi = 2 * band_limit + 2 if n_phi is None else n_phi
        if n_theta < band_limit + 1:
            raise ConfigError(f"n_theta={n_theta} cannot resolve band limit {band_limit}, need >= {band_limit + 1}")
        if n_phi < 2 * band_limit + 1:
            raise ConfigError(f"n_phi={n_phi} cannot resolve band limit {band_limit}, need >= {2 * band_limit + 1}")
        self.band_limit = band_limit
        self.n_theta = n_theta
        self.n_phi = n_phi
        nodes, weights = np.polynomial.legendre.leggauss(n_theta)
        # Order from north pole to south pole
        order = np.argsort(-nodes)
        self.cos_theta: Array = nodes[order]
        self.theta_weights: Array = weights[order]
        self.theta: Array = np.arccos(self.cos_theta)
        self.phi: Array = 2 * np.pi * np.arange(n_phi) / n_phi
        self.phi_weight = 2 * np.pi / n_phi

    @property
    def resolvable_band_limit(self):
        return min(self.n_theta - 1, (self.n_phi - 1) // 2)

    @cached_property
    def weights(self) -> Array:
        """
        Surface measure of each grid point, shape (n_theta, n_phi), sums to 4 pi
        """
        return np.repeat(self.theta_weights[:, None] * self.phi_weight, self.n_phi, axis=1)

    @cached_property
    def basis(self) -> Array:
        """
        Harmonics at the grid points flattened to (n_coeffs, n_theta * n_phi)
        """
        return harmonic_basis(self.band_limit, self.theta, self.phi).reshape(num_coeffs(self.band_limit), -1)

    def integrate(self, values: Array) -> Array:
        return np.sum(values * self.weights, axis=(-2, -1))

def synthesize(coeffs: Union[CoeffField, Array], grid: SphereGrid) -> GridField:
    """
    Field values sum_{l <= L, |m| <= l} a_{l,m} Y_{l,m} at the grid points; accepts leading batch axes
    """
    values = coeffs.coeffs if isinstance(coeffs, CoeffField) else np.asarray(coeffs, dtype=float)
    band_limit = int(round(np.sqrt(values.shape[-1]))) - 1
    if num_coeffs(band_limit) != values.shape[-1]:
        raise DomainError(f"Coefficient vector of length {values.shape[-1]} is not (L+1)^2")
    if band_limit > grid.band_limit:
        raise ConfigError(f"Grid built for band limit {grid.band_limit} cannot synthesize band limit {band_limit}")
    basis = grid.basis[:num_coeffs(band_limit)]
    field = values @ basis
    return GridField(grid, field.reshape(values.shape[:-1] + (grid.n_theta, grid.n_phi)))

def analyze(field: GridField, band_limit: Optional[int] = None) -> CoeffField:
    """
    Quadrature projections a_{l,m} = int T Y_{l,m} dvol, exact for band-limited fields
    Returns a CoeffField for a single field; batched values come back via analyze_array
    """
    return CoeffField.from_array(analyze_array(field, band_limit))

def analyze_array(field: GridField, band_limit: Optional[int] = None) -> Array:
    grid: SphereGrid = field.grid
    band_limit = grid.band_limit if band_limit is None else band_limit
    if band_limit > grid.resolvable_band_limit or band_limit > grid.band_limit:
        raise ConfigError(f"Grid ({grid.n_theta} x {grid.n_phi}, built for L={grid.band_limit}) is too coarse for band limit {band_limit}")
    weighted = (field.values * grid.weights).reshape(field.values.shape[:-2] + (-1,))
    return weighted @ grid.basis[:num_coeffs(band_limit)].T

def h_norm_sq(coeffs: Union[CoeffField, Array]) -> Union[float, Array]:
    values = coeffs.coeffs if isinstance(coeffs, CoeffField) else np.asarray(coeffs, dtype=float)
    return np.sum(values ** 2, axis=-1)

def expand_per_ell(values: Union[float, Array], band_limit: int) -> Array:
    """
    Broadcast a scalar or per-degree vector (length L + 1) to one entry per coefficient
    Per-coefficient vectors pass through unchanged
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(num_coeffs(band_limit), float(values))
    if values.shape[-1] == num_coeffs(band_limit):
        return values
    if values.shape[-1] == band_limit + 1:
        return values[..., ell_of_flat(band_limit)]
    raise DomainError(f"Expected L+1={band_limit + 1} or (L+1)^2={num_coeffs(band_limit)} values, got {values.shape[-1]}")

def spherical_laplacian_fd(func, theta: float, phi: float, step: float = 1e-3) -> float:
    """
    Second-order central differences of (1/sin) d_theta(sin d_theta f) + (1/sin^2) d_phi^2 f at an interior point
    """
    sin_theta = np.sin(theta)
    f_center = func(theta, phi)
    d_theta_sq = (func(theta + step, phi) - 2 * f_center + func(theta - step, phi)) / step ** 2
    d_theta = (func(theta + step, phi) - func(theta - step, phi)) / (2 * step)
    d_phi_sq = (func(theta, phi + step) - 2 * f_center + func(theta, phi - step)) / step ** 2
    return d_theta_sq + np.cos(theta) / sin_theta * d_theta + d_phi_sq / sin_theta ** 2
