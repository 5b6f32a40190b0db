from typing import List, Optional, Tuple, Union
import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from errors import DomainError
from data_types import Array, Denoiser, Spectrum, band_limit_from_size
from spectral import expand_per_ell
from constants import DataModelType

class DataModel:
    """
    Base for the data distributions mu_data with coefficientwise structure
    """
    kind: DataModelType

    @property
    def band_limit(self) -> int:
        raise NotImplementedError

    @property
    def kl_defined(self) -> bool:
        """
        KL/Fisher diagnostics need mu_data << m, i.e. every component variance s_l > 0
        """
        raise NotImplementedError

    def mean(self) -> Array:
        raise NotImplementedError

class GaussianShift(DataModel):
    """
    a_{l,m} ~ N(mean0_{l,m}, s_l) independently
    """
    kind = DataModelType.GAUSSIAN_SHIFT

    def __init__(self, mean0: Array, var_scale: Array):
        self.mean0 = np.asarray(mean0, dtype=float)
        band_limit = band_limit_from_size(len(self.mean0))
        self.var_scale = np.asarray(expand_per_ell(var_scale, band_limit), dtype=float)
        if np.any(self.var_scale < 0):
            raise DomainError("Variance scales s_l must be >= 0")
        self._band_limit = band_limit

    @property
    def band_limit(self):
        return self._band_limit

    @property
    def kl_defined(self):
        return bool(np.all(self.var_scale > 0))

    def mean(self):
        return self.mean0

class GaussianMixture(DataModel):
    """
    sum_i w_i N(mean_i, diag(s_l)), all components sharing the per-degree variances
    """
    kind = DataModelType.GAUSSIAN_MIXTURE

    def __init__(self, weights: Array, means: Array, var_scale: Union[float, Array]):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        if len(self.weights) != len(self.means) or len(self.weights) == 0:
            raise DomainError("Mixture needs one weight per component mean and at least one component")
        if np.any(self.weights <= 0) or abs(np.sum(self.weights) - 1) > 1e-12:
            raise DomainError("Mixture weights must be positive and sum to 1")
        band_limit = band_limit_from_size(self.means.shape[1])
        self.var_scale = np.asarray(expand_per_ell(var_scale, band_limit), dtype=float)
        if np.any(self.var_scale < 0):
            raise DomainError("Variance scales s_l must be >= 0")
        self._band_limit = band_limit

    @property
    def band_limit(self):
        return self._band_limit

    @property
    def kl_defined(self):
        return bool(np.all(self.var_scale > 0))

    def mean(self):
        return self.weights @ self.means

class Empirical(GaussianMixture):
    """
    Uniform weights on a set of atoms; the Bayes denoiser is the zero-variance mixture posterior mean
    """
    kind = DataModelType.EMPIRICAL

    def __init__(self, atoms: Array):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        if len(atoms) == 0:
            raise DomainError("Empirical model needs at least one atom")
        super().__init__(np.full(len(atoms), 1.0 / len(atoms)), atoms, 0.0)

    @property
    def atoms(self):
        return self.means

    @property
    def kl_defined(self):
        return False

def _check_band_limit(model: DataModel, spec: Spectrum):
    if model.band_limit != spec.band_limit:
        raise DomainError(f"Data model band limit {model.band_limit} differs from spectrum band limit {spec.band_limit}")

def _time_column(t: Union[float, Array], x: Array) -> Array:
    """
    Forward time broadcastable against x, one row per sample when t is an array
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("Denoising needs forward time t > 0")
    if t_arr.ndim == 1 and x.ndim > 1:
        return t_arr[:, None]
    return t_arr

def sample_data(model: DataModel, rng: np.random.Generator, num_samples: Optional[int] = None) -> Array:
    count = 1 if num_samples is None else num_samples
    if isinstance(model, GaussianShift):
        samples = model.mean0 + np.sqrt(model.var_scale) * rng.standard_normal((count, len(model.mean0)))
    elif isinstance(model, GaussianMixture):
        components = rng.choice(len(model.weights), size=count, p=model.weights)
        noise = rng.standard_normal((count, model.means.shape[1]))
        samples = model.means[components] + np.sqrt(model.var_scale) * noise
    else:
        raise DomainError(f"Unsupported data model {type(model).__name__}")
    return samples[0] if num_samples is None else samples

def _noised_variance(var_scale: Array, c_per_coeff: Array, t_col: Array) -> Array:
    return np.exp(-t_col) * var_scale + c_per_coeff * -np.expm1(-t_col)

def gaussian_denoiser(model: GaussianShift, spec: Spectrum, t: Union[float, Array], x: Array) -> Array:
    """
    Exact posterior mean E[X_0 | X_t = x]:
    (e^{-t/2} s x + C (1 - e^{-t}) mu0) / (e^{-t} s + C (1 - e^{-t}))
    """
    _check_band_limit(model, spec)
    x = np.asarray(x, dtype=float)
    t_col = _time_column(t, x)
    c_per_coeff = spec.per_coeff()
    noised_var = _noised_variance(model.var_scale, c_per_coeff, t_col)
    return (np.exp(-t_col / 2) * model.var_scale * x + c_per_coeff * -np.expm1(-t_col) * model.mean0) / noised_var

def mixture_responsibilities(model: GaussianMixture, spec: Spectrum, t: Union[float, Array], x: Array) -> Array:
    """
    Posterior component probabilities given X_t = x, computed in log space
    Returns shape x.shape[:-1] + (n_components,)
    """
    x = np.asarray(x, dtype=float)
    t_col = _time_column(t, x)
    noised_var = np.broadcast_to(_noised_variance(model.var_scale, spec.per_coeff(), t_col), x.shape)
    decay = np.broadcast_to(np.exp(-t_col / 2), x.shape)
    # (..., K, n) residuals of x against each component's noised mean
    residual = x[..., None, :] - decay[..., None, :] * model.means
    log_lik = -0.5 * np.sum(residual ** 2 / noised_var[..., None, :], axis=-1)
    log_post = np.log(model.weights) + log_lik
    return np.exp(log_post - logsumexp(log_post, axis=-1, keepdims=True))

def mixture_denoiser(model: GaussianMixture, spec: Spectrum, t: Union[float, Array], x: Array) -> Array:
    """
    Bayes denoiser of a Gaussian mixture (atoms when s = 0): responsibility-weighted component posterior means
    """
    _check_band_limit(model, spec)
    x = np.asarray(x, dtype=float)
    t_col = _time_column(t, x)
    c_per_coeff = spec.per_coeff()
    noised_var = _noised_variance(model.var_scale, c_per_coeff, t_col)
    resp = mixture_responsibilities(model, spec, t, x)
    gain = np.exp(-t_col / 2) * model.var_scale / noised_var
    pull = c_per_coeff * -np.expm1(-t_col) / noised_var
    # Component posterior mean m_i = gain x + pull mean_i, so sum_i r_i m_i = gain x + pull (r @ means)
    return gain * x + pull * (resp @ model.means)

def exact_denoiser(model: DataModel, spec: Spectrum) -> Denoiser:
    if isinstance(model, GaussianShift):
        return lambda t, x: gaussian_denoiser(model, spec, t, x)
    if isinstance(model, GaussianMixture):
        return lambda t, x: mixture_denoiser(model, spec, t, x)
    raise DomainError(f"No exact denoiser for {type(model).__name__}")

class OffsetDenoiser:
    """
    Wraps a denoiser and adds a constant offset to every output, e.g. c e_{0,0}
    """
    def __init__(self, base: Denoiser, offset: Array):
        self.base = base
        self.offset = np.asarray(offset, dtype=float)

    def __call__(self, t: Union[float, Array], x: Array) -> Array:
        return self.base(t, x) + self.offset

def sigma(s: Union[float, Array]) -> Union[float, Array]:
    """
    sigma_s = e^{s/2} - e^{-s/2}
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError(f"sigma needs s >= 0, got {s}")
    value = 2 * np.sinh(s_arr / 2)
    return value if value.ndim else float(value)

def score_from_denoiser(denoiser: Denoiser, spec: Spectrum, t: Union[float, Array], x: Array) -> Array:
    """
    V = (d(t, x) - e^{-t/2} x) / sigma_t, equal to C_l d/da log rho_t in coefficient coordinates
    """
    x = np.asarray(x, dtype=float)
    t_col = _time_column(t, x)
    if x.shape[-1] != spec.num_coeffs:
        raise DomainError(f"Field has {x.shape[-1]} coefficients, spectrum covers {spec.num_coeffs}")
    return (denoiser(t, x) - np.exp(-t_col / 2) * x) / sigma(t_col)

def gaussian_analytic_score(model: GaussianShift, spec: Spectrum, t: Union[float, Array], x: Array) -> Array:
    """
    C_l d/da log rho_t from the explicit densities, rho_t = dN(e^{-t/2} mu0, v_t) / dN(0, C):
    x - C (x - e^{-t/2} mu0) / v_t
    """
    x = np.asarray(x, dtype=float)
    t_col = _time_column(t, x)
    c_per_coeff = spec.per_coeff()
    noised_var = _noised_variance(model.var_scale, c_per_coeff, t_col)
    return x - c_per_coeff * (x - np.exp(-t_col / 2) * model.mean0) / noised_var

def expected_score_cm_norm(model: GaussianShift, spec: Spectrum, t: float) -> float:
    """
    E ||V_t(X_t)||^2_CM under the forward marginal; the score is affine, V = k x + C e^{-t/2} mu0 / v_t with k = 1 - C / v_t,
    so the expectation is sum (e^{-t} mu0^2 + k^2 v_t) / C; equals e^{-t} sum mu0^2 / C when s = C
    """
    c_per_coeff = spec.per_coeff()
    noised_var = _noised_variance(model.var_scale, c_per_coeff, np.asarray(t, dtype=float))
    slope = 1 - c_per_coeff / noised_var
    return float(np.sum((np.exp(-t) * model.mean0 ** 2 + slope ** 2 * noised_var) / c_per_coeff))

def kl_to_prior(model: GaussianShift, spec: Spectrum) -> float:
    """
    KL(mu_data | m) = sum 1/2 (s/C - 1 - ln(s/C) + mu0^2 / C); +inf when any s_l = 0
    """
    _check_band_limit(model, spec)
    if not model.kl_defined:
        return float("inf")
    ratio = model.var_scale / spec.per_coeff()
    return float(0.5 * np.sum(ratio - 1 - np.log(ratio) + model.mean0 ** 2 / spec.per_coeff()))

def _mixture_log_density(model: GaussianMixture, x: Array) -> Array:
    residual = x[..., None, :] - model.means
    log_comp = -0.5 * np.sum(residual ** 2 / model.var_scale + np.log(2 * np.pi * model.var_scale), axis=-1)
    return logsumexp(np.log(model.weights) + log_comp, axis=-1)

def kl_to_prior_mc(model: GaussianMixture, spec: Spectrum, num_samples: int, rng: np.random.Generator) -> Tuple[float, float]:
    """
    Monte Carlo KL(mu_data | m) = E_data[log p_data - log p_m] with its standard error
    """
    _check_band_limit(model, spec)
    if not model.kl_defined:
        return float("inf"), 0.0
    samples = sample_data(model, rng, num_samples)
    c_per_coeff = spec.per_coeff()
    log_prior = -0.5 * np.sum(samples ** 2 / c_per_coeff + np.log(2 * np.pi * c_per_coeff), axis=-1)
    log_ratio = _mixture_log_density(model, samples) - log_prior
    return float(np.mean(log_ratio)), float(np.std(log_ratio, ddof=1) / np.sqrt(num_samples))

def fisher_info(model: GaussianShift, spec: Spectrum) -> float:
    """
    I(mu_data | m) = sum C E_data[g^2] with g(a) = a (1/(2C) - 1/(2s)) + mu0/(2s), the Cameron-Martin derivative of sqrt(rho_0)
    """
    _check_band_limit(model, spec)
    if not model.kl_defined:
        return float("inf")
    c_per_coeff = spec.per_coeff()
    slope = 1 / (2 * c_per_coeff) - 1 / (2 * model.var_scale)
    intercept = model.mean0 / (2 * model.var_scale)
    mean_g = slope * model.mean0 + intercept
    return float(np.sum(c_per_coeff * (mean_g ** 2 + slope ** 2 * model.var_scale)))

def fisher_info_1d(weights: Array, means: Array, var: float, c_ell: float) -> float:
    """
    Fisher information of a 1-D mixture sum w_i N(mean_i, var) relative to N(0, C) by adaptive quadrature:
    int C/4 p(a) (d/da log p(a) + a/C)^2 da
    """
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    def integrand(a: float):
        log_comp = np.log(weights) - 0.5 * (a - means) ** 2 / var - 0.5 * np.log(2 * np.pi * var)
        log_p = logsumexp(log_comp)
        resp = np.exp(log_comp - log_p)
        d_log_p = np.sum(resp * (means - a)) / var
        return c_ell / 4 * np.exp(log_p) * (d_log_p + a / c_ell) ** 2
    half_width = 12 * np.sqrt(var)
    # Split at the component means so quad sees every bump
    points: List[float] = sorted(set(means.tolist()))
    value, _ = integrate.quad(integrand, means.min() - half_width, means.max() + half_width,
                              points=points if len(points) > 1 else None, epsabs=1e-12, epsrel=1e-8, limit=200)
    return float(value)

def fisher_info_mixture(model: GaussianMixture, spec: Spectrum, num_samples: int = 100000,
                        rng: Optional[np.random.Generator] = None) -> Tuple[float, float]:
    """
    Fisher information of a Gaussian mixture with its standard error
    Coefficients where all component means agree are Gaussian and contribute in closed form; if at most one coefficient
    separates the components, that coefficient is integrated by quadrature (standard error 0), otherwise Monte Carlo
    """
    _check_band_limit(model, spec)
    if not model.kl_defined:
        return float("inf"), 0.0
    c_per_coeff = spec.per_coeff()
    varying = np.any(model.means != model.means[0], axis=0)
    shared = GaussianShift(model.means[0], model.var_scale)
    slope = 1 / (2 * c_per_coeff) - 1 / (2 * shared.var_scale)
    mean_g = slope * shared.mean0 + shared.mean0 / (2 * shared.var_scale)
    closed_form = c_per_coeff * (mean_g ** 2 + slope ** 2 * shared.var_scale)
    fixed_part = float(np.sum(closed_form[~varying]))
    varying_idx = np.flatnonzero(varying)
    if len(varying_idx) == 0:
        return fixed_part, 0.0
    if len(varying_idx) == 1:
        idx = varying_idx[0]
        return fixed_part + fisher_info_1d(model.weights, model.means[:, idx], model.var_scale[idx], c_per_coeff[idx]), 0.0
    if rng is None:
        raise DomainError("Fisher information of a multi-coefficient mixture needs an RNG for Monte Carlo")
    samples = sample_data(model, rng, num_samples)[:, varying_idx]
    means = model.means[:, varying_idx]
    var = model.var_scale[varying_idx]
    c_sub = c_per_coeff[varying_idx]
    residual = samples[:, None, :] - means
    log_comp = np.log(model.weights) - 0.5 * np.sum(residual ** 2 / var, axis=-1)
    resp = np.exp(log_comp - logsumexp(log_comp, axis=-1, keepdims=True))
    grad_log_p = -(samples - resp @ means) / var
    per_sample = np.sum(c_sub / 4 * (grad_log_p + samples / c_sub) ** 2, axis=-1)
    return fixed_part + float(np.mean(per_sample)), float(np.std(per_sample, ddof=1) / np.sqrt(num_samples))
