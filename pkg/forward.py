from typing import Tuple, Union
import numpy as np

from errors import DomainError
from data_types import Array, Spectrum, TimeGrid, ForwardTrajectory, GaussianLaw
from spectral import expand_per_ell

# Forward noising dX = -X/2 dt + sqrt(C) dB, run coefficient by coefficient with its exact Gaussian transition

def ou_transition(a: Union[float, Array], c_ell: Union[float, Array], dt: float, rng: np.random.Generator) -> Union[float, Array]:
    """
    Draw from N(e^{-dt/2} a, C (1 - e^{-dt})), the exact transition over a step dt
    """
    if dt < 0:
        raise DomainError(f"Step must be >= 0, got {dt}")
    c_ell = np.asarray(c_ell, dtype=float)
    if np.any(c_ell <= 0):
        raise DomainError("Transition variance needs C_l > 0")
    a = np.asarray(a, dtype=float)
    if dt == 0:
        return a.copy() if a.ndim else float(a)
    std = np.sqrt(c_ell * -np.expm1(-dt))
    draw = np.exp(-dt / 2) * a + std * rng.standard_normal(np.broadcast(a, std).shape)
    return draw if draw.ndim else float(draw)

def simulate_forward(x0: Array, spec: Spectrum, grid: TimeGrid, rng: np.random.Generator) -> ForwardTrajectory:
    """
    Step every coefficient independently through the time grid; x0 may carry leading batch axes
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != spec.num_coeffs:
        raise DomainError(f"Initial field has {x0.shape[-1]} coefficients, spectrum covers {spec.num_coeffs}")
    c_per_coeff = spec.per_coeff()
    states = np.empty((grid.M + 1,) + x0.shape)
    states[0] = x0
    for j in range(grid.M):
        states[j + 1] = ou_transition(states[j], c_per_coeff, grid.h, rng)
    return ForwardTrajectory(grid, states)

def forward_jump(x0: Array, spec: Spectrum, t: Union[float, Array], rng: np.random.Generator) -> Array:
    """
    Single draw of X_t given X_0 = x0, with one forward time per row of x0 when t is an array
    Same joint law of (X_0, X_t) as stepping a whole trajectory
    """
    x0 = np.asarray(x0, dtype=float)
    t_col = np.asarray(t, dtype=float)
    if np.any(t_col < 0):
        raise DomainError("Forward times must be >= 0")
    if t_col.ndim == 1:
        t_col = t_col[:, None]
    decay = np.exp(-t_col / 2)
    std = np.sqrt(spec.per_coeff() * -np.expm1(-t_col))
    return decay * x0 + std * rng.standard_normal(x0.shape)

def marginal_law_gaussian(mean0: Array, var0: Array, spec: Spectrum, t: float) -> GaussianLaw:
    """
    Exact forward marginal when every coefficient starts Gaussian:
    mean_t = e^{-t/2} mean0, var_t = e^{-t} var0 + C_l (1 - e^{-t})
    var0 may be per-degree or per-coefficient
    """
    var0 = expand_per_ell(var0, spec.band_limit)
    if np.any(var0 < 0):
        raise DomainError("Initial variances must be >= 0")
    mean0 = np.asarray(mean0, dtype=float)
    return {
        "mean": np.exp(-t / 2) * mean0,
        "var": np.exp(-t) * var0 + spec.per_coeff() * -np.expm1(-t),
    }

def transition_moments(a: float, c_ell: float, dt: float) -> Tuple[float, float]:
    return float(np.exp(-dt / 2) * a), float(c_ell * -np.expm1(-dt))
