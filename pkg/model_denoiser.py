from typing import Dict, Tuple, Union
import numpy as np
import torch
from torch import nn

from errors import DomainError
from data_types import Array, Denoiser, Spectrum, TimeGrid
from constants import Architecture

# Trainable denoisers v^theta(t, x) ~ E[X_0 | X_t = x]
# Both architectures work on whitened coefficients x / sqrt(C_l) so that every coordinate has unit prior scale;
# the represented function classes are the same as in raw coordinates

class LearnedDenoiser(nn.Module):
    architecture: Architecture

    def __init__(self, spectrum: Spectrum, grid: TimeGrid):
        super().__init__()
        if not spectrum.is_positive():
            raise DomainError("Learned denoisers need C_l > 0 for every degree")
        self.band_limit = spectrum.band_limit
        self.num_coeffs = spectrum.num_coeffs
        self.spectrum = spectrum
        self.grid = grid
        self.register_buffer("scale", torch.tensor(np.sqrt(spectrum.per_coeff()), dtype=torch.float64))

    def predict_white(self, t: torch.Tensor, x_white: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, t: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        """
        t has shape (batch,) of forward times, x shape (batch, n_coeffs); returns predicted clean coefficients
        """
        return self.predict_white(t, x / self.scale) * self.scale

    def hyperparameters(self) -> Dict[str, Union[int, bool]]:
        return {}

    def as_denoiser(self) -> Denoiser:
        """
        Numpy view of the model with the Denoiser call signature
        """
        def denoise(t: Union[float, Array], x: Array) -> Array:
            x = np.array(x, dtype=float)
            batch = x.reshape(-1, self.num_coeffs)
            t_arr = np.array(np.broadcast_to(np.asarray(t, dtype=float), batch.shape[:1]))
            with torch.no_grad():
                out = self(torch.from_numpy(t_arr), torch.from_numpy(batch))
            return out.numpy().reshape(x.shape)
        return denoise

class PerTimeAffine(LearnedDenoiser):
    """
    Independent affine map A_j x + b_j for each grid time t_j, j = 1..M
    Off-grid times use the nearest grid time on the left (clamped to t_1)
    """
    architecture = Architecture.PER_TIME_AFFINE

    def __init__(self, spectrum: Spectrum, grid: TimeGrid, diagonal: bool = True):
        super().__init__(spectrum, grid)
        self.diagonal = diagonal
        # Start from the stationary denoiser e^{-t/2} x
        decay = torch.exp(-torch.tensor(grid.times[1:], dtype=torch.float64) / 2)
        if diagonal:
            gain = decay[:, None].repeat(1, self.num_coeffs)
        else:
            gain = decay[:, None, None] * torch.eye(self.num_coeffs, dtype=torch.float64)
        self.gain = nn.Parameter(gain)
        self.offset = nn.Parameter(torch.zeros(grid.M, self.num_coeffs, dtype=torch.float64))

    def time_index(self, t: torch.Tensor) -> torch.Tensor:
        steps = torch.floor(t / self.grid.h + 1e-9).long()
        return torch.clamp(steps, 1, self.grid.M) - 1

    def predict_white(self, t: torch.Tensor, x_white: torch.Tensor) -> torch.Tensor:
        idx = self.time_index(t)
        if self.diagonal:
            return self.gain[idx] * x_white + self.offset[idx]
        return torch.einsum("bij,bj->bi", self.gain[idx], x_white) + self.offset[idx]

    def hyperparameters(self):
        return {"diagonal": self.diagonal}

    def affine_coefficients(self, t: float) -> Tuple[Array, Array]:
        """
        Raw-coordinate (gain, offset) of the diagonal map at forward time t: d(t, x) = gain * x + offset
        """
        if not self.diagonal:
            raise DomainError("Only diagonal affine models have per-coefficient gains")
        idx = int(self.time_index(torch.tensor([t], dtype=torch.float64))[0])
        with torch.no_grad():
            gain = self.gain[idx].numpy().copy()
            offset = (self.offset[idx] * self.scale).numpy().copy()
        return gain, offset

class TimeMLP(LearnedDenoiser):
    """
    Feed-forward network on (t / T, e^{-t/2}, whitened coefficients) with one or two hidden layers
    """
    architecture = Architecture.TIME_MLP

    def __init__(self, spectrum: Spectrum, grid: TimeGrid, hidden_size: int = 64, num_layers: int = 2):
        super().__init__(spectrum, grid)
        if num_layers not in (1, 2):
            raise DomainError(f"TimeMLP supports 1 or 2 hidden layers, got {num_layers}")
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        layers = [nn.Linear(self.num_coeffs + 2, hidden_size, dtype=torch.float64), nn.SiLU()]
        if num_layers == 2:
            layers += [nn.Linear(hidden_size, hidden_size, dtype=torch.float64), nn.SiLU()]
        head = nn.Linear(hidden_size, self.num_coeffs, dtype=torch.float64)
        nn.init.xavier_normal_(head.weight, 0.1)
        nn.init.zeros_(head.bias)
        self.network = nn.Sequential(*layers, head)

    def time_features(self, t: torch.Tensor) -> torch.Tensor:
        return torch.stack([t / self.grid.T, torch.exp(-t / 2)], dim=-1)

    def predict_white(self, t: torch.Tensor, x_white: torch.Tensor) -> torch.Tensor:
        return self.network(torch.cat([self.time_features(t), x_white], dim=-1))

    def hyperparameters(self):
        return {"hidden_size": self.hidden_size, "num_layers": self.num_layers}

def build_model(architecture: str, spectrum: Spectrum, grid: TimeGrid, hyperparameters: Dict[str, Union[int, bool]]) -> LearnedDenoiser:
    if architecture == Architecture.PER_TIME_AFFINE.value:
        return PerTimeAffine(spectrum, grid, bool(hyperparameters.get("diagonal", True)))
    if architecture == Architecture.TIME_MLP.value:
        return TimeMLP(spectrum, grid, int(hyperparameters.get("hidden_size", 64)), int(hyperparameters.get("num_layers", 2)))
    raise DomainError(f"Unsupported architecture {architecture}")
