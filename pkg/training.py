import time
import copy
import json
from typing import List, Optional, Tuple
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm
import numpy as np

from model_denoiser import LearnedDenoiser, build_model
from denoisers import DataModel, sample_data
from forward import forward_jump
from matern import cm_norm_sq
from errors import DomainError, TrainingDivergence
from data_types import Array, Checkpoint, Denoiser, ForwardPairs, Spectrum, TimeGrid
from utils import TrainConfig, rng_stream, torch_seed, device
from constants import LossNorm, Optimizer, Purpose

def sample_pairs(x0: Array, spec: Spectrum, grid: TimeGrid, rng: np.random.Generator) -> ForwardPairs:
    """
    One forward pair (t_j, X_0, X_{t_j}) for every sample i and grid time j = 1..M, drawn with a single jump 0 -> t_j
    Pairs are ordered sample-major: pair i * M + (j - 1)
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    times = np.tile(grid.times[1:], len(x0))
    x0_rep = np.repeat(x0, grid.M, axis=0)
    return {
        "t": times,
        "x0": x0_rep,
        "xt": forward_jump(x0_rep, spec, times, rng),
    }

def loss_weights(spec: Spectrum, loss_norm: str) -> Array:
    if loss_norm == LossNorm.CM.value:
        if not spec.is_positive():
            raise DomainError("Cameron-Martin loss needs C_l > 0 for every degree")
        return 1 / spec.per_coeff()
    return np.ones(spec.num_coeffs)

def pair_losses(denoiser: Denoiser, pairs: ForwardPairs, spec: Spectrum, loss_norm: str = LossNorm.CM.value) -> Array:
    """
    Squared error ||X_0 - d(t, X_t)||^2 of every pair, in the H or Cameron-Martin norm
    """
    residual = pairs["x0"] - denoiser(pairs["t"], pairs["xt"])
    if loss_norm == LossNorm.CM.value:
        return cm_norm_sq(residual, spec)
    return np.sum(residual ** 2, axis=-1)

def empirical_loss(denoiser: Denoiser, pairs: ForwardPairs, spec: Spectrum, loss_norm: str = LossNorm.CM.value) -> float:
    """
    Mean over pairs of the squared denoising error, the model being indexed by the forward time of its input
    """
    if len(pairs["t"]) == 0:
        raise DomainError("Empirical loss needs at least one pair")
    return float(np.mean(pair_losses(denoiser, pairs, spec, loss_norm)))

def batch_loss(model: LearnedDenoiser, t: torch.Tensor, x0: torch.Tensor, xt: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    return torch.mean(torch.sum(weights * (x0 - model(t, xt)) ** 2, dim=-1))

def new_model(cfg: TrainConfig, spec: Spectrum, grid: TimeGrid, seed: int) -> LearnedDenoiser:
    torch.manual_seed(torch_seed(seed, Purpose.TRAIN_INIT))
    hyperparameters = {"diagonal": cfg.diagonal, "hidden_size": cfg.hidden_size, "num_layers": cfg.num_layers}
    return build_model(cfg.architecture, spec, grid, hyperparameters).to(device)

def pair_loader(pairs: ForwardPairs, batch_size: int, generator: torch.Generator) -> DataLoader:
    dataset = TensorDataset(torch.from_numpy(pairs["t"]), torch.from_numpy(pairs["x0"]), torch.from_numpy(pairs["xt"]))
    return DataLoader(dataset, batch_size=batch_size, shuffle=True, generator=generator)

def train(model: LearnedDenoiser, data: DataModel, spec: Spectrum, grid: TimeGrid, cfg: TrainConfig,
          seed: int) -> Tuple[LearnedDenoiser, List[float], int]:
    """
    Minibatch gradient descent on the empirical loss over N fixed data samples
    Forward pairs are redrawn each epoch from stream (TRAIN_PAIRS, epoch), or drawn once from stream 0 in fixed-dataset mode
    The parameters of the epoch with the lowest loss are restored at the end, and that epoch is returned with the loss history
    """
    cfg.validate(grid.M)
    if model.band_limit != spec.band_limit or data.band_limit != spec.band_limit:
        raise DomainError(f"Band limits differ: model {model.band_limit}, data {data.band_limit}, spectrum {spec.band_limit}")
    if cfg.optim == Optimizer.ADAMW.value:
        optimizer: torch.optim.Optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    else:
        optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr)
    weights = torch.tensor(loss_weights(spec, cfg.loss_norm), dtype=torch.float64)
    x0 = sample_data(data, rng_stream(seed, Purpose.DATA), cfg.n_samples)

    loss_history: List[float] = []
    best_loss = None
    best_epoch = 0
    best_state = copy.deepcopy(model.state_dict())
    last_finite_loss = None
    train_loader: Optional[DataLoader] = None
    num_pairs = 0
    shuffle_generator = torch.Generator().manual_seed(torch_seed(seed, Purpose.TRAIN_SHUFFLE))

    print("Training...")
    for epoch in range(cfg.epochs):
        start_time = time.time()
        model.train()
        if train_loader is None or not cfg.fixed_dataset:
            pairs = sample_pairs(x0, spec, grid, rng_stream(seed, Purpose.TRAIN_PAIRS, 0 if cfg.fixed_dataset else epoch))
            train_loader = pair_loader(pairs, cfg.batch_size, shuffle_generator)
            num_pairs = len(pairs["t"])

        train_loss = 0.0
        for batch_num, (t_batch, x0_batch, xt_batch) in enumerate(tqdm(train_loader)):
            loss = batch_loss(model, t_batch, x0_batch, xt_batch, weights)
            loss_val = float(loss.detach().cpu().numpy())
            if not np.isfinite(loss_val):
                raise TrainingDivergence(epoch, batch_num, loss_val, last_finite_loss)
            last_finite_loss = loss_val
            loss.backward()
            if cfg.clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            optimizer.step()
            optimizer.zero_grad()
            train_loss += loss_val * len(t_batch)

        avg_train_loss = train_loss / num_pairs
        loss_history.append(avg_train_loss)
        print(f"Epoch: {epoch + 1}, Train Loss: {avg_train_loss:.3f}, Time: {time.time() - start_time:.2f}")

        if best_loss is None or avg_train_loss < best_loss:
            best_loss = avg_train_loss
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    return model, loss_history, best_epoch

def h1_error(denoiser: Denoiser, exact: Denoiser, spec: Spectrum, grid: TimeGrid, data: DataModel, n_mc: int,
             rng: np.random.Generator) -> Tuple[float, float]:
    """
    Monte Carlo estimate (with standard error) of (1/M) sum_j E||E[X_0 | X_{t_j}] - v(t_j, X_{t_j})||^2_CM over j = 1..M
    Each draw takes a uniform grid time, a data sample and its forward jump
    """
    if n_mc < 2:
        raise DomainError(f"h1_error needs n_mc >= 2, got {n_mc}")
    times = grid.times[1:][rng.integers(0, grid.M, size=n_mc)]
    x0 = sample_data(data, rng, n_mc)
    xt = forward_jump(x0, spec, times, rng)
    per_draw = cm_norm_sq(exact(times, xt) - denoiser(times, xt), spec)
    return float(np.mean(per_draw)), float(np.std(per_draw, ddof=1) / np.sqrt(n_mc))

def save_checkpoint(model: LearnedDenoiser, path: str, epoch: int):
    checkpoint: Checkpoint = {
        "architecture": model.architecture.value,
        "band_limit": model.band_limit,
        "grid": {"T": model.grid.T, "M": model.grid.M},
        "spectrum": model.spectrum.c.tolist(),
        "hyperparameters": model.hyperparameters(),
        "parameters": parameters_to_vector(model.parameters()).detach().cpu().numpy().tolist(),
        "epoch": epoch,
    }
    with open(path, "w", encoding="utf-8") as checkpoint_file:
        json.dump(checkpoint, checkpoint_file)

def load_checkpoint(path: str) -> Tuple[LearnedDenoiser, Checkpoint]:
    print("Loading model...")
    with open(path, encoding="utf-8") as checkpoint_file:
        checkpoint: Checkpoint = json.load(checkpoint_file)
    spec = Spectrum(np.array(checkpoint["spectrum"]))
    grid = TimeGrid(checkpoint["grid"]["T"], int(checkpoint["grid"]["M"]))
    model = build_model(checkpoint["architecture"], spec, grid, checkpoint["hyperparameters"]).to(device)
    vector_to_parameters(torch.tensor(checkpoint["parameters"], dtype=torch.float64), model.parameters())
    model.eval()
    return model, checkpoint

def train_score_model(data: DataModel, spec: Spectrum, grid: TimeGrid, cfg: TrainConfig, seed: int, out_path: Optional[str] = None):
    """
    Build a fresh model from the config, train it and optionally write the checkpoint of the best epoch
    """
    model = new_model(cfg, spec, grid, seed)
    model, loss_history, best_epoch = train(model, data, spec, grid, cfg, seed)
    if out_path:
        print(f"Saving model from epoch {best_epoch + 1}")
        save_checkpoint(model, out_path, best_epoch)
    return model, loss_history, best_epoch
