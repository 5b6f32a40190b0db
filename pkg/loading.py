from typing import Any, Dict, List, Optional, Tuple
import json
import os
import numpy as np
import pandas

from matern import matern_spectrum, spectrum_from_table
from denoisers import DataModel, GaussianShift, GaussianMixture, Empirical
from errors import ConfigError, DomainError
from utils import RunOptions
from data_types import Array, GridField, HarmonicIndex, MaternParams, Spectrum, all_indices, band_limit_from_size, num_coeffs
from constants import (
    DataModelType, GRID_FIELD_COLUMNS, COEFF_FIELD_COLUMNS, SPECTRUM_COLUMNS, SPECTRUM_REPORT_COLUMNS, TRAJECTORY_COLUMNS, LOSS_HISTORY_COLUMNS
)

def _check_columns(df: pandas.DataFrame, columns: List[str], path: str):
    if list(df.columns) != columns:
        raise ConfigError(f"expected header {','.join(columns)}, got {','.join(map(str, df.columns))}", path)

def write_coeff_field(coeffs: Array, path: str):
    indices = all_indices(band_limit_from_size(len(coeffs)))
    pandas.DataFrame({
        "ell": [idx.ell for idx in indices],
        "m": [idx.m for idx in indices],
        "value": np.asarray(coeffs, dtype=float),
    }).to_csv(path, index=False, float_format="%.17g")

def read_coeff_field(path: str) -> Array:
    """
    Coefficient vector in flat index order; rows may come in any order but must cover every (ell, m) up to L once
    """
    df = pandas.read_csv(path)
    _check_columns(df, COEFF_FIELD_COLUMNS, path)
    try:
        flat = np.array([HarmonicIndex(int(ell), int(m)).flat for ell, m in zip(df["ell"], df["m"])], dtype=int)
        band_limit = band_limit_from_size(len(df))
    except DomainError as exc:
        raise ConfigError(str(exc), path) from exc
    if not np.array_equal(np.sort(flat), np.arange(num_coeffs(band_limit))):
        raise ConfigError("every (ell, m) up to the band limit must appear exactly once", path)
    coeffs = np.empty(len(df))
    coeffs[flat] = df["value"].to_numpy(dtype=float)
    return coeffs

def write_grid_field(field: GridField, path: str):
    theta, phi = np.meshgrid(field.grid.theta, field.grid.phi, indexing="ij")
    pandas.DataFrame({
        "theta": theta.reshape(-1),
        "phi": phi.reshape(-1),
        "value": field.values.reshape(-1),
    }).to_csv(path, index=False, float_format="%.17g")

def read_grid_values(path: str, n_theta: int, n_phi: int) -> Array:
    df = pandas.read_csv(path)
    _check_columns(df, GRID_FIELD_COLUMNS, path)
    if len(df) != n_theta * n_phi:
        raise ConfigError(f"expected {n_theta * n_phi} grid rows, got {len(df)}", path)
    return df["value"].to_numpy(dtype=float).reshape(n_theta, n_phi)

def write_spectrum(spec: Spectrum, path: str):
    pandas.DataFrame({"ell": np.arange(len(spec.c)), "C": spec.c}).to_csv(path, index=False, float_format="%.17g")

def load_spectrum_csv(path: str) -> Spectrum:
    df = pandas.read_csv(path)
    _check_columns(df, SPECTRUM_COLUMNS, path)
    try:
        return spectrum_from_table(df["ell"].to_numpy(), df["C"].to_numpy(dtype=float))
    except DomainError as exc:
        raise ConfigError(str(exc), path) from exc

def write_spectrum_report(c_true: Array, c_hat: Array, ci_lo: Array, ci_hi: Array, path: str):
    pandas.DataFrame(dict(zip(SPECTRUM_REPORT_COLUMNS, [np.arange(len(c_hat)), c_true, c_hat, ci_lo, ci_hi]))).to_csv(
        path, index=False, float_format="%.17g")

def write_trajectory_dump(states: Array, times: Array, path: str):
    """
    states has shape (num_samples, len(times), n_coeffs); one row per (sample, time, coefficient)
    """
    num_samples, num_times, size = states.shape
    indices = all_indices(band_limit_from_size(size))
    pandas.DataFrame({
        "sample_id": np.repeat(np.arange(num_samples), num_times * size),
        "t": np.tile(np.repeat(times, size), num_samples),
        "ell": np.tile([idx.ell for idx in indices], num_samples * num_times),
        "m": np.tile([idx.m for idx in indices], num_samples * num_times),
        "value": states.reshape(-1),
    }, columns=TRAJECTORY_COLUMNS).to_csv(path, index=False, float_format="%.17g")

def write_loss_history(loss_history: List[float], path: str):
    pandas.DataFrame({"epoch": np.arange(1, len(loss_history) + 1), "loss": loss_history}).to_csv(path, index=False, float_format="%.17g")

def read_loss_history(path: str) -> List[float]:
    df = pandas.read_csv(path)
    _check_columns(df, LOSS_HISTORY_COLUMNS, path)
    return df["loss"].tolist()

def write_json(obj: Any, path: str):
    with open(path, "w", encoding="utf-8") as out_file:
        json.dump(obj, out_file, indent=4)

def load_options(config_path: Optional[str]) -> RunOptions:
    if not config_path:
        return RunOptions({})
    with open(config_path, encoding="utf-8") as config_file:
        try:
            options_dict = json.load(config_file)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})", config_path) from exc
    if not isinstance(options_dict, dict):
        raise ConfigError("top level must be an object", config_path)
    return RunOptions(options_dict)

def sample_file_name(prefix: str, sample_id: int, grid: bool = False):
    return f"{prefix}_{sample_id:05d}{'_grid' if grid else ''}.csv"

def read_sample_dir(sample_dir: str) -> Array:
    """
    All coefficient CSVs in a directory (synthesized grid files skipped), stacked in file name order
    """
    file_names = sorted(
        file_name for file_name in os.listdir(sample_dir)
        if file_name.endswith(".csv") and not file_name.endswith("_grid.csv")
    )
    if not file_names:
        raise ConfigError("no coefficient CSV files found", sample_dir)
    return np.stack([read_coeff_field(os.path.join(sample_dir, file_name)) for file_name in file_names])

def build_spectrum(options: RunOptions) -> Tuple[Spectrum, Optional[MaternParams]]:
    """
    Matern spectrum from the config, or the tabulated one from spectrum_csv (then no Matern parameters apply)
    """
    if options.spectrum_csv:
        spec = load_spectrum_csv(options.spectrum_csv)
        if spec.band_limit != options.band_limit:
            raise ConfigError(f"table covers L={spec.band_limit} but band_limit is {options.band_limit}", "spectrum_csv")
        return spec, None
    params = MaternParams(options.kappa, options.beta)
    return matern_spectrum(params, options.band_limit), params

def parse_coeffs(value: Any, band_limit: int, field: str) -> Array:
    """
    A coefficient vector given as a flat list of (L+1)^2 numbers or as {"ell,m": value} with unlisted entries 0
    """
    if isinstance(value, list):
        coeffs = np.asarray(value, dtype=float)
        if coeffs.shape != (num_coeffs(band_limit),):
            raise ConfigError(f"expected {num_coeffs(band_limit)} values for band limit {band_limit}, got {len(value)}", field)
        return coeffs
    if isinstance(value, dict):
        coeffs = np.zeros(num_coeffs(band_limit))
        for key, entry in value.items():
            try:
                ell, m = (int(part) for part in key.split(","))
                idx = HarmonicIndex(ell, m)
            except (ValueError, DomainError) as exc:
                raise ConfigError(f"invalid key {key!r}, expected \"ell,m\"", field) from exc
            if idx.ell > band_limit:
                raise ConfigError(f"index {key} exceeds band limit {band_limit}", field)
            coeffs[idx.flat] = float(entry)
        return coeffs
    raise ConfigError("expected a list of coefficients or an {\"ell,m\": value} object", field)

def parse_var_scale(value: Any, spec: Spectrum, field: str) -> Array:
    """
    Per-degree variances s_l: "prior" (s = C), a single number, or a list of L+1 values
    """
    if value == "prior":
        return spec.c.copy()
    if isinstance(value, (int, float)):
        return np.full(spec.band_limit + 1, float(value))
    if isinstance(value, list) and len(value) == spec.band_limit + 1:
        return np.asarray(value, dtype=float)
    raise ConfigError(f"expected \"prior\", a number or a list of {spec.band_limit + 1} values", field)

def parse_data_model(data: Optional[Dict[str, Any]], spec: Spectrum) -> DataModel:
    if not data:
        raise ConfigError("a data model is required", "data")
    band_limit = spec.band_limit
    model_type = data.get("type")
    try:
        if model_type == DataModelType.GAUSSIAN_SHIFT.value:
            mean0 = parse_coeffs(data.get("mean", {}), band_limit, "data.mean")
            return GaussianShift(mean0, parse_var_scale(data.get("var_scale", "prior"), spec, "data.var_scale"))
        if model_type == DataModelType.GAUSSIAN_MIXTURE.value:
            means = data.get("means")
            if not means:
                raise ConfigError("at least one component mean is required", "data.means")
            weights = data.get("weights", [1.0 / len(means)] * len(means))
            return GaussianMixture(
                np.asarray(weights, dtype=float),
                np.stack([parse_coeffs(mean, band_limit, f"data.means[{idx}]") for idx, mean in enumerate(means)]),
                parse_var_scale(data.get("var_scale", "prior"), spec, "data.var_scale"),
            )
        if model_type == DataModelType.EMPIRICAL.value:
            if data.get("atoms_dir"):
                atoms = read_sample_dir(data["atoms_dir"])
                if atoms.shape[1] != spec.num_coeffs:
                    raise ConfigError(f"atoms have band limit {band_limit_from_size(atoms.shape[1])}, expected {band_limit}", "data.atoms_dir")
            else:
                atom_list = data.get("atoms")
                if not atom_list:
                    raise ConfigError("at least one atom (or atoms_dir) is required", "data.atoms")
                atoms = np.stack([parse_coeffs(atom, band_limit, f"data.atoms[{idx}]") for idx, atom in enumerate(atom_list)])
            return Empirical(atoms)
    except DomainError as exc:
        raise ConfigError(str(exc), "data") from exc
    raise ConfigError(f"must be one of {[member.value for member in DataModelType]}", "data.type")
