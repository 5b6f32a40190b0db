import argparse
import os
import sys
from typing import List, Optional
import numpy as np

from spectral import SphereGrid, synthesize
from matern import sample_prior
from forward import simulate_forward
from denoisers import sample_data, exact_denoiser
from training import train_score_model, load_checkpoint, h1_error
from model_denoiser import LearnedDenoiser
from generate import generate_samples
from evaluate import run_verification, estimate_power_spectrum, format_bound_report, loss_ratio_check
from loading import (
    load_options, build_spectrum, parse_data_model, read_coeff_field, read_sample_dir, sample_file_name, write_coeff_field,
    write_grid_field, write_trajectory_dump, write_loss_history, write_spectrum_report, write_json
)
from errors import ConfigError, DomainError, TrainingDivergence, CheckFailure
from utils import RunOptions, initialize_seeds, rng_stream
from data_types import Array, Spectrum, TimeGrid
from constants import (
    ExitCode, Purpose, SPECTRUM_CI_LEVEL, SAMPLE_FILE_PREFIX, CHECKPOINT_FILE, LOSS_HISTORY_FILE, REPORT_FILE, BOUND_REPORT_FILE,
    SPECTRUM_REPORT_FILE, FORWARD_DUMP_FILE, PATH_DUMP_FILE
)

def write_samples(samples: Array, spec: Spectrum, prefix: str, options: RunOptions):
    grid = SphereGrid(spec.band_limit) if options.emit_grid else None
    for sample_id, coeffs in enumerate(samples):
        write_coeff_field(coeffs, os.path.join(options.out_dir, sample_file_name(prefix, sample_id)))
        if grid is not None:
            write_grid_field(synthesize(coeffs, grid), os.path.join(options.out_dir, sample_file_name(prefix, sample_id, grid=True)))

def cmd_sample_prior(options: RunOptions, spec: Spectrum):
    """
    Prior sample i comes from stream (PRIOR, i)
    """
    print(f"Sampling {options.n_generate} prior fields...")
    samples = np.array([sample_prior(spec, rng_stream(options.seed, Purpose.PRIOR, sample_id)) for sample_id in range(options.n_generate)])
    write_samples(samples.reshape(-1, spec.num_coeffs), spec, SAMPLE_FILE_PREFIX["prior"], options)

def cmd_forward(options: RunOptions, spec: Spectrum, input_path: Optional[str]):
    """
    Forward trajectories from the data model (or a single input field), trajectory i on stream (FORWARD, i)
    """
    grid = TimeGrid(options.T, options.M)
    if input_path:
        x0 = read_coeff_field(input_path)[None, :]
        if x0.shape[1] != spec.num_coeffs:
            raise ConfigError(f"input field does not have band limit {spec.band_limit}", "band_limit")
    else:
        x0 = sample_data(parse_data_model(options.data, spec), rng_stream(options.seed, Purpose.DATA), max(options.n_generate, 1))
    states = np.stack([
        simulate_forward(x0_sample, spec, grid, rng_stream(options.seed, Purpose.FORWARD, sample_id)).states
        for sample_id, x0_sample in enumerate(x0)
    ])
    write_trajectory_dump(states, grid.times, os.path.join(options.out_dir, FORWARD_DUMP_FILE))

def cmd_train(options: RunOptions, spec: Spectrum):
    """
    Train, then judge the model on fresh pairs: H1 error, and learned loss against the Bayes loss of the exact denoiser
    """
    grid = TimeGrid(options.T, options.M)
    data = parse_data_model(options.data, spec)
    model, loss_history, _ = train_score_model(data, spec, grid, options.train, options.seed, os.path.join(options.out_dir, CHECKPOINT_FILE))
    write_loss_history(loss_history, os.path.join(options.out_dir, LOSS_HISTORY_FILE))
    denoiser = model.as_denoiser()
    eps_sq, std_err = h1_error(denoiser, exact_denoiser(data, spec), spec, grid, data, options.n_mc, rng_stream(options.seed, Purpose.H1))
    print(f"H1 error: {eps_sq:.5g} +- {std_err:.2g}")
    loss, bayes_loss, ratio, passed = loss_ratio_check(denoiser, data, spec, grid, options.n_mc, rng_stream(options.seed, Purpose.VERIFY, 40))
    if passed is None:
        print(f"Learned loss: {loss:.5g}, Bayes loss is 0")
        return
    print(f"Learned loss: {loss:.5g}, Bayes loss: {bayes_loss:.5g}, ratio: {ratio:.4f}")
    if not passed:
        raise CheckFailure(["learned_loss"])

def load_matching_checkpoint(path: str, spec: Spectrum, grid: TimeGrid) -> LearnedDenoiser:
    model, _ = load_checkpoint(path)
    if model.band_limit != spec.band_limit:
        raise ConfigError(f"checkpoint has band limit {model.band_limit}, config has {spec.band_limit}", "band_limit")
    if model.grid.T != grid.T:
        raise ConfigError(f"checkpoint was trained with T = {model.grid.T}, config has {grid.T}", "time.T")
    if model.grid.M != grid.M:
        raise ConfigError(f"checkpoint was trained with M = {model.grid.M}, config has {grid.M}", "time.M")
    return model

def cmd_generate(options: RunOptions, spec: Spectrum, exact_score: bool, checkpoint_path: Optional[str], debug: bool):
    grid = TimeGrid(options.T, options.M)
    if exact_score:
        denoiser = exact_denoiser(parse_data_model(options.data, spec), spec)
    else:
        denoiser = load_matching_checkpoint(checkpoint_path or os.path.join(options.out_dir, CHECKPOINT_FILE), spec, grid).as_denoiser()
    print(f"Generating {options.n_generate} samples...")
    samples, paths = generate_samples(spec, grid, denoiser, options.seed, options.n_generate, return_path=debug)
    write_samples(samples, spec, SAMPLE_FILE_PREFIX["generate"], options)
    if paths is not None:
        write_trajectory_dump(paths, grid.times, os.path.join(options.out_dir, PATH_DUMP_FILE))

def cmd_verify(options: RunOptions, spec: Spectrum, params, checkpoint_path: Optional[str]):
    data = parse_data_model(options.data, spec)
    learned = load_matching_checkpoint(checkpoint_path, spec, TimeGrid(options.T, options.M)) if checkpoint_path else None
    report = run_verification(options, data, spec, params, learned, use_exact_score=learned is None)
    report["options"] = options.as_dict()
    write_json(report, os.path.join(options.out_dir, REPORT_FILE))
    if report["bound"] is not None:
        with open(os.path.join(options.out_dir, BOUND_REPORT_FILE), "w", encoding="utf-8") as bound_file:
            bound_file.write(format_bound_report(report["bound"]))
    if report["failed"]:
        raise CheckFailure(report["failed"])

def cmd_spectrum(options: RunOptions, spec: Spectrum, input_dir: Optional[str]):
    """
    Estimated spectrum of a directory of coefficient files, or of fresh prior samples, against the configured spectrum
    """
    if input_dir:
        samples = read_sample_dir(input_dir)
        if samples.shape[1] != spec.num_coeffs:
            raise ConfigError(f"samples do not have band limit {spec.band_limit}", "band_limit")
    else:
        samples = sample_prior(spec, rng_stream(options.seed, Purpose.SPECTRUM), max(options.n_generate, 1))
    c_hat, ci_lo, ci_hi = estimate_power_spectrum(samples, SPECTRUM_CI_LEVEL)
    write_spectrum_report(spec.c, c_hat, ci_lo, ci_hi, os.path.join(options.out_dir, SPECTRUM_REPORT_FILE))
    # Pass/fail over all degrees at once uses Bonferroni-corrected intervals
    _, family_lo, family_hi = estimate_power_spectrum(samples, 1 - (1 - SPECTRUM_CI_LEVEL) / len(spec.c))
    outside = [ell for ell in range(len(spec.c)) if not family_lo[ell] <= spec.c[ell] <= family_hi[ell]]
    for ell in range(len(spec.c)):
        print(f"ell={ell}: C={spec.c[ell]:.6g}, C_hat={c_hat[ell]:.6g} [{ci_lo[ell]:.6g}, {ci_hi[ell]:.6g}]")
    if outside:
        raise CheckFailure([f"spectrum_ell_{ell}" for ell in outside])

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="Master seed, unsigned 64-bit")
    common.add_argument("--out", dest="out_dir", help="Output directory")
    common.add_argument("--samples", dest="n_generate", type=int, help="Number of samples to write")
    common.add_argument("--grid", dest="emit_grid", action="store_const", const=True, help="Also write synthesized grid fields")

    parser = argparse.ArgumentParser("spherical-diffusion")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("sample-prior", parents=[common], help="Draw fields from the Matern prior")
    forward_parser = commands.add_parser("forward", parents=[common], help="Dump forward noising trajectories")
    forward_parser.add_argument("--input", help="Coefficient CSV to start from instead of the data model")
    commands.add_parser("train", parents=[common], help="Train a denoiser on simulated forward pairs")
    generate_parser = commands.add_parser("generate", parents=[common], help="Generate fields with the backward sampler")
    generate_parser.add_argument("--exact-score", action="store_true", help="Use the exact denoiser of the data model")
    generate_parser.add_argument("--checkpoint", help="Model checkpoint, defaults to the one in the output directory")
    generate_parser.add_argument("--debug", action="store_true", help="Also dump the backward paths")
    verify_parser = commands.add_parser("verify", parents=[common], help="Run the diagnostics suite")
    verify_parser.add_argument("--checkpoint", help="Check a trained model instead of the exact score")
    spectrum_parser = commands.add_parser("spectrum", parents=[common], help="Estimate the angular power spectrum")
    spectrum_parser.add_argument("--input", help="Directory of coefficient CSVs, fresh prior samples otherwise")
    return parser

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: val for key, val in vars(args).items() if key in ("seed", "out_dir", "n_generate", "emit_grid") and val is not None}
    try:
        options = load_options(args.config)
        options.update(overrides)
        options.validate()
        initialize_seeds(options.seed)
        spec, params = build_spectrum(options)
        os.makedirs(options.out_dir, exist_ok=True)

        if args.command == "sample-prior":
            cmd_sample_prior(options, spec)
        elif args.command == "forward":
            cmd_forward(options, spec, args.input)
        elif args.command == "train":
            cmd_train(options, spec)
        elif args.command == "generate":
            cmd_generate(options, spec, args.exact_score, args.checkpoint, args.debug)
        elif args.command == "verify":
            cmd_verify(options, spec, params, args.checkpoint)
        elif args.command == "spectrum":
            cmd_spectrum(options, spec, args.input)
    except (CheckFailure, TrainingDivergence) as exc:
        print(f"Error: {exc}")
        return ExitCode.CHECK_FAILURE
    except (ConfigError, DomainError) as exc:
        print(f"Config error: {exc}")
        return ExitCode.CONFIG_ERROR
    except OSError as exc:
        print(f"I/O error: {exc}")
        return ExitCode.IO_ERROR
    return ExitCode.SUCCESS

if __name__ == "__main__":
    sys.exit(main())
