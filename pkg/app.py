"""SeeClear command line: forward corruption, sampling, PSD analysis, metrics and a demo.

    python app.py --config run.cfg sample frames/lr --out out/sr --hr frames/hr
"""

import os
import sys

import click
import numpy as np
from loguru import logger

from condenser import generate_video
from diffusion import forward_marginal_sample
from errors import EXIT_OK, EXIT_USAGE, SeeClearError
from forms import load_run_config, write_run_config
from generator.clips import downscale, moving_shapes_clip
from metrics import REPORT_CSV_HEADERS, evaluate, psd_distance
from models import PatchSpectrum, SpectralState
from noise import KeyedNoise
from semantics import load_semantics
from spectral import dct2_patches, idct2_patches, psd_radial
from storage import (TENSOR_SUFFIX, load_bank, load_weights, read_frames, read_matched_frames, save_bank,
                     write_csv, write_frames, write_tensor)
from tensors import resize_bicubic

RUN_CONFIG_NAME = "run.cfg"
METRICS_CSV_NAME = "metrics.csv"
PSD_CSV_HEADERS = ["frame", "bin", "power"]


class SeeClearGroup(click.Group):
    """Click group that turns SeeClear errors into documented exit codes."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as exc:
            exc.show()
            code = EXIT_USAGE
        except click.ClickException as exc:
            exc.show()
            code = exc.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_USAGE
        except SeeClearError as exc:
            click.echo(f"Error: {exc}", err=True)
            code = exc.exit_code

        if standalone_mode:
            sys.exit(code)
        return code


def report_rows(report):
    return [dict(index=f.index, psnr=f"{f.psnr:.6f}", ssim=f"{f.ssim:.6f}", charbonnier=f"{f.charbonnier:.8f}")
            for f in report.frames]


##############################################################################
# Group


@click.group(cls=SeeClearGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Run-config file (key = value lines).")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
              help="Threads for per-frame network stages.")
@click.option("--verbose", is_flag=True, help="Log debug output to stderr.")
@click.pass_context
def cli(ctx, config_path, workers, verbose):
    """Blurring-ResShift video super-resolution engine."""

    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING")

    ctx.ensure_object(dict)
    ctx.obj["config"] = load_run_config(config_path)
    ctx.obj["workers"] = workers


##############################################################################
# Commands


@cli.command()
@click.argument("hr_dir", type=click.Path())
@click.argument("lr_dir", type=click.Path())
@click.option("--t", "step", type=int, required=True, help="Diffusion step to sample.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
def forward(ctx, hr_dir, lr_dir, step, out_dir):
    """Sample u_t ~ q(u_t | u_0, u_l) for matching HR/LR frames."""

    config = ctx.obj["config"]
    sched = config.schedule()
    if not 1 <= step <= sched.steps:
        raise click.BadParameter(f"must lie in 1..{sched.steps}", param_hint="--t")

    names, hr, lr = read_matched_frames(hr_dir, lr_dir)
    lr_up = lr if lr.shape == hr.shape else resize_bicubic(lr, hr.shape[-2:])

    p = sched.patch_size
    u0 = dct2_patches(hr, p)
    ul = dct2_patches(lr_up, p)
    state = forward_marginal_sample(SpectralState(u0.coefficients, 0), SpectralState(ul.coefficients, 0),
                                    step, sched, KeyedNoise(config.seed), frames=range(len(names)))

    pixels = idct2_patches(PatchSpectrum(state.u, p, u0.shape))
    write_frames(out_dir, pixels, names)
    for name, coefficients in zip(names, state.u):
        write_tensor(os.path.join(out_dir, os.path.splitext(name)[0] + TENSOR_SUFFIX), coefficients)
    write_run_config(os.path.join(out_dir, RUN_CONFIG_NAME), config)

    click.echo(f"wrote {len(names)} frames at t={step} to {out_dir}")


@cli.command()
@click.argument("lr_dir", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--oracle", "oracle_dir", type=click.Path(), default=None,
              help="HR frames fed to the chain as an oracle denoiser.")
@click.option("--hr", "hr_dir", type=click.Path(), default=None, help="HR frames to score against.")
@click.option("--weights", "weights_dir", type=click.Path(), default=None)
@click.option("--bank", "bank_dir", type=click.Path(file_okay=False), default=None,
              help="Memory bank directory, loaded when present and saved afterwards.")
@click.option("--tokens", "tokens_path", type=click.Path(dir_okay=False), default=None,
              help="Per-frame semantic tokens, (m, k, d) tensor file; needs --seg.")
@click.option("--seg", "seg_path", type=click.Path(dir_okay=False), default=None,
              help="Per-frame segmentation features, (m, d_p, h, w) tensor file; needs --tokens.")
@click.pass_context
def sample(ctx, lr_dir, out_dir, oracle_dir, hr_dir, weights_dir, bank_dir, tokens_path, seg_path):
    """Super-resolve a frame folder clip by clip."""

    config = ctx.obj["config"]
    sched = config.schedule()
    cfg = config.condenser_config()
    if (tokens_path is None) != (seg_path is None):
        raise click.UsageError("--tokens and --seg go together")

    names, lr = read_frames(lr_dir)
    oracle_hr = read_frames(oracle_dir, names)[1] if oracle_dir else None
    semantics = load_semantics(tokens_path, seg_path, config.seed) if tokens_path else None
    weights = load_weights(weights_dir) if weights_dir else None
    bank = None
    if bank_dir and os.path.isdir(bank_dir) and os.listdir(bank_dir):
        bank = load_bank(bank_dir)

    sr, bank = generate_video(lr, sched, cfg, seed=config.seed, weights=weights, bank=bank,
                              vocab=config.vocab(), oracle_hr=oracle_hr, semantics=semantics,
                              workers=ctx.obj["workers"])
    write_frames(out_dir, sr, names, raw=True)
    if bank_dir and bank is not None:
        save_bank(bank_dir, bank)

    reference_dir = hr_dir or oracle_dir
    if reference_dir:
        _, hr = read_frames(reference_dir, names)
        report = evaluate(sr, hr, mode="rgb", eps=config.charbonnier_eps)
        write_csv(os.path.join(out_dir, METRICS_CSV_NAME), REPORT_CSV_HEADERS, report_rows(report))
        click.echo(f"PSNR {report.psnr:.2f} dB, SSIM {report.ssim:.4f}")

    write_run_config(os.path.join(out_dir, RUN_CONFIG_NAME), config)
    click.echo(f"wrote {len(names)} frames to {out_dir}")


@cli.command()
@click.argument("frames_dir", type=click.Path())
@click.argument("out_csv", type=click.Path(dir_okay=False))
@click.option("--against", "reference_dir", type=click.Path(), default=None,
              help="Reference frames (same names) to compare spectra with.")
def psd(frames_dir, out_csv, reference_dir):
    """Radially averaged power spectra, one row per frame and bin."""

    if reference_dir:
        names, frames, references = read_matched_frames(frames_dir, reference_dir)
    else:
        names, frames = read_frames(frames_dir)
        references = None

    headers = PSD_CSV_HEADERS + (["reference_power"] if references is not None else [])
    rows, low, high = [], [], []
    for i, name in enumerate(names):
        profile = psd_radial(frames[i])
        reference = psd_radial(references[i]) if references is not None else None
        if reference is not None:
            low.append(psd_distance(profile, reference, "low"))
            high.append(psd_distance(profile, reference, "high"))

        for b, power in enumerate(profile.power):
            row = dict(frame=name, bin=b, power=f"{power:.10g}")
            if reference is not None:
                row["reference_power"] = f"{reference.power[b]:.10g}"
            rows.append(row)

    write_csv(out_csv, headers, rows)
    if references is not None:
        click.echo(f"mean log-PSD distance: low {np.mean(low):.4f}, high {np.mean(high):.4f}")
    click.echo(f"wrote spectra of {len(names)} frames to {out_csv}")


@cli.command()
@click.argument("a_dir", type=click.Path())
@click.argument("b_dir", type=click.Path())
@click.argument("out_csv", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["rgb", "y"]), default="rgb", show_default=True)
@click.pass_context
def metrics(ctx, a_dir, b_dir, out_csv, mode):
    """PSNR, SSIM and Charbonnier between two frame folders."""

    names, a, b = read_matched_frames(a_dir, b_dir)
    report = evaluate(a, b, mode=mode, eps=ctx.obj["config"].charbonnier_eps)
    write_csv(out_csv, REPORT_CSV_HEADERS, report_rows(report))
    click.echo(f"{len(names)} frames: PSNR {report.psnr:.2f} dB, SSIM {report.ssim:.4f}, "
               f"Charbonnier {report.charbonnier:.6f}")


@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--frames", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--size", type=click.IntRange(min=8), default=64, show_default=True, help="LR frame size.")
@click.pass_context
def demo(ctx, out_dir, frames, size):
    """Synthesize a moving-shapes clip and run the whole pipeline on it."""

    config = ctx.obj["config"]
    sched = config.schedule()
    cfg = config.condenser_config()

    hr = moving_shapes_clip(frames, size * cfg.upscale, seed=config.seed)
    lr = downscale(hr, cfg.upscale)
    sr, _ = generate_video(lr, sched, cfg, seed=config.seed, vocab=config.vocab(), workers=ctx.obj["workers"])

    names = write_frames(os.path.join(out_dir, "lr"), lr)
    write_frames(os.path.join(out_dir, "hr"), hr, names)
    write_frames(os.path.join(out_dir, "sr"), sr, names, raw=True)

    report = evaluate(sr, hr, mode="rgb", eps=config.charbonnier_eps)
    write_csv(os.path.join(out_dir, METRICS_CSV_NAME), REPORT_CSV_HEADERS, report_rows(report))
    write_run_config(os.path.join(out_dir, RUN_CONFIG_NAME), config)
    click.echo(f"{frames} frames {size}px -> {size * cfg.upscale}px: PSNR {report.psnr:.2f} dB, "
               f"SSIM {report.ssim:.4f}")


if __name__ == "__main__":
    cli()
