"""Command-line surface: bake, gen-data, train-codec, train, sample, render, eval.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
Every failure prints a single machine-parseable line to stderr:
``error: code=<n> kind=<ExceptionName> msg=<message>``. Logs go to stderr;
machine outputs go to files only.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import config as cfgmod
from . import tensorio
from .codec import CodecError, LosslessCodec, load_codec, save_codec
from .conditioning import ConditioningError
from .errors import NumericError
from .geometry import MeshError, load_obj, normalize_mesh
from .grids import GridError, ImageGrid
from .rasterizer import Camera, RasterError, bake_position_map, render_view
from .schedule import ScheduleError
from .synthdata import SynthError, TypeLabel, build_dataset

DATA_ERRORS = (
    FileNotFoundError, IsADirectoryError, PermissionError,
    MeshError, GridError, RasterError, SynthError, CodecError,
    ConditioningError, ScheduleError, tensorio.TensorFormatError,
    json.JSONDecodeError, KeyError, ValueError, OSError,
)


def _fail(code: int, exc: BaseException) -> None:
    msg = str(exc).replace("\n", " ")
    click.echo(f"error: code={code} kind={type(exc).__name__} msg={msg}", err=True)
    sys.exit(code)


def cli_guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except cfgmod.ConfigError as exc:
            _fail(2, exc)
        except NumericError as exc:
            _fail(4, exc)
        except DATA_ERRORS as exc:
            _fail(3, exc)
    return wrapper


def _load_cfg(config_path, overrides):
    cfg = cfgmod.load_config(config_path)
    return cfgmod.apply_overrides(cfg, overrides or [])


def _maybe_echo(cfg, flag: bool):
    if flag:
        click.echo(cfgmod.echo(cfg), nl=False)


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="JSON config file; flags override its values.")
set_option = click.option(
    "--set", "overrides", multiple=True, metavar="KEY=VALUE",
    help="Override one config value, e.g. --set train.steps=500.")
print_config_option = click.option(
    "--print-config", is_flag=True, help="Echo the effective config to stdout.")


@click.group(name="uvtex")
def cli():
    """UV texture synthesis pipeline."""


def main(argv=None):
    """Entry point with uniform one-line error reporting.

    Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
    """
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        _fail(2, exc)
    except click.ClickException as exc:
        _fail(exc.exit_code or 1, exc)
    except click.exceptions.Abort:
        sys.exit(130)
    sys.exit(0)


@cli.command()
@click.option("--mesh", "mesh_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="OBJ mesh (v/vt/f).")
@click.option("--resolution", default=64, show_default=True, help="UV map resolution.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for position/mask maps.")
@click.option("--normalize/--no-normalize", default=True, show_default=True,
              help="Center and scale the mesh into [-1,1] before baking.")
@click.option("--threads", default=1, show_default=True)
@cli_guard
def bake(mesh_path, resolution, out_dir, normalize, threads):
    """Bake a mesh's surface positions and coverage mask into UV space."""
    mesh = load_obj(mesh_path)
    if normalize:
        mesh, _ = normalize_mesh(mesh)
    position, mask = bake_position_map(mesh, resolution, threads=threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensorio.save_tensor(out / "position.uvpt", position.data)
    tensorio.save_tensor(out / "mask.uvpt", mask.data)
    tensorio.save_png(out / "position.png", position)
    tensorio.save_png(out / "mask.png", mask)
    click.echo(f"baked {resolution}x{resolution} maps to {out}", err=True)


@cli.command("gen-data")
@config_option
@set_option
@print_config_option
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", default=None, type=int, help="Sample count (overrides config).")
@click.option("--seed", default=None, type=int, help="Master seed (overrides config).")
@click.option("--threads", default=None, type=int)
@cli_guard
def gen_data(config_path, overrides, print_config, out_dir, n, seed, threads):
    """Generate the procedural garment dataset and its manifest."""
    cfg = _load_cfg(config_path, overrides)
    if n is not None:
        cfg["data"]["n"] = n
    if seed is not None:
        cfg["data"]["seed"] = seed
    if threads is not None:
        cfg["data"]["threads"] = threads
    _maybe_echo(cfg, print_config)
    d = cfg["data"]
    manifest = build_dataset(
        d["n"], out_dir, seed=d["seed"], resolution=d["resolution"],
        include_distractor=d["include_distractor"], previews=d["previews"],
        threads=d["threads"])
    click.echo(f"wrote {d['n']} samples, manifest {manifest}", err=True)


@cli.command("train-codec")
@config_option
@set_option
@print_config_option
@click.option("--dataset", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Dataset manifest.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--threads", default=1, show_default=True)
@cli_guard
def train_codec_cmd(config_path, overrides, print_config, manifest_path, out_dir, threads):
    """Train the learned codec; writes checkpoint, loss log, loss curve."""
    from .codec import evaluate_codec, train_codec
    from .report import save_loss_curve

    cfg = _load_cfg(config_path, overrides)
    _maybe_echo(cfg, print_config)
    torch.set_num_threads(max(1, threads))
    codec_cfg = cfgmod.codec_config(cfg)
    if codec_cfg.variant == "lossless":
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_codec(LosslessCodec(codec_cfg), out / "codec.uvpc")
        click.echo(f"wrote lossless codec to {out / 'codec.uvpc'}", err=True)
        return
    codec, log = train_codec(manifest_path, codec_cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_codec(codec, out / "codec.uvpc")
    with open(out / "codec_loss.jsonl", "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    save_loss_curve(log, out / "codec_loss.png")
    psnrs = evaluate_codec(codec, manifest_path)
    (out / "codec_eval.json").write_text(
        json.dumps(psnrs, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    click.echo(f"codec holdout psnr: {psnrs}", err=True)


@cli.command()
@config_option
@set_option
@print_config_option
@click.option("--dataset", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--codec", "codec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--steps", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--threads", default=None, type=int, help="1 = deterministic mode.")
@click.option("--no-position-map", is_flag=True,
              help="Ablation: zero the position conditioning block.")
@click.option("--no-type-module", is_flag=True,
              help="Ablation: drop the class embedding, keep plain time embedding.")
@cli_guard
def train(config_path, overrides, print_config, manifest_path, codec_path, out_dir,
          steps, seed, threads, no_position_map, no_type_module):
    """Train the denoiser; writes checkpoints, loss log, loss curve."""
    from .diffusion import train as train_fn
    from .report import save_loss_curve

    cfg = _load_cfg(config_path, overrides)
    if steps is not None:
        cfg["train"]["steps"] = steps
    if seed is not None:
        cfg["train"]["seed"] = seed
    if threads is not None:
        cfg["train"]["threads"] = threads
    if no_position_map:
        cfg["model"]["use_position_map"] = False
    if no_type_module:
        cfg["model"]["use_type_module"] = False
    _maybe_echo(cfg, print_config)
    codec = load_codec(codec_path)
    model_cfg = cfgmod.model_config(cfg)
    if model_cfg.latent_channels != codec.latent_channels:
        raise cfgmod.ConfigError(
            f"model.latent_channels={model_cfg.latent_channels} does not match "
            f"codec latent channels {codec.latent_channels}")
    _, log = train_fn(manifest_path, codec, model_cfg, cfgmod.train_config(cfg),
                      out_dir=out_dir)
    save_loss_curve(log, Path(out_dir) / "loss_curve.png")
    click.echo(f"trained {cfg['train']['steps']} steps -> {out_dir}", err=True)


def _load_grid(path, semantics):
    path = Path(path)
    if path.suffix == ".png":
        return tensorio.load_png(path, semantics)
    return ImageGrid(tensorio.load_tensor(path), semantics)


@cli.command("sample")
@config_option
@set_option
@print_config_option
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codec", "codec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Reference image (.uvpt or .png).")
@click.option("--position", required=True, type=click.Path(exists=True, dir_okay=False),
              help="UV position map (.uvpt).")
@click.option("--mask", required=True, type=click.Path(exists=True, dir_okay=False),
              help="UV mask (.uvpt or .png).")
@click.option("--label", required=True,
              type=click.Choice([l.value for l in TypeLabel], case_sensitive=False))
@click.option("--seed", default=None, type=int)
@click.option("--steps", default=None, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--threads", default=1, show_default=True)
@cli_guard
def sample_cmd(config_path, overrides, print_config, checkpoint, codec_path, reference,
               position, mask, label, seed, steps, out_dir, threads):
    """Generate a UV texture from a reference image and baked maps."""
    from .diffusion import load_checkpoint
    from .sampler import sample
    from .schedule import NoiseSchedule

    cfg = _load_cfg(config_path, overrides)
    if seed is not None:
        cfg["sample"]["seed"] = seed
    if steps is not None:
        cfg["sample"]["steps"] = steps
    _maybe_echo(cfg, print_config)
    torch.set_num_threads(max(1, threads))
    codec = load_codec(codec_path)
    net, meta = load_checkpoint(checkpoint)
    schedule = NoiseSchedule(
        cfg["train"]["timesteps"], cfg["train"]["beta_start"], cfg["train"]["beta_end"])
    sample_cfg = cfgmod.sample_config(cfg)
    texture = sample(
        _load_grid(reference, "rgb"), _load_grid(position, "xyz"),
        _load_grid(mask, "mask"), TypeLabel.from_name(label),
        net, codec, schedule, sample_cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensorio.save_tensor(out / "texture.uvpt", texture.data)
    tensorio.save_png(out / "texture.png", texture)
    sidecar = {
        "label": label,
        "seed": sample_cfg.seed,
        "steps": sample_cfg.steps,
        "eta": sample_cfg.eta,
        "ancestral": sample_cfg.ancestral,
        "background_fill": sample_cfg.background_fill,
        "checkpoint": str(checkpoint),
        "checkpoint_hash": meta.get("content_hash"),
    }
    (out / "texture.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    click.echo(f"sampled texture -> {out / 'texture.uvpt'}", err=True)


@cli.command()
@click.option("--mesh", "mesh_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--texture", required=True, type=click.Path(exists=True, dir_okay=False),
              help="UV texture (.uvpt or .png).")
@click.option("--alpha", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Alpha/coverage mask; defaults to fully opaque.")
@click.option("--view", default="front", show_default=True,
              type=click.Choice(["front", "back"]))
@click.option("--resolution", default=256, show_default=True)
@click.option("--normalize/--no-normalize", default=True, show_default=True)
@click.option("--background", default="0.25,0.25,0.28", show_default=True,
              help="Background color r,g,b in [0,1].")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@cli_guard
def render(mesh_path, texture, alpha, view, resolution, normalize, background, out_path):
    """Render a textured mesh from the front or back orthographic view."""
    mesh = load_obj(mesh_path)
    if normalize:
        mesh, _ = normalize_mesh(mesh)
    tex = _load_grid(texture, "rgb")
    if alpha is not None:
        alpha_grid = _load_grid(alpha, "mask")
    else:
        alpha_grid = ImageGrid.constant(tex.height, tex.width, 1.0, "mask")
    bg = tuple(float(x) for x in background.split(","))
    if len(bg) != 3:
        raise cfgmod.ConfigError("background must be r,g,b")
    view_img = render_view(mesh, tex, alpha_grid, Camera(view), resolution, bg)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    tensorio.save_png(out, view_img)
    click.echo(f"rendered {view} view -> {out}", err=True)


@cli.command("eval")
@config_option
@set_option
@print_config_option
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codec", "codec_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", "n_eval", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--figures/--no-figures", default=None)
@click.option("--threads", default=1, show_default=True)
@cli_guard
def eval_cmd(config_path, overrides, print_config, checkpoint, codec_path,
             manifest_path, out_dir, n_eval, seed, figures, threads):
    """Evaluate a checkpoint on held-out samples; writes report + figures."""
    from .diffusion import load_checkpoint
    from .evalrun import run_eval
    from .schedule import NoiseSchedule

    cfg = _load_cfg(config_path, overrides)
    if n_eval is not None:
        cfg["eval"]["n_eval"] = n_eval
    if seed is not None:
        cfg["eval"]["seed"] = seed
    if figures is not None:
        cfg["eval"]["figures"] = figures
    _maybe_echo(cfg, print_config)
    torch.set_num_threads(max(1, threads))
    codec = load_codec(codec_path)
    net, _ = load_checkpoint(checkpoint)
    schedule = NoiseSchedule(
        cfg["train"]["timesteps"], cfg["train"]["beta_start"], cfg["train"]["beta_end"])
    e = cfg["eval"]
    report = run_eval(
        net, manifest_path, codec, schedule, out_dir=out_dir,
        n_eval=e["n_eval"], seed=e["seed"], sample_steps=e["sample_steps"],
        attention_t=e["attention_t"], figures=e["figures"],
        background_fill=cfg["sample"]["background_fill"])
    click.echo(
        f"eval: class_match={report.class_match_rate:.3f} "
        f"seam={report.seam_mean:.4f} patch={report.patch_stats:.4f}", err=True)


if __name__ == "__main__":
    main()
