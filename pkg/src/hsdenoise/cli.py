"""Single executable exposing the full pipeline as subcommands.

Subcommands: simulate, train, denoise, evaluate, gradcheck, ksweep. All runs
are batch-style: inputs and outputs are files, every random choice is pinned
by the three named seeds in the config, and rerunning a command overwrites
its outputs bit-identically.

Exit codes: 0 success, 1 internal error (including training divergence),
2 bad input or config.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import HarnessConfig, load_config
from .cube import HsiCube, load_cube, normalize_bands, save_cube
from .errors import ConfigError, DenoiseError, DivergenceError
from .inference import denoise_cube, emit_band_image, emit_pseudocolor
from .gradcheck import DEFAULT_TOLERANCE, run_gradcheck
from .metrics import psnr, report, write_report_csv
from .model import ArchitectureSpec, init_params
from .noise import add_noise, sigma_profile
from .pipeline import augment, extract_patches
from .training import AdamState, train, write_trace_csv

#: Noise substream used for evaluation cubes, far above augmentation streams.
EVAL_STREAM = 1 << 30


def _require_cube(cfg: HarnessConfig, key: str) -> Path:
    configured = cfg[key]
    if not configured:
        raise ConfigError(f"config key {key} is required for this command")
    path = Path(configured)
    if not path.exists():
        raise FileNotFoundError(f"input cube not found: {path}")
    return path


def _load_clean(cfg: HarnessConfig) -> HsiCube:
    cube = load_cube(_require_cube(cfg, "paths.clean_cube"))
    if cfg["pipeline.normalize"]:
        cube, _ = normalize_bands(cube)
    return cube


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    clean = _load_clean(cfg)
    spec = cfg.noise_spec()
    noisy = add_noise(clean, spec)
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    noisy_path = cfg.resolve_output("paths.noisy_cube", "noisy.hsic")
    noisy_path.parent.mkdir(parents=True, exist_ok=True)
    save_cube(noisy, noisy_path)
    sigmas = sigma_profile(spec, clean.bands)
    sigma_path = out_dir / "sigma.csv"
    with open(sigma_path, "w") as fh:
        fh.write("band,sigma\n")
        for n, s in enumerate(sigmas):
            fh.write(f"{n},{float(s)!r}\n")
    print(f"wrote {noisy_path} and {sigma_path}")
    return 0


def _build_dataset(cfg: HarnessConfig, clean: HsiCube, arch: ArchitectureSpec) -> list:
    region = cfg.test_region()
    noise_spec = cfg.noise_spec()
    patches = []
    for stream, (variant, rect) in enumerate(augment(clean, cfg.augment_spec(), region)):
        noisy = add_noise(variant, noise_spec, stream=stream)
        patches.extend(
            extract_patches(
                HsiCube(noisy.data.astype(np.float32)),
                HsiCube(variant.data.astype(np.float32)),
                patch=cfg["train.patch_size"],
                stride=cfg["train.stride"],
                k_adjacent=arch.k_adjacent,
                exclude=rect,
            )
        )
    if not patches:
        raise ConfigError(
            "no training patches: check patch size, stride, and test_region"
        )
    return patches


def _train_once(cfg: HarnessConfig, clean: HsiCube, arch: ArchitectureSpec, resume=None):
    dataset = _build_dataset(cfg, clean, arch)
    if resume is not None:
        params, state, start = resume
    else:
        params = init_params(arch, cfg["seed.init"], dtype=np.float32)
        state, start = None, 0
    train_cfg = cfg.train_config()
    snapshot_fn = None
    if train_cfg.snapshot_every > 0:
        ckpt_path = cfg.resolve_output("paths.checkpoint", "model.hsck")

        def snapshot_fn(iteration, p, s):
            snap = ckpt_path.with_name(f"{ckpt_path.stem}_iter{iteration}{ckpt_path.suffix}")
            save_checkpoint(snap, arch, p, (s.m, s.v, s.t))

    return train(
        dataset,
        arch,
        params,
        train_cfg,
        cfg.opt_config(),
        snapshot_fn=snapshot_fn,
        state=state,
        start_iteration=start,
    )


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    clean = _load_clean(cfg)
    arch = cfg.arch_spec()
    resume = None
    if args.resume:
        ck_spec, ck_params, moments = load_checkpoint(args.resume, expected_spec=arch)
        if moments is None:
            raise ConfigError(f"{args.resume} has no optimizer state; cannot resume")
        m, v, t = moments
        resume = (ck_params, AdamState(m=m, v=v, t=t), t)
    result = _train_once(cfg, clean, arch, resume)
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg.resolve_output("paths.checkpoint", "model.hsck")
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    state = result.state
    save_checkpoint(ckpt_path, arch, result.params, (state.m, state.v, state.t))
    trace_path = out_dir / "loss_trace.csv"
    write_trace_csv(result.trace, trace_path)
    final = result.trace[-1][2] if result.trace else float("nan")
    print(f"wrote {ckpt_path} and {trace_path} ({len(result.trace)} iterations, final loss {final})")
    return 0


def cmd_denoise(args) -> int:
    in_path = Path(args.input)
    if not in_path.exists():
        raise FileNotFoundError(f"input cube not found: {in_path}")
    spec, params, _ = load_checkpoint(args.checkpoint)
    cube = load_cube(in_path)
    if args.normalize:
        cube, _ = normalize_bands(cube)
    result = denoise_cube(cube, spec, params, args.tile, args.overlap)
    save_cube(result, args.output)
    if args.emit_band is not None:
        pgm_path = args.emit_path or f"{args.output}.band{args.emit_band}.pgm"
        emit_band_image(result, args.emit_band, pgm_path)
        print(f"wrote {pgm_path}")
    if args.emit_bands:
        triple = tuple(int(b) for b in args.emit_bands.split(","))
        if len(triple) != 3:
            raise ConfigError(f"--emit-bands needs three band indices, got {args.emit_bands!r}")
        ppm_path = args.emit_path or f"{args.output}.ppm"
        emit_pseudocolor(result, triple, ppm_path)
        print(f"wrote {ppm_path}")
    print(f"wrote {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    for path in (args.reference, args.test):
        if not Path(path).exists():
            raise FileNotFoundError(f"input cube not found: {path}")
    ref = load_cube(args.reference)
    test = load_cube(args.test)
    rep = report(ref, test)
    write_report_csv(rep, args.output)
    angle = "na" if rep.msa is None else f"{rep.msa:.4f}"
    print(f"MPSNR {rep.mpsnr:.4f} dB, MSSIM {rep.mssim:.6f}, MSA {angle} deg")
    print(f"wrote {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    spec = ArchitectureSpec(
        k_adjacent=args.k,
        branch_channels=args.branch_channels,
        trunk_channels=args.trunk_channels,
        trunk_depth=args.trunk_depth,
        tap_layers=tuple(
            sorted({t for t in (3, 5, 7, 9) if t <= args.trunk_depth} | {args.trunk_depth})
        ),
    )
    rep = run_gradcheck(
        spec,
        extent=args.extent,
        seed=args.seed,
        samples_per_tensor=args.samples,
        step=args.step,
        corrupt_backward=args.corrupt_backward,
    )
    for check in rep.checks:
        print(f"{check.name}: max_rel_err={check.rel_err:.3e}")
    verdict = "PASS" if rep.max_rel_err < args.tolerance else "FAIL"
    print(f"max_rel_err={rep.max_rel_err:.3e} tolerance={args.tolerance:.1e} {verdict}")
    return 0 if verdict == "PASS" else 1


def _region_view(cube: HsiCube, region) -> HsiCube:
    if region is None:
        return cube
    return HsiCube(cube.data[:, region.y0 : region.y1, region.x0 : region.x1].copy())


def _mean_psnr(ref: HsiCube, test: HsiCube) -> float:
    return float(np.mean([psnr(ref.data[n], test.data[n]) for n in range(ref.bands)]))


def cmd_ksweep(args) -> int:
    cfg = load_config(args.config)
    k_values = [int(k) for k in args.k_list.split(",")]
    clean = _load_clean(cfg)
    region = cfg.test_region()
    noisy_eval = add_noise(clean, cfg.noise_spec(), stream=EVAL_STREAM)
    ref = _region_view(clean, region)
    noisy_ref = _region_view(noisy_eval, region)
    noisy_mpsnr = _mean_psnr(ref, noisy_ref)
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in k_values:
        arch = ArchitectureSpec(
            k_adjacent=k,
            branch_channels=cfg["arch.branch_channels"],
            trunk_channels=cfg["arch.trunk_channels"],
            trunk_depth=cfg["arch.trunk_depth"],
            tap_layers=cfg.arch_spec().tap_layers,
            multi_scale=cfg["arch.multi_scale"],
            multi_level=cfg["arch.multi_level"],
            branch_relu=cfg["arch.branch_relu"],
        )
        result = _train_once(cfg, clean, arch)
        denoised = denoise_cube(
            HsiCube(noisy_eval.data.astype(np.float32)), arch, result.params
        )
        mpsnr = _mean_psnr(ref, _region_view(denoised, region))
        rows.append((k, mpsnr))
        print(f"K={k}: MPSNR {mpsnr:.4f} dB (noisy {noisy_mpsnr:.4f} dB)")
    csv_path = out_dir / "ksweep.csv"
    with open(csv_path, "w") as fh:
        fh.write("k,mpsnr,noisy_mpsnr\n")
        for k, mpsnr in rows:
            fh.write(f"{k},{mpsnr!r},{noisy_mpsnr!r}\n")
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsdenoise",
        description="Spatial-spectral residual CNN denoiser for hyperspectral cubes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="add simulated noise to a clean cube")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a model from a clean cube")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a cube with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--normalize", action="store_true", help="min-max normalize bands first")
    p.add_argument("--tile", type=int, help="tile size for memory-bounded processing")
    p.add_argument("--overlap", type=int, help="tile overlap (default: receptive radius)")
    p.add_argument("--emit-band", type=int, help="also write this band as 16-bit PGM")
    p.add_argument("--emit-bands", help="R,G,B band indices for a 16-bit PPM")
    p.add_argument("--emit-path", help="output path for the emitted image")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="quality report of test cube vs reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("output", help="CSV report path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    p.add_argument("--k", type=int, default=4, help="adjacent band count (default 4)")
    p.add_argument("--extent", type=int, default=8, help="patch H=W (default 8)")
    p.add_argument("--branch-channels", type=int, default=20)
    p.add_argument("--trunk-channels", type=int, default=60)
    p.add_argument("--trunk-depth", type=int, default=9)
    p.add_argument("--samples", type=int, default=16, help="probes per tensor")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument(
        "--corrupt-backward",
        action="store_true",
        help="negative control: corrupt one gradient tensor and expect FAIL",
    )
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ksweep", help="train/evaluate across adjacent-band counts")
    p.add_argument("--config", required=True)
    p.add_argument("--k-list", required=True, help="comma-separated even K values")
    p.set_defaults(func=cmd_ksweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError, DenoiseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
