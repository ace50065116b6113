"""Command-line entry points.

Every run writes a manifest (config hash, seed, versions) next to its
outputs, so results are reproducible from the manifest alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import fem, io, trainer
from .io import ConfigError


def _write_result(result, outdir: Path, config_path, extra_manifest=None) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "iterations": len(result.history),
        "seed": result.config.seed,
        "trainer": {k: v for k, v in dataclasses.asdict(result.config).items() if k != "oc"},
    }
    if result.history:
        metadata["final"] = result.history[-1]
    ckpt = io.Checkpoint(result.problem, result.disp_net, result.dens_net,
                         result.space, metadata)
    ckpt_path = outdir / "checkpoint.ftc"
    io.save_checkpoint(ckpt, ckpt_path)
    io.export_history(result.history, outdir / "history.jsonl")
    field = result.density_field()
    q = None if result.space is None else 0.5 * (result.space.lo + result.space.hi)
    grid = fem.rasterize(field, result.problem.grid_dims, result.problem.domain, q=q)
    if result.problem.dim == 2:
        io.export_density_pgm(grid, outdir / "density.pgm")
    else:
        io.export_density_raw(grid, result.problem.domain, outdir / "density.f32")
    io.write_manifest(outdir / "manifest.json", config_path, result.config.seed,
                      extra_manifest)
    return ckpt_path


def cmd_optimize(args) -> int:
    cfg = io.load_config(args.config)
    result = trainer.optimize(cfg.problem, cfg.trainer)
    path = _write_result(result, Path(args.out or cfg.output), args.config)
    print(f"wrote {path}")
    return 0


def cmd_train_space(args) -> int:
    cfg = io.load_config(args.config)
    if cfg.space is None:
        raise ConfigError(f"{args.config}: train-space needs a `space:` section")
    result = trainer.train_solution_space(cfg.problem, cfg.space, cfg.trainer)
    path = _write_result(result, Path(args.out or cfg.output), args.config)
    print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = io.load_checkpoint(args.checkpoint)
    from .density import DensityField

    field = DensityField(ckpt.dens_net, ckpt.problem.domain,
                         holes=ckpt.problem.domain.excluded,
                         q_range=None if ckpt.space is None else (ckpt.space.lo, ckpt.space.hi))
    grid_dims = _parse_res(args.res) if args.res else ckpt.problem.grid_dims
    q = args.q if ckpt.space is not None else None
    if args.q is not None and ckpt.space is None:
        raise ConfigError("--q given but the checkpoint has no solution-space parameter")
    grid = fem.rasterize(field, grid_dims, ckpt.problem.domain, q=q)
    print(f"volume = {grid.mean():.4f}")
    print(f"binariness = {float(np.mean(grid * (1.0 - grid))):.4f}")
    if args.fem:
        problem = ckpt.problem.with_grid(grid_dims)
        if q is not None and ckpt.space.kind == "force_location":
            problem = dataclasses.replace(problem, loads=ckpt.space.loads_for(q, problem))
        model = fem.build_model(problem.domain, grid_dims, problem.bcs,
                                problem.loads, problem.material)
        u = fem.assemble_solve(model, grid.reshape(-1))
        print(f"fem_compliance = {float(model.load_vector @ u):.6g}")
    if args.out:
        if len(grid_dims) == 2:
            io.export_density_pgm(grid, args.out)
        else:
            io.export_density_raw(grid, ckpt.problem.domain, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_fem_opt(args) -> int:
    cfg = io.load_config(args.config)
    problem = cfg.problem
    model = fem.build_model(problem.domain, problem.grid_dims, problem.bcs,
                            problem.loads, problem.material)
    rho, history = fem.simp_fem_optimize(model, problem.target_volume)
    outdir = Path(args.out or cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = rho.reshape(problem.grid_dims)
    if problem.dim == 2:
        io.export_density_pgm(grid, outdir / "fem_density.pgm")
    else:
        io.export_density_raw(grid, problem.domain, outdir / "fem_density.f32")
    io.export_history(history, outdir / "fem_history.jsonl")
    io.write_manifest(outdir / "fem_manifest.json", args.config, cfg.trainer.seed)
    print(f"fem compliance = {history[-1]['compliance']:.6g} "
          f"volume = {history[-1]['volume']:.4f} iterations = {len(history)}")
    return 0


def cmd_ablate(args) -> int:
    cfg = io.load_config(args.config)
    tcfg = cfg.trainer
    if args.mode == "naive":
        tcfg = dataclasses.replace(tcfg, ablation="naive_gradient")
    elif args.mode == "no_filter":
        tcfg = dataclasses.replace(tcfg, ablation="no_filter")
    elif args.mode in ("relu", "fourier"):
        tcfg = dataclasses.replace(tcfg, activation=args.mode)
    result = trainer.optimize(cfg.problem, tcfg)
    outdir = Path(args.out or cfg.output) / f"ablate_{args.mode}"
    path = _write_result(result, outdir, args.config, {"ablation_mode": args.mode})
    print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.checkpoint, port=args.port)
    return 0


def _parse_res(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--res must look like 300x100, got {text!r}") from None
    if not dims or any(d <= 0 for d in dims):
        raise ConfigError(f"--res entries must be positive, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldtopo",
                                     description="mesh-free topology optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run topology optimization from a config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: config's output field)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("train-space", help="train a solution space over a parameter range")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_space)

    p = sub.add_parser("eval", help="rasterize a checkpoint and report volume")
    p.add_argument("checkpoint")
    p.add_argument("--q", type=float, help="solution-space parameter value")
    p.add_argument("--res", help="grid resolution, e.g. 300x100")
    p.add_argument("--fem", action="store_true", help="also report FEM compliance")
    p.add_argument("--out", help="export the rasterized density here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fem-opt", help="classical FEM SIMP baseline")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fem_opt)

    p = sub.add_parser("ablate", help="run an ablation variant")
    p.add_argument("config")
    p.add_argument("--mode", required=True, choices=["naive", "no_filter", "relu", "fourier"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="serve a solution-space checkpoint over HTTP")
    p.add_argument("checkpoint")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
