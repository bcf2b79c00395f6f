"""Command-line front end.

Subcommands: ``phantom`` (synthetic ground truth and coil maps), ``mask``
(sampling patterns), ``recon`` (reconstruction with manifest, metrics CSV,
and figures), ``eval`` (NRMSE reports), and ``dicteval`` (dictionary
representation-error study).  All file I/O uses the json+bin container
format; every command is deterministic under a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .containers import read_mask, read_raw, read_tensor, write_tensor
from .dictlearn import init_dictionary, nsre, save_dictionary, soup_bcd
from .model import (
    Decomposition,
    DynamicSequence,
    KtSpaceData,
    MetricsTrace,
    SamplingMask,
    nrmse,
    per_frame_nrmse,
)
from .patches import PatchConfig, extract_patches
from .phantom import (
    default_acceptance_spec,
    load_phantom_spec,
    make_coil_maps,
    make_phantom,
    save_phantom_spec,
)
from .recon import (
    ReconConfig,
    run_dinokat,
    run_lassi,
    run_lps_baseline,
)
from .sensing import (
    make_cartesian_mask,
    make_operator,
    make_pseudoradial_mask,
    zerofill_baseline,
)
from .shrinkage import ShrinkageSpec

__all__ = ["main"]


def _int_tuple(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated integers")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad {what}: {exc}") from exc


def _parse_p(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",")]


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lassi",
        description="Dynamic image reconstruction from undersampled k-t space data",
    )
    parser.add_argument("--version", action="version", version=f"lassi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dynamic phantom")
    p.add_argument("--spec", help="phantom spec JSON (defaults to the built-in acceptance phantom)")
    p.add_argument("--out", required=True, help="output container base path")
    p.add_argument("--coils", type=int, default=0, help="also write this many simulated coil maps")
    p.add_argument("--coils-out", help="coil maps output base path (default <out>_coils)")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", help="generate a k-t sampling mask")
    p.add_argument("--pattern", choices=["cartesian", "radial"], required=True)
    p.add_argument("--accel", type=float, help="acceleration factor (cartesian)")
    p.add_argument("--spokes", type=int, help="spokes per frame (radial)")
    p.add_argument("--shape", required=True, help="Nx,Ny,Nt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("recon", help="reconstruct from undersampled k-t space data")
    p.add_argument("--method", choices=["lassi", "dinokat", "lps", "zerofill"], default="lassi")
    p.add_argument("--shrink", choices=["svt", "hard", "schatten", "optshrink"], default="svt")
    p.add_argument("--p", type=_parse_p, default=0.5, help="Schatten exponent (1/2 or 2/3)")
    p.add_argument("--lambdaL", type=float, default=0.35)
    p.add_argument("--lambdaS", type=float, default=0.04)
    p.add_argument("--lambdaZ", type=float, default=0.03)
    p.add_argument("--atom-rank", type=int, default=1)
    p.add_argument("--rankL", type=int, default=1, help="output rank for optshrink")
    p.add_argument("--patch", default="8,8,5")
    p.add_argument("--stride", default="2,2,1")
    p.add_argument("--natoms", type=int, default=320)
    p.add_argument("--outer", type=int, default=50)
    p.add_argument("--dict-sweeps", type=int, default=1)
    p.add_argument("--prox-iters", type=int, default=5)
    p.add_argument("--bound", type=float, default=None, help="sparse-code magnitude bound a")
    p.add_argument("--step", type=float, default=None, help="gradient step (default 0.99/||A||^2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", required=True,
                   help="k-t measurements, or a ground-truth sequence to undersample retrospectively")
    p.add_argument("--mask", required=True)
    p.add_argument("--coils", help="coil maps container")
    p.add_argument("--init-xs", help="initialize the (dictionary-)sparse component from this reconstruction")
    p.add_argument("--ref", help="reference for the NRMSE trace (defaults to --data when it is a sequence)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--from-manifest", help="re-run the command recorded in a manifest")
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("eval", help="NRMSE of a reconstruction against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--roi", help="x0,x1,y0,y1 inclusive box applied to all frames")
    p.add_argument("--magnitude", action="store_true", help="compare magnitude images")
    p.add_argument("--per-frame-out", help="write per-frame NRMSE CSV (and figure) here")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dicteval", help="dictionary representation error study")
    p.add_argument("--data", required=True, help="dynamic sequence to learn on")
    p.add_argument("--patch", default="8,8,5")
    p.add_argument("--stride", default="2,2,1")
    p.add_argument("--natoms", type=int, default=320)
    p.add_argument("--ranks", type=_int_list, default=[1, 2, 3, 4, 5])
    p.add_argument("--lambdas", type=_float_list, required=True)
    p.add_argument("--sweeps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_dicteval)

    return parser


def cmd_phantom(args) -> int:
    spec = load_phantom_spec(args.spec) if args.spec else default_acceptance_spec()
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    seq = make_phantom(spec)
    write_tensor(seq, args.out)
    save_phantom_spec(spec, args.out + "_spec.json")
    print(f"phantom {spec.shape[0]}x{spec.shape[1]}x{spec.shape[2]} -> {args.out}")
    if args.coils > 0:
        coils_out = args.coils_out or args.out + "_coils"
        maps = make_coil_maps(spec.shape[0], spec.shape[1], args.coils, seed=spec.seed)
        write_tensor(maps, coils_out, kind="coilmaps")
        print(f"coil maps ({args.coils}) -> {coils_out}")
    if not args.no_figures:
        from .report import save_frame_montage

        save_frame_montage(seq, args.out + "_frames.png")
    return 0


def cmd_mask(args) -> int:
    nx, ny, nt = _int_tuple(args.shape, 3, "--shape")
    if args.pattern == "cartesian":
        if args.accel is None:
            raise ValueError("--accel is required for cartesian masks")
        mask = make_cartesian_mask(nx, ny, nt, args.accel, seed=args.seed)
    else:
        if args.spokes is None:
            raise ValueError("--spokes is required for radial masks")
        mask = make_pseudoradial_mask(nx, ny, nt, args.spokes, seed=args.seed)
    write_tensor(mask, args.out)
    print(f"achieved acceleration: {mask.acceleration:.4f}")
    return 0


def _load_measurements(args, mask: SamplingMask, op):
    """Return (KtSpaceData, reference or None, data peak)."""
    obj = read_tensor(args.data)
    ref = None
    if isinstance(obj, DynamicSequence):
        if obj.shape != mask.shape:
            raise ValueError(f"data shape {obj.shape} does not match mask {mask.shape}")
        d = op.forward(obj)
        ref = obj
    elif isinstance(obj, np.ndarray) and obj.ndim == 4:
        d = KtSpaceData(obj, mask)
    else:
        raise ValueError(f"--data must hold a dynamic sequence or k-t samples: {args.data}")
    if args.ref:
        ref = read_tensor(args.ref)
        if not isinstance(ref, DynamicSequence):
            raise ValueError(f"--ref must hold a dynamic sequence: {args.ref}")
    return d, ref


def cmd_recon(args) -> int:
    if args.from_manifest:
        with open(args.from_manifest, "r", encoding="ascii") as fh:
            manifest = json.load(fh)
        stored = list(manifest["argv"])
        if "--from-manifest" in stored:
            raise ValueError("stored manifest argv must not itself replay a manifest")
        stored = _replace_flag(stored, "--out", args.out)
        replay = build_parser().parse_args(["recon"] + stored)
        return cmd_recon(replay)

    start = time.perf_counter()
    mask = read_mask(args.mask)
    coil_maps = None
    if args.coils:
        coil_maps = read_tensor(args.coils)
        if isinstance(coil_maps, DynamicSequence):
            coil_maps = coil_maps.data
    op = make_operator(mask, coil_maps)
    d, ref = _load_measurements(args, mask, op)

    init_xs = None
    if args.init_xs:
        init_xs = read_tensor(args.init_xs)
        if not isinstance(init_xs, DynamicSequence):
            raise ValueError(f"--init-xs must hold a dynamic sequence: {args.init_xs}")

    os.makedirs(args.out, exist_ok=True)
    outputs: dict[str, str] = {}

    def save(name: str, obj, **kw):
        base = os.path.join(args.out, name)
        if name == "dictionary":
            save_dictionary(obj, base)
        else:
            write_tensor(obj, base, **kw)
        outputs[name] = base

    trace = MetricsTrace()
    dictionary = None
    certified = True

    if args.method == "zerofill":
        x = zerofill_baseline(d, op)
        save("x", x)
        decomp = None
    elif args.method == "lps":
        init = None
        if init_xs is not None:
            init = Decomposition(DynamicSequence.zeros(mask.shape), init_xs)
        decomp, trace = run_lps_baseline(
            d, op, args.lambdaL, args.lambdaS,
            n_iters=args.outer * max(args.prox_iters, 1),
            step=args.step, init=init, ref=ref, return_trace=True,
        )
        x = decomp.x
        save("xL", decomp.xl)
        save("xS", decomp.xs)
        save("x", x)
    else:
        shrink = _build_shrinkage(args)
        cfg = ReconConfig(
            lam_l=args.lambdaL, lam_s=args.lambdaS, lam_z=args.lambdaZ,
            a=args.bound, atom_rank=args.atom_rank, shrinkage=shrink,
            penalty="l0", step=args.step, outer_iters=args.outer,
            dict_sweeps=args.dict_sweeps, prox_iters=args.prox_iters,
            seed=args.seed,
            patch=PatchConfig(
                _int_tuple(args.patch, 3, "--patch"),
                _int_tuple(args.stride, 3, "--stride"),
            ),
            n_atoms=args.natoms,
        )
        if args.method == "lassi":
            init = None
            if init_xs is not None:
                init = Decomposition(DynamicSequence.zeros(mask.shape), init_xs)
            result = run_lassi(d, op, cfg, init=init, ref=ref)
            decomp, dictionary, _, trace = result
            x = decomp.x
            save("xL", decomp.xl)
            save("xS", decomp.xs)
            save("x", x)
            save("dictionary", dictionary)
        else:
            result = run_dinokat(d, op, cfg, x0=init_xs, ref=ref)
            x, dictionary, _, trace = result
            save("x", x)
            save("dictionary", dictionary)
        certified = trace.objective_certified

    metrics_path = os.path.join(args.out, "metrics.csv")
    trace.to_csv(metrics_path)
    outputs["metrics"] = metrics_path

    if not args.no_figures:
        from .report import save_frame_montage, save_trace_figure

        if len(trace):
            save_trace_figure(trace, os.path.join(args.out, "convergence.png"))
        save_frame_montage(x, os.path.join(args.out, "frames.png"), ref=ref)

    manifest = {
        "tool": "lassi",
        "version": __version__,
        "command": "recon",
        "argv": _recon_argv(args),
        "method": args.method,
        "seed": args.seed,
        "inputs": {"data": args.data, "mask": args.mask, "coils": args.coils,
                   "init_xs": args.init_xs, "ref": args.ref},
        "outputs": outputs,
        "achieved_acceleration": mask.acceleration,
        "data_peak": float(np.max(np.abs(x.data))),
        "objective_certified": certified,
        "clip_count": trace.clip_count,
        "wall_time_s": time.perf_counter() - start,
    }
    if ref is not None:
        manifest["final_nrmse"] = nrmse(x, ref)
    with open(os.path.join(args.out, "run_manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    msg = f"{args.method}: wrote {args.out} (acceleration {mask.acceleration:.2f}"
    if ref is not None:
        msg += f", NRMSE {manifest['final_nrmse']:.6f}"
    print(msg + ")")
    return 0


def _build_shrinkage(args) -> ShrinkageSpec:
    if args.shrink == "schatten":
        return ShrinkageSpec.schatten(args.p, 0.0)
    if args.shrink == "optshrink":
        return ShrinkageSpec.optshrink(args.rankL)
    if args.shrink == "hard":
        return ShrinkageSpec.hard(0.0)
    return ShrinkageSpec.svt(0.0)


def _recon_argv(args) -> list[str]:
    argv = [
        "--method", args.method, "--shrink", args.shrink, "--p", repr(args.p),
        "--lambdaL", repr(args.lambdaL), "--lambdaS", repr(args.lambdaS),
        "--lambdaZ", repr(args.lambdaZ), "--atom-rank", str(args.atom_rank),
        "--rankL", str(args.rankL), "--patch", args.patch, "--stride", args.stride,
        "--natoms", str(args.natoms), "--outer", str(args.outer),
        "--dict-sweeps", str(args.dict_sweeps), "--prox-iters", str(args.prox_iters),
        "--seed", str(args.seed), "--data", args.data, "--mask", args.mask,
        "--out", args.out,
    ]
    if args.bound is not None:
        argv += ["--bound", repr(args.bound)]
    if args.step is not None:
        argv += ["--step", repr(args.step)]
    if args.coils:
        argv += ["--coils", args.coils]
    if args.init_xs:
        argv += ["--init-xs", args.init_xs]
    if args.ref:
        argv += ["--ref", args.ref]
    if args.no_figures:
        argv += ["--no-figures"]
    return argv


def _replace_flag(argv: list[str], flag: str, value: str) -> list[str]:
    out = list(argv)
    if flag in out:
        idx = out.index(flag)
        out[idx + 1] = value
    else:
        out += [flag, value]
    return out


def cmd_eval(args) -> int:
    ref = read_tensor(args.ref)
    recon = read_tensor(args.recon)
    if not isinstance(ref, DynamicSequence) or not isinstance(recon, DynamicSequence):
        raise ValueError("--ref and --recon must hold dynamic sequences")
    full = nrmse(recon, ref, magnitude=args.magnitude)
    print(f"NRMSE: {full!r}")
    if args.roi:
        roi = _int_tuple(args.roi, 4, "--roi")
        print(f"NRMSE (ROI {args.roi}): {nrmse(recon, ref, roi=roi, magnitude=args.magnitude)!r}")
    if args.per_frame_out:
        values = per_frame_nrmse(recon, ref, magnitude=args.magnitude)
        lines = ["frame,nrmse"] + [f"{t},{v!r}" for t, v in enumerate(values)]
        with open(args.per_frame_out, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        if not args.no_figures:
            from .report import save_per_frame_nrmse_figure

            fig_path = os.path.splitext(args.per_frame_out)[0] + ".png"
            save_per_frame_nrmse_figure(values, fig_path)
    return 0


def cmd_dicteval(args) -> int:
    seq = read_tensor(args.data)
    if not isinstance(seq, DynamicSequence):
        raise ValueError(f"--data must hold a dynamic sequence: {args.data}")
    cfg = PatchConfig(
        _int_tuple(args.patch, 3, "--patch"), _int_tuple(args.stride, 3, "--stride")
    )
    p_mat = extract_patches(seq, cfg)
    peak = float(np.max(np.abs(p_mat)))
    rows = []
    for rank in args.ranks:
        for lam_z in args.lambdas:
            bound = max(1e6 * peak, 1e6 * lam_z, 1e6)
            d0 = init_dictionary(
                cfg.m, args.natoms, cfg.reshape_dims, rank, seed=args.seed,
                patch_pool=p_mat,
            )
            res = soup_bcd(p_mat, d0, None, lam_z, bound, penalty="l0", sweeps=args.sweeps)
            rows.append({
                "rank": rank,
                "lambda_z": lam_z,
                "sparsity_pct": 100.0 * res.codes.sparsity,
                "nsre": nsre(p_mat, res.dictionary, res.codes),
            })
    lines = ["rank,lambda_z,sparsity_pct,nsre"] + [
        f"{r['rank']},{r['lambda_z']!r},{r['sparsity_pct']!r},{r['nsre']!r}" for r in rows
    ]
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if not args.no_figures:
        from .report import save_nsre_figure

        save_nsre_figure(rows, os.path.splitext(args.out)[0] + ".png")
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
