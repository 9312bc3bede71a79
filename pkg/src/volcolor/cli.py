"""Command-line pipeline: fuse, select-hints, hintgen, colorize, metrics, pipeline.

Configuration comes from a single JSON document plus flag overrides.  Exit
codes: 0 success, 2 validation error, 3 numerical failure; stderr carries a
single machine-parsable line "E_VALIDATION: ..." or "E_SOLVER: ...".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fusion, hintgen, metrics, phantoms, volio
from .colorize import (
    ColorizeConfig,
    WeightParams,
    colorize,
    hints_from_slices,
    select_hint_slices,
)
from .solver import SolverConfig, SolverError
from .volume import ColorVolume, ScalarVolume, VolumeError, VolumeMask, yuv_to_rgb


class CLIError(Exception):
    def __init__(self, message, exit_code=2):
        super().__init__(message)
        self.exit_code = exit_code


def _limit_threads():
    n = os.environ.get("VOLCOLOR_THREADS")
    if not n:
        return
    # best effort: caps BLAS/OpenMP pools for libraries that honor these
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(int(n))
    except Exception:
        pass


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CLIError(f"cannot read config {args.config}: {e}")
    if getattr(args, "out", None):
        cfg["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "axis", None):
        cfg.setdefault("hint_selection", {})["axis"] = args.axis
    if getattr(args, "k", None) is not None:
        cfg.setdefault("hint_selection", {})["k"] = args.k
    if getattr(args, "min_sep", None) is not None:
        cfg.setdefault("hint_selection", {})["min_sep"] = args.min_sep
    if getattr(args, "fidelity_lambda", None) is not None:
        cfg.setdefault("fusion", {})["lambda"] = args.fidelity_lambda
    if getattr(args, "tol", None) is not None:
        cfg.setdefault("solver", {})["rel_tolerance"] = args.tol
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scalar(cfg, key):
    entry = cfg.get(key)
    if not entry:
        raise CLIError(f"config is missing {key!r}")
    try:
        vol = volio.read_volume(entry["header"], entry["raw"])
    except (OSError, KeyError, volio.IOFormatError, VolumeError) as e:
        raise CLIError(f"cannot load {key}: {e}")
    if isinstance(vol, ColorVolume):
        raise CLIError(f"{key} must be a single-channel volume")
    return vol


def _load_mask(cfg):
    entry = cfg.get("mask")
    if not entry:
        return None
    try:
        return volio.read_mask(entry["header"], entry["raw"])
    except (OSError, KeyError, volio.IOFormatError, VolumeError) as e:
        raise CLIError(f"cannot load mask: {e}")


def _solver_config(cfg) -> SolverConfig:
    s = cfg.get("solver", {})
    try:
        return SolverConfig(
            rel_tolerance=float(s.get("rel_tolerance", 1e-8)),
            max_iterations=int(s.get("max_iterations", 1000)),
            preconditioner=s.get("preconditioner", "amg"),
        )
    except SolverError as e:
        raise CLIError(str(e))


def _selection_params(cfg, extent_hint=None):
    sel = cfg.get("hint_selection", {})
    axis = sel.get("axis", "z").lower()
    if axis not in ("x", "y", "z"):
        raise CLIError(f"hint axis must be x, y, or z, got {axis!r}")
    k = int(sel.get("k", 8))
    min_sep = sel.get("min_sep")
    return axis, k, (int(min_sep) if min_sep is not None else None)


def cmd_fuse(cfg) -> int:
    grad = _load_scalar(cfg, "gradient_volume")
    inten = _load_scalar(cfg, "intensity_volume")
    if grad.dims != inten.dims:
        raise CLIError(
            f"gradient volume dims {grad.dims} do not match intensity volume dims {inten.dims}"
        )
    mask = _load_mask(cfg)
    fcfg = fusion.FusionConfig(
        fidelity_lambda=float(cfg.get("fusion", {}).get("lambda", 0.1)),
        solver=_solver_config(cfg),
    )
    try:
        fused, report = fusion.fuse(grad, inten, mask, fcfg)
    except VolumeError as e:
        raise CLIError(str(e))
    except SolverError as e:
        raise CLIError(str(e), exit_code=3)
    out = _out_dir(cfg)
    volio.write_volume(fused, out / "fused.json", out / "fused.raw", "f32le")
    (out / "fuse_report.json").write_text(
        json.dumps(
            {
                "iterations": report.iterations,
                "relative_residual": report.relative_residual,
                "converged": report.converged,
            },
            indent=2,
        )
    )
    print(f"wrote {out / 'fused.raw'} ({report.iterations} iterations)")
    return 0


def _select(cfg, y, mask):
    axis, k, min_sep = _selection_params(cfg)
    try:
        indices = select_hint_slices(y, mask, axis, k, min_sep)
    except VolumeError as e:
        raise CLIError(str(e))
    return axis, indices


def cmd_select_hints(cfg) -> int:
    y = _load_scalar(cfg, "volume")
    mask = _load_mask(cfg)
    axis, indices = _select(cfg, y, mask)
    out = _out_dir(cfg)
    doc = {"axis": axis, "indices": indices}
    (out / "hint_slices.json").write_text(json.dumps(doc))
    if cfg.get("export_slices", True):
        for idx in indices:
            img = volio.extract_slice(y, axis, idx)
            volio.write_slice_png(img, out / f"slice_{axis}{idx:04d}.png")
    print(json.dumps(doc))
    return 0


def _load_style_samples(cfg):
    style_path = cfg.get("style")
    if not style_path:
        raise CLIError("config is missing 'style' (path to a style PNG)")
    try:
        style = volio.read_slice_png(style_path)
    except (OSError, volio.IOFormatError) as e:
        raise CLIError(f"cannot load style image: {e}")
    hg = cfg.get("hintgen", {})
    try:
        return hintgen.sample_style(
            style,
            n=int(hg.get("samples", 256)),
            s=int(hg.get("window", 5)),
            seed=int(cfg.get("seed", 0)),
        )
    except ValueError as e:
        raise CLIError(str(e))


def cmd_hintgen(cfg) -> int:
    y = _load_scalar(cfg, "volume")
    mask = _load_mask(cfg)
    samples = _load_style_samples(cfg)
    axis, indices = _select(cfg, y, mask)
    out = _out_dir(cfg)
    window = int(cfg.get("hintgen", {}).get("window", 5))
    written = []
    for idx in indices:
        gray = volio.extract_slice(y, axis, idx)
        colored = hintgen.transfer_colors(gray, samples, window)
        path = out / f"hint_{axis}{idx:04d}.png"
        volio.write_slice_png(colored, path)
        written.append({"axis": axis, "index": idx, "path": str(path)})
    (out / "hints.json").write_text(json.dumps(written))
    print(f"wrote {len(written)} hint slices to {out}")
    return 0


def _load_hints(cfg, dims):
    entries = cfg.get("hints")
    if not entries:
        raise CLIError("no hints: provide 'hints' in config or run hintgen first")
    triples = []
    for e in entries:
        try:
            img = volio.read_slice_png(e["path"])
            triples.append((e["axis"], int(e["index"]), img))
        except (OSError, KeyError, volio.IOFormatError) as e2:
            raise CLIError(f"cannot load hint slice: {e2}")
    try:
        return hints_from_slices(triples, dims)
    except VolumeError as e:
        raise CLIError(str(e))


def _write_colorized(cfg, rgb_vol, reports):
    out = _out_dir(cfg)
    volio.write_volume(rgb_vol, out / "colorized.json", out / "colorized.raw", "f32le")
    for axis in ("x", "y", "z"):
        mid = rgb_vol.dims[{"x": 0, "y": 1, "z": 2}[axis]] // 2
        img = volio.extract_slice(rgb_vol, axis, mid)
        volio.write_slice_png(img, out / f"preview_{axis}{mid:04d}.png")
    (out / "colorize_report.json").write_text(
        json.dumps(
            {
                ch: {
                    "iterations": r.iterations,
                    "relative_residual": r.relative_residual,
                    "converged": r.converged,
                }
                for ch, r in reports.items()
            },
            indent=2,
        )
    )


def cmd_colorize(cfg) -> int:
    y = _load_scalar(cfg, "volume")
    mask = _load_mask(cfg)
    hints = _load_hints(cfg, y.dims)
    ccfg = ColorizeConfig(
        weights=WeightParams(
            sigma_floor=float(cfg.get("weights", {}).get("sigma_floor", 1e-4))
        ),
        solver=_solver_config(cfg),
    )
    try:
        yuv, reports = colorize(y, hints, mask, ccfg)
    except VolumeError as e:
        raise CLIError(str(e))
    except SolverError as e:
        raise CLIError(str(e), exit_code=3)
    _write_colorized(cfg, yuv_to_rgb(yuv), reports)
    print(f"wrote {_out_dir(cfg) / 'colorized.raw'}")
    return 0


def cmd_metrics(cfg, a_paths=None, b_paths=None) -> int:
    def load_color(entry, what):
        try:
            vol = volio.read_volume(entry["header"], entry["raw"])
        except (OSError, KeyError, volio.IOFormatError, VolumeError) as e:
            raise CLIError(f"cannot load {what}: {e}")
        if not isinstance(vol, ColorVolume):
            raise CLIError(f"{what} must be a 3-channel volume")
        return vol

    m = cfg.get("metrics", {})
    a_entry = a_paths or m.get("a")
    b_entry = b_paths or m.get("b") or m.get("reference")
    if not a_entry or not b_entry:
        raise CLIError("metrics needs two volumes ('metrics.a' and 'metrics.b')")
    a = load_color(a_entry, "metrics volume a")
    b = load_color(b_entry, "metrics volume b")
    try:
        mcfg = metrics.MetricsConfig(mode=m.get("mode", "global"))
        report = metrics.evaluate(a, b, mcfg)
    except VolumeError as e:
        raise CLIError(str(e))
    out = _out_dir(cfg)
    (out / "metrics.json").write_text(report.to_json())
    print(report.to_json())
    return 0


def cmd_pipeline(cfg) -> int:
    out = _out_dir(cfg)
    if cfg.get("gradient_volume") and cfg.get("intensity_volume"):
        cmd_fuse(cfg)
        cfg = dict(cfg)
        cfg["volume"] = {"header": str(out / "fused.json"), "raw": str(out / "fused.raw")}
    y = _load_scalar(cfg, "volume")
    mask = _load_mask(cfg)

    if cfg.get("hints"):
        hints_cfg = cfg
    elif cfg.get("style"):
        cmd_hintgen(cfg)
        hints_cfg = dict(cfg)
        hints_cfg["hints"] = json.loads((out / "hints.json").read_text())
    else:
        raise CLIError("pipeline needs either 'style' or 'hints' in config")

    hints = _load_hints(hints_cfg, y.dims)
    ccfg = ColorizeConfig(
        weights=WeightParams(
            sigma_floor=float(cfg.get("weights", {}).get("sigma_floor", 1e-4))
        ),
        solver=_solver_config(cfg),
    )
    try:
        yuv, reports = colorize(y, hints, mask, ccfg)
    except VolumeError as e:
        raise CLIError(str(e))
    except SolverError as e:
        raise CLIError(str(e), exit_code=3)
    rgb = yuv_to_rgb(yuv)
    _write_colorized(cfg, rgb, reports)

    if cfg.get("metrics", {}).get("reference"):
        cmd_metrics(
            cfg,
            a_paths={"header": str(out / "colorized.json"), "raw": str(out / "colorized.raw")},
        )
    print(f"pipeline complete: {out}")
    return 0


def cmd_phantom(cfg, args) -> int:
    try:
        spec = phantoms.PhantomSpec(
            kind=args.kind,
            dims=tuple(args.dims),
            levels=tuple(args.levels),
            seed=int(cfg.get("seed", 0)),
            noise_sigma=args.noise,
        )
        y, mask, labels, reference = phantoms.generate(spec)
    except VolumeError as e:
        raise CLIError(str(e))
    out = _out_dir(cfg)
    volio.write_volume(y, out / "phantom.json", out / "phantom.raw", "f32le")
    mask_vol = ScalarVolume(mask.data.astype(np.float32))
    volio.write_volume(mask_vol, out / "phantom_mask.json", out / "phantom_mask.raw", "u8")
    reference_rgb = yuv_to_rgb(reference)
    volio.write_volume(
        reference_rgb, out / "phantom_reference.json", out / "phantom_reference.raw", "f32le"
    )
    print(f"wrote phantom fixtures to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volcolor", description="Colorize 3D volumes from 2D hint slices"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--axis", choices=["x", "y", "z"], help="hint-slice axis")
        p.add_argument("--k", type=int, help="number of hint slices")
        p.add_argument("--min-sep", type=int, dest="min_sep", help="minimum slice separation")
        p.add_argument(
            "--lambda", type=float, dest="fidelity_lambda", help="fusion fidelity weight"
        )
        p.add_argument("--tol", type=float, help="solver relative tolerance")

    for name in ("fuse", "select-hints", "hintgen", "colorize", "metrics", "pipeline"):
        common(sub.add_parser(name))

    p_ph = sub.add_parser("phantom")  # fixture generator
    common(p_ph)
    p_ph.add_argument("--kind", choices=list(phantoms.KINDS), default="two-blob")
    p_ph.add_argument("--dims", type=int, nargs=3, default=[16, 16, 16])
    p_ph.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.8])
    p_ph.add_argument("--noise", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    _limit_threads()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "fuse":
            return cmd_fuse(cfg)
        if args.command == "select-hints":
            return cmd_select_hints(cfg)
        if args.command == "hintgen":
            return cmd_hintgen(cfg)
        if args.command == "colorize":
            return cmd_colorize(cfg)
        if args.command == "metrics":
            return cmd_metrics(cfg)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
        if args.command == "phantom":
            return cmd_phantom(cfg, args)
        raise CLIError(f"unknown command {args.command}")
    except CLIError as e:
        tag = "E_SOLVER" if e.exit_code == 3 else "E_VALIDATION"
        print(f"{tag}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
