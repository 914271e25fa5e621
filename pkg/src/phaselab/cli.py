"""Command-line entry point: ``phaselab <command> [options]``.

Commands write plain files into the output directory: BPG1 grids, 16-bit
PGM previews, CSV curves and ``key=value`` reports, each text file starting
with a provenance header.

Exit codes: 0 success, 2 configuration error, 3 numeric-domain error,
4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (delta_g2, fedorov_sweep, fringe_visibility, marginal_g1, reconstruct,
                       ridge_correlation)
from .biphoton import (GridTooSmallError, eval_dg, fedorov_analytic, jpd_analytic, schmidt_number,
                       widths_at, z_phase)
from .camera import DGPairs, FrameFormatError, pairs_for_occupancy, read_stack, render_frames, write_stack
from .config import ConfigError, RunConfig, defaults, load_config
from .fields import Grid
from .fitting import fit_gaussian_1d
from .io import read_report, write_csv, write_grid, write_pgm, write_report
from .optics import AliasingError, interference_density, lens_fold_map, relay_4f

log = logging.getLogger("phaselab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SWEEP_POINTS = 30


def _provenance(cfg: RunConfig, argv) -> list[str]:
    return [f"phaselab {__version__}; numpy {np.__version__}; scipy {scipy.__version__}",
            f"config sha256 {cfg.digest}",
            "command " + " ".join(argv)]


def _mm(text: str) -> float:
    return float(text) * 1e-3


def _zbar_list(text: str) -> list[float]:
    try:
        return [_mm(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--zbar expects comma-separated millimetres, got {text!r}") from None


def _plane(args, cfg: RunConfig):
    """(z, fold or None) selected by --z / --zbar."""
    if args.zbar is not None and args.z is not None:
        raise ConfigError("give either --z or --zbar, not both")
    if args.zbar is not None:
        zb = _zbar_list(args.zbar)
        if len(zb) != 1:
            raise ConfigError("--zbar takes a single distance for this command")
        u, f = cfg.lens()
        fold = lens_fold_map(u, f, zb[0])
        return fold.z, fold
    return (_mm(args.z) if args.z is not None else 0.0), None


def _state_grid(src, z: float, n: int) -> Grid:
    w = widths_at(src, z)
    half = 2.5 * (w.sigma_plus_z + w.sigma_minus_z)
    return Grid.centered(n, half)


def cmd_state(args, cfg, out: Path, prov) -> None:
    src = cfg.source()
    z, fold = _plane(args, cfg)
    grid = _state_grid(src, z, cfg.get("run", "grid_n"))
    jpd = jpd_analytic(src, grid, z)
    write_grid(jpd, out / "state_jpd.bpg")
    write_pgm(jpd.values, out / "state_jpd.pgm")
    w = widths_at(src, z)
    items = [("z_mm", z * 1e3), ("sigma_plus_z_um", w.sigma_plus_z * 1e6),
             ("sigma_minus_z_um", w.sigma_minus_z * 1e6), ("fedorov", fedorov_analytic(src, z)),
             ("schmidt_K", schmidt_number(src)), ("z_p_mm", z_phase(src) * 1e3)]
    if fold is not None:
        items = [("zbar_mm", fold.zbar * 1e3), ("scale_s", fold.s)] + items
    write_report(out / "state.txt", items, prov)
    for k, v in items:
        print(f"{k}={v}")


def cmd_simulate(args, cfg, out: Path, prov) -> None:
    src = cfg.source()
    z, fold = _plane(args, cfg)
    pairs = DGPairs.folded(src, fold) if fold is not None else DGPairs.at(src, z)
    cam = cfg.camera()
    if cam.mu == 0:
        from dataclasses import replace
        cam = replace(cam, mu=pairs_for_occupancy(pairs, cam))
    frames = cfg.get("run", "frames")
    stack = render_frames(pairs, cam, frames, workers=cfg.get("run", "workers"))
    path = out / "stack.bpf"
    write_stack(stack, path)
    items = [("frames", frames), ("z_mm", z * 1e3), ("eta", cam.eta), ("mu", cam.mu), ("seed", cam.seed),
             ("sigma_plus_det_um", pairs.sigma_plus * 1e6), ("sigma_minus_det_um", pairs.sigma_minus * 1e6),
             ("peak_occupancy", float(stack.mean_occupancy().max()))]
    if fold is not None:
        items.insert(0, ("zbar_mm", fold.zbar * 1e3))
    write_report(out / "stack.txt", items, prov)
    print(f"wrote {path} ({frames} frames, mu={cam.mu:.4g})")


def cmd_reconstruct(args, cfg, out: Path, prov) -> None:
    stack = read_stack(args.stack)
    cam = cfg.camera()
    eta, mu = cam.eta, cam.mu
    side = Path(args.stack).with_suffix(".txt")
    if mu == 0:
        if not side.exists():
            raise ConfigError(f"camera.mu is 0 and no sidecar {side} records the pair rate")
        rep = read_report(side)
        eta, mu = float(rep["eta"]), float(rep["mu"])
    bloom = None
    if cam.bloom_prob > 0:
        prof = stack.mean_occupancy().mean(axis=0)
        beam = fit_gaussian_1d(np.arange(prof.size, dtype=float), prof, background=True)
        bloom = (cam.bloom_sigma, beam.std)
    roi = cfg.roi()
    rec = reconstruct(stack, eta, mu, roi, profile=args.profile or "propagation", bloom=bloom,
                      workers=cfg.get("run", "workers"), allow_large=True)
    write_grid(rec.rho, out / "rho.bpg")
    write_grid(rec.cleaned, out / "rho_clean.bpg")
    write_pgm(rec.rho.values, out / "rho.pgm")
    write_pgm(rec.cleaned.values, out / "rho_clean.pgm")
    items = [("frames", stack.M), ("eta", eta), ("mu", mu), ("clamped", rec.gamma.n_clamped),
             ("fedorov", rec.fedorov)]
    items += [tuple(line.split("=", 1)) for line in rec.fit.report().splitlines()]
    write_report(out / "fit.txt", items, prov)
    for k, v in items:
        print(f"{k}={v}")


def cmd_sweep(args, cfg, out: Path, prov) -> None:
    src = cfg.source()
    u, f = cfg.lens()
    mode = args.mode
    if args.zbar:
        zbars = _zbar_list(args.zbar)
    else:
        top = u * f / (u - f)
        zbars = list(np.linspace(f, top, SWEEP_POINTS + 1)[1:])
    cam = cfg.camera() if mode == "simulate" else None
    pts = fedorov_sweep(src, u, f, zbars, mode, camera=cam, frames=cfg.get("run", "frames"),
                        roi=cfg.roi(), include_phase_plane=(mode == "analytic"),
                        workers=cfg.get("run", "workers"))
    rows = [[f"{p.zbar * 1e3:.6f}", f"{p.z * 1e3:.6f}", f"{p.fedorov:.9f}",
             f"{p.sigma_fit_plus * 1e6:.6f}", f"{p.sigma_fit_minus * 1e6:.6f}", p.source] for p in pts]
    write_csv(out / "sweep.csv", ["zbar_mm", "z_mm", "fedorov", "sigma_plus_um", "sigma_minus_um", "mode"],
              rows, prov)
    bad = [p for p in pts if not p.ok]
    for p in bad:
        print(f"warning: zbar={p.zbar * 1e3:.4g} mm skipped: {p.error}", file=sys.stderr)
    good = [p for p in pts if p.ok]
    if good:
        best = min(good, key=lambda p: p.fedorov)
        print(f"min fedorov={best.fedorov:.6f} at zbar={best.zbar * 1e3:.4f} mm")


def cmd_interfere(args, cfg, out: Path, prov) -> None:
    src = cfg.source()
    state = args.state or "phase"
    z = z_phase(src) if state == "phase" else 0.0
    grid = _state_grid(src, z, cfg.get("run", "grid_n"))
    s = cfg.values["slit"]
    psi = relay_4f(eval_dg(src, grid, z), s["relay_f1_mm"] * 1e-3, s["relay_f2_mm"] * 1e-3)
    rho = interference_density(psi, cfg.slit(), s["f3_mm"] * 1e-3, src.wavelength)
    m1 = marginal_g1(rho)
    m2 = marginal_g1(rho, axis=2)
    product = np.outer(m1.values, m2.values)
    dg2 = delta_g2(rho)
    period = src.wavelength * s["f3_mm"] * 1e-3 / cfg.slit().d
    for name, vals in (("rho_inter", rho.values), ("marginal_product", product), ("delta_g2", dg2)):
        write_grid((rho.grid, vals), out / f"{name}.bpg")
        write_pgm(vals, out / f"{name}.pgm")
    items = [("state", state), ("z_mm", z * 1e3), ("fringe_period_um", period * 1e6),
             ("marginal_visibility", fringe_visibility(m1, period)),
             ("delta_g2_over_rho", float(np.abs(dg2).max() / rho.values.max())),
             ("ridge_correlation", ridge_correlation(dg2, rho))]
    write_report(out / "interfere.txt", items, prov)
    for k, v in items:
        print(f"{k}={v}")


COMMANDS = {"state": cmd_state, "simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "sweep": cmd_sweep, "interfere": cmd_interfere}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="sectioned key=value configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (default: run.output)")
    common.add_argument("--seed", type=int, help="override camera.seed")
    common.add_argument("--frames", type=int, metavar="M", help="override run.frames")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="phaselab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"phaselab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("state", "simulate"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--z", metavar="MM", help="free propagation distance")
        sp.add_argument("--zbar", metavar="MM", help="detection distance behind the lens")
    sp = sub.add_parser("reconstruct", parents=[common])
    sp.add_argument("stack", help="BPF1 frame stack")
    sp.add_argument("--profile", choices=("propagation", "interference"), default="propagation")
    sp = sub.add_parser("sweep", parents=[common])
    sp.add_argument("--zbar", metavar="MM[,MM...]", help="detection distances (default: 30 points on (f, 3f])")
    sp.add_argument("--mode", choices=("analytic", "simulate"), default="analytic")
    sp = sub.add_parser("interfere", parents=[common])
    sp.add_argument("--state", choices=("position", "phase"), default="phase")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else defaults()
        over = {}
        if args.seed is not None:
            over["camera__seed"] = args.seed
        if args.frames is not None:
            if args.frames < 2:
                raise ConfigError("--frames must be at least 2")
            over["run__frames"] = args.frames
        cfg = cfg.with_overrides(**over)
        out = Path(args.out or cfg.get("run", "output"))
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out, _provenance(cfg, ["phaselab"] + argv))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FrameFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GridTooSmallError, AliasingError, ValueError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
