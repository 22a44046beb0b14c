"""Command line entry point ``romimaging <subcommand>``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .errors import NumericalError, ValidationError
from .harness import (
    ExperimentConfig,
    compare_images,
    condition_csv,
    report_condition,
    run,
)
from .imaging import (
    SubArrayPartition,
    backprojection_image,
    composite_image,
    delta_diagnostic,
    depth_scale,
    kinematic_basis,
    rtm_image,
    schrodinger_potential,
)
from .propagate import simulate
from .regularization import MuSchedule, NoiseSpec, add_noise, regularize
from .rom import CONVENTIONS, interpolation_errors, reduce, verify_structure

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger("romimaging")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def _config(args):
    """Config from ``--config``/``--preset`` plus ``--set key.path=value`` overrides."""
    if args.config and args.preset:
        raise ValidationError("use either --config or --preset")
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    elif args.preset:
        base = ExperimentConfig.preset(args.preset).settings
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        _set_path(base, key, _parse_value(val))
    if getattr(args, "substeps", None) is not None:
        base["substeps"] = args.substeps
    return ExperimentConfig.from_dict(base)


def _setup(args):
    cfg = _config(args)
    model, mask = cfg.model(return_mask=True)
    array = cfg.array(model.grid)
    array.validate_on(model)
    return cfg, model, mask, array, cfg.wavelet(), cfg.kinematic(model)


def _write_image(img, out, args):
    if getattr(args, "depth_scale", False):
        img = depth_scale(img, args._array, args.a0, args.a1)
    out = Path(out)
    rio.write_image_csv(out.with_suffix(".csv"), img.values)
    rio.write_pgm(out.with_suffix(".pgm"), img.values)
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.pgm')}")


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args):
    cfg, model, mask, array, wavelet, _ = _setup(args)
    D = simulate(model, array, wavelet, cfg.settings["substeps"])[0]
    rio.write_romd(args.out, D)
    if args.csv:
        rio.data_to_csv(args.csv, D)
    if args.model_out:
        rio.write_velocity_model(args.model_out, model)
    print(f"wrote {args.out}: m={D.m} 2n={D.n2} substeps={D.meta['substeps']}")


def cmd_noise(args):
    D = rio.read_romd(args.data)
    Dn = add_noise(D, NoiseSpec(args.noise_eps, args.noise_seed))
    rio.write_romd(args.out, Dn)
    print(f"wrote {args.out}: eps={args.noise_eps} seed={args.noise_seed}")


def cmd_regularize(args):
    D = rio.read_romd(args.data, "noisy")
    res = regularize(D, MuSchedule(args.mu_start, args.mu_factor, args.mu_cap))
    rio.write_romd(args.out, res.data)
    if args.report:
        Path(args.report).write_text(res.history_csv())
    print(f"mu={res.mu!r} iterations={res.iterations}")


def cmd_reduce(args):
    D = rio.read_romd(args.data).replace(meta={"mu": args.mu})
    rm = reduce(D, args.convention)
    rio.write_romp(args.out, rm)
    print(f"wrote {args.out}: m={rm.m} n={rm.n} asymmetry={rm.symmetry_deviation:.3e}")


def cmd_verify(args):
    rm = rio.read_romp(args.rom)
    report = verify_structure(rm, args.tol)
    text = report.to_text()
    passed = report.passed
    if args.data:
        err = interpolation_errors(rm, rio.read_romd(args.data))
        text += f"interpolation_max_rel {err.max():.6e}\n"
        passed = passed and err.max() <= args.tol
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_image_bp(args):
    cfg, model, mask, array, wavelet, c_o = _setup(args)
    args._array = array
    D = rio.read_romd(args.data)
    img = backprojection_image(D, c_o, array, wavelet, cfg.settings["substeps"], args.convention)
    _write_image(img, args.out, args)


def cmd_image_rtm(args):
    cfg, model, mask, array, wavelet, c_o = _setup(args)
    args._array = array
    D = rio.read_romd(args.data)
    img = rtm_image(D, c_o, array, wavelet, cfg.settings["substeps"], laplacian_filter=not args.no_filter)
    _write_image(img, args.out, args)


def _parse_partition(text, m):
    if text.startswith("uniform:"):
        count, size = (int(v) for v in text.split(":", 1)[1].split("x"))
        return SubArrayPartition.uniform(m, count, size)
    ranges = []
    for item in text.split(","):
        lo, sep, hi = item.partition("-")
        if not sep:
            raise ValidationError(f"bad sub-array range {item!r}; use lo-hi")
        ranges.append((int(lo), int(hi)))
    return SubArrayPartition(tuple(ranges))


def cmd_image_composite(args):
    cfg, model, mask, array, wavelet, c_o = _setup(args)
    args._array = array
    D = rio.read_romd(args.data)
    part = _parse_partition(args.partition, array.m)
    if args.weights:
        part = SubArrayPartition(part.ranges, tuple(float(w) for w in args.weights.split(",")))
    img = composite_image(D, part, c_o, array, wavelet, cfg.settings["substeps"], args.convention, args.on_failure)
    if img.meta["failed"]:
        print(f"skipped sub-arrays: {img.meta['failed']}", file=sys.stderr)
    _write_image(img, args.out, args)


def cmd_diagnose_delta(args):
    cfg, model, mask, array, wavelet, c_o = _setup(args)
    kin = kinematic_basis(c_o, array, wavelet, cfg.settings["substeps"], args.convention)
    node = tuple(int(v) for v in args.node.split(","))
    if len(node) != 2:
        raise ValidationError("--node expects iy,ix")
    field = delta_diagnostic(kin.basis, kin.basis, node)
    out = Path(args.out)
    rio.write_image_csv(out.with_suffix(".csv"), field)
    rio.write_pgm(out.with_suffix(".pgm"), field)
    peak = np.unravel_index(np.argmax(field), field.shape)
    print(f"argmax at ({peak[0]}, {peak[1]}), probe at {node}")


def cmd_potential(args):
    model = rio.read_velocity_model(args.velocity)
    sigma = rio.read_image_csv(args.impedance)
    q = schrodinger_potential(model, sigma)
    out = Path(args.out)
    rio.write_image_csv(out.with_suffix(".csv"), q)
    rio.write_pgm(out.with_suffix(".pgm"), q)
    print(f"wrote {out.with_suffix('.csv')}")


def cmd_report_cond(args):
    D = rio.read_romd(args.data)
    rows = report_condition(D, [int(v) for v in args.n_list.split(",")])
    text = condition_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")


def _load_field(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return rio.read_image_csv(path)


def cmd_compare(args):
    a, b = _load_field(args.a), _load_field(args.b)
    mask = _load_field(args.mask).astype(bool) if args.mask else None
    res = compare_images(a, b, mask, margin=args.margin)
    print(json.dumps(res.to_dict(), indent=2))


def cmd_run(args):
    cfg = _config(args)
    manifest = run(cfg, args.out)
    print(f"status={manifest['status']} mu={manifest['mu']} -> {args.out}")


# -- parser ------------------------------------------------------------------


def _add_config(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", help="named preset config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted path, JSON value)")
    p.add_argument("--substeps", type=int, default=None, help="fine steps per sample")


def _add_image_opts(p):
    p.add_argument("--data", required=True, help="ROMD data file")
    p.add_argument("--out", required=True, help="output path (csv and pgm written)")
    p.add_argument("--depth-scale", action="store_true", help="apply the linear depth multiplier")
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--a1", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="romimaging", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize array data into a ROMD file")
    _add_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also export the data as CSV")
    p.add_argument("--model-out", help="also write the velocity model file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("noise", help="add multiplicative noise")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-eps", type=float, default=0.10)
    p.add_argument("--noise-seed", type=int, default=0)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("regularize", help="spectral-shift regularization of D^0")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mu-start", type=float, default=1.0)
    p.add_argument("--mu-factor", type=float, default=1.05)
    p.add_argument("--mu-cap", type=float, default=100.0)
    p.add_argument("--report", help="CSV of the mu sweep")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("reduce", help="ROM from a ROMD file only")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--convention", choices=CONVENTIONS, default="spd_sqrt")
    p.add_argument("--mu", type=float, default=1.0, help="regularization parameter to record")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("verify", help="block structure (and interpolation) report")
    p.add_argument("--rom", required=True)
    p.add_argument("--data", help="ROMD file to check interpolation against")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    for name, func, extra in (
        ("image-bp", cmd_image_bp, None),
        ("image-rtm", cmd_image_rtm, "rtm"),
        ("image-composite", cmd_image_composite, "composite"),
    ):
        p = sub.add_parser(name)
        _add_config(p)
        _add_image_opts(p)
        if extra != "rtm":
            p.add_argument("--convention", choices=CONVENTIONS, default="spd_sqrt")
        if extra == "rtm":
            p.add_argument("--no-filter", action="store_true", help="skip the Laplacian post-filter")
        if extra == "composite":
            p.add_argument("--partition", required=True, help="'1-8,5-12' (1-based) or 'uniform:COUNTxSIZE'")
            p.add_argument("--weights", help="comma separated positive weights")
            p.add_argument("--on-failure", choices=("raise", "skip"), default="raise")
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose-delta", help="kinematic delta approximation at a node")
    _add_config(p)
    p.add_argument("--node", required=True, help="iy,ix")
    p.add_argument("--out", required=True)
    p.add_argument("--convention", choices=CONVENTIONS, default="spd_sqrt")
    p.set_defaults(func=cmd_diagnose_delta)

    p = sub.add_parser("potential", help="Schrodinger potential of an impedance field")
    p.add_argument("--velocity", required=True, help="velocity model file")
    p.add_argument("--impedance", required=True, help="CSV grid of impedance values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("report-cond", help="mass matrix condition numbers")
    p.add_argument("--data", required=True)
    p.add_argument("--n-list", default="2,4,8,16")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_cond)

    p = sub.add_parser("compare", help="compare two image CSV/npy files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mask", help="reflector mask (npy or CSV)")
    p.add_argument("--margin", type=int, default=3)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", help="whole pipeline into an output directory")
    _add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
