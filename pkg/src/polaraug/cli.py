"""Batch command-line front end.

Subcommands: augment, decompose, validate, compare, synth. Angles are
given in degrees on the command line and converted to radians internally.
All report output goes to stdout as key=value lines; diagnostics go to
stderr. Exit codes: 0 success, 1 domain error (singular or degenerate
data, empty mask), 2 usage or format error.

Every flag can also be supplied through an INI-style key=value config
file passed with --config; explicit flags override config values. The
POLARAUG_THREADS environment variable caps the row-band worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import io_formats
from .decompose import (
    azimuth_map,
    decompose_image,
    linear_retarder_image,
    radial_azimuth_pattern,
    random_physical_image,
    retardance_map,
)
from .errors import DomainError, FormatError
from .metrics import admissibility_report, compare_azimuth_maps, retardance_mask
from .transforms import (
    AugmentPolicy,
    AugmentSpec,
    CalibrationPair,
    augment_calibration,
    augment_mueller,
    sample_spec,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _emit(key, value):
    if isinstance(value, float):
        print(f"{key}={value:.6f}")
    else:
        print(f"{key}={value}")


def _sha256(*paths) -> str:
    digest = hashlib.sha256()
    for path in paths:
        with open(path, "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def _require(args, *names) -> None:
    """Path flags may come from the CLI or the config file; check after merge."""
    missing = [name for name in names if getattr(args, name) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise FormatError(f"missing required option(s): {flags}")


def _build_spec(args) -> AugmentSpec:
    if args.random:
        policy = AugmentPolicy(
            p_rotation=args.prob_rot,
            p_flip_h=args.prob_flip,
            p_flip_v=args.prob_flip,
            padding=args.padding,
            interpolation=args.interp,
        )
        return sample_spec(policy, args.seed)
    return AugmentSpec(
        rotation_angle=math.radians(args.angle),
        flip_h=args.flip_h,
        flip_v=args.flip_v,
        padding=args.padding,
        interpolation=args.interp,
        seed=args.seed,
    )


def cmd_augment(args) -> int:
    _require(args, "input", "output")
    spec = _build_spec(args)
    if args.mode == "mueller":
        img = io_formats.load_mueller(args.input)
        t0 = time.perf_counter()
        out = augment_mueller(img, spec)
        elapsed = time.perf_counter() - t0
        io_formats.save_mueller(args.output, out)
        outputs = [args.output]
    else:
        if str(args.input).endswith(".mmpi"):
            intensities, cal = io_formats.load_calibration_bundle(args.input)
        else:
            if not (args.analyzer and args.modulator):
                raise FormatError(
                    "calibration mode needs an .mmpi bundle or --analyzer/--modulator files"
                )
            intensities = io_formats.load_mueller(args.input)
            cal = CalibrationPair(
                io_formats.load_calibration_matrix(args.analyzer),
                io_formats.load_calibration_matrix(args.modulator),
            )
        n_negative = int(np.count_nonzero(intensities < 0))
        if n_negative:
            # Legal for dark-corrected data, but worth surfacing.
            print(f"note: {n_negative} negative intensity entries in input",
                  file=sys.stderr)
        t0 = time.perf_counter()
        moved_b, new_cal = augment_calibration(intensities, cal, spec)
        elapsed = time.perf_counter() - t0
        if str(args.output).endswith(".mmpi"):
            io_formats.save_calibration_bundle(args.output, moved_b, new_cal)
            outputs = [args.output]
        else:
            outputs = [f"{args.output}_A.npy", f"{args.output}_B.npy", f"{args.output}_W.npy"]
            io_formats.write_npy(outputs[0], new_cal.analyzer)
            io_formats.write_npy(outputs[1], moved_b)
            io_formats.write_npy(outputs[2], new_cal.modulator)

    _emit("mode", args.mode)
    _emit("angle_deg", math.degrees(spec.rotation_angle))
    _emit("flip_h", int(spec.flip_h))
    _emit("flip_v", int(spec.flip_v))
    _emit("padding", spec.padding)
    _emit("interp", spec.interpolation)
    _emit("seed", spec.seed)
    for path in outputs:
        _emit("output", path)
    _emit("digest", _sha256(*outputs))
    if args.bench:
        _emit("frame_ms", elapsed * 1e3)
    return EXIT_OK


def cmd_decompose(args) -> int:
    _require(args, "input", "output")
    img = io_formats.load_mueller(args.input)
    dec = decompose_image(img)
    azi = azimuth_map(dec.retarder)
    ret = retardance_map(dec.retarder)
    mask = retardance_mask(ret, args.mask_percentile)

    prefix = str(args.output)
    io_formats.write_npy(f"{prefix}_azimuth.npy", azi)
    io_formats.write_npy(f"{prefix}_retardance.npy", ret)
    if args.factors:
        io_formats.write_npy(f"{prefix}_depolarizer.npy", dec.depolarizer)
        io_formats.write_npy(f"{prefix}_retarder.npy", dec.retarder)
        io_formats.write_npy(f"{prefix}_diattenuator.npy", dec.diattenuator)
    if args.png:
        io_formats.render_azimuth_png(azi, mask, f"{prefix}_azimuth.png")

    n = dec.valid.size
    _emit("n_pixels", n)
    _emit("n_failed", dec.n_failed)
    for kind, count in dec.failures.items():
        _emit(f"n_failed_{kind}", count)
    _emit("n_indeterminate_azimuth", int(np.count_nonzero(np.isnan(azi)) - dec.n_failed))
    _emit("mask_percentile", args.mask_percentile)
    _emit("n_masked_in", int(np.count_nonzero(mask)))
    if dec.n_failed > 0.5 * n:
        print(f"error: {dec.n_failed} of {n} pixels failed decomposition", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_validate(args) -> int:
    _require(args, "before", "after")
    before = io_formats.load_mueller(args.before)
    after = io_formats.load_mueller(args.after)
    report = admissibility_report(before, after, args.samples, args.seed, tol=args.tol)
    for line in report.to_key_value_lines():
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    _require(args, "pred", "gt")
    pred = io_formats.load_map(args.pred)
    gt = io_formats.load_map(args.gt)
    if args.retardance:
        mask = retardance_mask(io_formats.load_map(args.retardance), args.percentile)
        if mask.shape != pred.shape:
            raise ValueError("retardance map dimensions do not match the azimuth maps")
    else:
        mask = None
    result = compare_azimuth_maps(pred, gt, mask)
    _emit("mae_cyclic_deg", math.degrees(result["mae_cyclic_rad"]))
    _emit("mae_wrapped_deg", math.degrees(result["mae_wrapped_rad"]))
    _emit("n_used", result["n_used"])
    _emit("n_nan_excluded", result["n_nan_excluded"])
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h_str, w_str = text.lower().split("x")
        h, w = int(h_str), int(w_str)
    except ValueError:
        raise ValueError(f"--size must look like 128x128, got {text!r}") from None
    if h < 1 or w < 1:
        raise ValueError("--size dimensions must be positive")
    return h, w


def cmd_synth(args) -> int:
    _require(args, "output")
    h, w = _parse_size(args.size)
    delta = math.radians(args.delta)
    if args.pattern == "constant":
        phi = np.full((h, w), math.radians(args.azimuth) % math.pi)
        img = linear_retarder_image(phi, delta)
    elif args.pattern == "radial":
        img = linear_retarder_image(radial_azimuth_pattern(h, w), delta)
    else:  # random-physical
        img = random_physical_image(h, w, args.seed)
    io_formats.save_mueller(args.output, img)
    _emit("pattern", args.pattern)
    _emit("height", h)
    _emit("width", w)
    _emit("output", args.output)
    _emit("digest", _sha256(args.output))
    return EXIT_OK


def _parse_config_value(action, raw: str):
    if isinstance(action, argparse._StoreTrueAction):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot read {raw!r} as a boolean")
    if action.type is not None:
        return action.type(raw)
    return raw


def _load_config(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(subparser: argparse.ArgumentParser, path) -> None:
    values = _load_config(path)
    defaults = {}
    known = {action.dest: action for action in subparser._actions}
    for key, raw in values.items():
        if key not in known:
            raise FormatError(f"{path}: unknown config key {key!r}")
        defaults[key] = _parse_config_value(known[key], raw)
    subparser.set_defaults(**defaults)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file mirroring the flags")
    sub.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="polaraug",
        description="Physically consistent rotations and flips of Mueller-matrix images",
    )
    subs = parser.add_subparsers(dest="command", metavar="<command>", required=True)
    registry = {}

    aug = subs.add_parser("augment", help="jointly transform pixels and polarization")
    aug.add_argument("-i", "--input")
    aug.add_argument("-o", "--output")
    aug.add_argument("--mode", choices=("mueller", "calibration"), default="mueller")
    group = aug.add_mutually_exclusive_group()
    group.add_argument("--angle", type=float, default=0.0, help="rotation in degrees")
    group.add_argument("--random", action="store_true", help="sample the policy instead")
    aug.add_argument("--flip-h", action="store_true")
    aug.add_argument("--flip-v", action="store_true")
    aug.add_argument("--prob-rot", type=float, default=0.5)
    aug.add_argument("--prob-flip", type=float, default=0.25)
    aug.add_argument("--padding", choices=("identity", "mirror"), default="identity")
    aug.add_argument("--interp", choices=("nearest", "bilinear"), default="bilinear")
    aug.add_argument("--analyzer", help="analyzer matrices (.npy) for calibration mode")
    aug.add_argument("--modulator", help="modulator matrices (.npy) for calibration mode")
    aug.add_argument("--bench", action="store_true", help="print per-frame wall time")
    _add_common(aug)
    aug.set_defaults(func=cmd_augment)
    registry["augment"] = aug

    dec = subs.add_parser("decompose", help="polar decomposition to azimuth/retardance maps")
    dec.add_argument("-i", "--input")
    dec.add_argument("-o", "--output", help="output path prefix")
    dec.add_argument("--factors", action="store_true", help="also write factor stacks")
    dec.add_argument("--png", action="store_true", help="render the azimuth map")
    dec.add_argument("--mask-percentile", type=float, default=75.0)
    _add_common(dec)
    dec.set_defaults(func=cmd_decompose)
    registry["decompose"] = dec

    val = subs.add_parser("validate", help="admissibility report between two images")
    val.add_argument("--before")
    val.add_argument("--after")
    val.add_argument("--samples", type=int, default=100)
    val.add_argument("--tol", type=float, default=1e-9)
    val.add_argument("--json", help="also write the report as JSON")
    _add_common(val)
    val.set_defaults(func=cmd_validate)
    registry["validate"] = val

    cmp_ = subs.add_parser("compare", help="azimuth map error metrics")
    cmp_.add_argument("--pred")
    cmp_.add_argument("--gt")
    cmp_.add_argument("--retardance", help="retardance map for percentile masking")
    cmp_.add_argument("--percentile", type=float, default=75.0)
    _add_common(cmp_)
    cmp_.set_defaults(func=cmd_compare)
    registry["compare"] = cmp_

    syn = subs.add_parser("synth", help="generate synthetic test scenes")
    syn.add_argument("--pattern", choices=("constant", "radial", "random-physical"),
                     default="radial")
    syn.add_argument("--size", default="128x128", help="HxW, e.g. 128x128")
    syn.add_argument("--delta", type=float, default=90.0, help="retardance in degrees")
    syn.add_argument("--azimuth", type=float, default=0.0,
                     help="axis orientation in degrees (constant pattern)")
    syn.add_argument("-o", "--output")
    _add_common(syn)
    syn.set_defaults(func=cmd_synth)
    registry["synth"] = syn

    return parser, registry


def _extract_config_path(argv) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


_PADDING_NAMES = {"identity": "identity_fill", "mirror": "mirror"}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        config_path = _extract_config_path(argv)
        if config_path:
            command = next((a for a in argv if not a.startswith("-")), None)
            if command in registry:
                _apply_config(registry[command], config_path)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if hasattr(args, "padding"):
            args.padding = _PADDING_NAMES.get(args.padding, args.padding)
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
