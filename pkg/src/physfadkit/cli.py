"""Command-line front end: scene/spec ingestion, experiment execution, bound
reports, and CSV emission.

Exit codes: 0 success, 2 input/schema violation, 3 numerical failure. Every
command writes a JSON run manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    coupling_constant_for_group,
    measured_self_ratio_norm,
    mimo_ratio_bound,
    truncation_error_bound,
)
from .channels import (
    RisChannelSolver,
    SeriesTruncation,
    cascaded_from_blocks,
    cascaded_predict,
    channel_exact,
    generic_series_rt,
    mimo_ratio_matrix,
)
from .errors import DivergenceDetectedError, PhysfadkitError
from .experiments import (
    EnclosureSpec,
    FreeSpaceSpec,
    load_spec,
    spec_to_dict,
    sweep_tau,
    sweep_zeta,
)
from .numerics import spectral_norm
from .physics import RisConfiguration, load_scene

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SCHEMA_LINE = "# physfadkit-csv-v1"


class _InputError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, seed: int, inputs: dict,
                    outputs: list[str], extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "library_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("PHYSFADKIT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise _InputError(f"PHYSFADKIT_WORKERS is not an integer: {env!r}") from exc
    return os.cpu_count() or 1


def _load_scene_checked(path: str):
    p = Path(path)
    if not p.is_file():
        raise _InputError(f"scene file not found: {path}")
    try:
        return load_scene(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise _InputError(f"invalid scene file {path}: {exc}") from exc


def _parse_config(scene, bits: str) -> RisConfiguration:
    try:
        config = RisConfiguration.from_bitstring(bits)
    except ValueError as exc:
        raise _InputError(str(exc)) from exc
    n_s = len(scene.ris)
    if config.n != n_s:
        raise _InputError(
            f"config length {config.n} does not match the scene's {n_s} RIS elements"
        )
    return config


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_channel(args) -> int:
    scene = _load_scene_checked(args.scene)
    config = _parse_config(scene, args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = channel_exact(scene, config, args.frequency)
    out_csv = out_dir / "channel.csv"
    with open(out_csv, "w", newline="") as fh:
        fh.write(f"{SCHEMA_LINE} channel\n")
        writer = csv.writer(fh)
        writer.writerow(["rx", "tx", "re_h", "im_h"])
        n_r, n_t = h.entries.shape
        for i in range(n_r):
            for j in range(n_t):
                v = h.entries[i, j]
                writer.writerow([i, j, repr(v.real), repr(v.imag)])
    _write_manifest(
        out_dir, "channel", args.seed,
        {"scene": args.scene, "scene_sha256": _sha256(Path(args.scene)),
         "config": args.config, "frequency": args.frequency},
        [str(out_csv)],
    )
    return EXIT_OK


_PRESETS = {
    "fig2a": ("free_space", "n_s", [1, 2, 4, 8, 16, 32], False),
    "fig2b": ("free_space", "delta_s", [0.3, 0.5, 0.8, 1.2], False),
    "fig4": ("enclosure", "f_res_e", [1.5, 2.0, 3.0, 5.0, 8.0], True),
}


def _spec_for_zeta(args):
    if args.preset:
        kind, axis, grid, with_tau = _PRESETS[args.preset]
        spec = FreeSpaceSpec(seed=args.seed) if kind == "free_space" \
            else EnclosureSpec(seed=args.seed)
        if args.realizations:
            from dataclasses import replace
            spec = replace(spec, realizations=args.realizations)
        return spec, axis, grid, with_tau
    if not args.spec:
        raise _InputError("either --spec or --preset is required")
    p = Path(args.spec)
    if not p.is_file():
        raise _InputError(f"spec file not found: {args.spec}")
    try:
        spec = load_spec(p)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise _InputError(f"invalid spec file {args.spec}: {exc}") from exc
    from dataclasses import replace
    spec = replace(spec, seed=args.seed)
    if args.realizations:
        spec = replace(spec, realizations=args.realizations)
    if not args.axis or not args.grid:
        raise _InputError("--axis and --grid are required with --spec")
    grid = [float(v) for v in args.grid.split(",")]
    return spec, args.axis, grid, args.with_tau


def cmd_zeta(args) -> int:
    spec, axis, grid, with_tau = _spec_for_zeta(args)
    workers = _resolve_workers(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = sweep_tau(spec, axis, grid, workers=workers) if with_tau \
        else sweep_zeta(spec, axis, grid, workers=workers)
    out_csv = out_dir / "zeta_sweep.csv"
    result.to_csv(out_csv)
    spec_dict = spec_to_dict(spec)
    spec_hash = hashlib.sha256(
        json.dumps(spec_dict, sort_keys=True).encode()
    ).hexdigest()
    _write_manifest(
        out_dir, "zeta", args.seed,
        {"spec": spec_dict, "spec_sha256": spec_hash, "axis": axis,
         "grid": grid, "preset": args.preset},
        [str(out_csv)],
        extra={"workers": workers},
    )
    return EXIT_OK


def cmd_bounds(args) -> int:
    scene = _load_scene_checked(args.scene)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f = args.frequency
    rows = []

    groups = [("T", scene.transmitters), ("R", scene.receivers),
              ("S", scene.ris)]
    couplings = {}
    for name, dipoles in groups:
        if not dipoles:
            continue
        c = coupling_constant_for_group(scene, name, f)
        couplings[name] = c
        if len(dipoles) >= 2:
            measured = measured_self_ratio_norm(scene, name, f)
        else:
            measured = 0.0
        rows.append(
            [f"coupling_{name}", repr(c.value), repr(measured),
             "yes" if measured <= c.value * (1 + 1e-9) else "no"]
        )
        for k in range(1, 11):
            if c.value < 1.0:
                bound = truncation_error_bound(c.value, k)
                rows.append([f"truncation_{name}_K{k}", repr(bound), "", ""])
            else:
                rows.append([f"truncation_{name}_K{k}", "", "", "not-convergent"])

    if scene.transmitters and scene.receivers and not scene.environment \
            and not scene.ris:
        ct = couplings.get("T")
        cr = couplings.get("R")
        if ct and cr and ct.value < 1.0 and cr.value < 1.0:
            bound = mimo_ratio_bound(scene, f)
            measured = spectral_norm(mimo_ratio_matrix(scene, f))
            rows.append(
                ["roundtrip_TR", repr(bound), repr(measured),
                 "yes" if measured <= bound * (1 + 1e-9) else "no"]
            )
        else:
            rows.append(["roundtrip_TR", "", "", "not-convergent"])

    out_csv = out_dir / "bounds.csv"
    with open(out_csv, "w", newline="") as fh:
        fh.write(f"{SCHEMA_LINE} bounds\n")
        writer = csv.writer(fh)
        writer.writerow(["quantity", "bound", "measured", "satisfied"])
        writer.writerows(rows)
    _write_manifest(
        out_dir, "bounds", args.seed,
        {"scene": args.scene, "scene_sha256": _sha256(Path(args.scene)),
         "frequency": f},
        [str(out_csv)],
    )
    return EXIT_OK


def cmd_series_compare(args) -> int:
    scene = _load_scene_checked(args.scene)
    config = _parse_config(scene, args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f = args.frequency
    exact = channel_exact(scene, config, f)
    scale = np.linalg.norm(exact.entries)
    model = cascaded_from_blocks(
        scene, f, environment="generic" if scene.environment else "free-space"
    )
    cascaded_resid = (
        np.linalg.norm(cascaded_predict(model, config).entries - exact.entries)
        / scale
    )
    rows = []
    # K counts the highest retained number of RIS encounters; the series keeps
    # K + 1 terms.
    for k in range(0, args.k_max + 1):
        diverged = ""
        try:
            approx = generic_series_rt(
                scene, config, f, SeriesTruncation.fixed(k + 1)
            )
            resid = float(np.linalg.norm(approx.entries - exact.entries) / scale)
        except DivergenceDetectedError:
            resid = float("nan")
            diverged = "yes"
        rows.append([k, repr(resid), diverged])
    out_csv = out_dir / "series_compare.csv"
    with open(out_csv, "w", newline="") as fh:
        fh.write(f"{SCHEMA_LINE} series_compare\n")
        writer = csv.writer(fh)
        writer.writerow(["K", "relative_residual", "diverged"])
        writer.writerows(rows)
    _write_manifest(
        out_dir, "series_compare", args.seed,
        {"scene": args.scene, "scene_sha256": _sha256(Path(args.scene)),
         "config": args.config, "frequency": f, "k_max": args.k_max},
        [str(out_csv)],
        extra={"cascaded_relative_residual": float(cascaded_resid)},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physfadkit",
        description="Coupled-dipole RIS channel simulator and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--workers", type=int, default=None,
                       help="default: PHYSFADKIT_WORKERS or machine parallelism")

    p = sub.add_parser("channel", help="exact channel for one configuration")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--config", required=True, help="RIS bitstring, e.g. 1010")
    p.add_argument("--frequency", type=float, default=1.0)
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("zeta", help="linearity-metric sweep")
    common(p)
    p.add_argument("--spec", help="JSON sweep spec file")
    p.add_argument("--preset", choices=sorted(_PRESETS))
    p.add_argument("--axis")
    p.add_argument("--grid", help="comma-separated values")
    p.add_argument("--with-tau", action="store_true")
    p.add_argument("--realizations", type=int, default=None)
    p.set_defaults(func=cmd_zeta)

    p = sub.add_parser("bounds", help="coupling constants and series bounds")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--frequency", type=float, default=1.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("series-compare", help="per-order series residuals")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--frequency", type=float, default=1.0)
    p.add_argument("--k-max", type=int, default=10)
    p.set_defaults(func=cmd_series_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PhysfadkitError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
