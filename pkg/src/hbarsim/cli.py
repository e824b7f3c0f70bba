"""Command-line entry point, configuration ingestion and result writers.

Device configuration is strict JSON with units encoded in the key names
(GHz for frequencies, MHz for couplings and offsets, us for times)::

    {
      "qubit1": {"label": "q1", "omega_op_ghz": 3.7778, "tune_min_ghz": 3.7,
                 "tune_max_ghz": 4.5, "t1_us": 2.2, "t2_us": 4.41},
      "qubit2": {...},
      "modes1": [{"label": "m1_0", "omega_ghz": 3.7225,
                  "two_g_mhz": 2.55, "t1_us": 0.38}, ...],
      "modes2": [...],
      "qq_two_g_mhz": 16.7,
      "frame_freq_ghz": null,
      "fock_dim": 2,
      "cross_two_g_mhz": 0.0
    }

Unknown keys are rejected unless ``--lenient`` downgrades them to warnings.
Grids are written as deterministic CSV (UTF-8, LF, 9 significant digits) and
every output is paired with a JSON run manifest; re-running the recorded
command reproduces the output files byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.resources
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, experiments, model
from .dynamics import IntegratorConfig, Trajectory
from .experiments import EigencurveSet, PopulationGrid, device_fingerprint
from .model import DeviceSpec, ModeSpec, QubitSpec

__all__ = [
    "ConfigError",
    "parse_device_config",
    "device_to_json",
    "reference_config_bytes",
    "write_grid",
    "write_curves",
    "write_trajectory",
    "RunManifest",
    "write_manifest",
    "main",
]


class ConfigError(ValueError):
    """Malformed or invalid device configuration."""


_QUBIT_KEYS = {
    "label": str,
    "omega_op_ghz": (int, float),
    "tune_min_ghz": (int, float),
    "tune_max_ghz": (int, float),
    "t1_us": (int, float),
    "t2_us": (int, float),
}
_MODE_KEYS = {
    "label": str,
    "omega_ghz": (int, float),
    "two_g_mhz": (int, float),
    "t1_us": (int, float),
}
_TOP_KEYS = {
    "qubit1": dict,
    "qubit2": dict,
    "modes1": list,
    "modes2": list,
    "qq_two_g_mhz": (int, float),
    "frame_freq_ghz": (int, float, type(None)),
    "fock_dim": int,
    "cross_two_g_mhz": (int, float),
}
_OPTIONAL_TOP = {"frame_freq_ghz", "fock_dim", "cross_two_g_mhz", "modes1", "modes2"}


def _check_keys(obj: dict, allowed: dict, path: str, lenient: bool):
    unknown = set(obj) - set(allowed)
    if unknown:
        msg = f"unknown key(s) {sorted(unknown)} in {path or 'top level'}"
        if lenient:
            warnings.warn(msg, UserWarning, stacklevel=3)
        else:
            raise ConfigError(msg)


def _get(obj: dict, key: str, types, path: str, required: bool = True, default=None):
    full = f"{path}.{key}" if path else key
    if key not in obj:
        if required:
            raise ConfigError(f"missing required field {full!r}")
        return default
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise ConfigError(f"field {full!r} has wrong type {type(value).__name__}")
    return value


def _parse_qubit(obj, path: str, lenient: bool) -> QubitSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _check_keys(obj, _QUBIT_KEYS, path, lenient)
    try:
        return QubitSpec(
            label=_get(obj, "label", str, path),
            omega_op=float(_get(obj, "omega_op_ghz", (int, float), path)),
            tune_min=float(_get(obj, "tune_min_ghz", (int, float), path)),
            tune_max=float(_get(obj, "tune_max_ghz", (int, float), path)),
            t1=float(_get(obj, "t1_us", (int, float), path)),
            t2=float(_get(obj, "t2_us", (int, float), path)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_mode(obj, path: str, lenient: bool) -> ModeSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    _check_keys(obj, _MODE_KEYS, path, lenient)
    try:
        return ModeSpec(
            label=_get(obj, "label", str, path),
            omega=float(_get(obj, "omega_ghz", (int, float), path)),
            two_g=float(_get(obj, "two_g_mhz", (int, float), path)),
            t1=float(_get(obj, "t1_us", (int, float), path)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_device_config(document: bytes | str, lenient: bool = False) -> DeviceSpec:
    """Parse and validate a JSON device description."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(obj, dict):
        raise ConfigError("device configuration must be a JSON object")
    _check_keys(obj, _TOP_KEYS, "", lenient)
    for key in set(_TOP_KEYS) - _OPTIONAL_TOP:
        if key not in obj:
            raise ConfigError(f"missing required field {key!r}")
    frame = _get(obj, "frame_freq_ghz", (int, float, type(None)), "", required=False)
    try:
        return DeviceSpec(
            qubit1=_parse_qubit(obj["qubit1"], "qubit1", lenient),
            qubit2=_parse_qubit(obj["qubit2"], "qubit2", lenient),
            modes1=tuple(
                _parse_mode(m, f"modes1[{i}]", lenient)
                for i, m in enumerate(obj.get("modes1", []))
            ),
            modes2=tuple(
                _parse_mode(m, f"modes2[{i}]", lenient)
                for i, m in enumerate(obj.get("modes2", []))
            ),
            qq_two_g=float(_get(obj, "qq_two_g_mhz", (int, float), "")),
            frame_freq=None if frame is None else float(frame),
            fock_dim=_get(obj, "fock_dim", int, "", required=False, default=2),
            cross_two_g=float(
                _get(obj, "cross_two_g_mhz", (int, float), "", required=False, default=0.0)
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def device_to_json(device: DeviceSpec) -> str:
    """Serialize a device so that parse(serialize(d)) == d."""
    obj = {
        "qubit1": _qubit_obj(device.qubit1),
        "qubit2": _qubit_obj(device.qubit2),
        "modes1": [_mode_obj(m) for m in device.modes1],
        "modes2": [_mode_obj(m) for m in device.modes2],
        "qq_two_g_mhz": device.qq_two_g,
        "frame_freq_ghz": device.frame_freq,
        "fock_dim": device.fock_dim,
        "cross_two_g_mhz": device.cross_two_g,
    }
    return json.dumps(obj, indent=2) + "\n"


def _qubit_obj(q: QubitSpec) -> dict:
    return {
        "label": q.label,
        "omega_op_ghz": q.omega_op,
        "tune_min_ghz": q.tune_min,
        "tune_max_ghz": q.tune_max,
        "t1_us": q.t1,
        "t2_us": q.t2,
    }


def _mode_obj(m: ModeSpec) -> dict:
    return {
        "label": m.label,
        "omega_ghz": m.omega,
        "two_g_mhz": m.two_g,
        "t1_us": m.t1,
    }


def reference_config_bytes() -> bytes:
    """The shipped reference device configuration."""
    return (
        importlib.resources.files("hbarsim")
        .joinpath("data/reference_device.json")
        .read_bytes()
    )


# ---------------------------------------------------------------------------
# Writers (deterministic byte output)


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def write_grid(grid: PopulationGrid, destination) -> Path:
    """CSV with a ``duration_us`` column followed by one column per offset."""
    path = Path(destination)
    header = ["duration_us"] + [f"offset_MHz={_fmt(o)}" for o in grid.offsets]
    lines = [",".join(header)]
    for j, duration in enumerate(grid.durations):
        row = [_fmt(duration)] + [_fmt(v) for v in grid.values[:, j]]
        lines.append(",".join(row))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def write_curves(curves: EigencurveSet, destination) -> Path:
    path = Path(destination)
    n = curves.curves.shape[1]
    header = ["swept_freq_ghz"] + [f"curve_{k:02d}_ghz" for k in range(n)]
    lines = [",".join(header)]
    for i, f in enumerate(curves.swept_freqs):
        lines.append(",".join([_fmt(f)] + [_fmt(v) for v in curves.curves[i]]))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def write_trajectory(traj: Trajectory, destination) -> Path:
    path = Path(destination)
    labels = sorted(traj.observables)
    header = ["time_us"] + [f"pop_{label}" for label in labels]
    lines = [",".join(header)]
    for i, t in enumerate(traj.times):
        lines.append(
            ",".join([_fmt(t)] + [_fmt(traj.observables[label][i]) for label in labels])
        )
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


@dataclass
class RunManifest:
    """Reproducibility record written alongside every output."""

    tool_version: str
    device_hash: str
    command: str
    parameters: dict
    integrator: dict
    mode_truncation: dict | None
    wall_clock_s: float
    outputs: list
    warnings: list


def write_manifest(manifest: RunManifest, destination) -> Path:
    path = Path(destination)
    payload = json.dumps(dataclasses.asdict(manifest), indent=2, sort_keys=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes((payload + "\n").encode("utf-8"))
    os.replace(tmp, path)
    return path


# ---------------------------------------------------------------------------
# Command line


def _parse_grid(spec: str, name: str) -> np.ndarray:
    try:
        start_s, stop_s, n_s = spec.split(":")
        start, stop, n = float(start_s), float(stop_s), int(n_s)
    except ValueError as exc:
        raise ConfigError(f"--{name} expects start:stop:n, got {spec!r}") from exc
    if n < 1:
        raise ConfigError(f"--{name}: n must be >= 1")
    return np.linspace(start, stop, n)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbarsim",
        description=(
            "Simulate two exchange-coupled transmons with their acoustic-mode "
            "ladders: spectroscopy, vacuum-Rabi chevrons, excitation transfer "
            "and the mode-locality null test."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    def add_common(p, durations=True):
        p.add_argument("--device", required=True, help="device JSON path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--offsets", default="0:0:1", help="start:stop:n in MHz")
        if durations:
            p.add_argument("--durations", default="0:1:201", help="start:stop:n in us")
        p.add_argument("--qubit", choices=("1", "2"), default="1")
        p.add_argument("--decoherence", choices=("on", "off"), default="on")
        p.add_argument("--parallelism", type=int, default=1)
        p.add_argument("--fock-dim", type=int, default=None)
        p.add_argument("--frame-freq", type=float, default=None, help="GHz")
        p.add_argument("--lenient", action="store_true", help="warn on unknown keys")

    add_common(sub.add_parser("spectroscopy", help="eigenfrequency sweep"), durations=False)
    add_common(sub.add_parser("chevron", help="vacuum-Rabi chevron grid"))
    add_common(sub.add_parser("transfer", help="excitation-transfer grid"))
    locality = sub.add_parser("locality", help="mode-locality null test")
    add_common(locality, durations=False)
    locality.add_argument(
        "--cross-two-g", type=float, default=None,
        help="stray cross coupling in MHz (default: device value)",
    )
    validate = sub.add_parser("validate", help="check a device configuration")
    validate.add_argument("--device", required=True)
    validate.add_argument("--lenient", action="store_true")
    return parser


def _load_device(args) -> DeviceSpec:
    try:
        document = Path(args.device).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read device file: {exc}") from exc
    device = parse_device_config(document, lenient=getattr(args, "lenient", False))
    if getattr(args, "fock_dim", None) is not None:
        device = dataclasses.replace(device, fock_dim=args.fock_dim)
    if getattr(args, "frame_freq", None) is not None:
        device = dataclasses.replace(device, frame_freq=args.frame_freq)
    return device


def _summary(device: DeviceSpec) -> str:
    rates = model.decoherence_rates(device)
    lines = [
        f"device {device_fingerprint(device)}",
        f"  qubit1 {device.qubit1.label}: {device.qubit1.omega_op} GHz, "
        f"T1 {device.qubit1.t1} us, T2 {device.qubit1.t2} us",
        f"  qubit2 {device.qubit2.label}: {device.qubit2.omega_op} GHz, "
        f"T1 {device.qubit2.t1} us, T2 {device.qubit2.t2} us",
        f"  qubit-qubit splitting: {device.qq_two_g} MHz",
        f"  modes on qubit 1: {len(device.modes1)}"
        + (
            f" ({device.modes1[0].omega}..{device.modes1[-1].omega} GHz, "
            f"2g {device.modes1[0].two_g} MHz)"
            if device.modes1
            else ""
        ),
        f"  modes on qubit 2: {len(device.modes2)}"
        + (
            f" ({device.modes2[0].omega}..{device.modes2[-1].omega} GHz, "
            f"2g {device.modes2[0].two_g} MHz)"
            if device.modes2
            else ""
        ),
        f"  frame: {device.frame} GHz, fock_dim {device.fock_dim}, "
        f"cross coupling {device.cross_two_g} MHz",
        f"  pure dephasing (1/us): "
        + ", ".join(f"{k}={v:.4f}" for k, v in rates["dephasing"].items()),
    ]
    return "\n".join(lines)


def _run_command(args, caught: list) -> tuple[list, dict | None, dict]:
    """Execute a data-producing subcommand; returns (outputs, truncation,
    parameters) with outputs as (name, writer, artifact)."""
    device = _load_device(args)
    qubit = (
        device.qubit1.label if getattr(args, "qubit", "1") == "1" else device.qubit2.label
    )
    decoherence = getattr(args, "decoherence", "on") == "on"
    offsets = _parse_grid(args.offsets, "offsets")
    parameters = {
        "device_file": str(args.device),
        "offsets_mhz": args.offsets,
        "qubit": qubit,
        "decoherence": decoherence,
        "parallelism": getattr(args, "parallelism", 1),
        "fock_dim": device.fock_dim,
        "frame_freq_ghz": device.frame,
    }
    if args.command == "spectroscopy":
        q = device.qubit(qubit)
        sweep = q.omega_op + offsets * 1e-3
        curves = experiments.spectroscopy_sweep(
            device, qubit, (float(sweep.min()), float(sweep.max())), len(sweep)
        )
        return (
            [("spectroscopy.csv", write_curves, curves)],
            curves.meta.get("mode_truncation"),
            parameters,
        )
    if args.command == "chevron":
        durations = _parse_grid(args.durations, "durations")
        parameters["durations_us"] = args.durations
        grid = experiments.chevron_scan(
            device,
            qubit,
            offsets,
            durations,
            decoherence=decoherence,
            parallelism=args.parallelism,
        )
        return (
            [("chevron.csv", write_grid, grid)],
            grid.meta.get("mode_truncation"),
            parameters,
        )
    if args.command == "transfer":
        durations = _parse_grid(args.durations, "durations")
        parameters["durations_us"] = args.durations
        grid = experiments.transfer_experiment(
            device,
            offsets,
            durations,
            decoherence=decoherence,
            parallelism=args.parallelism,
        )
        return (
            [("transfer.csv", write_grid, grid)],
            grid.meta.get("mode_truncation"),
            parameters,
        )
    if args.command == "locality":
        cross = (
            args.cross_two_g if args.cross_two_g is not None else device.cross_two_g
        )
        parameters["cross_two_g_mhz"] = cross
        traj = experiments.locality_test(device, cross, decoherence=decoherence)
        return [("locality.csv", write_trajectory, traj)], None, parameters
    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    started = time.monotonic()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            if args.command == "validate":
                device = _load_device(args)
                summary = _summary(device)
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
                print(summary)
                return 0
            outputs, truncation, parameters = _run_command(args, caught)
        except (ConfigError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except Exception as exc:  # noqa: BLE001 - runtime failure -> exit 1
            print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, writer, artifact in outputs:
            written.append(str(writer(artifact, out_dir / name)))
        device = _load_device(args)
        manifest = RunManifest(
            tool_version=__version__,
            device_hash=device_fingerprint(device),
            command=args.command,
            parameters=parameters,
            integrator=dataclasses.asdict(IntegratorConfig()),
            mode_truncation=truncation,
            wall_clock_s=round(time.monotonic() - started, 3),
            outputs=written,
            warnings=[str(w.message) for w in caught],
        )
        write_manifest(manifest, out_dir / f"{args.command}_manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
