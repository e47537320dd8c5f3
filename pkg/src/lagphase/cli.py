"""Command-line entry point.

Subcommands::

    lagphase run <config>                 run the preset named in a config file
    lagphase bench <preset> [key=value…]  run a preset with inline overrides
    lagphase converge <config>            quasi-1D strip convergence sweep

Config files are line-oriented ``key=value`` text; ``#`` starts a comment.
Exit codes: 0 normal, 2 configuration error, 3 step failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dissipation import ConfigError
from .energy import Base, discrete_energy, volume
from .mesh import MeshFormatError, build_uniform_mesh, load_mesh, save_snapshot, signed_areas
from .metrics import (InterfaceVanished, convergence_table, count_components,
                      interface_radius, interface_roundness, linf_interface_error,
                      mean_curvature_radius)
from .optimize import OptimizerConfig
from .presets import PRESETS, STRIP, phi_quasi1d
from .stepper import SolverConfig, run

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_STEP_FAILURE, EXIT_IO = 0, 2, 3, 4

# min det of the cumulative flow map below this fraction of its initial value
DEGRADATION_RATIO = 1e-3


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


RUN_KEYS = {
    "preset": str,
    "eps2": float,
    "nu": float,
    "tau": float,
    "Wb": float,
    "A": float,
    "eta": float,
    "nx": int,
    "ny": int,
    "pattern": str,
    "mesh": str,
    "max_steps": int,
    "energy_tol": float,
    "eulerian_steps": _int_list,
    "snapshot_stride": int,
    "max_iterations": int,
    "output": str,
}

CONVERGE_KEYS = {
    "eps2": float,
    "h": _float_list,
    "tau": _float_list,
    "t_end": float,
    "nu": float,
    "max_iterations": int,
    "output": str,
}


def parse_pairs(pairs, schema, where="line"):
    """Parse ``(lineno, text)`` pairs of ``key=value`` against ``schema``."""
    out = {}
    for lineno, raw in pairs:
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{where} {lineno}: expected key=value, got {text!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in schema:
            raise ConfigError(f"{where} {lineno}: unknown key {key!r}")
        try:
            out[key] = schema[key](value)
        except ValueError:
            kind = getattr(schema[key], "__name__", "value").lstrip("_")
            raise ConfigError(
                f"{where} {lineno}: key {key!r} expects {kind}, got {value!r}") from None
    return out


def parse_config(path, schema=RUN_KEYS):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return parse_pairs(enumerate(lines, 1), schema)


@dataclass
class BenchmarkOutcome:
    status: str
    exit_code: int
    degraded: bool
    output: Path


METRIC_COLUMNS = ("step", "time", "energy", "min_area_ratio", "phi_min", "phi_max", "volume",
                  "components_pos", "components_neg", "radius", "reference_radius",
                  "roundness", "linf_error")


def _metrics_row(preset, step, time, tri, phi, energy, areas0, eps2):
    nan = float("nan")
    row = dict(step=step, time=time, energy=energy,
               min_area_ratio=float(np.min(signed_areas(tri.nodes, tri.elements) / areas0)),
               phi_min=float(phi.min()), phi_max=float(phi.max()),
               volume=volume(tri, phi, tri.nodes),
               components_pos=count_components(tri, phi, True),
               components_neg=count_components(tri, phi, False),
               radius=nan, reference_radius=nan, roundness=nan, linf_error=nan)
    try:
        row["radius"] = interface_radius(tri, phi, tri.nodes)
        row["roundness"] = interface_roundness(tri, phi, tri.nodes)
    except InterfaceVanished:
        pass
    if preset == "circle":
        row["reference_radius"] = float(mean_curvature_radius(time))
    if preset in ("quasi1d", "strip"):
        try:
            row["linf_error"] = linf_interface_error(tri, phi, tri.nodes, math.sqrt(eps2))
        except ValueError:
            pass
    return row


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_benchmark(preset_name, overrides=None):
    """Run one preset, writing trace.csv, metrics.csv and snap_%06d.txt files."""
    overrides = dict(overrides or {})
    if preset_name not in PRESETS:
        raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[preset_name]
    out = Path(overrides.pop("output", f"out_{preset_name}"))
    stride = overrides.pop("snapshot_stride", 10)
    mesh_path = overrides.pop("mesh", None)
    max_iterations = overrides.pop("max_iterations", None)
    if stride < 1:
        raise ConfigError("snapshot_stride must be at least 1")
    overrides.pop("preset", None)

    try:
        tri, phi0, p = preset.build(**overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if mesh_path:
        tri = load_mesh(mesh_path)
        phi0 = np.asarray(preset.phi0(*tri.nodes.T), dtype=float)
    try:
        model = preset.energy_model(p)
        opt = OptimizerConfig() if max_iterations is None else OptimizerConfig(
            max_iterations=max_iterations)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = SolverConfig(tau=p["tau"], nu=p["nu"], model=model,
                          energy_tol=p["energy_tol"], max_steps=p["max_steps"],
                          eulerian_schedule=tuple(p["eulerian_steps"]), optimizer=opt)

    out.mkdir(parents=True, exist_ok=True)
    areas0 = tri.areas.copy()
    rows = []
    last = {}

    def record(step, time, cur, phi):
        energy = float(discrete_energy(model, cur, phi, cur.nodes))
        rows.append(_metrics_row(preset_name, step, time, cur, phi, energy, areas0, p["eps2"]))
        last.update(step=step, time=time, tri=cur, phi=phi)
        if step % stride == 0:
            save_snapshot(cur, cur.nodes, phi, out / f"snap_{step:06d}.txt", time)

    result = run(tri, phi0, config, callback=record)
    if last and last["step"] % stride:
        save_snapshot(last["tri"], last["tri"].nodes, last["phi"],
                      out / f"snap_{last['step']:06d}.txt", last["time"])
    (out / "trace.csv").write_text(result.trace.to_csv())
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    degraded = any(r["min_area_ratio"] < DEGRADATION_RATIO for r in rows)
    code = EXIT_STEP_FAILURE if result.status == "step_failure" else EXIT_OK
    return BenchmarkOutcome(result.status, code, degraded, out)


def strip_row(tri):
    """Node indices on the bottom edge y = -0.1 of the strip."""
    return np.nonzero(np.isclose(tri.nodes[:, 1], STRIP[1][0]))[0]


def strip_error(eps2, h, tau, t_end=0.2, nu=0.05, optimizer=None):
    """L-infinity interface error of the strip run at time ``t_end``."""
    nx = int(round((STRIP[0][1] - STRIP[0][0]) / h))
    ny = max(1, int(round((STRIP[1][1] - STRIP[1][0]) / h)))
    tri = build_uniform_mesh(nx, ny, STRIP, "quasi1d", pattern="crossed")
    phi0 = phi_quasi1d(*tri.nodes.T)
    # a vanishing energy_tol: the sweep compares states at the fixed time t_end
    config = SolverConfig(tau=tau, nu=nu, model=Base(eps2), energy_tol=np.finfo(float).tiny,
                          max_steps=int(round(t_end / tau)),
                          optimizer=optimizer or OptimizerConfig())
    res = run(tri, phi0, config)
    if res.status == "step_failure":
        raise RuntimeError(f"strip run h={h} failed at step {len(res.reports)}")
    return linf_interface_error(res.tri, res.phi0, res.tri.nodes, math.sqrt(eps2),
                                nodes=strip_row(res.tri))


def run_convergence(eps2, h_list, tau_list, t_end=0.2, nu=0.05, optimizer=None):
    """Errors and observed orders for a sequence of halving mesh sizes."""
    h_list, tau_list = list(h_list), list(tau_list)
    if len(h_list) != len(tau_list) or not h_list:
        raise ValueError("h and tau lists must be non-empty and of equal length")
    runs = [(h, tau, strip_error(eps2, h, tau, t_end, nu, optimizer))
            for h, tau in zip(h_list, tau_list)]
    return convergence_table(runs)


def convergence_csv(reports):
    lines = ["h,tau,error,order"]
    for r in reports:
        lines.append(f"{r.h!r},{r.tau!r},{r.linf!r},{'' if r.order is None else repr(r.order)}")
    return "\n".join(lines) + "\n"


def _cmd_converge(cfg):
    missing = [k for k in ("eps2", "h", "tau") if k not in cfg]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    opt = OptimizerConfig(max_iterations=cfg["max_iterations"]) if "max_iterations" in cfg else None
    try:
        reports = run_convergence(cfg["eps2"], cfg["h"], cfg["tau"], cfg.get("t_end", 0.2),
                                  cfg.get("nu", 0.05), opt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = convergence_csv(reports)
    out = Path(cfg.get("output", "out_converge"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_bench(preset, overrides):
    outcome = run_benchmark(preset, overrides)
    print(f"{preset}: status={outcome.status} degraded={outcome.degraded} "
          f"output={outcome.output}")
    return outcome.exit_code


def build_parser():
    parser = argparse.ArgumentParser(prog="lagphase", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the preset named in a config file")
    p_run.add_argument("config")
    p_bench = sub.add_parser("bench", help="run a preset with key=value overrides")
    p_bench.add_argument("preset")
    p_bench.add_argument("overrides", nargs="*")
    p_conv = sub.add_parser("converge", help="quasi-1D strip convergence sweep")
    p_conv.add_argument("config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
            if "preset" not in cfg:
                raise ConfigError(f"{args.config}: missing key 'preset'")
            return _cmd_bench(cfg["preset"], cfg)
        if args.command == "bench":
            cfg = parse_pairs(enumerate(args.overrides, 1), RUN_KEYS, where="argument")
            return _cmd_bench(args.preset, cfg)
        return _cmd_converge(parse_config(args.config, CONVERGE_KEYS))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MeshFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
