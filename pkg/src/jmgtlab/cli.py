"""Command-line front end: config ingestion, subcommands, run persistence.

Subcommands: modal, simulate, besov, linear-decay, w-decay, verify.
Exit codes: 0 success, 1 criterion failure, 2 config error, 3 divergence.
Configs are flat JSON (one level, scalar values); every run directory gets an
atomically-written manifest so re-runs with the same config and seed are
reproducible bit-for-bit at the CSV level.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, acceptance, decay, lp, modal, sim
from .core import (InvalidParameterError, ModelParams, read_snapshot,
                   validate_params, write_snapshot)
from .sim import DivergenceError


class ConfigError(ValueError):
    """Malformed configuration: missing/unknown key or type mismatch."""


# ---------------------------------------------------------------------------
# flat-JSON config parsing

_REQUIRED = object()

MODAL_SCHEMA = {
    "tau": (float, 0.5),
    "beta": (float, 1.0),
    "xi_min": (float, 1e-3),
    "xi_max": (float, 1e3),
    "xi_count": (int, 400),
    "sweep": (bool, False),
    "sweep_cells": (int, 100),
}

SIMULATE_SCHEMA = {
    "dim": (int, 1),
    "n": (int, 64),
    "box_len": (float, 2.0 * np.pi),
    "tau": (float, 0.5),
    "beta": (float, 1.0),
    "nl_ratio": (float, 1.0),
    "nl_enabled": (bool, True),
    "dt": (float, 0.0),
    "t_end": (float, 10.0),
    "family": (str, "gaussian-bump"),
    "amplitude": (float, 1e-3),
    "width": (float, 0.0),
    "mode_index": (int, 1),
    "band_lo": (int, 1),
    "band_hi": (int, 4),
    "seed": (int, 1234),
    "snapshot_stride": (int, 10),
    "record_trajectory": (bool, False),
}

DECAY_SCHEMA = {
    "tau": (float, 0.5),
    "beta": (float, 1.0),
    "family": (str, "gaussian"),
    "width": (float, 1.0),
    "alpha": (float, 0.0),
    "s_index": (float, 1.5),
    "t_decades": (float, 4.0),
    "k_nodes": (int, decay.DEFAULT_K_NODES),
}


def coerce_config(raw: dict, schema: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}")
        expected, _default = schema[key]
        if expected is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"key {key!r}: expected bool, got {value!r}")
        elif expected is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"key {key!r}: expected number, got {value!r}")
            value = float(value)
        elif expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"key {key!r}: expected integer, got {value!r}")
        elif expected is str:
            if not isinstance(value, str):
                raise ConfigError(f"key {key!r}: expected string, got {value!r}")
        out[key] = value
    for key, (_t, default) in schema.items():
        if key not in out:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            out[key] = default
    return out


def parse_config(path: str, schema: dict) -> dict:
    """Load and validate a flat JSON config against the subcommand schema."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in raw.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"key {key!r}: nested values are not allowed (flat JSON only)")
    return coerce_config(raw, schema)


# ---------------------------------------------------------------------------
# deterministic CSV + manifest output


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_echo: dict, outputs, verdicts: dict,
                   wall_clock: float, input_hashes: dict = None):
    """Atomic run manifest: config echo, hashes of every output, verdicts."""
    entries = {name: _sha256(os.path.join(out_dir, name)) for name in sorted(outputs)}
    content = hashlib.sha256(
        json.dumps({"config": config_echo, "outputs": entries}, sort_keys=True).encode()
    ).hexdigest()
    manifest = {
        "artifact_version": __version__,
        "config": config_echo,
        "input_hashes": input_hashes or {},
        "outputs": entries,
        "content_hash": content,
        "wall_clock_s": wall_clock,
        "verdicts": verdicts,
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return manifest


def _plot_script(csv_name, columns, title):
    lines = ["set logscale xy", "set key left bottom", f'set title "{title}"',
             'set xlabel "1+t"', 'set ylabel "norm"']
    plots = [f'"{csv_name}" using 1:{i + 2} with lines title "{c}"'
             for i, c in enumerate(columns)]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_modal(args) -> int:
    cfg = parse_config(args.config, MODAL_SCHEMA) if args.config else \
        {k: d for k, (_t, d) in MODAL_SCHEMA.items()}
    for key in MODAL_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    validate_params(ModelParams(cfg["tau"], cfg["beta"]))
    header = ["tau", "beta", "xi", "re_l1", "re_l2", "re_l3", "abscissa", "stable"]
    rows = []
    if cfg["sweep"]:
        cells = cfg["sweep_cells"]
        taus = np.linspace(cfg["tau"] / cells, cfg["tau"], cells)
        betas = np.linspace(cfg["beta"] / cells, cfg["beta"], cells)
        xis = np.geomspace(cfg["xi_min"], cfg["xi_max"], cfg["xi_count"])
        region = modal.stability_region(taus, betas, xis)
        for i, t in enumerate(taus):
            for j, b in enumerate(betas):
                xi = region.worst_xi[i, j]
                roots, _, _ = modal.spectrum_batch(np.array([xi**2]),
                                                   ModelParams(t, b))
                rows.append([t, b, xi, roots[0, 0].real, roots[0, 1].real,
                             roots[0, 2].real, region.max_abscissa[i, j],
                             bool(region.stable[i, j])])
    else:
        params = ModelParams(cfg["tau"], cfg["beta"])
        xis = np.geomspace(cfg["xi_min"], cfg["xi_max"], cfg["xi_count"])
        roots, absc, _ = modal.spectrum_batch(xis**2, params)
        for i, xi in enumerate(xis):
            rows.append([cfg["tau"], cfg["beta"], xi, roots[i, 0].real,
                         roots[i, 1].real, roots[i, 2].real, absc[i],
                         bool(absc[i] < 0)])
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        t0 = time.perf_counter()
        write_csv(os.path.join(args.out, "modal.csv"), header, rows)
        write_manifest(args.out, cfg, ["modal.csv"], {},
                       time.perf_counter() - t0,
                       {"config": _sha256(args.config)} if args.config else {})
        print(f"wrote {os.path.join(args.out, 'modal.csv')} ({len(rows)} rows)")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    return 0


def cmd_simulate(args) -> int:
    cfg_dict = parse_config(args.config, SIMULATE_SCHEMA)
    cfg = sim.SimConfig(**cfg_dict)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    verdicts = {"diverged": False}
    outputs = []
    try:
        result = sim.run(cfg)
    except DivergenceError as exc:
        verdicts = {"diverged": True, "t": exc.t, "detail": str(exc)}
        write_manifest(args.out, cfg_dict, [], verdicts, time.perf_counter() - t0,
                       {"config": _sha256(args.config)})
        print(f"divergence: {exc}", file=sys.stderr)
        return 3

    grid = result.grid
    for name in ("u", "v", "w"):
        fname = f"final_{name}.snap"
        write_snapshot(os.path.join(args.out, fname),
                       getattr(result.final_state, name), grid,
                       result.final_state.t, name)
        outputs.append(fname)
    e_names = ["e_vptw", "e_grad_vptw", "e_lap_v", "e_grad_v", "e_lap_uptv",
               "e_grad_uptv", "e_w"]
    d_names = ["d_grad_v", "d_lap_v", "d_w", "d_lap_uptv", "d_grad_vptw"]
    header = ["t"] + e_names + d_names + ["cal_e2", "cal_d2_cum", "m0", "m_total", "fit_c"]
    rows = [[r.t, *r.e_terms, *r.d_terms, r.cal_e2, r.cal_d2_cum, r.m0,
             r.m_total, r.fit_c] for r in result.reports]
    write_csv(os.path.join(args.out, "norms.csv"), header, rows)
    outputs.append("norms.csv")
    tracker = result.tracker
    brows = [[int(q), tracker.block_energy[i], tracker.block_d2_cum[i]]
             for i, q in enumerate(tracker.qs)]
    write_csv(os.path.join(args.out, "blocks.csv"),
              ["q", "block_energy_sup", "block_d2_cum"], brows)
    outputs.append("blocks.csv")
    verdicts.update({
        "sup_e2_over_e2_0": result.sup_e2 / max(result.reports[0].cal_e2, 1e-300),
        "fit_c": result.fit_c,
        "initial_norms": result.initial_norms,
    })
    write_manifest(args.out, cfg_dict, outputs, verdicts, time.perf_counter() - t0,
                   {"config": _sha256(args.config)})
    print(f"completed t={result.final_state.t:g}; outputs in {args.out}")
    return 0


def cmd_besov(args) -> int:
    field, header, grid = read_snapshot(args.input)
    r_exp = np.inf if args.r in ("inf", "Inf") else float(args.r)
    spec = lp.BesovSpec(s=args.s, r=r_exp, homogeneous=args.homogeneous)
    result = lp.besov_norm(lp.GridField(grid, field), spec)
    print(f"norm={result.value:.12g} truncation={result.truncation:.3g} "
          f"truncated={result.truncated}")
    print("q,weighted_block_norm")
    for q, val in result.blocks:
        print(f"{q},{_fmt(val)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "besov_blocks.csv"),
                  ["q", "weighted_block_norm"], list(result.blocks))
        write_manifest(args.out, {"input": args.input, "s": args.s, "r": str(args.r),
                                  "homogeneous": args.homogeneous},
                       ["besov_blocks.csv"],
                       {"norm": result.value, "truncation": result.truncation,
                        "truncated": result.truncated},
                       0.0, {"input": _sha256(args.input)})
    return 0


def _parse_float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def _decay_common(args, w_mode: bool) -> int:
    cfg_dict = parse_config(args.config, DECAY_SCHEMA) if args.config else \
        {k: d for k, (_t, d) in DECAY_SCHEMA.items()}
    for key in ("tau", "beta", "t_decades"):
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            cfg_dict[key] = flag
    if args.data is not None:
        cfg_dict["family"] = args.data
    if args.s is not None:
        cfg_dict["s_index"] = args.s
    sigmas = _parse_float_list(args.sigma_list) if args.sigma_list else None
    cfg = decay.DecayConfig(tau=cfg_dict["tau"], beta=cfg_dict["beta"],
                            family=cfg_dict["family"], width=cfg_dict["width"],
                            alpha=cfg_dict["alpha"], s_index=cfg_dict["s_index"],
                            t_decades=cfg_dict["t_decades"],
                            k_nodes=cfg_dict["k_nodes"])
    name = "w-decay" if w_mode else "linear-decay"
    if w_mode:
        if sigmas:
            cfg.sigma_list = sigmas
        result = decay.w_decay_experiment(cfg)
    else:
        if sigmas:
            cfg.ell_list = sigmas
        result = decay.linear_decay_experiment(cfg)

    labels = list(result.series)
    print(f"{name}: tau={cfg.tau} beta={cfg.beta} family={cfg.family} s={cfg.s_index}")
    print("label,ell,sigma,fitted,ci,theory,verdict")
    for row in result.rows:
        print(f"{row.label},{row.ell:g},{row.sigma:g},{row.fitted:.6f},"
              f"{row.ci:.2g},{row.theory:g},{row.verdict}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        t0 = time.perf_counter()
        times = result.series[labels[0]].times
        rows = [[t] + [result.series[lbl].values[i] for lbl in labels]
                for i, t in enumerate(times)]
        csv_name = f"{name}.csv"
        write_csv(os.path.join(args.out, csv_name), ["t"] + labels, rows)
        write_csv(os.path.join(args.out, "verdicts.csv"),
                  ["label", "ell", "sigma", "fitted", "ci", "theory", "verdict"],
                  [[r.label, r.ell, r.sigma, r.fitted, r.ci, r.theory, r.verdict]
                   for r in result.rows])
        with open(os.path.join(args.out, "plot.gp"), "w", encoding="utf-8") as fh:
            fh.write(_plot_script(csv_name, labels, name))
        write_manifest(args.out, {**cfg_dict, "sigma_list": list(sigmas or ())},
                       [csv_name, "verdicts.csv", "plot.gp"],
                       {"all_ok": result.all_ok,
                        **({"tau_ok": result.tau_ok} if w_mode else {})},
                       time.perf_counter() - t0)
    return 0 if result.all_ok else 1


def cmd_verify(args) -> int:
    try:
        results = acceptance.run_suite(args.suite, tau=args.tau, beta=args.beta)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    for res in results:
        print(res.line())
    n_fail = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "verdicts.csv"),
                  ["criterion", "passed", "measured", "target", "tolerance", "runtime_s"],
                  [[r.name, r.passed, r.measured, r.target, r.tolerance, r.runtime]
                   for r in results])
        write_manifest(args.out, {"suite": args.suite}, ["verdicts.csv"],
                       {r.name: bool(r.passed) for r in results}, 0.0)
    return 0 if n_fail == 0 else 1


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jmgt",
        description="Spectral laboratory for the relaxed nonlinear acoustic model")
    sub = parser.add_subparsers(dest="command", required=True)

    p_modal = sub.add_parser("modal", help="per-mode spectra and stability sweeps")
    p_modal.add_argument("--config")
    p_modal.add_argument("--tau", type=float)
    p_modal.add_argument("--beta", type=float)
    p_modal.add_argument("--xi-min", dest="xi_min", type=float)
    p_modal.add_argument("--xi-max", dest="xi_max", type=float)
    p_modal.add_argument("--xi-count", dest="xi_count", type=int)
    p_modal.add_argument("--sweep", action="store_const", const=True, default=None)
    p_modal.add_argument("--sweep-cells", dest="sweep_cells", type=int)
    p_modal.add_argument("--out")
    p_modal.set_defaults(fn=cmd_modal)

    p_sim = sub.add_parser("simulate", help="nonlinear pseudo-spectral run")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(fn=cmd_simulate)

    p_bes = sub.add_parser("besov", help="dyadic norm of a field snapshot")
    p_bes.add_argument("--input", required=True)
    p_bes.add_argument("--s", type=float, required=True)
    p_bes.add_argument("--r", default="1")
    p_bes.add_argument("--homogeneous", action="store_true")
    p_bes.add_argument("--out")
    p_bes.set_defaults(fn=cmd_besov)

    for name, w_mode in (("linear-decay", False), ("w-decay", True)):
        p = sub.add_parser(name, help=f"{name} exponent experiment")
        p.add_argument("--config")
        p.add_argument("--tau", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--data", help="data family (gaussian, power-band, w-only)")
        p.add_argument("--sigma-list", dest="sigma_list",
                       help="comma-separated norm indices")
        p.add_argument("--s", type=float, help="low-frequency regularity index of the data")
        p.add_argument("--t-decades", dest="t_decades", type=float)
        p.add_argument("--out")
        p.set_defaults(fn=_decay_common, w_mode=w_mode)

    p_ver = sub.add_parser("verify", help="run acceptance criteria")
    p_ver.add_argument("suite", nargs="?", default="all",
                       choices=sorted(acceptance.SUITES))
    p_ver.add_argument("--tau", type=float, help="override for parametric criteria")
    p_ver.add_argument("--beta", type=float)
    p_ver.add_argument("--out")
    p_ver.set_defaults(fn=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.fn is _decay_common:
            return _decay_common(args, args.w_mode)
        return args.fn(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
