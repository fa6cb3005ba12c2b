"""Command-line front end: ``hbac <command> --config cfg.json --out dir``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import core, espin, limits, opensys, ppa

log = logging.getLogger("hbac")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def load_schema(name: str) -> dict:
    text = resources.files("hbac").joinpath("schemas", f"{name}.json").read_text()
    schema = json.loads(text)
    if name != "tensor":
        schema.setdefault("$defs", {})["tensor"] = load_schema("tensor")
    return schema


def load_config(path: str, schema_name: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError(f"{path} failed schema {schema_name}:\n" + "\n".join(lines))
    return cfg


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("HBAC_OUT_DIR", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_text(path: Path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def write_json(path: Path, doc):
    write_text(path, json.dumps(doc, indent=1, sort_keys=False, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([ppa.format_real(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def _shape(block: dict) -> core.SystemShape:
    if "n_qubits" in block:
        return core.SystemShape.from_qubits(block["n_qubits"], block.get("m", 1))
    return core.SystemShape(block["n_prime"], block.get("m", 1), block.get("d"))


def cmd_ppa_run(cfg: dict, args) -> int:
    try:
        shape = _shape(cfg["shape"])
        eps_list = cfg.get("bath_polarizations", [cfg.get("bath_polarization")])
        configs = [
            ppa.PpaConfig(
                shape,
                e,
                cfg.get("reset_efficiency", 1.0),
                cfg.get("max_iterations", 1000),
                cfg.get("convergence_epsilon", 1e-12),
                cfg.get("record_states", False),
            )
            for e in eps_list
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = out_dir(args)
    runs = []
    for k, pc in enumerate(configs):
        trace = ppa.run_ppa(pc)
        stem = "trace" if len(configs) == 1 else f"trace_{k}"
        if args.format == "json":
            write_text(out / f"{stem}.json", trace.to_json() + "\n")
        else:
            write_text(out / f"{stem}.csv", trace.to_csv())
        eps_max = limits.epsilon_max(shape, abs(pc.reset_polarization)) * math.copysign(1, pc.reset_polarization or 1)
        runs.append(
            {
                "bath_polarization": pc.bath_polarization,
                "iterations": trace.iterations,
                "converged": trace.converged,
                "final_polarization": trace.final_polarization,
                "epsilon_max": eps_max,
                "gap_to_limit": eps_max - trace.final_polarization,
                "output": f"{stem}.{args.format}",
            }
        )
    write_json(out / "summary.json", {"shape": {"n_prime": shape.n_prime, "m": shape.m, "d": shape.d}, "runs": runs})
    return EXIT_OK


def cmd_ppa_scan12(cfg: dict, args) -> int:
    n = cfg.get("n_qubits", 12)
    freq = cfg.get("electron_frequency", ppa.DEFAULT_ELECTRON_FREQUENCY)
    rows = ppa.run_ppa_12qubit_scan(
        cfg["temperatures"],
        freq,
        cfg.get("iterations", 1000),
        n,
        cfg.get("reset_efficiency", 1.0),
        cfg.get("record_every", 1),
    )
    out = out_dir(args)
    cols = ["temperature", "eps_b", "iteration", "target_polarization"]
    if args.format == "json":
        write_json(out / "scan12.json", rows)
    else:
        write_text(out / "scan12.csv", rows_to_csv(rows, cols))
    shape = core.SystemShape.from_qubits(n, 1)
    summary = []
    for T in cfg["temperatures"]:
        eps_b = core.polarization_from_frequency(freq, T)
        last = [r for r in rows if r["temperature"] == T][-1]
        summary.append(
            {
                "temperature": T,
                "eps_b": eps_b,
                "epsilon_max": limits.epsilon_max(shape, cfg.get("reset_efficiency", 1.0) * eps_b),
                "final_iteration": last["iteration"],
                "final_polarization": last["target_polarization"],
            }
        )
    write_json(out / "summary.json", {"n_qubits": n, "electron_frequency": freq, "temperatures": summary})
    return EXIT_OK


def cmd_limits(cfg: dict, args) -> int:
    if "eps_b" in cfg:
        grid = cfg["eps_b"]
    else:
        g = cfg["eps_b_grid"]
        grid = np.linspace(g["start"], g["stop"], g["num"]).tolist()
    try:
        rows = limits.epsilon_max_curve(cfg["n"], grid, cfg.get("m", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = out_dir(args)
    if args.format == "json":
        write_json(out / "limits.json", rows)
    else:
        write_text(out / "limits.csv", rows_to_csv(rows, ["n", "m", "d", "eps_b", "eps_max", "delta_max"]))
    return EXIT_OK


def _unit_scale(doc: dict) -> float:
    return espin.ANGULAR[doc.get("units", "rad/s")]


def espin_report(cfg: dict) -> tuple[dict, list[dict], list[dict]]:
    system = espin.system_from_json(cfg["system"])
    scale = _unit_scale(cfg["system"])
    lw = cfg.get("linewidths", {"esr": 0.0, "nmr": 0.0})
    linewidths = (lw["esr"] * scale, lw["nmr"] * scale)
    crit = espin.OrientationCriteria(**cfg.get("criteria", {}))
    params, _ = espin.secular_hamiltonian(system)
    uni = espin.universality_check(params, cfg.get("angle_margin", 1e-3), linewidths[0])
    levels = [
        {"index": i, "labels": "".join(map(str, lv.labels)), "energy": lv.energy}
        for i, lv in enumerate(espin.levels(params))
    ]
    trans = [
        {
            "lower": "".join(map(str, t.lower)),
            "upper": "".join(map(str, t.upper)),
            "kind": t.kind,
            "nucleus": "" if t.nucleus is None else t.nucleus,
            "frequency": t.frequency,
            "amplitude": t.amplitude,
        }
        for t in espin.transitions(params)
    ]
    report = {
        "omega_S": params.omega_S,
        "nuclei": [
            {
                "omega_I": p.omega_I,
                "a": p.a,
                "b": p.b,
                "theta_up": (ang := espin.mixing_angles(params, n)).theta_up,
                "theta_down": ang.theta_down,
                "Theta": ang.Theta,
            }
            for n, p in enumerate(params.nuclei)
        ],
        "universality": {
            "passed": uni.passed,
            "angle_ok": uni.angle_ok,
            "gaps_ok": uni.gaps_ok,
            "nondegenerate": uni.nondegenerate,
            "reasons": list(uni.reasons),
        },
        "scores": {},
    }
    for scheme in ("ENDOR", "AHC"):
        s = espin.orientation_score(params, scheme, linewidths, crit)
        report["scores"][scheme] = {"score": s.score, "satisfaction": list(s.satisfaction), "criteria": s.criteria}
    if "sweep" in cfg:
        sw = cfg["sweep"]
        dirs = espin.hemisphere_grid(sw["n_theta"], sw["n_phi"])
        report["sweep"] = {}
        for scheme in sw.get("schemes", ["ENDOR", "AHC"]):
            scores, best = espin.orientation_sweep(system, scheme, linewidths, dirs, crit)
            report["sweep"][scheme] = {"best_direction": best.tolist(), "best_score": float(scores.max())}
    return report, levels, trans


def cmd_espin(cfg: dict, args) -> int:
    try:
        report, levels, trans = espin_report(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    out = out_dir(args)
    if args.format == "json":
        write_json(out / "levels.json", levels)
        write_json(out / "transitions.json", trans)
    else:
        write_text(out / "levels.csv", rows_to_csv(levels, ["index", "labels", "energy"]))
        write_text(
            out / "transitions.csv",
            rows_to_csv(trans, ["lower", "upper", "kind", "nucleus", "frequency", "amplitude"]),
        )
    write_json(out / "report.json", report)
    return EXIT_OK


def _time(x):
    return math.inf if x is None else float(x)


def endor_inputs(cfg: dict):
    if "system" in cfg:
        params = espin.secular_params(espin.system_from_json(cfg["system"]))
    else:
        sec = cfg["secular"]
        s = _unit_scale(sec)
        params = espin.SecularParams(
            sec["omega_S"] * s,
            tuple(espin.NuclearParams(n["omega_I"] * s, n["a"] * s, n["b"] * s, n.get("gamma")) for n in sec["nuclei"]),
        )
    r = cfg["relaxation"]
    relax = opensys.RelaxationSpec(
        tuple(map(_time, r["T1"])), tuple(map(_time, r["T2"])), _time(r.get("T2_star")), cfg["bath_temperature"]
    )
    opts = dict(cfg.get("options", {}))
    if "rf_durations" in opts:
        opts["rf_durations"] = tuple(opts["rf_durations"])
    return params, relax, opensys.EndorOptions(**opts)


def cmd_simulate_endor(cfg: dict, args) -> int:
    try:
        params, relax, opts = endor_inputs(cfg)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    report = opensys.run_endor_ppa_round(params, relax, options=opts)
    doc = report.to_dict()
    ens = cfg.get("ensemble")
    if ens and math.isfinite(relax.T2_star):
        def one(offset):
            r = opensys.run_endor_ppa_round(params, relax, options=opts, offset=offset)
            return np.array([p for _, p in r.steps])

        avg = opensys.t2star_ensemble_average(one, relax.T2_star, ens["samples"], args.seed, ens.get("workers", 1))
        doc["ensemble"] = {
            "samples": ens["samples"],
            "seed": args.seed,
            "gain": float(avg[-1, 0] / report.eps_b),
            "steps": [{"step": name, "polarizations": avg[i].tolist()} for i, (name, _) in enumerate(report.steps)],
        }
    out = out_dir(args)
    write_json(out / "endor.json", doc)
    if not args.quiet:
        print(f"gain {doc['gain']:.6f}")
    return EXIT_OK


def cmd_convert(args) -> int:
    what = args.quantity
    try:
        if what == "polarization":
            gamma = args.gamma if args.gamma is not None else core.gyromagnetic_ratio(args.species)
            value = core.thermal_polarization(core.ThermalSpec(gamma, args.B0, args.temperature))
        elif what == "frequency":
            value = core.polarization_from_frequency(args.freq, args.temperature)
        elif what == "temperature":
            gamma = args.gamma if args.gamma is not None else core.gyromagnetic_ratio(args.species)
            value = core.temperature_for_polarization(args.eps, gamma, args.B0)
        elif what == "purity":
            value = core.pseudo_pure_purity(args.eps, args.n)
        elif what == "qec":
            value = core.qec_ancilla_threshold(args.eps, args.eps2 if args.eps2 is not None else args.eps)
        else:  # pragma: no cover - argparse restricts choices
            raise ConfigError(what)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"convert {what}: {exc}") from exc
    print(json.dumps({"quantity": what, "value": value}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory (default $HBAC_OUT_DIR or .)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="hbac", description="Heat-bath algorithmic cooling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("ppa").add_subparsers(dest="action", required=True)
    pp.add_parser("run", parents=[common]).set_defaults(func=cmd_ppa_run, schema="ppa-run")
    pp.add_parser("scan12", parents=[common]).set_defaults(func=cmd_ppa_scan12, schema="ppa-scan12")
    sub.add_parser("limits", parents=[common]).set_defaults(func=cmd_limits, schema="limits")
    es = sub.add_parser("espin").add_subparsers(dest="action", required=True)
    es.add_parser("analyze", parents=[common]).set_defaults(func=cmd_espin, schema="espin")
    si = sub.add_parser("simulate").add_subparsers(dest="action", required=True)
    si.add_parser("endor", parents=[common]).set_defaults(func=cmd_simulate_endor, schema="endor")

    cv = sub.add_parser("convert", parents=[common], help="unit and threshold helpers")
    cv.add_argument("quantity", choices=("polarization", "frequency", "temperature", "purity", "qec"))
    cv.add_argument("--gamma", type=float)
    cv.add_argument("--species")
    cv.add_argument("--B0", type=float)
    cv.add_argument("--temperature", type=float)
    cv.add_argument("--freq", type=float)
    cv.add_argument("--eps", type=float)
    cv.add_argument("--eps2", type=float)
    cv.add_argument("--n", type=int)
    cv.set_defaults(func=None, schema=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.func is None:
            return cmd_convert(args)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config, args.schema)
        with np.errstate(over="raise", invalid="raise"):
            return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
