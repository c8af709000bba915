"""Config-driven experiment runner.

One pipeline per invocation: ``fraccalderon <pipeline> --config cfg.json
[--set key=value]...``.  Configs are JSON (schema-validated, unknown keys
rejected); scalar fields can be overridden from the command line.  Every run
writes a manifest recording the config hash, seeds, versions, wall time and
produced files, and exits 0 only if all configured tolerance gates pass
(1: gate failure, 2: invalid config, 4: numeric error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dirichlet import (assemble_system, check_condition, dirichlet_spectrum,
                        potential_from_spec)
from .dnmap import (assemble_dn, dn_decomposition_check, dn_pointwise,
                    export_dn_csv, integral_identity)
from .errors import ConfigError, FracCalderonError
from .extension import (cs_extend, export_field_csv, frequency_energy_fraction,
                        trace_derivative, trace_ladder, ucp_conditioning)
from .fracop import apply_spectral, assemble_quadrature, export_operator
from .grid import GridFunction, build_grid
from .diffusion import (EvolutionMode, decay_series, dn_cost_check, evolve,
                        heat_kernel_free, series_to_csv)
from .calderon import (reconstruct_potential, reconstruction_error,
                       simulate_measurements)
from .runge import alpha_sweep, sweep_to_csv

PIPELINES = ("validate-op", "spectrum", "dnmap", "runge-sweep", "invert",
             "extend", "diffuse")

_GEOMETRY_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False,
         "properties": {"type": {"const": "interval"},
                        "bounds": {"type": "array", "items": {"type": "number"},
                                   "minItems": 2, "maxItems": 2}},
         "required": ["type", "bounds"]},
        {"type": "object", "additionalProperties": False,
         "properties": {"type": {"const": "disc"},
                        "center": {"type": "array", "items": {"type": "number"}},
                        "radius": {"type": "number"}},
         "required": ["type", "center", "radius"]},
        {"type": "object", "additionalProperties": False,
         "properties": {"type": {"const": "rect"}, "bounds": {"type": "array"}},
         "required": ["type", "bounds"]},
    ]
}

_POTENTIAL_SCHEMA = {"type": ["object", "number"]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "pipeline", "grid", "s"],
    "properties": {
        "schema_version": {"const": 1},
        "pipeline": {"enum": list(PIPELINES)},
        "grid": {
            "type": "object", "additionalProperties": False,
            "required": ["dim", "h", "R", "omega", "support"],
            "properties": {
                "dim": {"enum": [1, 2]},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "R": {"type": "number", "exclusiveMinimum": 0},
                "omega": _GEOMETRY_SCHEMA,
                "support": _GEOMETRY_SCHEMA,
                "windows": {"type": "object",
                            "additionalProperties": _GEOMETRY_SCHEMA},
            },
        },
        "s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "potential": _POTENTIAL_SCHEMA,
        "potential_ref": _POTENTIAL_SCHEMA,
        "potential_true": _POTENTIAL_SCHEMA,
        "source_window": {"type": "string"},
        "observation_window": {"type": "string"},
        "noise": {"type": "object", "additionalProperties": False,
                  "properties": {"sigma": {"type": "number", "minimum": 0},
                                 "seed": {"type": "integer"}}},
        "runge": {"type": "object", "additionalProperties": False,
                  "properties": {"window": {"type": "string"},
                                 "target": {"type": ["string", "array"]},
                                 "alphas": {"type": "array"}}},
        "invert": {"type": "object", "additionalProperties": False,
                   "properties": {"mode": {"enum": ["constructive", "linearized"]},
                                  "iterations": {"type": "integer", "minimum": 1},
                                  "alpha": {"type": "number"},
                                  "n_targets": {"type": "integer", "minimum": 1},
                                  "runge_gate": {"type": "number"},
                                  "clean_beta": {"type": "number"}}},
        "extend": {"type": "object", "additionalProperties": False,
                   "properties": {"ucp_window": {"type": "string"},
                                  "levels": {"type": "array"}}},
        "diffuse": {"type": "object", "additionalProperties": False,
                    "properties": {"t_values": {"type": "array"},
                                   "heat_t": {"type": "number"},
                                   "pad_factor": {"type": "integer"}}},
        "operator_export": {"enum": ["none", "csv", "npz"]},
        "pad_factor": {"type": "integer", "minimum": 4},
        "tolerances": {"type": "object"},
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
    },
}


def validate_config(cfg: dict) -> None:
    import jsonschema
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(str(exc).splitlines()[0]) from exc


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _smooth_bumps(grid, seed, count=10):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        ctr = rng.uniform(-0.5, 0.5, size=grid.dim)
        wid = rng.uniform(0.15, 0.2) if grid.dim == 1 else rng.uniform(0.2, 0.3)
        r2 = np.sum((grid.coords - ctr) ** 2, axis=1)
        vals = np.exp(-r2 / (2.0 * wid * wid))
        vals[grid.far] = 0.0
        out.append(vals)
    return out


class GateReport:
    def __init__(self):
        self.gates = {}

    def add(self, name, value, threshold, ok=None):
        if ok is None:
            ok = bool(value <= threshold)
        self.gates[name] = {"value": float(value), "threshold": float(threshold),
                            "pass": bool(ok)}

    @property
    def all_pass(self):
        return all(g["pass"] for g in self.gates.values())


def _build(cfg):
    gcfg = cfg["grid"]
    grid = build_grid(gcfg["dim"], gcfg["h"], gcfg["R"], gcfg["omega"],
                      gcfg["support"], gcfg.get("windows", {}))
    op = assemble_quadrature(grid, cfg["s"])
    return grid, op


def _pipeline_validate_op(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    pad = cfg.get("pad_factor", 16)
    bumps = _smooth_bumps(grid, cfg.get("seed", 0))
    rows = []
    worst = 0.0
    nf = grid.nonfar
    for i, vals in enumerate(bumps):
        quad = op.matrix @ vals[nf]
        spec = apply_spectral(GridFunction(grid, vals), cfg["s"], pad).values[nf]
        rel = float(np.linalg.norm(quad - spec) / np.linalg.norm(spec))
        rows.append((i, rel))
        worst = max(worst, rel)
    _write_csv(out_dir / "operator_check.csv", "bump,rel_l2_discrepancy", rows)
    sym = float(np.max(np.abs(op.matrix - op.matrix.T)))
    report.add("operator_symmetry", sym, 0.0, ok=(sym == 0.0))
    offdiag = op.matrix - np.diag(np.diag(op.matrix))
    report.add("offdiagonal_sign", float(offdiag.max()), 0.0, ok=(offdiag.max() <= 0.0))
    gate = tol.get("oracle_agreement", 5e-3 if grid.dim == 1 else 2e-2)
    report.add("oracle_agreement", worst, gate)
    exp = cfg.get("operator_export", "none")
    files = ["operator_check.csv"]
    if exp != "none":
        export_operator(op, str(out_dir / f"operator.{exp}"), fmt=exp)
        files.append(f"operator.{exp}")
    return files


def _pipeline_spectrum(cfg, out_dir, report):
    grid, op = _build(cfg)
    sys = assemble_system(op, potential_from_spec(grid, cfg.get("potential", 0.0)))
    spec = dirichlet_spectrum(sys)
    _write_csv(out_dir / "spectrum.csv", "index,eigenvalue",
               list(enumerate(spec.eigenvalues)))
    resid = float(np.max(np.abs(sys.interior_matrix @ spec.eigenvectors
                                - spec.eigenvectors * spec.eigenvalues)))
    scale = float(np.max(np.abs(spec.eigenvalues)))
    report.add("eigen_residual", resid, 1e-10 * scale)
    chk = check_condition(sys)
    report.add("condition_margin", -chk["margin"], 0.0, ok=chk["ok"])
    return ["spectrum.csv"]


def _pipeline_dnmap(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    sys1 = assemble_system(op, potential_from_spec(grid, cfg.get("potential", 0.0)))
    src = cfg.get("source_window", "W1")
    obs = cfg.get("observation_window", "W2")
    dn = assemble_dn(sys1, src, obs)
    export_dn_csv(dn, grid, str(out_dir / "dn_matrix.csv"))

    dn_full = assemble_dn(sys1, "EXTERIOR_SUPPORT", "EXTERIOR_SUPPORT")
    M = dn_full.matrix
    sym = float(np.max(np.abs(M - M.T)) / max(np.max(np.abs(M)), 1e-300))
    report.add("dn_self_adjointness", sym, tol.get("identity", 1e-12))

    rng = np.random.default_rng(cfg.get("seed", 0))
    f = np.zeros(len(grid.ext_support))
    w1 = np.searchsorted(grid.ext_support, grid.indices_of(src))
    f[w1] = rng.standard_normal(len(w1))
    agree = float(np.max(np.abs(M @ f - dn_pointwise(sys1, f)))
                  / max(np.max(np.abs(M @ f)), 1e-300))
    report.add("pointwise_vs_bilinear", agree, tol.get("identity_loose", 1e-10))
    dec = dn_decomposition_check(sys1, f)
    scale = max(float(np.max(np.abs(dn_pointwise(sys1, f)))), 1e-300)
    report.add("decomposition_residual", dec / scale, tol.get("identity_loose", 1e-10))

    sys2 = assemble_system(op, potential_from_spec(grid, cfg.get("potential_ref", 1.0)))
    f2 = rng.standard_normal(len(grid.ext_support))
    out = integral_identity(sys1, sys2, f, f2)
    rel = out["residual"] / max(abs(out["lhs"]), 1e-300)
    report.add("integral_identity", rel, tol.get("identity_loose", 1e-10))
    return ["dn_matrix.csv"]


def _pipeline_runge(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    sys = assemble_system(op, potential_from_spec(grid, cfg.get("potential", 0.0)))
    rcfg = cfg.get("runge", {})
    window = rcfg.get("window", "W1")
    tgt_spec = rcfg.get("target", "constant")
    n_int = len(grid.interior)
    if tgt_spec == "constant":
        target = np.ones(n_int)
    elif tgt_spec == "sign":
        target = np.sign(grid.coords[grid.interior, 0])
    elif isinstance(tgt_spec, list):
        target = np.asarray(tgt_spec, dtype=float)
    else:
        raise ConfigError(f"unknown runge target {tgt_spec!r}")
    alphas = rcfg.get("alphas", list(np.logspace(-2, -12, 11)))
    results = alpha_sweep(sys, window, target, alphas=alphas)
    sweep_to_csv(results, str(out_dir / "runge_sweep.csv"))
    resids = [r.residual for r in results]
    mono = all(b <= a * (1 + 1e-9) for a, b in zip(resids, resids[1:]))
    report.add("residual_monotone", 0.0 if mono else 1.0, 0.0, ok=mono)
    hn = grid.h ** grid.dim
    final_rel = resids[-1] / (np.sqrt(hn) * np.linalg.norm(target))
    report.add("final_residual", final_rel, tol.get("runge_residual", 0.10))
    return ["runge_sweep.csv"]


def _pipeline_invert(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    q_ref = potential_from_spec(grid, cfg.get("potential_ref", 0.0))
    q_true = potential_from_spec(grid, cfg["potential_true"])
    sys_ref = assemble_system(op, q_ref)
    sys_true = assemble_system(op, q_true)
    noise = cfg.get("noise", {})
    meas = simulate_measurements(sys_true, sys_ref,
                                 cfg.get("source_window", "W1"),
                                 cfg.get("observation_window", "W2"),
                                 sigma=noise.get("sigma", 0.0),
                                 seed=noise.get("seed", cfg.get("seed", 0)))
    icfg = cfg.get("invert", {})
    out = reconstruct_potential(
        meas, sys_ref,
        alpha=icfg.get("alpha", 1e-10),
        n_targets=icfg.get("n_targets", 10),
        runge_gate=icfg.get("runge_gate", 0.05),
        iterations=icfg.get("iterations", 1),
        mode=icfg.get("mode", "constructive"),
        clean_beta=icfg.get("clean_beta", 1e-3),
    )
    truth = q_true.values - q_ref.values
    est = out["q_diff"]
    x = grid.coords[grid.interior]
    rows = [(float(x[i, 0]), truth[i], est[i]) for i in range(len(est))]
    _write_csv(out_dir / "q_estimate.csv", "x,q_diff_true,q_diff_estimate", rows)
    diag_rows = []
    for j, d in enumerate(out["diagnostics"]["iterations"]):
        for k, r in enumerate(d["runge_residuals"]):
            diag_rows.append((j, k, r))
    _write_csv(out_dir / "residuals.csv", "iteration,target,runge_residual",
               diag_rows if diag_rows else [(0, 0, 0.0)])
    err = reconstruction_error(est, truth, grid.h ** grid.dim)
    report.add("reconstruction_error", err, tol.get("reconstruction_error", 0.15))
    return ["q_estimate.csv", "residuals.csv"]


def _pipeline_extend(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    ecfg = cfg.get("extend", {})
    s = cfg["s"]
    x = grid.coords[:, 0]
    vals = np.exp(-x * x / (2 * 0.2**2))
    vals[grid.far] = 0.0
    u = GridFunction(grid, vals)
    levels = np.asarray(ecfg.get("levels", trace_ladder(grid.h)), dtype=float)
    field = cs_extend(u, s, levels)
    export_field_csv(field, str(out_dir / "extension_field.csv"))
    td = trace_derivative(field, s).values[grid.nonfar]
    spec = apply_spectral(u, s, cfg.get("pad_factor", 64)).values[grid.nonfar]
    rel = float(np.linalg.norm(td - spec) / np.linalg.norm(spec))
    report.add("trace_identity", rel, tol.get("trace_identity", 5e-3))

    ucp = ucp_conditioning(grid, s, ecfg.get("ucp_window", "EXTERIOR_SUPPORT"), op=op)
    frac = frequency_energy_fraction(grid, ucp["minimizer"], np.pi / (4 * grid.h))
    report.add("ucp_sigma_positive", -ucp["sigma_min"], 0.0,
               ok=(ucp["sigma_min"] > 0.0))
    report.add("ucp_minimizer_highfreq", -frac, -0.5, ok=(frac > 0.5))
    _write_csv(out_dir / "ucp_singular_values.csv", "index,sigma",
               list(enumerate(ucp["singular_values"])))
    return ["extension_field.csv", "ucp_singular_values.csv"]


def _pipeline_diffuse(cfg, out_dir, report):
    grid, op = _build(cfg)
    tol = cfg.get("tolerances", {})
    dcfg = cfg.get("diffuse", {})
    sys = assemble_system(op, potential_from_spec(grid, cfg.get("potential", 0.0)))
    rng = np.random.default_rng(cfg.get("seed", 0))
    f = np.zeros(len(grid.ext_support))
    w1 = np.searchsorted(grid.ext_support, grid.indices_of("W1"))
    f[w1] = 1.0
    from .dirichlet import solve_poisson
    u_f = solve_poisson(sys, f)
    v0 = u_f.values.copy()
    v0[grid.interior] += rng.standard_normal(len(grid.interior))
    times = dcfg.get("t_values", [0.1, 0.5, 1.0, 2.0, 5.0])
    rows = decay_series(sys, GridFunction(grid, v0), f, times)
    series_to_csv(rows, str(out_dir / "decay.csv"))

    spec = dirichlet_spectrum(sys)
    lam1 = float(spec.eigenvalues[0])
    hn = grid.h ** grid.dim
    d0 = np.sqrt(hn) * np.linalg.norm(v0 - u_f.values)
    ok_rate = all(d <= np.exp(-lam1 * t) * d0 * (1 + 1e-9) for t, d in rows)
    report.add("decay_rate_bound", 0.0 if ok_rate else 1.0, 0.0, ok=ok_rate)

    a = evolve(sys, GridFunction(grid, v0), EvolutionMode.CLAMPED, 0.4, f=f)
    b = evolve(sys, a.state, EvolutionMode.CLAMPED, 0.6, f=f)
    c = evolve(sys, GridFunction(grid, v0), EvolutionMode.CLAMPED, 1.0, f=f)
    semi = float(np.max(np.abs(b.state.values - c.state.values)))
    report.add("semigroup", semi, tol.get("semigroup", 1e-12))

    out1 = dn_cost_check(sys, f)
    out2 = dn_cost_check(sys, f, dt=out1["dt"] / 2)
    ratio = out1["deviation"] / max(out2["deviation"], 1e-300)
    report.add("cost_richardson_ratio", abs(ratio - 2.0),
               tol.get("richardson_band", 0.3))

    files = ["decay.csv"]
    if grid.dim == 1 and "heat_t" in dcfg:
        k = heat_kernel_free(grid, cfg["s"], dcfg["heat_t"],
                             pad_factor=dcfg.get("pad_factor", 64))
        _write_csv(out_dir / "heat_kernel.csv", "x,p",
                   list(zip(grid.coords[:, 0], k.values)))
        files.append("heat_kernel.csv")
        mass = float(grid.h * np.sum(k.values))
        report.add("heat_kernel_mass", abs(mass - 1.0),
                   tol.get("heat_mass", 1e-3))
    return files


_RUNNERS = {
    "validate-op": _pipeline_validate_op,
    "spectrum": _pipeline_spectrum,
    "dnmap": _pipeline_dnmap,
    "runge-sweep": _pipeline_runge,
    "invert": _pipeline_invert,
    "extend": _pipeline_extend,
    "diffuse": _pipeline_diffuse,
}


def run(cfg: dict, output_dir: str = None) -> tuple[int, dict]:
    """Execute one pipeline; returns (exit code, manifest)."""
    validate_config(cfg)
    out_dir = Path(output_dir or cfg.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = GateReport()
    t0 = time.time()
    files = _RUNNERS[cfg["pipeline"]](cfg, out_dir, report)
    manifest = {
        "schema_version": 1,
        "package_version": __version__,
        "config_hash": _config_hash(cfg),
        "pipeline": cfg["pipeline"],
        "seed": cfg.get("seed", 0),
        "gates": report.gates,
        "files": sorted(files),
        "wall_time_s": time.time() - t0,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return (0 if report.all_pass else 1), manifest


def _apply_overrides(cfg: dict, pairs) -> None:
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fraccalderon",
                                     description="fractional exterior-problem laboratory")
    parser.add_argument("pipeline", choices=PIPELINES)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a scalar config field (dotted path)")
    parser.add_argument("--output-dir", default=None)
    args = parser.parse_args(argv)

    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return 2
    try:
        _apply_overrides(cfg, args.overrides)
        if cfg.get("pipeline") != args.pipeline:
            cfg["pipeline"] = args.pipeline
        code, manifest = run(cfg, output_dir=args.output_dir)
    except ConfigError as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return 2
    except FracCalderonError as exc:
        module = "fraccalderon"
        tb = exc.__traceback__
        while tb is not None:
            name = tb.tb_frame.f_globals.get("__name__", "")
            if name.startswith("fraccalderon."):
                module = name
            tb = tb.tb_next
        print(f"{module}: {exc.code}: {exc}", file=sys.stderr)
        return 4
    for name, gate in manifest["gates"].items():
        status = "PASS" if gate["pass"] else "FAIL"
        print(f"[{status}] {name}: value={gate['value']:.6g} threshold={gate['threshold']:.6g}")
    print(f"manifest: {Path(args.output_dir or cfg.get('output_dir', 'out')) / 'manifest.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
