"""Command-line entry point: parse a strict key=value config (plus flag
overrides), dispatch convergence studies / wave scenarios / diagnostic
probes / mesh reports, and write artifacts plus a run manifest."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

USAGE = """usage: hdgz COMMAND [options]

commands:
  convergence   run an h-, k-, or dt-refinement study and write a rate table
  scenario      run a wave-propagation scenario and dump field snapshots
  probe         run the energy-dissipation probe from a random initial state
  mesh-report   print entity counts for a structured mesh

common flags: --config FILE --preset NAME --k K --meshes N,N,... --dt DT
              --T T --out DIR --quad-boost Q --threads N
"""


class ConfigError(Exception):
    """Raised for unknown keys, type mismatches, or missing required keys;
    the message always names the offending key path."""


# Every accepted config key, as "section.key" -> parser. Anything else is
# rejected so a typo can never silently fall back to a default.
def _int_list(text):
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _float_list(text):
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _str(text):
    return str(text).strip()


def _bool(text):
    t = str(text).strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


KNOWN_KEYS = {
    "run.command": _str,
    "run.preset": _str,
    "run.out": _str,
    "run.quad_boost": int,
    "run.threads": int,
    "run.seed": int,
    "convergence.kind": _str,
    "convergence.k": int,
    "convergence.degrees": _int_list,
    "convergence.meshes": _int_list,
    "convergence.dt": float,
    "convergence.dts": _float_list,
    "convergence.T": float,
    "convergence.diagonal": _str,
    "scenario.name": _str,
    "scenario.h": float,
    "scenario.k": int,
    "scenario.dt": float,
    "scenario.snapshots": _float_list,
    "scenario.split": _bool,
    "scenario.lattice": int,
    "probe.n": int,
    "probe.k": int,
    "probe.dt": float,
    "probe.steps": int,
    "mesh_report.n": int,
    "mesh_report.diagonal": _str,
}

COMMANDS = ("convergence", "scenario", "probe", "mesh-report")


@dataclasses.dataclass
class RunConfig:
    """Fully resolved run description: command, physical/discretization
    parameters, and artifact plumbing."""

    command: str
    preset: str = "l1"
    out: str = "."
    quad_boost: int | None = None
    threads: int = 1
    seed: int = 0
    # convergence
    kind: str = "h"
    k: int = 1
    degrees: tuple = (1, 2, 3, 4, 5)
    meshes: tuple = (4, 8, 16, 32)
    dt: float | None = None
    dts: tuple = (1 / 40, 1 / 80, 1 / 160, 1 / 320)
    T: float = 0.5
    diagonal: str = "alternating"
    # scenario
    scenario_name: str = "thermoelastic"
    h: float = 115.5
    scenario_k: int = 3
    scenario_dt: float = 1e-4
    snapshots: tuple | None = None
    split: bool = False
    lattice: int = 80
    # probe
    probe_n: int = 2
    probe_k: int = 1
    probe_dt: float = 1e-2
    probe_steps: int = 200
    # mesh-report
    report_n: int = 2
    report_diagonal: str = "right"


def parse_config_file(path):
    """Read a line-oriented ``key = value`` file with ``[section]`` headers
    into a flat {"section.key": parsed_value} dict. Strict: every key must
    appear in KNOWN_KEYS."""
    values = {}
    section = "run"
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().replace("-", "_")
                if not any(kk.startswith(section + ".") for kk in KNOWN_KEYS):
                    raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            keypath = f"{section}.{key}"
            if keypath not in KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {keypath!r}")
            try:
                values[keypath] = KNOWN_KEYS[keypath](val.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {keypath!r}: {exc}") from exc
    return values


_FIELD_BY_KEY = {
    "run.preset": "preset",
    "run.out": "out",
    "run.quad_boost": "quad_boost",
    "run.threads": "threads",
    "run.seed": "seed",
    "convergence.kind": "kind",
    "convergence.k": "k",
    "convergence.degrees": "degrees",
    "convergence.meshes": "meshes",
    "convergence.dt": "dt",
    "convergence.dts": "dts",
    "convergence.T": "T",
    "convergence.diagonal": "diagonal",
    "scenario.name": "scenario_name",
    "scenario.h": "h",
    "scenario.k": "scenario_k",
    "scenario.dt": "scenario_dt",
    "scenario.snapshots": "snapshots",
    "scenario.split": "split",
    "scenario.lattice": "lattice",
    "probe.n": "probe_n",
    "probe.k": "probe_k",
    "probe.dt": "probe_dt",
    "probe.steps": "probe_steps",
    "mesh_report.n": "report_n",
    "mesh_report.diagonal": "report_diagonal",
}


def parse_config(command, config_path=None, overrides=None):
    """Build a RunConfig: file values first, flag overrides win. ``overrides``
    maps "section.key" paths to already-typed values."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    values = parse_config_file(config_path) if config_path else {}
    file_cmd = values.pop("run.command", None)
    if file_cmd is not None and file_cmd != command:
        raise ConfigError(
            f"run.command: config file says {file_cmd!r} but the command line says {command!r}")
    for keypath, val in (overrides or {}).items():
        if keypath not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {keypath!r}")
        values[keypath] = val
    cfg = RunConfig(command=command)
    for keypath, val in values.items():
        setattr(cfg, _FIELD_BY_KEY[keypath], val)
    _validate(cfg)
    return cfg


def _validate(cfg):
    from .materials import MaterialError, preset

    try:
        preset(cfg.preset)
    except MaterialError as exc:
        raise ConfigError(f"run.preset: {exc}") from exc
    if cfg.threads < 1:
        raise ConfigError("run.threads: must be >= 1")
    if cfg.command == "convergence":
        if cfg.kind not in ("h", "k", "dt"):
            raise ConfigError(f"convergence.kind: expected h|k|dt, got {cfg.kind!r}")
        if cfg.T <= 0:
            raise ConfigError("convergence.T: must be positive")
        if any(n < 1 for n in cfg.meshes):
            raise ConfigError("convergence.meshes: entries must be >= 1")
        if cfg.dt is not None and cfg.dt <= 0:
            raise ConfigError("convergence.dt: must be positive")
    elif cfg.command == "scenario":
        if cfg.scenario_name not in ("thermoelastic", "poroelastic"):
            raise ConfigError(
                f"scenario.name: expected thermoelastic|poroelastic, got {cfg.scenario_name!r}")
        if cfg.h <= 0 or cfg.scenario_dt <= 0:
            raise ConfigError("scenario.h and scenario.dt must be positive")
    elif cfg.command == "probe":
        if cfg.probe_steps < 1:
            raise ConfigError("probe.steps: must be >= 1")
        if cfg.probe_dt <= 0:
            raise ConfigError("probe.dt: must be positive")


def _config_hash(cfg):
    data = dataclasses.asdict(cfg)
    # where artifacts land and how many BLAS threads run do not change
    # the results, so reruns elsewhere hash identically
    data.pop("out", None)
    data.pop("threads", None)
    blob = json.dumps(data, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class Manifest:
    """Run manifest: config hash, mesh hashes, and the artifact list.
    Written as manifest.json in the output directory; flagged as partial
    when the run dies mid-way."""

    def __init__(self, outdir, cfg):
        self.outdir = outdir
        self.data = {
            "command": cfg.command,
            "config_hash": _config_hash(cfg),
            "config": dataclasses.asdict(cfg),
            "mesh_hashes": [],
            "artifacts": [],
            "status": "running",
        }
        self.write()

    def add_mesh(self, mesh):
        self.data["mesh_hashes"].append(mesh.hash())

    def add_artifact(self, path):
        self.data["artifacts"].append(os.path.relpath(path, self.outdir))
        self.write()

    def finish(self, status, error=None):
        self.data["status"] = status
        if error:
            self.data["error"] = error
        self.write()

    def write(self):
        path = os.path.join(self.outdir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# command implementations


def _run_convergence(cfg, manifest, log):
    from .convergence import convergence_study, write_csv

    study = convergence_study(
        cfg.kind, cfg.preset,
        k=cfg.k, meshes=cfg.meshes, degrees=cfg.degrees,
        dts=cfg.dts, dt=cfg.dt, T=cfg.T,
        diagonal=cfg.diagonal, boost=cfg.quad_boost)
    for rep in study.rows:
        log(f"{rep.run_id}: e_sigma_psi={rep.err_sigma_psi:.6e} "
            f"e_u_p={rep.err_u_p:.6e} rates=({rep.rate_sigma_psi:.2f}, "
            f"{rep.rate_u_p:.2f})")
    csv_path = os.path.join(cfg.out, f"convergence_{cfg.kind}_{cfg.preset}.csv")
    write_csv(study.rows, csv_path)
    manifest.add_artifact(csv_path)
    if study.failures:
        for run_id, msg in study.failures:
            log(f"FAILED cell {run_id}: {msg}")
        return 1
    return 0


def _run_scenario(cfg, manifest, log):
    import numpy as np

    from .scenarios import (poroelastic_config, run_scenario,
                            thermoelastic_config, write_energy_csv,
                            write_vtk_lattice)

    kw = dict(h=cfg.h, k=cfg.scenario_k, dt=cfg.scenario_dt)
    if cfg.snapshots is not None:
        kw["snapshot_times"] = cfg.snapshots
    if cfg.scenario_name == "thermoelastic":
        scfg = thermoelastic_config(**kw)
    else:
        scfg = poroelastic_config(split=cfg.split, **kw)
    if cfg.lattice != 80:
        scfg = dataclasses.replace(scfg, lattice=(cfg.lattice, cfg.lattice))
    if cfg.quad_boost is not None:
        scfg = dataclasses.replace(scfg, load_exactness=cfg.quad_boost)
    result = run_scenario(scfg)
    manifest.add_mesh(result.mesh)
    for t, fields in sorted(result.snapshots.items()):
        tag = f"{cfg.scenario_name}_t{t:g}".replace(".", "p")
        for name in ("umag", "psi"):
            path = os.path.join(cfg.out, f"{tag}_{name}.vtk")
            write_vtk_lattice(path, name, fields[name],
                              result.lattice_x, result.lattice_y)
            manifest.add_artifact(path)
        log(f"t={t:g}: max|u|={np.max(fields['umag']):.6e} "
            f"max|psi|={np.max(np.abs(fields['psi'])):.6e}")
    csv_path = os.path.join(cfg.out, f"{cfg.scenario_name}_energy.csv")
    write_energy_csv(csv_path, result.energy)
    manifest.add_artifact(csv_path)
    log(f"final energy E(T)={result.energy[-1][1]:.6e}")
    return 0


def _run_probe(cfg, manifest, log):
    import numpy as np

    from . import mesh as hmesh
    from .assembly import make_layout, assemble_condensed
    from .materials import MaterialField, preset
    from .stepping import EnergyLedger, SystemState, run

    mat = preset(cfg.preset)
    mesh = hmesh.build_structured((0.0, 0.0, 1.0, 1.0), cfg.probe_n,
                                  tag_rule=hmesh.all_dirichlet)
    manifest.add_mesh(mesh)
    mf = MaterialField.uniform(mat, mesh)
    lay = make_layout(mesh, mf, cfg.probe_k)
    system = assemble_condensed(mesh, mf, lay, cfg.probe_dt)
    rng = np.random.default_rng(cfg.seed)
    state = SystemState(t=0.0, step=0, yv=rng.standard_normal(lay.n_volume),
                        lam=np.zeros(lay.n_trace_full))
    ledger = EnergyLedger()
    run(system, state, cfg.probe_steps, ledger=ledger)
    energy = np.asarray(ledger.energy)
    growth = float(np.max(np.diff(energy)))
    max_resid = float(np.max(np.abs(ledger.identity_residual)))
    log(f"steps={cfg.probe_steps} E0={energy[0]:.6e} E_end={energy[-1]:.6e}")
    log(f"max energy increment = {growth:.3e} (monotone decay iff <= 0)")
    log(f"max relative energy-identity residual = {max_resid:.3e}")
    csv_path = os.path.join(cfg.out, f"probe_{cfg.preset}.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("t,energy,identity_residual\n")
        for t, e, r in zip(ledger.t, ledger.energy, ledger.identity_residual):
            fh.write(f"{t:.12g},{e:.12g},{r:.12g}\n")
    manifest.add_artifact(csv_path)
    return 0 if growth <= 0.0 and max_resid <= 1e-9 else 1


def _run_mesh_report(cfg, manifest, log):
    from . import mesh as hmesh

    mesh = hmesh.build_structured((0.0, 0.0, 1.0, 1.0), cfg.report_n,
                                  diagonal=cfg.report_diagonal,
                                  tag_rule=hmesh.all_dirichlet)
    manifest.add_mesh(mesh)
    log(f"n = {cfg.report_n} ({cfg.report_diagonal} diagonals)")
    log(f"vertices:       {mesh.n_vertices}")
    log(f"elements:       {mesh.n_elements}")
    log(f"faces:          {mesh.n_faces}")
    log(f"interior faces: {len(mesh.interior_faces)}")
    log(f"boundary faces: {len(mesh.boundary_faces)}")
    log(f"h_max:          {float(mesh.h_elem.max()):.6g}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(prog="hdgz", usage=USAGE, add_help=True)
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--preset", default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--meshes", default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--T", type=float, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--quad-boost", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "convergence":
            p.add_argument("--kind", default=None, choices=("h", "k", "dt"))
        if name == "scenario":
            p.add_argument("--name", default=None,
                           choices=("thermoelastic", "poroelastic"))
            p.add_argument("--split", action="store_true", default=None)
            p.add_argument("--h", dest="h_size", type=float, default=None)
        if name == "probe":
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--seed", type=int, default=None)
        if name == "mesh-report":
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--diagonal", default=None,
                           choices=("right", "left", "alternating"))
    return parser


def _flag_overrides(command, args):
    """Map parsed argparse flags onto config key paths (flags win)."""
    ov = {}

    def put(keypath, value):
        if value is not None:
            ov[keypath] = value

    put("run.preset", args.preset)
    put("run.out", args.out)
    put("run.quad_boost", args.quad_boost)
    put("run.threads", args.threads)
    if command == "convergence":
        put("convergence.kind", args.kind)
        put("convergence.k", args.k)
        if args.meshes is not None:
            ov["convergence.meshes"] = _int_list(args.meshes)
        put("convergence.dt", args.dt)
        put("convergence.T", args.T)
    elif command == "scenario":
        put("scenario.name", args.name)
        put("scenario.k", args.k)
        put("scenario.dt", args.dt)
        put("scenario.h", args.h_size)
        if args.split:
            ov["scenario.split"] = True
    elif command == "probe":
        put("probe.n", args.n)
        put("probe.k", args.k)
        put("probe.dt", args.dt)
        put("probe.steps", args.steps)
        put("run.seed", args.seed)
    elif command == "mesh-report":
        put("mesh_report.n", args.n)
        put("mesh_report.diagonal", args.diagonal)
    return ov


def _apply_thread_hint(threads):
    """Pin BLAS thread pools before numpy spins them up; modules do no
    other parallel work, so this is the single source of parallelism."""
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


DISPATCH = {
    "convergence": _run_convergence,
    "scenario": _run_scenario,
    "probe": _run_probe,
    "mesh-report": _run_mesh_report,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        sys.stderr.write(USAGE)
        return 2
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        sys.stderr.write(USAGE)
        return 2
    try:
        cfg = parse_config(args.command, args.config, _flag_overrides(args.command, args))
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"hdgz: config error: {exc}\n")
        return 2

    _apply_thread_hint(cfg.threads)
    if cfg.out in (".", None):
        cfg.out = os.environ.get("HDGZ_OUT", ".")
    os.makedirs(cfg.out, exist_ok=True)

    def log(msg):
        sys.stdout.write(msg + "\n")

    manifest = Manifest(cfg.out, cfg)
    try:
        code = DISPATCH[cfg.command](cfg, manifest, log)
    except Exception as exc:  # pragma: no cover - exercised via tests
        manifest.finish("partial", error=f"{type(exc).__name__}: {exc}")
        sys.stderr.write(f"hdgz: {type(exc).__name__}: {exc}\n")
        return 1
    manifest.finish("complete" if code == 0 else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
