"""Command-line interface: ``nmrzeno run | experiment | oracle | replay``.

Exit status: 0 success, 1 sequence parse/compile error, 2 configuration error.
Nothing is written to disk unless the whole command succeeds. Every command that
writes files also writes a manifest from which ``replay`` regenerates them.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Optional

from . import __version__, analysis, engine, experiments, seqlang
from .ensemble import SampleGeometry
from .spinsys import formate_system, single_spin, system_from_text, system_to_text


class ConfigError(Exception):
    pass


# --- helpers --------------------------------------------------------------


def _write_all(files: dict) -> None:
    """Write {path: text} only once every output is ready."""
    for path, text in files.items():
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _manifest_text(sections: dict) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, items in sections.items():
        cp[name] = {k: str(v) for k, v in items.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _config_items(config) -> dict:
    items = {}
    for line in experiments.config_to_text(config).splitlines():
        key, _, value = line.partition("=")
        items[key] = value
    return items


def _fit_rows(label: str, curve) -> list:
    rows = []
    for fitter in (analysis.fit_cosine, analysis.fit_exponential):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fitter(curve)
        except analysis.FitError:
            continue
        rows.append((label, fit))
    return rows


def _summary_csv(rows) -> str:
    lines = ["curve,model,parameter,value,amplitude,rms_residual"]
    for label, fit in rows:
        key = "theta" if fit.model == "cosine" else "k"
        lines.append(f"{label},{fit.model},{key},{fit.value!r},{fit.amplitude!r},{fit.rms_residual!r}")
    return "\n".join(lines) + "\n"


def _print_summary(rows, out) -> None:
    for label, fit in rows:
        if fit.model == "cosine":
            extra = f"theta={math.degrees(fit.theta):.6f} deg"
        else:
            extra = f"k={fit.k:.6e}"
        print(f"{label}: {fit.model} {extra} rms={fit.rms_residual:.3e}", file=out)


# --- experiment -----------------------------------------------------------


def _experiment_configs(args) -> list:
    """(label, config) pairs for one experiment invocation."""
    n_values = tuple(experiments.parse_range(args.n)) if args.n else None
    out = []
    if args.name == "zeno1":
        modes = [m.strip() for m in args.gradients.split(",") if m.strip()]
        for mode in modes:
            if mode not in engine.MODES:
                raise ConfigError(f"unknown gradient mode {mode!r}")
        for mode in modes:
            kw = dict(theta=math.radians(args.theta_deg), tau=args.tau_ms * 1e-3, gradients=mode)
            if n_values is not None:
                kw["n_values"] = n_values
            kw.update(_geometry_kwargs(args))
            out.append((f"zeno1_{mode}", experiments.OneSpinConfig(**kw)))
    else:
        rs = [float(v) for v in args.r.split(",") if v.strip()]
        if not rs:
            raise ConfigError("--r needs at least one value")
        for r in rs:
            kw = dict(
                r=int(r) if float(r).is_integer() else r,
                theta=math.radians(args.theta_deg if args.theta_deg is not None else 5.0),
                j=args.j_hz, measurement_model=args.model, diffusion=args.diffusion,
            )
            if n_values is not None:
                kw["n_values"] = n_values
            kw.update(_geometry_kwargs(args))
            out.append((f"zeno2_{args.model}_r{kw['r']}", experiments.TwoSpinConfig(**kw)))
    return out


def _geometry_kwargs(args) -> dict:
    kw = {}
    if getattr(args, "isochromats", None) is not None:
        kw["n_isochromats"] = args.isochromats
    if getattr(args, "length_mm", None) is not None:
        kw["length"] = args.length_mm * 1e-3
    if getattr(args, "gradient_t_per_m", None) is not None:
        kw["gradient_strength"] = args.gradient_t_per_m
    return kw


def _run_config(config, seed, workers):
    if isinstance(config, experiments.OneSpinConfig):
        return experiments.run_one_spin(config, seed=seed, workers=workers)
    return experiments.run_two_spin(config, seed=seed, workers=workers)


def _experiment_outputs(name, configs, seed, workers, outdir: Path, argv_line: str):
    files, rows = {}, []
    sections = {"manifest": {"tool": f"nmrzeno {__version__}", "subcommand": f"experiment {name}",
                             "command": argv_line, "seed": seed}}
    for k, (label, config) in enumerate(configs):
        curve = _run_config(config, seed, workers)
        path = outdir / f"{label}.csv"
        files[path] = analysis.emit_csv(curve)
        rows += _fit_rows(label, curve)
        items = _config_items(config)
        items["output"] = path.name
        sections[f"run.{k}"] = items
    summary = outdir / f"{name}_summary.csv"
    files[summary] = _summary_csv(rows)
    sections["manifest"]["summary"] = summary.name
    manifest = outdir / f"{name}_manifest.ini"
    sections["manifest"]["outputs"] = ",".join(p.name for p in files)
    files[manifest] = _manifest_text(sections)
    return files, rows


def cmd_experiment(args) -> int:
    configs = _experiment_configs(args)
    files, rows = _experiment_outputs(
        args.name, configs, args.seed, args.workers, Path(args.out), " ".join(sys.argv[1:])
    )
    _write_all(files)
    _print_summary(rows, sys.stdout)
    for path in files:
        print(f"wrote {path}", file=sys.stderr)
    return 0


# --- run ------------------------------------------------------------------


def _load_system(path: Optional[str], ast) -> object:
    if path is not None:
        try:
            return system_from_text(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read system file: {exc}") from None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    labels = set()

    def walk(stmts):
        for s in stmts:
            if isinstance(s, seqlang.LoopStmt):
                walk(s.body)
            elif getattr(s, "spin", "all") != "all":
                labels.add(s.spin)

    walk(ast.statements)
    return formate_system() if "C" in labels else single_spin()


def _run_outputs(args, seq_path: Path, outdir: Path, system=None):
    text = seq_path.read_text(encoding="utf-8")
    ast = seqlang.parse(text, str(seq_path))
    if system is None:
        system = _load_system(args.system, ast)
    timeline = seqlang.compile_ast(ast, system)
    geometry = SampleGeometry(args.length_mm * 1e-3, args.diffusion_coefficient, args.isochromats)
    value = engine.run_timeline(
        timeline, system, args.gradients, geometry=geometry, seed=args.seed,
        b1_spread=args.b1_spread, workers=args.workers,
    )
    acq = timeline.acquire
    csv_path = outdir / f"{seq_path.stem}.csv"
    files = {csv_path: f"acquire,value\n{system.spins[acq.spin].label}:{acq.op},{value!r}\n"}
    sections = {
        "manifest": {
            "tool": f"nmrzeno {__version__}", "subcommand": "run", "sequence": str(seq_path),
            "sequence_sha256": hashlib.sha256(text.encode()).hexdigest(), "seed": args.seed,
            "outputs": csv_path.name,
        },
        "options": {
            "gradients": args.gradients, "isochromats": args.isochromats, "length_mm": repr(args.length_mm),
            "diffusion_coefficient": repr(args.diffusion_coefficient), "b1_spread": repr(args.b1_spread),
        },
        "system": {f"line{k}": line for k, line in enumerate(system_to_text(system).splitlines())},
    }
    manifest = outdir / f"{seq_path.stem}_manifest.ini"
    files[manifest] = _manifest_text(sections)
    report = seqlang.check_stroboscopic(timeline, system)
    return files, value, report


def cmd_run(args) -> int:
    seq_path = Path(args.seq)
    try:
        files, value, report = _run_outputs(args, seq_path, Path(args.out))
    except OSError as exc:
        raise ConfigError(f"cannot read sequence: {exc}") from None
    _write_all(files)
    print(repr(value))
    if report.flagged:
        print(f"note: {len(report.flagged)} free-evolution window(s) are not whole evolution periods",
              file=sys.stderr)
    return 0


# --- oracle ---------------------------------------------------------------


def cmd_oracle(args) -> int:
    name = args.name
    theta = math.radians(args.theta_deg) if args.theta_deg is not None else None
    if name == "eq1":
        angle = math.radians(args.angle_deg)
        amp = experiments.rabi_state(angle)
        print(f"p0={float(abs(amp[0]) ** 2)!r}")
        print(f"p1={float(abs(amp[1]) ** 2)!r}")
    elif name == "eq2":
        if args.n is None:
            raise ConfigError("eq2 needs --n")
        s = experiments.survival_probability(args.n)
        print(f"exact={s.exact!r}")
        print(f"approx={s.approx!r}")
    elif name == "crush":
        if theta is None or args.n is None:
            raise ConfigError("crush needs --theta-deg and --n")
        print(f"signal={experiments.crush_decay_oracle(theta, args.n)!r}")
    else:
        if theta is None or args.n is None or args.r is None:
            raise ConfigError("channel needs --r, --theta-deg and --n")
        print(f"signal={experiments.reduced_channel_oracle(args.r, theta, args.n)!r}")
    return 0


# --- replay ---------------------------------------------------------------


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        if not cp.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read manifest {path}")
        head = cp["manifest"]
    except (configparser.Error, KeyError) as exc:
        raise ConfigError(f"bad manifest: {exc}") from None
    outdir = Path(args.out) if args.out else path.parent
    sub = head.get("subcommand", "")
    if sub.startswith("experiment "):
        name = sub.split()[1]
        configs = []
        for section in cp.sections():
            if section.startswith("run."):
                items = dict(cp[section])
                label = Path(items.pop("output")).stem
                text = "".join(f"{k}={v}\n" for k, v in items.items())
                configs.append((label, experiments.config_from_text(text)))
        files, _ = _experiment_outputs(name, configs, int(head["seed"]), args.workers, outdir, head["command"])
    elif sub == "run":
        opts = cp["options"]
        system_text = "\n".join(cp["system"].values()) + "\n"
        ns = argparse.Namespace( gradients=opts["gradients"], isochromats=int(opts["isochromats"]),
            length_mm=float(opts["length_mm"]), diffusion_coefficient=float(opts["diffusion_coefficient"]),
            b1_spread=float(opts["b1_spread"]), seed=int(head["seed"]), workers=args.workers,
        )
        seq_path = Path(head["sequence"])
        text = seq_path.read_text(encoding="utf-8")
        if hashlib.sha256(text.encode()).hexdigest() != head["sequence_sha256"]:
            raise ConfigError(f"{seq_path} changed since the manifest was written")
        try:
            system = system_from_text(system_text)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad system in manifest: {exc}") from None
        files, _, _ = _run_outputs(ns, seq_path, outdir, system)
    else:
        raise ConfigError(f"unknown subcommand in manifest: {sub!r}")
    _write_all(files)
    for p in files:
        print(f"wrote {p}", file=sys.stderr)
    return 0


# --- entry point ----------------------------------------------------------


def _workers(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("workers must be >= 0 (0 = all cores)")
    return value or (os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmrzeno", description="Quantum Zeno simulations of NMR pulse sequences.")
    p.add_argument("--version", action="version", version=f"nmrzeno {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=_workers, default=None,
                        help=f"worker threads (default ${engine.WORKERS_ENV} or 1; 0 = all cores)")
        sp.add_argument("--isochromats", type=int, default=None)
        sp.add_argument("--length-mm", type=float, default=None)

    r = sub.add_parser("run", help="simulate a .seq pulse sequence")
    r.add_argument("seq")
    r.add_argument("--system", help="spin system file (default: 1H alone, or 13C-1H formate if C is used)")
    r.add_argument("--gradients", choices=engine.MODES, default="off")
    r.add_argument("--diffusion-coefficient", type=float, default=0.0, help="m^2/s (ensemble mode)")
    r.add_argument("--b1-spread", type=float, default=0.0)
    r.add_argument("--out", default=".")
    common(r)
    r.set_defaults(func=cmd_run, isochromats=10_000, length_mm=10.0)

    e = sub.add_parser("experiment", help="run the one- or two-spin Zeno experiment")
    e.add_argument("name", choices=("zeno1", "zeno2"))
    e.add_argument("--theta-deg", type=float, default=None)
    e.add_argument("--tau-ms", type=float, default=1.0)
    e.add_argument("--n", default=None, help="start:stop:step or a,b,c")
    e.add_argument("--gradients", default="off,ideal", help="zeno1: comma list of off|ideal|ensemble")
    e.add_argument("--r", default="1,16,64")
    e.add_argument("--j-hz", type=float, default=195.0)
    e.add_argument("--model", choices=experiments.TWO_SPIN_MODELS, default="gate")
    e.add_argument("--diffusion", action="store_true")
    e.add_argument("--gradient-t-per-m", type=float, default=None)
    e.add_argument("--out", default=".")
    common(e)
    e.set_defaults(func=cmd_experiment)

    o = sub.add_parser("oracle", help="evaluate a closed-form result")
    o.add_argument("name", choices=("eq1", "eq2", "crush", "channel"))
    o.add_argument("--n", type=int)
    o.add_argument("--theta-deg", type=float)
    o.add_argument("--angle-deg", type=float, default=180.0, help="eq1 drive angle omega*t")
    o.add_argument("--r", type=float)
    o.set_defaults(func=cmd_oracle)

    rp = sub.add_parser("replay", help="regenerate outputs from a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None)
    rp.add_argument("--workers", type=_workers, default=None)
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "experiment" and args.theta_deg is None:
        args.theta_deg = 1.0 if args.name == "zeno1" else 5.0
    try:
        return args.func(args)
    except seqlang.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except seqlang.CompileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
