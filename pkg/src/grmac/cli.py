"""Command-line driver: sweeps, figure reproductions, sizing and trace dumps.

Settings resolve in three layers: built-in defaults, then a YAML config
file (``--config``) with flat keys, then command-line flags. Keys without
a dot apply to any subcommand that has that option; ``<subcommand>.<key>``
applies to one subcommand only. Dashes and underscores are
interchangeable, for example::

    seed: 7
    trials: 20000
    enob-sweep.ne: 1-6
    enob-sweep.dist: [uniform, "gauss-outliers:eps=0.01,k=50"]
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from . import __version__
from .formats import FpFormat, parse_format, quantize_array
from .mac import ArchConfig, RangeViolation, ideal_dot, run_mac
from .output import metadata, write_csv, write_json
from .stimulus import parse_distribution, sample

__all__ = ["main", "build_parser", "validate", "Diagnostic", "run_figure", "parse_int_list", "parse_grid"]

ARCHS = ("conventional", "gr-unit", "gr-row", "gr-int")
GLOBAL_KEYS = ("seed", "trials", "out", "format", "workers")


# ------------------------------------------------------------------ parsing


def parse_int_list(text: str | int | Sequence) -> list[int]:
    """``"1-6"``, ``"1,3,5"``, ``"2"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def parse_grid(text: str | float | Sequence) -> list[float]:
    """``"start:stop:step"`` (stop inclusive), ``"a,b,c"`` or a single value."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    s = str(text).strip()
    if ":" in s:
        parts = [float(v) for v in s.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:step with step > 0, got {text!r}")
        lo, hi, step = parts
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 12) for i in range(max(n, 0))]
    return [float(v) for v in s.split(",") if v.strip()]


def parse_limit(text) -> int | None:
    if text is None or str(text).strip().lower() in ("none", "off", "inf", ""):
        return None
    return int(text)


def _arch_config(label: str, x_fmt, w_fmt, rows: int, cols: int, limit) -> ArchConfig:
    if label not in ARCHS:
        raise ValueError(f"unknown architecture {label!r}; choose from {ARCHS}")
    if label == "conventional":
        return ArchConfig("conventional", None, rows, cols, x_fmt, w_fmt, limit)
    return ArchConfig("gr", label[3:], rows, cols, x_fmt, w_fmt, limit)


# --------------------------------------------------------------- validation


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def validate(config: Mapping) -> list[Diagnostic]:
    """Static checks on a resolved configuration; never runs a simulation.

    Recognized keys (all optional): rows, cols, trials, x_fmt, w_fmt, arch,
    gain_range_limit, ne, nm, dist, n_m_w, e_max, c_u, c_p1, c_p2.
    """
    out: list[Diagnostic] = []
    cfg = {str(k).replace("-", "_"): v for k, v in config.items()}

    def err(msg):
        out.append(Diagnostic("error", msg))

    for key in ("rows", "cols"):
        if key in cfg and cfg[key] is not None and int(cfg[key]) < 1:
            err(f"{key} must be >= 1, got {cfg[key]}")
    if cfg.get("trials") is not None:
        t = int(cfg["trials"])
        if t < 1:
            err(f"trials must be >= 1, got {t}")
        elif t < 10_000 and cfg.get("command") in ("sqnr", "enob-sweep"):
            out.append(Diagnostic("warning", f"{t} trials is below the 1e4 recommended for SQNR estimates"))
    fmts = {}
    for key in ("x_fmt", "w_fmt"):
        if cfg.get(key) is not None:
            try:
                fmts[key] = parse_format(cfg[key])
            except ValueError as e:
                err(str(e))
    for key in ("dist", "x_dist", "w_dist"):
        vals = cfg.get(key)
        for v in vals if isinstance(vals, (list, tuple)) else ([vals] if vals else []):
            if str(v).strip() == "maxent":
                continue
            try:
                parse_distribution(v)
            except ValueError as e:
                err(str(e))
    try:
        limit = parse_limit(cfg.get("gain_range_limit", 6))
    except ValueError:
        err(f"bad gain_range_limit {cfg.get('gain_range_limit')!r}")
        limit = None
    archs = cfg.get("arch")
    archs = archs if isinstance(archs, (list, tuple)) else ([archs] if archs else [])
    x_fmts = [fmts.get("x_fmt")] if "x_fmt" in fmts else []
    if cfg.get("ne") is not None:
        try:
            nes = parse_int_list(cfg["ne"])
            nms = parse_int_list(cfg.get("nm", 2))
            x_fmts = [FpFormat(e, m) for e in nes for m in nms]
        except (ValueError, argparse.ArgumentTypeError) as e:
            err(f"bad format axis: {e}")
    w_fmt = fmts.get("w_fmt", FpFormat(2, 1))
    for a in archs:
        if a not in ARCHS:
            err(f"unknown architecture {a!r}; choose from {', '.join(ARCHS)}")
            continue
        for xf in x_fmts:
            try:
                ac = _arch_config(a, xf, w_fmt, int(cfg.get("rows") or 32), int(cfg.get("cols") or 32), limit)
            except ValueError as e:
                err(str(e))
                continue
            for msg in ac.range_problems():
                err(f"range violation for {a} at {xf}: {msg}")
    if cfg.get("e_max") is not None and int(cfg["e_max"]) < 1:
        err("e_max must be >= 1")
    if cfg.get("n_m_w") is not None and int(cfg["n_m_w"]) < 0:
        err("n_m_w must be >= 0")
    if cfg.get("c_u") is not None and float(cfg["c_u"]) <= 0:
        err("c_u must be positive")
    for key in ("c_p1", "c_p2"):
        if cfg.get(key) is not None and float(cfg[key]) < 0:
            err(f"{key} must be >= 0")
    return out


# ----------------------------------------------------------------- commands


def _meta(args) -> dict:
    # output location and worker count never change results, so they stay out
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out", "workers", "file_config")}
    return metadata(cfg, getattr(args, "seed", None))


def _emit_table(rows, args, columns=None, extra_meta=None) -> None:
    meta = _meta(args)
    meta.update(extra_meta or {})
    if args.format == "json":
        write_json(rows, args.out, meta)
    else:
        write_csv(rows, args.out, meta, columns)


def _emit_obj(obj, args, extra_meta=None) -> None:
    meta = _meta(args)
    meta.update(extra_meta or {})
    write_json(obj, args.out, meta)


SWEEP_COLUMNS = ["ne", "nm", "arch", "dist", "sqnr_global_db", "sqnr_core_db", "enob_cont", "enob_int"]


def cmd_enob_sweep(args) -> int:
    from .adcspec import enob_sweep

    limit = parse_limit(args.gain_range_limit)
    archs = [_arch_config(a, FpFormat(2, 2), args.w_fmt, args.rows, args.rows, limit) for a in args.arch]
    res = enob_sweep(args.ne, args.nm, args.dist, archs, args.trials, args.seed, args.target, args.workers)
    rows = [r.row() for r in res]
    cols = SWEEP_COLUMNS + ["core_has_signal", "n_eff_mean", "p_z", "seed"]
    _emit_table(rows, args, cols, {"enob_statistic": "expectation over trials", "target": args.target})
    return 0


def _energy_inputs(args):
    from .energy import EnergyParams

    p = EnergyParams(args.c_gate, args.k1, args.k2, args.k3, args.vdd)
    cfg = ArchConfig("gr", "unit", args.rows, args.cols, FpFormat(2, 1), args.w_fmt, parse_limit(args.gain_range_limit))
    return p, cfg


ENERGY_COLUMNS = [
    "dr_bits",
    "sqnr_db",
    "arch",
    "granularity",
    "enob",
    "dac_res",
    "adc_fj",
    "dac_fj",
    "logic_fj",
    "total_fj_per_op",
    "feasible",
    "reason",
    "optimal",
]


def _energy_meta(model) -> dict:
    return {
        "adder_tree": "ripple tree, level l has ceil(n/2^l) adders of width W+l-1",
        "dac_sign_bit": "excluded",
        "enob_model": {"offsets": model.offsets, "reference": model.reference, "trials": model.trials},
    }


def cmd_energy_map(args) -> int:
    from .energy import calibrate_enob_model, energy_map

    p, cfg = _energy_inputs(args)
    model = calibrate_enob_model(cfg.w_fmt, cfg.n_rows, args.trials, args.seed)
    cap = None if args.cap <= 0 else args.cap
    cells = energy_map(args.dr, args.sqnr, cfg, p, model, cap=cap)
    _emit_table([c.row() for c in cells], args, ENERGY_COLUMNS, _energy_meta(model))
    return 0


def cmd_energy_breakdown(args) -> int:
    from .energy import calibrate_enob_model, named_breakdowns

    p, cfg = _energy_inputs(args)
    model = calibrate_enob_model(cfg.w_fmt, cfg.n_rows, args.trials, args.seed)
    names = [n.strip() for n in args.formats.split(",") if n.strip()]
    _emit_obj(named_breakdowns(cfg, p, model, names), args, _energy_meta(model))
    return 0


def cmd_sqnr(args) -> int:
    from .adcspec import required_enob

    cfg = _arch_config(args.arch, args.x_fmt, args.w_fmt, args.rows, args.rows, parse_limit(args.gain_range_limit))
    w_dist = args.w_dist or f"maxent:{cfg.w_fmt}"
    x_dist = f"maxent:{cfg.x_fmt}" if args.dist.strip() == "maxent" else args.dist
    rep = required_enob(cfg, x_dist, w_dist, args.trials, args.seed, args.target, args.workers)
    _emit_obj(rep.to_dict(), args)
    return 0


def cmd_capsize(args) -> int:
    from .circuit import gain_table, size_coupling_caps

    net = size_coupling_caps(args.n_m_w, args.e_max, args.c_u, args.c_p1, args.c_p2, args.stage, not args.no_compensate)
    obj = {
        "c_stage": net.c_stage,
        "stage": net.stage,
        "compensated": not args.no_compensate,
        "table": gain_table(net),
    }
    _emit_obj(obj, args)
    return 0


def cmd_mac_trace(args) -> int:
    cfg = _arch_config(args.arch, args.x_fmt, args.w_fmt, args.rows, args.rows, parse_limit(args.gain_range_limit))
    x = sample(parse_distribution(args.x_dist), cfg.n_rows, args.seed, 1).values
    w = sample(parse_distribution(args.w_dist or f"maxent:{cfg.w_fmt}"), cfg.n_rows, args.seed, 2).values
    xq, wq = quantize_array(x, cfg.x_fmt), quantize_array(w, cfg.w_fmt)
    tr = run_mac(xq, wq, cfg)
    obj = {
        "x": x,
        "w": w,
        "xq": xq,
        "wq": wq,
        "ideal_dot": ideal_dot(x, wq),
        "ideal_dot_quantized": ideal_dot(xq, wq),
        "trace": tr.to_dict(),
    }
    _emit_obj(obj, args)
    return 0


def run_figure(
    name: str,
    out_dir: str | Path,
    trials: int | None = None,
    seed: int = 0,
    workers: int = 1,
    overrides: Mapping | None = None,
    config: Mapping | None = None,
) -> list[Path]:
    """Run one figure's sweep and write its CSV plus a JSON summary.

    ``overrides`` are passed to the figure function (e.g. ``ne_values``).
    """
    from . import figures

    if name not in figures.FIGURES:
        raise ValueError(f"unknown figure {name!r}; choose from {', '.join(figures.FIGURES)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValueError(f"cannot create output directory {out}: {e}") from e
    ov = dict(overrides or {})
    kw = {"seed": seed, **ov}
    resolved = {"figure": name, "trials": trials, "seed": seed, **(config or {}), **ov}
    meta = metadata(resolved, seed)
    stem = name.replace("-", "_")
    paths = []
    if name == "fig7":
        if trials is not None:
            kw["calib_trials"] = trials
        rows, summary, breakdowns = figures.fig7(**kw)
        bp = out / "fig7_breakdowns.json"
        write_json(breakdowns, bp, meta)
        paths.append(bp)
    else:
        if trials is not None:
            kw["trials"] = trials
        if name in ("fig5", "fig6"):
            kw["workers"] = workers
        fn = {"fig3-annotations": figures.fig3, "fig4": figures.fig4, "fig5": figures.fig5, "fig6": figures.fig6}[name]
        rows, summary = fn(**kw)
    cp = out / f"{stem}.csv"
    write_csv(rows, cp, meta)
    sp = out / f"{stem}_summary.json"
    write_json(summary, sp, meta)
    return paths + [cp, sp]


def cmd_figure(args) -> int:
    out = args.out if args.out not in (None, "-") else f"out/{args.name}"
    paths = run_figure(args.name, out, args.trials, args.seed, args.workers, config=_meta(args)["config"])
    for p in paths:
        print(p)
    return 0


def cmd_validate(args) -> int:
    cfg = dict(args.file_config)
    diags = validate(cfg)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 1 if any(d.level == "error" for d in diags) else 0


# ------------------------------------------------------------------- parser


def _globals(p: argparse.ArgumentParser, sub: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if sub else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--trials", type=int, default=d(None), help="Monte-Carlo trials per grid point")
    p.add_argument("--out", default=d(None), help="output file (directory for 'figure'); '-' is stdout")
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"), help="table output format")
    p.add_argument("--config", default=d(None), help="YAML file with flat option keys")
    p.add_argument("--workers", type=int, default=d(1), help="worker processes (results do not depend on it)")


def _array_opts(p, cols: bool = False) -> None:
    p.add_argument("--rows", type=int, default=32, help="array rows N_R")
    if cols:
        p.add_argument("--cols", type=int, default=32, help="array columns N_C")
    p.add_argument("--w-fmt", type=parse_format, default=FpFormat(2, 1), help="weight format (default E2M1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grmac",
        description="ADC-resolution and energy models for conventional and gain-ranging CIM MACs.",
    )
    parser.add_argument("--version", action="version", version=f"grmac {__version__}")
    _globals(parser, sub=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        _globals(sp, sub=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("enob-sweep", cmd_enob_sweep, "required ADC ENOB over an exponent/mantissa grid")
    sp.add_argument("--ne", type=parse_int_list, default=[1, 2, 3, 4, 5, 6], help="input exponent bits, e.g. 1-6")
    sp.add_argument("--nm", type=parse_int_list, default=[2], help="input stored mantissa bits, e.g. 1-6")
    sp.add_argument("--dist", action="append", default=None, help="input distribution (repeatable); 'maxent' follows the input format")
    sp.add_argument("--arch", action="append", default=None, choices=ARCHS, help="architecture (repeatable)")
    sp.add_argument("--target", choices=("measured", "ceiling"), default="measured", help="SQNR target for the 6 dB margin")
    sp.add_argument("--gain-range-limit", default="none", help="gain-range limit in bits, or 'none'")
    _array_opts(sp)

    for name, func, help_ in (
        ("energy-map", cmd_energy_map, "energy per operation over a DR x SQNR grid"),
        ("energy-breakdown", cmd_energy_breakdown, "energy breakdowns for named formats (JSON)"),
    ):
        sp = add(name, func, help_)
        _array_opts(sp, cols=True)
        sp.add_argument("--gain-range-limit", default="6", help="gain-range limit in bits, or 'none'")
        sp.add_argument("--c-gate", type=float, default=0.7, help="gate capacitance, fF")
        sp.add_argument("--k1", type=float, default=100.0, help="ADC linear coefficient, fF")
        sp.add_argument("--k2", type=float, default=1.0, help="ADC 4^N coefficient, aF")
        sp.add_argument("--k3", type=float, default=50.0, help="DAC coefficient, fF")
        sp.add_argument("--vdd", type=float, default=0.9, help="supply voltage, V")
        if name == "energy-map":
            sp.add_argument("--dr", type=parse_grid, default=parse_grid("1:20:0.5"), help="DR bits grid start:stop:step")
            sp.add_argument("--sqnr", type=parse_grid, default=parse_grid("10:60:1"), help="SQNR dB grid start:stop:step")
            sp.add_argument("--cap", type=float, default=100.0, help="energy cap in fJ/Op (<= 0 disables)")
        else:
            sp.add_argument("--formats", default="FP4_E2M1,FP6_E3M2,FP8_E4M3", help="comma-separated formats")

    sp = add("sqnr", cmd_sqnr, "output-referred SQNR and required ENOB for one configuration (JSON)")
    sp.add_argument("--x-fmt", type=parse_format, default=FpFormat(2, 2), help="input format")
    sp.add_argument("--dist", default="uniform", help="input distribution")
    sp.add_argument("--w-dist", default=None, help="weight distribution (default max-entropy of --w-fmt)")
    sp.add_argument("--arch", choices=ARCHS, default="conventional")
    sp.add_argument("--target", choices=("measured", "ceiling"), default="ceiling")
    sp.add_argument("--gain-range-limit", default="6", help="gain-range limit in bits, or 'none'")
    _array_opts(sp)

    sp = add("capsize", cmd_capsize, "coupling-capacitor sizing with oracle-checked gains (JSON)")
    sp.add_argument("--n-m-w", type=int, default=3, help="weight mantissa bits")
    sp.add_argument("--e-max", type=int, default=3, help="largest exponent")
    sp.add_argument("--c-u", type=float, default=1.0, help="unit capacitance")
    sp.add_argument("--c-p1", type=float, default=0.0, help="parasitic at the floating stage node")
    sp.add_argument("--c-p2", type=float, default=0.0, help="parasitic on the compute line")
    sp.add_argument("--stage", choices=("eq1", "ctot"), default="eq1", help="stage total capacitance convention")
    sp.add_argument("--no-compensate", action="store_true", help="size as if c_p1 were zero")

    sp = add("mac-trace", cmd_mac_trace, "signals of one seeded column evaluation (JSON)")
    sp.add_argument("--x-fmt", type=parse_format, default=FpFormat(2, 1), help="input format")
    sp.add_argument("--x-dist", default="uniform", help="input distribution")
    sp.add_argument("--w-dist", default=None, help="weight distribution (default max-entropy of --w-fmt)")
    sp.add_argument("--arch", choices=ARCHS, default="gr-unit")
    sp.add_argument("--gain-range-limit", default="6", help="gain-range limit in bits, or 'none'")
    _array_opts(sp)

    from .figures import FIGURES

    sp = add("figure", cmd_figure, "reproduce one figure's data: CSV plus JSON summary")
    sp.add_argument("name", choices=FIGURES)

    sp = add("validate", cmd_validate, "check a config file without running anything")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as e:
        raise SystemExit(f"grmac: cannot read config {path}: {e}")
    if not isinstance(data, dict):
        raise SystemExit(f"grmac: config {path} must be a mapping of flat keys")
    return data


def _apply_config(parser, argv, data: dict):
    """Re-parse ``argv`` with config values installed as defaults."""
    ns = parser.parse_args(argv)
    sp = _subparser(parser, ns.command)
    sub_dests = {a.dest for a in sp._actions}
    top, local, unknown = {}, {}, []
    for raw, value in data.items():
        key = str(raw)
        scope, _, name = key.rpartition(".")
        name = name.replace("-", "_")
        if scope and scope != ns.command:
            continue
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = str(value)
        if name in GLOBAL_KEYS:
            top[name] = value
        elif name in sub_dests:
            local[name] = value
        elif not scope and ns.command == "validate":
            continue
        else:
            unknown.append(key)
    if unknown:
        parser.error(f"unknown config keys for {ns.command}: {', '.join(sorted(unknown))}")
    # value strings go through each option's type converter
    parser.set_defaults(**{k: _convert(parser, k, v) for k, v in top.items()})
    sp.set_defaults(**local)
    return parser.parse_args(argv)


def _convert(parser, dest, value):
    for a in parser._actions:
        if a.dest == dest and a.type is not None and isinstance(value, str):
            return a.type(value)
    return value


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    file_config = {}
    if args.config:
        file_config = _load_config(args.config)
        args = _apply_config(parser, argv, file_config)
    if args.command == "validate":
        args.file_config = file_config
        return args.func(args)
    if args.command == "enob-sweep":
        args.dist = args.dist or ["uniform"]
        args.arch = args.arch or ["conventional", "gr-unit"]
        if args.trials is None:
            args.trials = 100_000
    elif args.command in ("sqnr",) and args.trials is None:
        args.trials = 100_000
    elif args.command in ("energy-map", "energy-breakdown") and args.trials is None:
        args.trials = 20_000
    diags = validate({**vars(args), "command": args.command})
    for d in diags:
        print(f"grmac: {d}", file=sys.stderr)
    if any(d.level == "error" for d in diags):
        return 2
    try:
        return args.func(args)
    except (ValueError, RangeViolation) as e:
        print(f"grmac: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
