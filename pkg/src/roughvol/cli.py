"""Command-line entry point.

Settings come from (highest priority first) command-line flags, the
``ROUGHVOL_SEED`` / ``ROUGHVOL_THREADS`` environment variables, a ``--config``
file and built-in defaults. The config file is flat ``key = value`` text, one
entry per line, ``#`` starts a comment; keys are the long flag names with
dashes or underscores (``n-grid`` and ``n_grid`` are the same key).
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import math
import os
import re
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, harness, selftest
from .errors import ConfigError, NumericError, RoughVolError
from .estimators import DESK_DELTA, QuadratureConfig, RenormScheme
from .functions import parse_family
from .ldp import LdpProblem, rate_curve
from .noise import sample_haar_noise
from .pricing import MarketSpec, map_chunks, price_call_mc
from .volterra import VolterraCoeffs, solve_volterra

COMMANDS = ("price", "strong-rate", "weak-rate", "option-rate", "ldp", "volterra-sim", "selftest")

# key -> (help, converter name)
OPTIONS = {
    "H": ("Hurst parameter (comma list for rate studies)", "floats"),
    "N": ("Haar level: 8, 4..7 or 4,5,6", "levels"),
    "Nref": ("reference level for rate studies", "int"),
    "M": ("number of Monte Carlo samples", "int"),
    "d": ("quadrature nodes per Haar cell", "int"),
    "delta": ("quadrature step, e.g. 2^-12 (alternative to d)", "float"),
    "f": ("volatility function: exp | bergomi:sigma0=..,eta=.. | const:c=.. | linear:a=..,b=.. | sqrt:floor=..",
          "family"),
    "scheme": ("renormalization: nonconstant | constant", "scheme"),
    "S0": ("spot", "float"),
    "K": ("strike", "float"),
    "rho": ("correlation", "float"),
    "sigma0": ("rough Bergomi level (option-rate, when f is not given)", "float"),
    "eta": ("rough Bergomi vol-of-vol (option-rate, when f is not given)", "float"),
    "psi_variant": ("conditional pricing convention: derived | paper-sec6", "str"),
    "seed": ("random seed", "int"),
    "out": ("output CSV path (default: stdout)", "str"),
    "threads": ("worker threads; output does not depend on it", "int"),
    "emit_plot_data": ("directory for log-log plot CSVs", "str"),
    "y": ("comma list of log-moneyness points (use --y=-0.2,0.1 for negatives)", "floats"),
    "n_grid": ("control cells for the rate function", "int"),
    "sub": ("kernel sub-intervals per control cell", "int"),
    "u": ("Volterra diffusion function (same syntax as --f)", "family"),
    "v": ("Volterra drift function (same syntax as --f)", "family"),
    "z": ("initial value of the Volterra state", "float"),
    "times": ("comma list of query times for volterra-sim (default: Haar grid)", "floats"),
    "self_interaction": ("volterra-sim: include the within-cell self-interaction term (1/0)", "bool"),
}

COMMON = ("H", "N", "M", "d", "delta", "f", "scheme", "seed", "out", "threads")
PER_COMMAND = {
    "price": COMMON + ("S0", "K", "rho", "psi_variant"),
    "strong-rate": COMMON + ("Nref", "emit_plot_data"),
    "weak-rate": COMMON + ("emit_plot_data",),
    "option-rate": COMMON + ("Nref", "S0", "K", "rho", "sigma0", "eta", "psi_variant", "emit_plot_data"),
    "ldp": ("H", "f", "rho", "y", "n_grid", "sub", "u", "z", "out"),
    "volterra-sim": ("H", "N", "M", "scheme", "seed", "out", "threads", "u", "v", "z", "times", "self_interaction"),
    "selftest": (),
}
REQUIRED = {
    "price": ("S0", "K", "rho", "f"),
    "option-rate": ("S0", "K", "rho"),
    "ldp": ("rho", "y", "f"),
    "volterra-sim": ("u", "v"),
}
DEFAULTS = {
    "H": "0.3", "N": "8", "M": "10000", "scheme": "nonconstant", "seed": "0", "psi_variant": "derived",
    "sigma0": "0.2", "eta": "2", "n_grid": "64", "sub": "4", "z": "0", "self_interaction": "1",
}
COMMAND_DEFAULTS = {
    "strong-rate": {"N": "4..7", "Nref": "9", "f": "exp"},
    "weak-rate": {"N": "10", "f": "exp"},
    "option-rate": {"N": "3..6", "Nref": "8"},
    "volterra-sim": {"M": "16"},
}
NOT_IN_PROVENANCE = {"out", "threads", "emit_plot_data"}
ENV = {"seed": "ROUGHVOL_SEED", "threads": "ROUGHVOL_THREADS"}


def _canon(key: str) -> str:
    key = key.strip().replace("-", "_")
    if key == "N_ref":
        key = "Nref"
    if key == "Delta":
        key = "delta"
    return key


@dataclass
class RunConfig:
    """Raw string settings for one run; ``resolve`` turns them into typed values."""

    command: str | None = None
    values: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def merged(self, other: dict) -> "RunConfig":
        vals = dict(self.values)
        vals.update(other)
        return RunConfig(self.command, vals, list(self.warnings))

    def provenance(self, typed: dict) -> list[str]:
        lines = [f"roughvol {__version__}", f"command={self.command}"]
        for key in sorted(typed):
            if key in NOT_IN_PROVENANCE or typed[key] is None:
                continue
            lines.append(f"{key}={_show(typed[key])}")
        return lines


def _show(val) -> str:
    if isinstance(val, bool):
        return "1" if val else "0"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, (list, tuple)):
        return ",".join(_show(v) for v in val)
    return str(val)


_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*=\s*(.*?)\s*$")


def load_config(path) -> RunConfig:
    """Parse a flat ``key = value`` file. Duplicate keys: last one wins, with a warning."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = _canon(m.group(1)), m.group(2)
        if key == "command":
            cfg.command = value
            continue
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {m.group(1)!r}")
        if not value:
            raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
        if key in cfg.values:
            msg = f"{path}:{lineno}: duplicate key {key!r}; the last value wins"
            cfg.warnings.append(msg)
            warnings.warn(msg, UserWarning, stacklevel=2)
        cfg.values[key] = value
    return cfg


# ---------------------------------------------------------------------------
# value conversion

def _float(text: str) -> float:
    s = text.strip().replace("**", "^")
    try:
        if "^" in s:
            base, exp = s.split("^", 1)
            val = float(base) ** float(exp)
        else:
            val = float(s)
    except ValueError:
        raise ValueError(f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise ValueError(f"not a finite number: {text!r}")
    return val


def _int(text: str) -> int:
    val = _float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _levels(text: str) -> list[int]:
    s = text.strip()
    if ".." in s:
        lo, hi = s.split("..", 1)
        lo, hi = _int(lo), _int(hi)
        if hi < lo:
            raise ValueError(f"empty level range {text!r}")
        return list(range(lo, hi + 1))
    return [_int(p) for p in s.split(",") if p.strip()]


def _bool(text: str) -> bool:
    s = text.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


CONVERT = {
    "int": _int,
    "float": _float,
    "floats": lambda s: [_float(p) for p in s.split(",") if p.strip()],
    "levels": _levels,
    "str": str.strip,
    "bool": _bool,
    "scheme": lambda s: RenormScheme(s.strip()).value,
    "family": lambda s: parse_family(s).descriptor,
}


def resolve(cfg: RunConfig) -> dict:
    """Typed settings for ``cfg.command``; raises ``ConfigError`` naming the offending key."""
    cmd = cfg.command
    allowed = PER_COMMAND[cmd]
    vals = {**DEFAULTS, **COMMAND_DEFAULTS.get(cmd, {})}
    vals = {k: v for k, v in vals.items() if k in allowed}
    if "delta" in allowed and "d" not in cfg.values and "delta" not in cfg.values:
        vals["delta"] = repr(DESK_DELTA)
    vals.update({k: v for k, v in cfg.values.items() if k in allowed})
    extra = sorted(set(cfg.values) - set(allowed))
    if extra:
        raise ConfigError(f"option(s) {', '.join(extra)} do not apply to {cmd!r}")
    missing = [k for k in REQUIRED.get(cmd, ()) if k not in vals]
    if missing:
        raise ConfigError(f"missing required setting {missing[0]!r} for {cmd!r} (flag --{missing[0]} or config key)")
    typed = {}
    for key, text in vals.items():
        try:
            typed[key] = CONVERT[OPTIONS[key][1]](text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    if "d" in typed and "delta" in typed:
        raise ConfigError("give only one of 'd' and 'delta'")
    return typed


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage().rstrip()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roughvol", description="Rough volatility Monte Carlo laboratory.")
    parser.add_argument("--version", action="version", version=f"roughvol {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for cmd in COMMANDS:
        sp = subs.add_parser(cmd)
        if cmd != "selftest":
            sp.add_argument("--config", default=None, help="flat key = value settings file")
        for key in PER_COMMAND[cmd]:
            flag = "--" + key.replace("_", "-")
            names = [flag] + (["--N-ref"] if key == "Nref" else [])
            sp.add_argument(*names, dest=key, default=argparse.SUPPRESS, help=OPTIONS[key][0])
    return parser


# ---------------------------------------------------------------------------
# commands

@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _quadrature(t: dict) -> QuadratureConfig:
    if "d" in t:
        return QuadratureConfig(d=t["d"])
    return QuadratureConfig(delta=t["delta"])


def _single(t: dict, key: str):
    val = t[key]
    if len(val) != 1:
        raise ConfigError(f"{key!r} takes a single value for this command")
    return val[0]


def _cmd_price(t, header):
    N = _single(t, "N")
    H = _single(t, "H")
    mkt = MarketSpec(t["S0"], t["K"], t["rho"])
    f = parse_family(t["f"])
    est = price_call_mc(mkt, H, N, f, t["scheme"], _quadrature(t), t["M"], t["seed"],
                        psi_variant=t["psi_variant"], threads=t.get("threads"))
    lo, hi = est.ci95
    with _output(t.get("out")) as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "eps", "price", "stderr", "ci_lo", "ci_hi", "M", "seed", "f", "scheme"])
        w.writerow([N, repr(2.0**-N), repr(est.value), repr(est.stderr), repr(lo), repr(hi), est.n_samples,
                    est.seed, f.descriptor, t["scheme"]])


def _write_study(t, header, results, study):
    out = t.get("out")
    if out is None:
        harness.write_rows_csv(sys.stdout, results, header)
        sys.stdout.write("\n")
        harness.write_summary_csv(sys.stdout, results, header)
    else:
        p = Path(out)
        with open(p, "w", newline="") as fh:
            harness.write_rows_csv(fh, results, header)
        with open(p.with_name(p.stem + "_summary" + (p.suffix or ".csv")), "w", newline="") as fh:
            harness.write_summary_csv(fh, results, header)
    if t.get("emit_plot_data"):
        d = Path(t["emit_plot_data"])
        d.mkdir(parents=True, exist_ok=True)
        with open(d / f"{study}_{t['scheme']}_plot.csv", "w", newline="") as fh:
            harness.write_plot_csv(fh, results, header)
    for res in results:
        for flag in res.flags:
            print(f"warning: H={res.H}: {flag}", file=sys.stderr)


def _cmd_strong(t, header):
    res = harness.strong_error_study(t["H"], t["N"], t["Nref"], parse_family(t["f"]), t["scheme"], t["M"],
                                     _quadrature(t), t["seed"], t.get("threads"))
    _write_study(t, header, res, "strong")


def _cmd_weak(t, header):
    res = [harness.weak_second_moment_study(H, t["N"], parse_family(t["f"]), t["scheme"], t["M"],
                                            _quadrature(t), t["seed"], t.get("threads")) for H in t["H"]]
    _write_study(t, header, res, "weak")


def _cmd_option(t, header):
    mkt = MarketSpec(t["S0"], t["K"], t["rho"])
    f = parse_family(t["f"]) if "f" in t else None
    res = harness.option_rate_study(mkt, t["H"], t["N"], t["Nref"], t["sigma0"], t["eta"], t["M"],
                                    _quadrature(t), t["seed"], t["scheme"], f, t["psi_variant"],
                                    t.get("threads"))
    _write_study(t, header, res, "option")


def _cmd_ldp(t, header):
    u = parse_family(t["u"]) if "u" in t else None
    prob = LdpProblem(parse_family(t["f"]), t["rho"], _single(t, "H"), u, t["z"], t["n_grid"], t["sub"])
    results = rate_curve(t["y"], prob)
    with _output(t.get("out")) as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "I", "converged", "n_starts", "best_start", "grad_norm"])
        for r in results:
            w.writerow([repr(r.y), repr(float(r.value)), int(r.converged), r.n_starts, r.best_start,
                        repr(r.grad_norm)])


def _cmd_volterra(t, header):
    H, N = _single(t, "H"), _single(t, "N")
    coeffs = VolterraCoeffs(t["z"], parse_family(t["u"]), parse_family(t["v"]))
    grid = t.get("times")

    def work(start, count):
        noise = sample_haar_noise(N, count, t["seed"], start_id=start)
        path = solve_volterra(noise, H, coeffs, t["scheme"], grid, self_interaction=t["self_interaction"])
        return start, path.times, np.atleast_2d(path.values)

    parts = map_chunks(work, t["M"], t.get("threads"))
    with _output(t.get("out")) as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "t", "Z_eps"])
        for start, times, values in parts:
            for i, row in enumerate(values):
                for tt, zz in zip(times, row):
                    w.writerow([start + i, repr(float(tt)), repr(float(zz))])


HANDLERS = {
    "price": _cmd_price,
    "strong-rate": _cmd_strong,
    "weak-rate": _cmd_weak,
    "option-rate": _cmd_option,
    "ldp": _cmd_ldp,
    "volterra-sim": _cmd_volterra,
}


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise ConfigError(f"choose a command: {', '.join(COMMANDS)}")
    if args.command == "selftest":
        return 0 if selftest.run(sys.stdout) else 1
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    cfg = load_config(args.config) if args.config else RunConfig()
    if cfg.command is not None and cfg.command != args.command:
        raise ConfigError(f"config file is for {cfg.command!r}, not {args.command!r}")
    cfg.command = args.command
    env = {k: os.environ[var] for k, var in ENV.items()
           if var in os.environ and k in PER_COMMAND[args.command]}
    # a quadrature flag replaces whichever quadrature setting the file made
    if "d" in flags or "delta" in flags:
        cfg.values.pop("d", None)
        cfg.values.pop("delta", None)
    cfg = cfg.merged(env).merged(flags)
    typed = resolve(cfg)
    HANDLERS[args.command](typed, cfg.provenance(typed))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"roughvol: configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"roughvol: numeric error: {exc}", file=sys.stderr)
        return 2
    except RoughVolError as exc:
        print(f"roughvol: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
