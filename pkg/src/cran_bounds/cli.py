"""Command-line front end.

Usage: cran-bounds SUBCOMMAND --config FILE [--out PATH] [--seed N] [--key value ...]

The config file is INI-style text (``key = value`` lines under ``[section]``
headers); section names are only for readability and all keys share one
namespace. Every key can be overridden by a flag of the same name with
underscores written as dashes. Exit status: 0 success, 2 config or input
error, 3 infeasible, 4 size limit.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from typing import Callable

import numpy as np

from . import downlink, experiments, uplink
from .channels import (
    GeometryScenario,
    MultipathParams,
    los_gain_matrix,
    mimo_expand,
    read_matrix,
    rich_scattering,
    write_matrix,
)
from .errors import (
    DegenerateChannelError,
    DegenerateScenarioError,
    InfeasibleError,
    InvalidInputError,
    PreconditionError,
    SizeLimitError,
)
from .instance import DOWNLINK, UPLINK, NetworkInstance

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SIZE = 0, 2, 3, 4

KEYS = {
    "seed": "top-level seed; every random draw derives from it",
    "direction": "uplink or downlink",
    "K": "number of users",
    "L": "number of relays",
    "N_u": "antennas per user",
    "N_r": "antennas per relay",
    "P": "per-node power",
    "fronthaul": "comma-separated fronthaul capacities C_1..C_L",
    "c_sum": "total fronthaul (inf allowed for sigma-star downlink)",
    "sigma_sq": "quantization / precoding noise variance",
    "sigma_grid": "comma-separated sigma^2 grid",
    "sigma_policy": "scaling sweep: table, select or a number",
    "matrix_file": "channel matrix file (rows cols header, then rows)",
    "matrix": "inline channel matrix, rows separated by ';', entries by ','",
    "channel": "generated channel source: rich or geometry",
    "lambda_u": "user intensity per 10^4 m^2 (geometry)",
    "lambda_r": "relay intensity per 10^4 m^2 (geometry)",
    "area_side": "square side in meters (geometry)",
    "model": "los, multipath or rich",
    "beta": "path-loss exponent of the los model",
    "strategy": "unlimited-bound: simple or randomized",
    "n_samples": "randomized dual samples",
    "regime": "scaling regime: L=gK, L=K^g, K-fixed, L-fixed",
    "param": "scaling gamma or the fixed K or L",
    "sizes": "comma-separated network sizes",
    "eps": "epsilon of the K-fixed regime",
    "trials": "trials per grid point",
    "coupling": "geometry coupling: lr=2lu, lr=lu^2, lu-fixed",
    "lambdas": "comma-separated intensity grid",
    "fixed_lambda_u": "user intensity of the lu-fixed coupling",
    "upper": "geometry downlink upper bound: simple or randomized",
    "c_sums": "comma-separated total fronthaul values",
    "Ns": "comma-separated antenna counts",
    "out": "output path",
    "csv": "optional CSV path for single-result subcommands",
}

SUBCOMMANDS = (
    "uplink-sumrate",
    "downlink-sumrate",
    "allocate",
    "sigma-star",
    "gap-audit",
    "unlimited-bound",
    "scaling-sweep",
    "geometry-sweep",
    "antenna-sweep",
    "gen-channel",
)


class ConfigError(InvalidInputError):
    pass


class Config:
    """Flat key lookup with typed accessors; missing or malformed keys raise ConfigError."""

    def __init__(self, values: dict[str, str]):
        self.values = values

    def has(self, key: str) -> bool:
        return key in self.values

    def raw(self, key: str, default=None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def _conv(self, key: str, fn: Callable, default):
        if key not in self.values and default is not None:
            return default
        text = self.raw(key)
        try:
            return fn(text)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key!r}: {text!r}") from e

    def int(self, key: str, default=None) -> int:
        return self._conv(key, lambda s: int(s.strip()), default)

    def float(self, key: str, default=None) -> float:
        return self._conv(key, lambda s: float(s.strip()), default)

    def floats(self, key: str, default=None) -> list[float]:
        return self._conv(key, lambda s: [float(t) for t in s.split(",") if t.strip()], default)

    def ints(self, key: str, default=None) -> list[int]:
        return self._conv(key, lambda s: [int(t) for t in s.split(",") if t.strip()], default)

    def str(self, key: str, default=None) -> str:
        return self.raw(key, default).strip()

    def direction(self) -> str:
        d = self.str("direction", UPLINK)
        if d not in (UPLINK, DOWNLINK):
            raise ConfigError(f"direction must be uplink or downlink, got {d!r}")
        return d


def load_config(path: str | None, overrides: dict[str, str]) -> Config:
    values: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for section in parser.sections():
            for key, value in parser.items(section):
                if key in values:
                    raise ConfigError(f"key {key!r} appears twice")
                values[key] = value
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(values)


# instances


def _parse_inline(text: str) -> np.ndarray:
    try:
        rows = [[float(t) for t in r.split(",")] for r in text.split(";") if r.strip()]
        return np.array(rows, dtype=float)
    except ValueError as e:
        raise ConfigError(f"bad inline matrix: {e}") from e


def _channel(cfg: Config, direction: str) -> tuple[np.ndarray, int, int, int, int]:
    """Channel gain in the direction's orientation with (K, L, N_u, N_r)."""
    sources = [k for k in ("matrix_file", "matrix", "channel") if cfg.has(k)]
    if len(sources) != 1:
        raise ConfigError(f"need exactly one channel source (matrix_file, matrix or channel), got {sources or 'none'}")
    n_u, n_r = cfg.int("N_u", 1), cfg.int("N_r", 1)
    seed = cfg.int("seed")
    src = sources[0]
    if src in ("matrix_file", "matrix"):
        M = read_matrix(cfg.str("matrix_file")) if src == "matrix_file" else _parse_inline(cfg.str("matrix"))
        if M.ndim != 2 or M.size == 0:
            raise ConfigError("channel matrix is empty")
        rows, cols = M.shape
        K_def, L_def = (cols // n_u, rows // n_r) if direction == UPLINK else (rows // n_u, cols // n_r)
        return M, cfg.int("K", K_def), cfg.int("L", L_def), n_u, n_r
    kind = cfg.str("channel")
    if kind == "rich":
        K, L = cfg.int("K"), cfg.int("L")
        shape = (n_r * L, n_u * K) if direction == UPLINK else (n_u * K, n_r * L)
        return rich_scattering(*shape, seed), K, L, n_u, n_r
    if kind == "geometry":
        sc = GeometryScenario.draw(cfg.float("lambda_u"), cfg.float("lambda_r"), seed, cfg.float("area_side", 100.0))
        if sc.K == 0 or sc.L == 0:
            raise DegenerateScenarioError(f"geometry draw has {sc.K} users and {sc.L} relays")
        for key, n in (("K", sc.K), ("L", sc.L)):
            if cfg.has(key) and cfg.int(key) != n:
                raise ConfigError(f"{key}={cfg.int(key)} disagrees with the geometry draw ({n})")
        model = cfg.str("model", "los")
        if model == "los":
            G = np.kron(los_gain_matrix(sc, cfg.float("beta", 2.5)), np.ones((n_r, n_u)))
        elif model == "multipath":
            G = mimo_expand(sc, MultipathParams(), n_u, n_r, seed)
        else:
            raise ConfigError(f"model must be los or multipath for a geometry channel, got {model!r}")
        return (G if direction == UPLINK else G.T.copy()), sc.K, sc.L, n_u, n_r
    raise ConfigError(f"channel must be rich or geometry, got {kind!r}")


def build_instance(cfg: Config, direction: str, need_fronthaul: bool = False) -> NetworkInstance:
    P = cfg.float("P")
    cfg.int("seed")
    G, K, L, n_u, n_r = _channel(cfg, direction)
    C = cfg.floats("fronthaul") if (need_fronthaul or cfg.has("fronthaul")) else None
    return NetworkInstance(direction, K, L, G, P, tuple(C) if C is not None else None, n_u, n_r)


# subcommands; each returns (report items, summary line, extra file writer)

Items = list[tuple[str, object]]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (frozenset, set)):
        return "{" + ",".join(str(i) for i in sorted(v)) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _sigma(cfg: Config) -> float:
    s = cfg.float("sigma_sq")
    if not (math.isfinite(s) and s > 0):
        raise ConfigError("sigma_sq must be positive and finite")
    return s


def cmd_uplink_sumrate(cfg: Config):
    inst = build_instance(cfg, UPLINK, need_fronthaul=True)
    s = _sigma(cfg)
    r, cut = uplink.ncf_sum_rate(inst, s)
    items = [
        ("R_NCF", r),
        ("argmin_subset", cut),
        ("C_star", uplink.c_star_up(inst, s)),
        ("R_inf", uplink.unlimited_sum_capacity(inst)),
        ("R_CS_upper", uplink.cutset_sum_upper(inst)),
    ]
    return items, f"uplink-sumrate: R_NCF={r:.6f}"


def cmd_downlink_sumrate(cfg: Config):
    inst = build_instance(cfg, DOWNLINK, need_fronthaul=True)
    s = _sigma(cfg)
    r, cut = downlink.ddf_sum_rate(inst, s)
    items = [
        ("R_DDF", r),
        ("argmin_subset", cut),
        ("C_star", downlink.c_star_down(inst, s)),
        ("R_inf_upper", downlink.dl_unlimited_upper_bound(inst)[0]),
    ]
    return items, f"downlink-sumrate: R_DDF={r:.6f}"


def cmd_allocate(cfg: Config):
    d = cfg.direction()
    inst = build_instance(cfg, d)
    s, c_sum = _sigma(cfg), cfg.float("c_sum")
    if d == UPLINK:
        C = uplink.allocate_fronthaul_up(inst, s, None, c_sum)
        rate = uplink.ncf_sum_rate(inst.with_fronthaul(C), s)[0]
        c_star = uplink.c_star_up(inst, s)
    else:
        C = downlink.allocate_fronthaul_down(inst, s, None, c_sum)
        rate = downlink.ddf_sum_rate(inst.with_fronthaul(C), s)[0]
        c_star = downlink.c_star_down(inst, s)
    return [("fronthaul_allocated", list(C)), ("C_star", c_star), ("sum_rate", rate)], f"allocate: sum_rate={rate:.6f}"


def cmd_sigma_star(cfg: Config):
    d = cfg.direction()
    inst = build_instance(cfg, d)
    c_sum = cfg.float("c_sum")
    if d == UPLINK:
        if not math.isfinite(c_sum):
            raise ConfigError("uplink c_sum must be finite")
        s, v = uplink.sigma_star_up(inst, None, c_sum)
        items = [("sigma_star_sq", s), ("R_max", v)]
    else:
        choice = downlink.max_sum_given_csum_down(inst, None, c_sum)
        s, v = choice.sigma_sq, choice.value
        items = [("sigma_star_sq", s), ("R_max", v), ("degenerate", choice.degenerate)]
    return items, f"sigma-star: sigma_sq={s:.6g} R_max={v:.6f}"


def cmd_gap_audit(cfg: Config):
    d = cfg.direction()
    inst = build_instance(cfg, d, need_fronthaul=True)
    grid = cfg.floats("sigma_grid") if cfg.has("sigma_grid") else None
    a = uplink.gap_audit_up(inst, None, grid) if d == UPLINK else downlink.gap_audit_down(inst, None, grid)
    items = [
        ("delta", a.delta),
        ("delta_sum", a.delta_sum),
        ("bound_per_user", a.bound_per_user),
        ("bound_sum", a.bound_sum),
        ("proof_bound_per_user", a.proof_bound_per_user),
        ("proof_bound_sum", a.proof_bound_sum),
        ("worst_subset", a.worst_subset),
        ("grid", list(a.grid)),
        ("pass_per_user", a.pass_per_user),
        ("pass_sum", a.pass_sum),
        ("pass", a.passed),
    ]
    return items, f"gap-audit: delta={a.delta:.6f} pass={_fmt(a.passed)}"


def cmd_unlimited_bound(cfg: Config):
    d = cfg.direction()
    inst = build_instance(cfg, d)
    if d == UPLINK:
        v = uplink.unlimited_sum_capacity(inst)
        return [("R_inf", v)], f"unlimited-bound: R_inf={v:.6f}"
    strategy = cfg.str("strategy", "simple")
    v, cert = downlink.dl_unlimited_upper_bound(inst, strategy, cfg.int("n_samples", 200), cfg.int("seed"))
    return [("R_inf_upper", v), ("Q_diagonal", list(cert.q))], f"unlimited-bound: R_inf_upper={v:.6f}"


def _policy(cfg: Config):
    text = cfg.str("sigma_policy", "table")
    try:
        return float(text)
    except ValueError:
        return text


def cmd_scaling_sweep(cfg: Config):
    res = experiments.scaling_sweep(
        cfg.str("regime"),
        cfg.float("param"),
        cfg.ints("sizes"),
        _policy(cfg),
        cfg.int("trials", 20),
        cfg.int("seed"),
        cfg.direction(),
        cfg.float("P", 1.0),
        cfg.float("eps", 0.5),
    )
    return res, f"scaling-sweep: {len(res.rows)} rows"


def cmd_geometry_sweep(cfg: Config):
    res = experiments.geometry_sweep(
        cfg.str("coupling"),
        cfg.floats("lambdas"),
        cfg.str("model", "los"),
        cfg.direction(),
        cfg.int("trials", 1000),
        cfg.int("seed"),
        cfg.float("P", 1.0),
        cfg.float("beta", 2.5),
        None,
        cfg.float("fixed_lambda_u", 10.0),
        cfg.float("area_side", 100.0),
        cfg.floats("sigma_grid", list(experiments.DEFAULT_SIGMA_GRID)),
        cfg.str("upper", "simple"),
    )
    return res, f"geometry-sweep: {len(res.rows)} rows"


def cmd_antenna_sweep(cfg: Config):
    res = experiments.antenna_sweep(
        cfg.int("K", 4),
        cfg.int("L", 6),
        cfg.floats("c_sums", [20.0, 40.0, 60.0, 80.0]),
        cfg.ints("Ns", [1, 2, 3, 4]),
        cfg.str("model", "multipath"),
        cfg.direction(),
        cfg.int("trials", 100),
        cfg.int("seed"),
        cfg.float("P", 1.0),
        cfg.float("beta", 2.5),
        None,
        cfg.float("area_side", 100.0),
    )
    return res, f"antenna-sweep: {len(res.rows)} rows"


def cmd_gen_channel(cfg: Config):
    d = cfg.direction()
    cfg.int("seed")
    G, K, L, n_u, n_r = _channel(cfg, d)
    return G, f"gen-channel: {G.shape[0]}x{G.shape[1]} {d} matrix (K={K}, L={L})"


COMMANDS = {
    "uplink-sumrate": cmd_uplink_sumrate,
    "downlink-sumrate": cmd_downlink_sumrate,
    "allocate": cmd_allocate,
    "sigma-star": cmd_sigma_star,
    "gap-audit": cmd_gap_audit,
    "unlimited-bound": cmd_unlimited_bound,
    "scaling-sweep": cmd_scaling_sweep,
    "geometry-sweep": cmd_geometry_sweep,
    "antenna-sweep": cmd_antenna_sweep,
    "gen-channel": cmd_gen_channel,
}


def _echo(cfg: Config) -> Items:
    skip = {"out", "csv", "matrix_file"}
    return [(k, cfg.values[k].strip()) for k in sorted(cfg.values) if k not in skip]


def render_report(subcommand: str, cfg: Config, items: Items) -> str:
    lines = [f"# cran-bounds {subcommand}"]
    lines += [f"# {k}={v}" for k, v in _echo(cfg)]
    lines += [f"{k}={_fmt(v)}" for k, v in items]
    return "\n".join(lines) + "\n"


def render_csv(items: Items) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in items:
        w.writerow([k, _fmt(v)])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cran-bounds", description="C-RAN capacity bounds, allocation and gap audits.")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI-style config file")
        for key, help_text in KEYS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, help=help_text)
    return p


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(subcommand: str, cfg: Config, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        result, summary = COMMANDS[subcommand](cfg)
        out = cfg.str("out", "") or None
        csv_path = cfg.str("csv", "") or None
        if isinstance(result, experiments.SweepResult):
            if out is None:
                raise ConfigError("sweeps need an output path (out)")
            _write(out, result.to_csv())
        elif isinstance(result, np.ndarray):
            if out is None:
                raise ConfigError("gen-channel needs an output path (out)")
            write_matrix(out, result)
        else:
            report = render_report(subcommand, cfg, result)
            if out is None:
                stdout.write(report)
            else:
                _write(out, report)
            if csv_path is not None:
                _write(csv_path, render_csv(result))
    except InfeasibleError as e:
        print(f"error: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SizeLimitError as e:
        print(f"error: size limit: {e}", file=sys.stderr)
        return EXIT_SIZE
    except (InvalidInputError, PreconditionError, DegenerateChannelError, DegenerateScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary, file=stdout)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_CONFIG
    overrides = {k: getattr(args, k) for k in KEYS}
    try:
        cfg = load_config(args.config, overrides)
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
