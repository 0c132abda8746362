"""Command-line front end.

Subcommands: codebook, coherence, collision-table, detect, simulate.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import configparser
import csv
import io
import itertools
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .codebook import RmParams, codebook, export_codebook, level_coherence, table_max_coherence
from .detector import DetectorConfig, residual_epsilon, sic_detect
from .sim import ChannelModel, ExperimentConfig, collision_rate_formula, run_experiment

log = logging.getLogger("rmaccess")

CSV_COLUMNS = (
    "m", "r", "C", "k", "snr_db", "channel", "p_max", "decision_rule", "trials",
    "collision_rate", "collision_se", "miss_rate", "miss_se",
    "false_alarm_rate", "false_alarm_se", "failure_rate", "failure_se",
)

# key -> (section, parser); every key may also appear in [sweep] as a comma list
INT_KEYS = {"m", "r", "C", "k", "trials", "seed", "t_max", "p_max", "reshuffle_limit",
            "refine_rounds", "restarts"}
FLOAT_KEYS = {"snr_db"}
SECTIONS = {
    "experiment": {"m", "r", "C", "k", "trials", "seed"},
    "channel": {"kind", "snr_db"},
    "detector": {"mode", "epsilon", "t_max", "p_max", "decision_rule", "reshuffle_limit",
                 "column_search", "refine_rounds", "restarts"},
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_int(text):
    """Integer literal, also accepting powers written as 2^n."""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    return int(text)


def parse_list(text, conv=str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return [conv(t) for t in items]


def parse_value(key, text):
    text = text.strip()
    if key in INT_KEYS:
        return parse_int(text)
    if key in FLOAT_KEYS:
        return float(text)
    if key == "epsilon":
        return text if text == "auto" else float(text)
    return text


def read_config(path):
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep C and k distinct
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    return cp


def _section_values(cp, name):
    allowed = SECTIONS[name]
    out = {}
    if cp is None or not cp.has_section(name):
        return out
    for key, text in cp.items(name):
        if key not in allowed:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            out[key] = parse_value(key, text)
        except ValueError as e:
            raise ConfigError(f"[{name}] {key}: {e}") from e
    return out


def _sweep_values(cp):
    known = set().union(*SECTIONS.values()) - {"seed", "trials"}
    grid = {}
    if cp is None or not cp.has_section("sweep"):
        return grid
    for key, text in cp.items("sweep"):
        if key not in known:
            raise ConfigError(f"[sweep] cannot sweep {key!r}")
        try:
            grid[key] = [parse_value(key, t) for t in parse_list(text)]
        except ValueError as e:
            raise ConfigError(f"[sweep] {key}: {e}") from e
    return grid


def experiment_points(cp, seed=None, overrides=None):
    """Expand a config into ExperimentConfig objects, one per sweep point."""
    base = {}
    for name in SECTIONS:
        base.update(_section_values(cp, name))
    base.update(overrides or {})
    if seed is not None:
        base["seed"] = seed
    grid = _sweep_values(cp)
    keys = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        vals = dict(base, **dict(zip(keys, combo)))
        missing = [k for k in ("m", "C", "k") if k not in vals]
        if missing:
            raise ConfigError(f"missing required field(s): {', '.join(missing)}")
        try:
            channel = ChannelModel(**{k: vals[k] for k in SECTIONS["channel"] if k in vals})
            det = {k: vals[k] for k in SECTIONS["detector"] if k in vals}
            if det.get("epsilon") == "auto":
                det["epsilon"] = residual_epsilon(vals["m"], math.sqrt(channel.noise_variance(vals["m"])))
            detector = DetectorConfig(k=vals["k"], **det)
            exp = {k: vals[k] for k in SECTIONS["experiment"] if k in vals}
            points.append(ExperimentConfig(channel=channel, detector=detector, **exp))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid parameters {dict(zip(keys, combo))}: {e}") from e
    return points


def fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def result_row(res):
    cfg = res.config
    row = {
        "m": cfg.m, "r": cfg.r, "C": cfg.C, "k": cfg.k,
        "snr_db": float(cfg.channel.snr_db), "channel": cfg.channel.kind,
        "p_max": cfg.detector.p_max, "decision_rule": cfg.detector.decision_rule,
        "trials": cfg.trials,
    }
    row.update(res.metrics())
    return [fmt(row[c]) for c in CSV_COLUMNS]


def _open_out(path):
    if path is None or str(path) == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_text(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _load_cp(args):
    return read_config(args.config) if getattr(args, "config", None) else None


def _param(args, cp, key, section="experiment", default=None):
    """Command-line value, else config value, else default."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    if cp is not None and cp.has_option(section, key):
        try:
            return parse_value(key, cp.get(section, key))
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}") from e
    return default


def _codebook_params(args, cp):
    m = _param(args, cp, "m")
    if m is None:
        raise ConfigError("m is required (--m or [experiment] m)")
    r = _param(args, cp, "r")
    C = _param(args, cp, "C")
    try:
        if r is None:
            return RmParams.auto(m, C if C is not None else 1 << (2 * m))
        return RmParams(m, r, C if C is not None else 1 << (m * (r + 2)))
    except ValueError as e:
        raise ConfigError(str(e)) from e


def cmd_codebook(args):
    cp = _load_cp(args)
    params = _codebook_params(args, cp)
    n = params.C if args.limit is None else min(args.limit, params.C)
    cb = codebook(params.m, params.r, params.C)
    buf = io.StringIO()
    export_codebook(cb, buf, range(n))
    _write_text(args.out, buf.getvalue())
    return 0


def coherence_report(m, r, sample_pairs=200, seed=0, exhaustive=None):
    rng = np.random.default_rng(seed)
    rows = []
    for level in range(1, r + 3):
        got, pairs, exh = level_coherence(m, r, level, sample_pairs, rng, exhaustive)
        ref = table_max_coherence(m, level)
        rows.append({
            "level": level,
            "pairs": pairs,
            "exhaustive": exh,
            "max_coherence": got,
            "table_max": ref,
            "within_bound": got <= ref + 1e-9,
            "attains": abs(got - ref) <= 1e-9,
        })
    return rows


def cmd_coherence(args):
    cp = _load_cp(args)
    params = _codebook_params(args, cp)
    seed = args.seed if args.seed is not None else 0
    rows = coherence_report(params.m, params.r, args.sample_pairs, seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, bool) else str(v).lower() for v in row.values()])
    _write_text(args.out, buf.getvalue())
    return 0


def collision_table(ks, Cs):
    """Rows of (C, rate for each k)."""
    for k in ks:
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
    for C in Cs:
        if C < 1:
            raise ConfigError(f"C must be >= 1, got {C}")
    return [[C] + [collision_rate_formula(k, C) for k in ks] for C in Cs]


def cmd_collision_table(args):
    cp = _load_cp(args)
    try:
        ks = parse_list(args.ks, parse_int) if args.ks else None
        Cs = parse_list(args.Cs, parse_int) if args.Cs else None
        if cp is not None and cp.has_section("collision"):
            ks = ks or parse_list(cp.get("collision", "k", fallback="2,4,6"), parse_int)
            Cs = Cs or parse_list(cp.get("collision", "C", fallback="52,16000"), parse_int)
    except ValueError as e:
        raise ConfigError(f"malformed list: {e}") from e
    ks = ks or [2, 4, 6]
    Cs = Cs or [52, 16000]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["C"] + [f"k={k}" for k in ks])
    for row in collision_table(ks, Cs):
        w.writerow([row[0]] + [fmt(v) for v in row[1:]])
    _write_text(args.out, buf.getvalue())
    return 0


def read_signal(path):
    """One 're,im' pair per line; blank lines and '#' comments are skipped."""
    vals = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise ConfigError(f"{path}:{lineno}: expected 're,im'")
                try:
                    vals.append(complex(float(parts[0]), float(parts[1])))
                except ValueError as e:
                    raise ConfigError(f"{path}:{lineno}: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    n = len(vals)
    if n < 4 or n & (n - 1):
        raise ConfigError(f"{path}: signal length {n} is not a power of two >= 4")
    return np.array(vals)


def write_signal(y, fh):
    for v in y:
        fh.write(f"{v.real:.17g},{v.imag:.17g}\n")


def cmd_detect(args):
    cp = _load_cp(args)
    y = read_signal(args.input)
    m = y.size.bit_length() - 1
    if args.m is not None and args.m != m:
        raise ConfigError(f"--m {args.m} does not match signal length {y.size}")
    args.m = m
    params = _codebook_params(args, cp)
    det = _section_values(cp, "detector")
    for key in ("mode", "p_max", "decision_rule"):
        v = getattr(args, key)
        if v is not None:
            det[key] = v
    k = _param(args, cp, "k")
    if det.get("epsilon") == "auto":
        raise ConfigError("epsilon = auto needs a channel model; give a number for detect")
    try:
        cfg = DetectorConfig(k=k, **det)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    seed = args.seed if args.seed is not None else _param(args, cp, "seed", default=0)
    cb = codebook(params.m, params.r, params.C)
    report = sic_detect(y, cb, cfg, np.random.default_rng(seed))
    _write_text(args.out, report.to_json())
    return 0


def cmd_simulate(args):
    if not args.config:
        raise ConfigError("simulate needs --config")
    cp = read_config(args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    points = experiment_points(cp, seed=args.seed, overrides=overrides)
    seed = points[0].seed
    print(f"seed={seed}", file=sys.stderr)

    results = []
    for i, cfg in enumerate(points, 1):
        log.info("point %d/%d: m=%d r=%d C=%d k=%d snr=%g p_max=%d", i, len(points),
                 cfg.m, cfg.r, cfg.C, cfg.k, cfg.channel.snr_db, cfg.detector.p_max)
        results.append(run_experiment(cfg, threads=args.threads))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        w.writerow(result_row(res))
    doc = {"seed": seed, "version": __version__, "points": [res.to_dict() for res in results]}
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        out = Path(args.out)
        csv_path = out if out.suffix == ".csv" else out.with_suffix(".csv")
        csv_path.write_text(buf.getvalue())
        csv_path.with_suffix(".json").write_text(text)
        log.info("wrote %s and %s", csv_path, csv_path.with_suffix(".json"))
    return 0


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trials")
    common.add_argument("--verbose", "-v", action="count", default=0)

    cbp = argparse.ArgumentParser(add_help=False)
    cbp.add_argument("--m", type=int)
    cbp.add_argument("--r", type=int)
    cbp.add_argument("--C", type=parse_int, help="user-space size, e.g. 16000 or 2^14")

    p = _Parser(prog="rmaccess", description="Reed-Muller sequences for grant-free access")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("codebook", parents=[common, cbp], help="dump id,P_rows,b as CSV")
    s.add_argument("--limit", type=int, help="only the first LIMIT ids")
    s.set_defaults(func=cmd_codebook)

    s = sub.add_parser("coherence", parents=[common, cbp], help="max coherence per space level")
    s.add_argument("--sample-pairs", type=int, default=200)
    s.set_defaults(func=cmd_coherence)

    s = sub.add_parser("collision-table", parents=[common], help="collision-rate grid")
    s.add_argument("--ks", help="comma list of active-user counts (default 2,4,6)")
    s.add_argument("--Cs", help="comma list of space sizes (default 52,16000)")
    s.set_defaults(func=cmd_collision_table)

    s = sub.add_parser("detect", parents=[common, cbp], help="run SIC detection on a signal file")
    s.add_argument("input", help="signal file, one 're,im' pair per line")
    s.add_argument("--k", type=int)
    s.add_argument("--mode")
    s.add_argument("--p-max", dest="p_max", type=int)
    s.add_argument("--decision-rule", dest="decision_rule")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo experiment or sweep")
    s.add_argument("--trials", type=int, help="override the configured trial count")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("rmaccess: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"rmaccess: config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - top-level boundary
        log.debug("runtime failure", exc_info=True)
        print(f"rmaccess: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
