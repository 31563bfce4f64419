"""Command line entry point: ``fairrm <command> [options]``.

Every command reads an optional JSON config (``--config``); flags given on
the command line override the config. Outputs are CSV and JSON files plus a
``manifest.json`` that lists each file with its SHA-256 digest. Nothing
time-dependent is written, so reruns with the same inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adversarial import FAMILIES, cr_csv, empirical_cr, parse_family
from .metrics import (estimate_regret, fairness_audit, hindsight_value, hindsight_values,
                      loglog_slope)
from .model import (Instance, StreamBank, instance_from_dict, read_arrivals_csv, scale_instance,
                    validate_instance)
from .pricing import PricingInstance, price_fairness_audit, pricing_from_dict, run_pricing
from .registry import BASE_OF, POLICY_IDS, PRICING_POLICIES, PolicyParams, is_randomized, make_factory
from .simulate import run_replications

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_LOW_POWER = 0, 1, 2, 3


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

def version_string() -> str:
    """Package version plus ``git describe`` output when the source is a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("FAIRRM_THREADS")
    return max(1, int(env)) if env else 1


def load_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    base_dir = Path.cwd()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = json.loads(path.read_text())
        base_dir = path.parent
    overrides = {
        "seed": args.seed, "replications": args.replications, "out": args.out,
        "policy": args.policy, "instance": getattr(args, "instance", None),
    }
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    params = dict(cfg.get("params", {}))
    for key in ("alpha", "delta", "beta"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    cfg["params"] = params
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", "fairrm-out")
    # resolve file references relative to the config file
    for key in ("instance", "arrivals"):
        if isinstance(cfg.get(key), str):
            p = Path(cfg[key])
            p = p if p.is_absolute() else base_dir / p
            if not p.is_file():
                raise ConfigError(f"{key} file not found: {p}")
            cfg[f"_{key}_path"] = p
    cfg["_threads"] = _threads(args.threads if args.threads is not None else cfg.get("threads"))
    return cfg


def config_echo(cfg: dict) -> dict:
    """The user-facing part of the config, without output location or private keys."""
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_") and k not in ("out", "threads")}


def _instance_dict(cfg: dict) -> dict:
    if "instance" not in cfg:
        raise ConfigError("no instance given (use --instance or the config key 'instance')")
    if "_instance_path" in cfg:
        return json.loads(cfg["_instance_path"].read_text())
    if isinstance(cfg["instance"], dict):
        return cfg["instance"]
    raise ConfigError("instance must be a file path or an inline object")


def load_cfg_instance(cfg: dict) -> Instance:
    return instance_from_dict(_instance_dict(cfg))


def load_cfg_pricing(cfg: dict) -> PricingInstance:
    d = _instance_dict(cfg)
    if "p" not in d or "purchase_prob" not in d:
        raise ConfigError("pricing policies need an instance with keys 'p' and 'purchase_prob'")
    return pricing_from_dict(d)


def _policy(cfg: dict, key: str = "policy") -> str:
    name = cfg.get(key)
    if name is None:
        raise ConfigError("no policy given (use --policy or the config key 'policy')")
    if name not in POLICY_IDS:
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_IDS)}")
    return name


def _replications(cfg: dict, default: int) -> int:
    R = int(cfg.get("replications", default))
    if R < 1:
        raise ConfigError("replications must be positive")
    return R


def _fixed_arrivals(cfg: dict, inst: Instance, R: int):
    if "_arrivals_path" not in cfg:
        return inst, None
    seq = read_arrivals_csv(cfg["_arrivals_path"], inst.n)
    return inst.with_horizon(seq.T), np.tile(seq.events, (R, 1))


# ---------------------------------------------------------------------------
# output

class Output:
    """Collects written files so the manifest can list their digests."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path.write_bytes(data)
        self.files[rel] = hashlib.sha256(data).hexdigest()
        return path

    def manifest(self, command: str, cfg: dict, **extra) -> None:
        doc = {
            "command": command,
            "version": version_string(),
            "seed": int(cfg["seed"]),
            "config": config_echo(cfg),
            **extra,
            "files": dict(sorted(self.files.items())),
        }
        (self.root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _csv_text(header: list[str], rows: list[list]) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "n/a"
        return f"{float(v):.10g}"
    return v


# ---------------------------------------------------------------------------
# commands

def cmd_run(cfg: dict) -> int:
    name = _policy(cfg)
    R = _replications(cfg, 1)
    seed = int(cfg["seed"])
    out = Output(cfg["out"])
    width = max(5, len(str(R - 1)))
    summary = []
    if name in PRICING_POLICIES:
        pinst = load_cfg_pricing(cfg)
        params = PolicyParams.from_dict(cfg["params"])
        grace = params.grace(pinst.inst.T) if name == "gp_pricing" else None
        res = run_pricing(pinst, seed, R, grace)
        for k in range(R):
            out.write(f"traces/trace_{k:0{width}d}.csv", res.trace_csv(k))
            summary.append([k, k, float(res.revenue[k]), int(res.purchased[k].sum()), int(res.depleted[k])])
    else:
        inst = load_cfg_instance(cfg)
        inst, arrivals = _fixed_arrivals(cfg, inst, R)
        res = run_replications(make_factory(name, cfg["params"]), inst, seed, R, arrivals=arrivals,
                               record_capacity=True, threads=cfg["_threads"])
        for k in range(R):
            out.write(f"traces/trace_{k:0{width}d}.csv", res.trace(k).to_csv())
            summary.append([k, k, float(res.revenue[k]), int(res.accepted[k].sum()), int(res.depleted[k])])
    out.write("summary.csv", _csv_text(["replication", "stream_id", "revenue", "accepted", "depleted"], summary))
    out.manifest("run", cfg, policy=name, replications=R, stream_ids=list(range(R)))
    revenue = np.array([row[2] for row in summary])
    print(f"{name}: {R} replication(s), mean revenue {revenue.mean():.6g}; wrote {out.root}")
    return EXIT_OK


def cmd_audit(cfg: dict) -> int:
    name = _policy(cfg)
    R = _replications(cfg, 1000)
    seed = int(cfg["seed"])
    params = PolicyParams.from_dict(cfg["params"])
    offsets = tuple(int(d) for d in cfg.get("offsets", (1, 2, 3)))
    out = Output(cfg["out"])
    if name in PRICING_POLICIES:
        pinst = load_cfg_pricing(cfg)
        T = pinst.inst.T
        grace = params.grace(T) if name == "gp_pricing" else None
        res = run_pricing(pinst, seed, R, grace)
        delta = grace.delta if grace is not None else params.delta or 1.0 / T
        report = price_fairness_audit(res, params.alpha, delta, offsets, n_types=pinst.n)
    else:
        inst = load_cfg_instance(cfg)
        inst, arrivals = _fixed_arrivals(cfg, inst, R)
        res = run_replications(make_factory(name, params), inst, seed, R, arrivals=arrivals,
                               threads=cfg["_threads"])
        delta = params.delta if params.delta is not None else 1.0 / inst.T
        report = fairness_audit(res, params.alpha, delta, offsets, n_types=inst.n)
    out.write("audit.csv", report.to_csv())
    out.write("audit.json", report.to_json())
    out.manifest("audit", cfg, policy=name, replications=R, verdict=report.verdict)
    print(f"{name}: verdict {report.verdict} (depletion {report.depletion_freq:.4g}, "
          f"max adjacent {report.max_freq(1):.4g}, alpha {params.alpha:g})")
    return report.exit_code


def _policy_list(cfg: dict) -> list[str]:
    names = cfg.get("policies") or ([cfg["policy"]] if cfg.get("policy") else [])
    if not names:
        raise ConfigError("no policies given (config key 'policies' or --policy)")
    for n in names:
        if n not in POLICY_IDS or n in PRICING_POLICIES:
            raise ConfigError(f"policy {n!r} cannot be swept")
    return list(names)


def cmd_regret_sweep(cfg: dict) -> int:
    horizons = [int(T) for T in cfg.get("horizons", [])]
    if len(horizons) < 3:
        raise ConfigError("regret-sweep needs at least three horizons (config key 'horizons')")
    names = _policy_list(cfg)
    R = _replications(cfg, 200)
    seed = int(cfg["seed"])
    base = load_cfg_instance(cfg)
    rows, slopes = [], []
    per_policy: dict[str, list[float]] = {n: [] for n in names}
    for T in horizons:
        inst = base.stretched(T)
        bank = StreamBank.range(seed, R)
        from .model import sample_arrival_matrix

        arrivals = sample_arrival_matrix(inst.lam, T, bank)
        hind = hindsight_values(inst, arrivals)
        for n in names:
            rep = estimate_regret(make_factory(n, cfg["params"]), inst, R, seed, arrivals=arrivals,
                                  hindsight=hind, threads=cfg["_threads"])
            per_policy[n].append(rep.regret)
            rows.append([n, T, R, rep.mean_hindsight, rep.mean_revenue, rep.regret, rep.stderr])
    for n in names:
        vals = per_policy[n]
        slope = loglog_slope(horizons, vals) if all(v > 0 for v in vals) else float("nan")
        slopes.append([n, slope])
    out = Output(cfg["out"])
    out.write("regret.csv", _csv_text(["policy", "T", "R", "mean_hindsight", "mean_revenue", "regret", "stderr"], rows))
    out.write("slopes.csv", _csv_text(["policy", "loglog_slope"], slopes))
    out.manifest("regret-sweep", cfg, policies=names, horizons=horizons, replications=R)
    for n, s in slopes:
        print(f"{n}: regret {[round(v, 3) for v in per_policy[n]]}, slope {'n/a' if math.isnan(s) else f'{s:.3f}'}")
    return EXIT_OK


def cmd_cr_sweep(cfg: dict) -> int:
    scales = [float(m) for m in cfg.get("m_scales", [])]
    if len(scales) < 3:
        raise ConfigError("cr-sweep needs at least three capacity scales (config key 'm_scales')")
    names = _policy_list(cfg)
    families = [parse_family(f) for f in cfg.get("families", FAMILIES)]
    R = _replications(cfg, 1000)
    seed = int(cfg["seed"])
    template = load_cfg_instance(cfg)
    per_type = float(cfg.get("per_type", 2.0))
    b_scale = cfg.get("b_scale")
    builders = {}
    for n in names:
        def builder(inst, n=n):
            params = dict(cfg["params"])
            if b_scale is not None:
                params["b"] = [int(math.floor(f * inst.m_scale + 1e-9)) for f in b_scale]
            return make_factory(n, params)(inst)
        builders[n] = builder
    rows, cr = empirical_cr(builders, lambda m: scale_instance(template, m, horizon_ratio=per_type * template.n),
                            families, scales, replications=R, seed=seed,
                            randomized=[n for n in names if is_randomized(n)])
    summary = []
    for n in names:
        base = BASE_OF.get(n)
        for m in scales:
            gap = cr[(base, m)] - cr[(n, m)] if base in names else float("nan")
            scaled = gap * m / math.log(m) if base in names and m > 1 else float("nan")
            summary.append([n, m, cr[(n, m)], base or "", gap, scaled])
    out = Output(cfg["out"])
    out.write("cr.csv", cr_csv(rows))
    out.write("cr_summary.csv", _csv_text(["policy", "m_scale", "cr", "base", "gap", "gap_m_over_log_m"], summary))
    out.manifest("cr-sweep", cfg, policies=names, m_scales=scales, families=[f.label for f in families],
                 replications=R)
    for row in summary:
        print(f"{row[0]} m={row[1]:g}: CR {row[2]:.4f}" + ("" if not row[3] else f", gap*m/log m {_fmt(row[5])}"))
    return EXIT_OK


def cmd_oracle(cfg: dict, trace: str | None) -> int:
    inst = load_cfg_instance(cfg)
    if trace is None:
        raise ConfigError("oracle needs --trace (a trace or arrivals CSV)")
    path = Path(trace)
    if not path.is_file():
        raise ConfigError(f"trace file not found: {path}")
    with path.open() as fh:
        types = np.array([int(row["type"]) for row in csv.DictReader(fh)], dtype=np.int64)
    if types.size and (types.min() < 0 or types.max() > inst.n):
        raise ConfigError("trace contains types outside the instance")
    counts = np.bincount(types, minlength=inst.n + 1)[1:]
    value = hindsight_value(inst, counts)
    doc = {"trace": path.name, "counts": counts.tolist(), "hindsight_value": value}
    out = Output(cfg["out"])
    out.write("oracle.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    out.manifest("oracle", cfg)
    print(f"hindsight value {value:.10g} (arrivals per type {counts.tolist()})")
    return EXIT_OK


def cmd_validate(cfg: dict) -> int:
    d = _instance_dict(cfg)
    inst = instance_from_dict(d)
    report = validate_instance(inst)
    messages = list(report.violations)
    if "p" in d or "purchase_prob" in d:
        try:
            pricing_from_dict(d)
        except (ValueError, KeyError) as err:
            messages.append(f"pricing: {err}")
    for m in messages:
        print(f"violation: {m}")
    for w in report.warnings:
        print(f"warning: {w}")
    print("valid" if not messages else "invalid")
    return EXIT_OK if not messages else EXIT_ERROR


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--instance", help="instance JSON (overrides the config)")
    common.add_argument("--seed", type=int)
    common.add_argument("--replications", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--policy", help=f"policy id: {', '.join(POLICY_IDS)}")
    common.add_argument("--alpha", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--threads", type=int, help="worker threads (default: $FAIRRM_THREADS or 1)")

    parser = argparse.ArgumentParser(prog="fairrm", description="Fair online admission experiments.")
    parser.add_argument("--version", action="version", version=f"fairrm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate a policy and write per-replication traces")
    sub.add_parser("audit", parents=[common], help="same-type fairness audit (exit 0 pass, 2 fail, 3 low power)")
    sub.add_parser("regret-sweep", parents=[common], help="regret over several horizons and its log-log slope")
    sub.add_parser("cr-sweep", parents=[common], help="empirical competitive ratios over capacity scales")
    oracle = sub.add_parser("oracle", parents=[common], help="hindsight optimum of one arrival trace")
    oracle.add_argument("--trace", help="trace or arrivals CSV with a 'type' column")
    sub.add_parser("validate", parents=[common], help="check an instance file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "audit":
            return cmd_audit(cfg)
        if args.command == "regret-sweep":
            return cmd_regret_sweep(cfg)
        if args.command == "cr-sweep":
            return cmd_cr_sweep(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.trace)
        return cmd_validate(cfg)
    except KeyError as err:
        print(f"fairrm: error: missing key {err}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, ValueError, json.JSONDecodeError) as err:
        print(f"fairrm: error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"fairrm: I/O error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
