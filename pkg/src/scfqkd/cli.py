"""Command-line interface: ``scfqkd {rate,sweep,optimize,mc,oracle-check}``.

Configuration is resolved in layers: built-in defaults (the reference channel), a
flat JSON file (``--config``), ``SCFQKD_<FIELD>`` environment variables, then
explicit flags. Keys are the field names of ProtocolConfig and ChannelConfig.

Exit codes: 0 success, 2 configuration error, 3 validation or oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .core import ChannelConfig, ConfigError, ProtocolConfig, validate_config
from .pipeline import MODES, evaluate
from .optimize import OptimizationProblem, optimize_key_rate, secure_distance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAIL = 3

CSV_COLUMNS = ["distance_km", "nu", "mode", "p0_opt", "mu_opt", "key_rate", "e_ph", "E_K", "flags"]
ENV_PREFIX = "SCFQKD_"

PROTOCOL_KEYS = [f.name for f in fields(ProtocolConfig)]
CHANNEL_KEYS = [f.name for f in fields(ChannelConfig)]
ALL_KEYS = PROTOCOL_KEYS + CHANNEL_KEYS
INT_KEYS = {"N"}


@dataclass
class RunSpec:
    command: str
    values: dict
    out: str | None = None
    seed: int = 0
    modes: list = field(default_factory=lambda: ["original"])

    def channel(self) -> ChannelConfig:
        return ChannelConfig(**{k: self.values[k] for k in CHANNEL_KEYS if k in self.values})

    def has_source_params(self) -> bool:
        return all(k in self.values for k in ("mu_upper_A", "mu_upper_B", "p0"))

    def protocol(self) -> ProtocolConfig:
        missing = [k for k in ("nu_upper_A", "nu_upper_B", "mu_upper_A", "mu_upper_B", "p0") if k not in self.values]
        if missing:
            raise ConfigError(missing[0], "not set")
        return ProtocolConfig(**{k: self.values[k] for k in PROTOCOL_KEYS if k in self.values})

    def symmetric_nu(self) -> float:
        nu_a = self.values.get("nu_upper_A")
        nu_b = self.values.get("nu_upper_B")
        if nu_a is None:
            raise ConfigError("nu_upper_A", "not set")
        if nu_b is not None and nu_b != nu_a:
            raise ConfigError("nu_upper_B", "optimization needs nu_upper_A == nu_upper_B")
        return nu_a


def _coerce(key: str, raw):
    if isinstance(raw, bool):
        raise ConfigError(key, f"expected a number, got {raw!r}")
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if key in INT_KEYS:
        if not math.isfinite(val) or val != int(val):
            raise ConfigError(key, f"expected an integer, got {raw!r}")
        return int(val)
    return val


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a flat JSON object")
    out = {}
    for key, raw in data.items():
        if key not in ALL_KEYS:
            raise ConfigError(key, "unknown config key")
        out[key] = _coerce(key, raw)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in ALL_KEYS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = _coerce(key, environ[name])
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _mode_list(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {','.join(MODES)}")
    return sorted(set(modes), key=MODES.index)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def flag_overrides(args) -> dict:
    out = {}
    pairs = {
        "distance": "distance_km",
        "ed": "E_d",
        "pd": "p_d",
        "eta_d": "eta_d",
        "alpha_f": "alpha_f",
        "f": "f",
        "p0": "p0",
        "r": "r",
        "n_windows": "N",
    }
    for attr, key in pairs.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = _coerce(key, val)
    mu = getattr(args, "mu", None)
    if mu is not None:
        out["mu_upper_A"] = out["mu_upper_B"] = float(mu)
    nu = getattr(args, "nu", None)
    if nu:
        out["nu_upper_A"] = out["nu_upper_B"] = float(nu[0])
    return out


def resolve(args, environ=None) -> RunSpec:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    values.update(env_overrides(environ))
    values.update(flag_overrides(args))
    spec = RunSpec(
        command=args.command,
        values=values,
        out=getattr(args, "out", None),
        seed=getattr(args, "seed", 0) or 0,
        modes=getattr(args, "mode", None) or ["original"],
    )
    validate_config(
        ProtocolConfig(
            values.get("nu_upper_A", 0.0),
            values.get("nu_upper_B", 0.0),
            values.get("mu_upper_A", max(values.get("nu_upper_A", 0.0), values.get("nu_upper_B", 0.0), 1.0)),
            values.get("mu_upper_B", max(values.get("nu_upper_A", 0.0), values.get("nu_upper_B", 0.0), 1.0)),
            values.get("p0", 0.5),
            values.get("r", 0.0),
            values.get("N", 10**10),
        ),
        spec.channel(),
    )
    return spec


def write_sidecar(spec: RunSpec, argv):
    if not spec.out:
        return
    with open(spec.out + ".config.json", "w") as fh:
        json.dump(
            {"command": spec.command, "argv": list(argv), "seed": spec.seed, "modes": spec.modes, "config": spec.values},
            fh,
            indent=2,
            sort_keys=True,
        )


# --------------------------------------------------------------------------- rows


def point_row(distance, nu, mode, channel: ChannelConfig, p0=None, mu=None, r=0.0) -> dict:
    """Evaluate one (distance, nu, mode) point; optimize when p0/mu are None."""
    channel = channel.replace(distance_km=distance)
    flags = []
    if p0 is None or mu is None:
        opt = optimize_key_rate(OptimizationProblem(nu, mode), channel)
        p0, mu = opt.p0, opt.mu
        if opt.mu_at_upper_bound:
            flags.append("mu_at_bound")
    else:
        flags.append("fixed")
    report = evaluate(ProtocolConfig.symmetric(nu, mu, p0, r=r), channel, mode)
    if report.no_key:
        flags.append("no_key")
    if report.clamped:
        flags.append("clamped")
    if bool(report.details.get("n_ph_clamped")):
        flags.append("n_ph_clamped")
    return {
        "distance_km": distance,
        "nu": nu,
        "mode": mode,
        "p0_opt": p0,
        "mu_opt": mu,
        "key_rate": report.R,
        "e_ph": report.details["e_ph"],
        "E_K": report.details["E_K"],
        "flags": ";".join(flags),
        "_report": report,
    }


def _row_task(task):
    row = point_row(*task)
    row.pop("_report")
    return row


def write_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([row[c] if c in ("mode", "flags") else fmt(row[c]) for c in CSV_COLUMNS])


def _open_out(path):
    return open(path, "w", newline="") if path else None


# --------------------------------------------------------------------------- commands


def cmd_rate(args, spec: RunSpec, out=sys.stdout) -> int:
    channel = spec.channel()
    nu = spec.symmetric_nu() if not spec.has_source_params() else None
    rows = []
    for mode in spec.modes:
        if spec.has_source_params():
            protocol = spec.protocol()
            report = evaluate(protocol, channel, mode)
            p0, mu = protocol.p0, protocol.mu_upper_A
            flags = ["fixed"]
            nu_val = protocol.nu_upper_A
        else:
            opt = optimize_key_rate(OptimizationProblem(nu, mode), channel)
            p0, mu, nu_val = opt.p0, opt.mu, nu
            report = evaluate(ProtocolConfig.symmetric(nu, mu, p0, r=spec.values.get("r", 0.0)), channel, mode)
            flags = ["mu_at_bound"] if opt.mu_at_upper_bound else []
        if report.no_key:
            flags.append("no_key")
        if report.clamped:
            flags.append("clamped")
        d = report.details
        print(f"mode: {mode}", file=out)
        print(f"  distance_km: {fmt(channel.distance_km)}", file=out)
        print(f"  p0: {fmt(p0)}  mu: {fmt(mu)}  nu: {fmt(nu_val)}", file=out)
        print(f"  R: {fmt(report.R)}", file=out)
        print(f"  e_ph: {fmt(d['e_ph'])}  E_K: {fmt(d['E_K'])}  n_u/N: {fmt(d['n_u'] / max(spec.values.get('N', 10**10), 1))}", file=out)
        for key in sorted(d):
            if key not in ("e_ph", "E_K"):
                print(f"  {key}: {fmt(d[key])}", file=out)
        print(f"  flags: {';'.join(flags) or '-'}", file=out)
        rows.append({
            "distance_km": channel.distance_km, "nu": nu_val, "mode": mode, "p0_opt": p0, "mu_opt": mu,
            "key_rate": report.R, "e_ph": d["e_ph"], "E_K": d["E_K"], "flags": ";".join(flags),
        })
    if spec.out:
        with _open_out(spec.out) as fh:
            write_csv(rows, fh)
    return EXIT_OK


def sweep_rows(channel, distances, nus, modes, fixed=None, workers=1):
    """Rows ordered by (distance, nu, mode); ``fixed`` = (p0, mu) skips optimization."""
    p0, mu = fixed if fixed else (None, None)
    tasks = [
        (d, nu, mode, channel, p0, mu)
        for d in distances
        for nu in sorted(nus)
        for mode in sorted(modes, key=MODES.index)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_row_task, tasks, chunksize=4))
    return [_row_task(t) for t in tasks]


PLOT_TEMPLATE = '''\
"""Plot key rate against distance from a sweep CSV."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
curves = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        rate = float(row["key_rate"])
        if rate > 0:
            curves[(row["mode"], row["nu"])].append((float(row["distance_km"]), rate))
for (mode, nu), pts in sorted(curves.items()):
    xs, ys = zip(*pts)
    plt.semilogy(xs, ys, label=f"{{mode}}, nu={{nu}}")
plt.xlabel("distance (km)")
plt.ylabel("key rate per window")
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def cmd_sweep(args, spec: RunSpec, out=sys.stdout) -> int:
    channel = spec.channel()
    if args.d_max < args.d_min:
        distances = []
    else:
        n = int(math.floor((args.d_max - args.d_min) / args.step + 1e-9)) + 1
        distances = [args.d_min + i * args.step for i in range(n)]
    nus = args.nu or [spec.symmetric_nu()]
    fixed = None
    if args.fixed_params:
        if "p0" not in spec.values or "mu_upper_A" not in spec.values:
            raise ConfigError("p0", "--fixed-params needs p0 and mu set")
        fixed = (spec.values["p0"], spec.values["mu_upper_A"])
        for nu in nus:
            validate_config(ProtocolConfig.symmetric(nu, fixed[1], fixed[0]), channel)
    rows = sweep_rows(channel, distances, nus, spec.modes, fixed, workers=args.workers)
    if spec.out:
        with _open_out(spec.out) as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, out)
    if args.plot_script:
        with open(args.plot_script, "w") as fh:
            fh.write(PLOT_TEMPLATE.format(csv_path=spec.out or "sweep.csv"))
    return EXIT_OK


def cmd_optimize(args, spec: RunSpec, out=sys.stdout) -> int:
    channel = spec.channel()
    nu = spec.symmetric_nu()
    for mode in spec.modes:
        problem = OptimizationProblem(nu, mode, grid=(args.grid, args.grid))
        opt = optimize_key_rate(problem, channel)
        print(f"mode: {mode}", file=out)
        print(f"  p0*: {fmt(opt.p0)}  mu*: {fmt(opt.mu)}  R*: {fmt(opt.R)}", file=out)
        print(f"  grid_best: {fmt(opt.grid_best)}  evaluations: {opt.evaluations}", file=out)
        flags = [n for n, on in (("no_key", opt.no_key), ("mu_at_bound", opt.mu_at_upper_bound)) if on]
        print(f"  flags: {';'.join(flags) or '-'}", file=out)
        if args.secure_distance:
            print(f"  secure_distance_km: {fmt(secure_distance(problem, channel))}", file=out)
    return EXIT_OK


def cmd_mc(args, spec: RunSpec, out=sys.stdout) -> int:
    from .montecarlo import (
        e_ph_bootstrap_sigma,
        e_ph_from_counts,
        expected_counts,
        poisson_zscore,
        simulate_aopp,
        simulate_counts,
        simulate_twcc,
    )

    values = dict(spec.values)
    values.setdefault("r", 0.1)
    values.setdefault("N", 10**7)
    if not values["r"] > 0:
        raise ConfigError("r", "Monte-Carlo mode needs r > 0 to estimate frequencies")
    channel = spec.channel()
    if not spec.has_source_params():
        nu = spec.symmetric_nu()
        opt = optimize_key_rate(OptimizationProblem(nu), channel)
        values.update(mu_upper_A=opt.mu, mu_upper_B=opt.mu, p0=opt.p0)
    protocol = RunSpec(spec.command, values).protocol()
    validate_config(protocol, channel)

    counts, sample = simulate_counts(protocol, channel, spec.seed, workers=args.workers)
    expected = expected_counts(protocol, channel)
    observed = dict(counts.test_counts)
    for i, c in enumerate(("O", "B", "ZA", "ZB")):
        observed[f"key_{c}"] = int(counts.key_counts[i].sum())
    observed["n_u0"] = observed["key_ZB"]
    observed["n_u1"] = observed["key_ZA"]

    print(f"mc: N={protocol.N} r={fmt(protocol.r)} seed={spec.seed} distance_km={fmt(channel.distance_km)}", file=out)
    print(f"    nu={fmt(protocol.nu_upper_A)} mu={fmt(protocol.mu_upper_A)} p0={fmt(protocol.p0)}", file=out)
    print(f"{'quantity':<10} {'observed':>12} {'expected':>24} {'z':>10}", file=out)
    ok = True
    for key, obs in observed.items():
        z = poisson_zscore(obs, expected[key])
        ok &= abs(z) <= args.z_max
        print(f"{key:<10} {obs:>12d} {fmt(expected[key]):>24} {z:>10.3f}", file=out)

    e_mc = e_ph_from_counts(counts, protocol)
    e_asym = evaluate(protocol, channel).details["e_ph"]
    sigma = e_ph_bootstrap_sigma(protocol, channel, seed=spec.seed)
    z_e = (e_mc - e_asym) / sigma if sigma > 0 else 0.0
    ok &= abs(z_e) <= args.z_eph
    print(f"e_ph       mc={fmt(e_mc)} asymptotic={fmt(e_asym)} sigma={fmt(sigma)} z={z_e:.3f}", file=out)

    tw = simulate_twcc(sample, spec.seed)
    ao = simulate_aopp(sample, spec.seed)
    print(f"twcc       n_t={tw.n_t} n_t1={tw.n_t1} n_t2={tw.n_t2} n_t3={tw.n_t3} "
          f"E_1={fmt(tw.E_1)} E_2={fmt(tw.E_2)} E_3={fmt(tw.E_3)}", file=out)
    print(f"aopp       n_b0={ao.n_b0} n_b1={ao.n_b1} n_g={ao.n_g} n_u0={ao.n_u0} n_u1={ao.n_u1} "
          f"n_t_aopp={ao.n_t_aopp} E_aopp={fmt(ao.E_aopp)}", file=out)
    print(f"result: {'pass' if ok else 'FAIL'}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle_check(args, spec: RunSpec, out=sys.stdout) -> int:
    from .channel import window_click_probs
    from .oracle import TruncationError, beamsplitter_click_probs, coherent_fock

    base = spec.channel().replace(distance_km=0.0, eta_d=1.0)
    grid = np.linspace(0.0, args.max_intensity, args.grid_points)
    print(f"{'E_d':>6} {'points':>7} {'max_dev':>12} {'status':>7}", file=out)
    worst = 0.0
    for E_d in args.ed_list:
        channel = base.replace(E_d=E_d)
        dev = 0.0
        for wa in grid:
            for wb in grid:
                try:
                    fock = beamsplitter_click_probs(
                        coherent_fock(wa, args.n_max), coherent_fock(wb, args.n_max), channel
                    )
                except TruncationError as exc:
                    print(f"refused: {exc}", file=out)
                    return EXIT_FAIL
                S_L, S_R = window_click_probs(wa, wb, channel, eta=1.0)
                S_L += args.perturb
                dev = max(dev, abs(fock[0] - S_L), abs(fock[1] - S_R))
        worst = max(worst, dev)
        status = "pass" if dev <= args.tol else "FAIL"
        print(f"{E_d:>6.3f} {grid.size ** 2:>7d} {dev:>12.3e} {status:>7}", file=out)
    print(f"max deviation {worst:.3e} (tolerance {args.tol:.1e})", file=out)
    return EXIT_OK if worst <= args.tol else EXIT_FAIL


COMMANDS = {
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "mc": cmd_mc,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scfqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, nu_list=False):
        p.add_argument("--config", metavar="PATH", help="flat JSON config file")
        p.add_argument("--distance", type=float, metavar="KM")
        p.add_argument("--ed", type=float, help="misalignment error E_d")
        p.add_argument("--pd", type=float, help="dark-count probability per pulse")
        p.add_argument("--eta-d", type=float, help="detector efficiency")
        p.add_argument("--alpha-f", type=float, help="fiber loss, dB/km")
        p.add_argument("--f", type=float, help="error-correction inefficiency")
        p.add_argument("--nu", type=_float_list, metavar="LIST",
                       help="weak-source intensity bound(s)" + (", comma-separated" if nu_list else ""))
        p.add_argument("--mu", type=float, help="strong-source intensity bound")
        p.add_argument("--p0", type=float, help="probability of the weak source")
        p.add_argument("--r", type=float, help="test-window probability")
        p.add_argument("--n-windows", type=float, metavar="N")
        p.add_argument("--mode", type=_mode_list, metavar="LIST", help="original,twcc,aopp")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("rate", help="key rate at one distance")
    common(p)

    p = sub.add_parser("sweep", help="key rate over a distance range, CSV output")
    common(p, nu_list=True)
    p.add_argument("--d-min", type=float, default=0.0)
    p.add_argument("--d-max", type=float, default=300.0)
    p.add_argument("--step", type=float, default=10.0)
    p.add_argument("--fixed-params", action="store_true", help="use configured p0/mu instead of optimizing")
    p.add_argument("--plot-script", metavar="PATH", help="also write a matplotlib script for the CSV")

    p = sub.add_parser("optimize", help="optimal p0 and mu at one distance")
    common(p)
    p.add_argument("--grid", type=int, default=40)
    p.add_argument("--secure-distance", action="store_true", help="also report the secure distance")

    p = sub.add_parser("mc", help="Monte-Carlo run compared against the analytic model")
    common(p)
    p.add_argument("--z-max", type=float, default=5.0)
    p.add_argument("--z-eph", type=float, default=3.0)

    p = sub.add_parser("oracle-check", help="Fock-space oracle versus analytic channel")
    common(p)
    p.add_argument("--grid-points", type=int, default=10)
    p.add_argument("--max-intensity", type=float, default=1.0)
    p.add_argument("--ed-list", type=_float_list, default=[0.0, 0.04, 0.10])
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None, out=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("rate", "optimize") and args.nu and len(args.nu) != 1:
            raise ConfigError("nu", "give exactly one value")
        spec = resolve(args)
        if args.command in ("rate", "optimize", "mc") and "nu_upper_A" not in spec.values:
            raise ConfigError("nu_upper_A", "not set (use --nu or the config file)")
        write_sidecar(spec, argv)
        return COMMANDS[args.command](args, spec, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
