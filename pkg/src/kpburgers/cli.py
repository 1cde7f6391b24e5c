"""Command-line entry point ``kpb``.

Subcommands share one output directory.  ``simulate`` writes the
diagnostics CSV, the ``U`` profile and KPBFIELD snapshots; the other
subcommands either evaluate kernels directly or post-process those files.
Every subcommand writes ``verdict_<name>.txt`` and then refreshes
``manifest.json``, which is always the last file written.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks
from .errors import ConfigError, KPBError, MissingInput
from .evolution import SERIES_FIELDS, DiagnosticsSeries, SimConfig, make_initial_data, run_simulation
from .spectral import read_snapshot, write_snapshot

SUBCOMMANDS = ("kernel-table", "simulate", "verify-linear", "verify-decay", "profile-compare", "report")

DEFAULT_SNAPSHOTS = (8.0, 16.0, 32.0, 64.0)


def _number(text):
    """Float literal, optionally a multiple of pi (``64*pi``, ``64pi``, ``pi``)."""
    s = text.strip().replace("π", "pi")
    m = re.fullmatch(r"([-+]?[0-9.eE+-]*)\s*\*?\s*pi", s)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return float(s)


def _bool(text):
    s = text.strip().lower()
    if s in ("true", "yes", "on", "1"):
        return True
    if s in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    v = _number(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _times(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(_number(p) for p in parts)


# config key -> (SimConfig field, parser)
KEYS = {
    "p": ("p", _int),
    "nu": ("nu", _number),
    "eps": ("eps", _int),
    "nx": ("nx", _int),
    "ny": ("ny", _int),
    "Lx": ("Lx", _number),
    "Ly": ("Ly", _number),
    "dt": ("dt", _number),
    "t_end": ("t_end", _number),
    "snapshots": ("snapshot_times", _times),
    "seed": ("seed", _int),
    "init_kind": ("init_kind", str.strip),
    "init_amplitude": ("init_amplitude", _number),
    "output_dir": ("output_dir", str.strip),
    "nonlinear": ("nonlinear", _bool),
    "cfl_safety": ("cfl_safety", _number),
    "sponge_strength": ("sponge_strength", _number),
    "sponge_width": ("sponge_width", _number),
    "zero_mode_tol": ("zero_mode_tol", _number),
    "smallness_budget": ("smallness_budget", _number),
}


def parse_config(text):
    """Parse ``key = value`` lines into a validated :class:`SimConfig`.

    Blank lines and ``#`` comments are ignored.  Values may use ``pi``
    multiples for lengths.  Without a ``snapshots`` key the default ladder
    8, 16, 32, 64 is used, cut at ``t_end``.

    Raises
    ------
    ConfigError
        Unknown or duplicate key, unparsable value or a value rejected by
        :meth:`SimConfig.validate`.
    """
    seen = {}
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(lineno, None, "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(lineno, key, "unknown key")
        if key in seen:
            raise ConfigError((seen[key], lineno), key, "duplicate key")
        seen[key] = lineno
        name, conv = KEYS[key]
        try:
            kw[name] = conv(value)
        except ValueError as exc:
            raise ConfigError(lineno, key, str(exc)) from None
    if "snapshot_times" not in kw:
        t_end = kw.get("t_end", SimConfig.t_end)
        kw["snapshot_times"] = tuple(s for s in DEFAULT_SNAPSHOTS if s <= t_end)
    try:
        return SimConfig(**kw)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        head = re.split(r"[\s=]", msg, maxsplit=1)[0]
        bad = next((k for k, (name, _) in KEYS.items() if head in (k, name)), None)
        raise ConfigError(seen.get(bad), bad, msg) from None


def config_to_dict(cfg):
    d = dataclasses.asdict(cfg)
    d["snapshot_times"] = list(d["snapshot_times"])
    return d


# ---------------------------------------------------------------------------
# files


def _fmt17(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    """Write a CSV with 17 significant digits and LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt17(v) for v in row) + "\n")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def write_series(path, series):
    cols = [series.columns[k] for k in SERIES_FIELDS]
    write_csv(path, SERIES_FIELDS, zip(*cols))


def read_series(out):
    """Reload the diagnostics series written by ``simulate``."""
    path = out / "diagnostics.csv"
    upath = out / "U_profile.csv"
    if not path.exists() or not upath.exists():
        raise MissingInput(f"{path} not found; run 'kpb simulate' first")
    header, data = read_csv(path)
    if tuple(header) != SERIES_FIELDS:
        raise MissingInput(f"{path}: unexpected header")
    cols = {k: data[:, i].copy() for i, k in enumerate(header)}
    _, u = read_csv(upath)
    m1 = float(cols["N0_partial"][0])
    return DiagnosticsSeries(cols, u[:, 1].copy(), u[:, 0].copy(), float(cols["E0"][0]), m1)


def snapshot_name(t):
    return f"u_t{t:09.4f}.kpbf"


class Workspace:
    """Output directory with an atomically replaced manifest."""

    def __init__(self, out, cfg):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.path = self.out / "manifest.json"
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S")
        self.previous = self.load() or {}

    def load(self):
        if not self.path.exists():
            return None
        with open(self.path, encoding="utf-8") as fh:
            return json.load(fh)

    def discard(self):
        if self.path.exists():
            self.path.unlink()

    def run_config(self):
        """Config of the completed simulation recorded in the manifest."""
        m = self.previous
        if "simulate" not in m.get("subcommands", {}):
            raise MissingInput(f"{self.out} holds no completed simulation; run 'kpb simulate' first")
        d = dict(m["config"])
        d["snapshot_times"] = tuple(d["snapshot_times"])
        return SimConfig(**d)

    def finish(self, sub, files, results, cfg=None):
        """Write the verdict page, then the manifest (last)."""
        verdict = self.out / f"verdict_{sub}.txt"
        write_verdict(verdict, sub, results)
        files = [str(Path(f).relative_to(self.out)) for f in files] + [verdict.name]
        for f in files:
            p = self.out / f
            if not p.exists() or p.stat().st_size == 0:
                raise KPBError(f"output file {p} is missing or empty")
        m = self.previous
        if sub == "simulate":
            m = {}
        subs = dict(m.get("subcommands", {}))
        subs[sub] = {"files": files, "finished": time.strftime("%Y-%m-%dT%H:%M:%S")}
        crit = dict(m.get("criteria", {}))
        for r in results:
            crit[str(r.number)] = {"name": r.name, "status": "PASS" if r.passed else "FAIL",
                                   "detail": r.detail}
        inventory = sorted({f for s in subs.values() for f in s["files"]})
        manifest = {
            "tool": "kpb",
            "version": __version__,
            "config": config_to_dict(cfg) if cfg else m.get("config", config_to_dict(self.cfg)),
            "started": m.get("started", self.started),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "files": inventory,
            "subcommands": subs,
            "criteria": dict(sorted(crit.items(), key=lambda kv: int(kv[0]))),
        }
        tmp = self.path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=False)
            fh.write("\n")
        os.replace(tmp, self.path)
        return manifest


def write_verdict(path, sub, results):
    lines = [f"kpb {sub} verdict", ""]
    lines += [r.line() for r in results] or ["(no criteria evaluated)"]
    n_fail = sum(not r.passed for r in results)
    lines += ["", f"{len(results) - n_fail} PASS, {n_fail} FAIL"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# pipelines


def cmd_kernel_table(ws):
    r = checks.check_kernel_crossval()
    f1 = ws.out / "kernel_table.csv"
    write_csv(f1, ("nu", "eps", "t", "x", "y", "l", "value", "method", "abs_diff"), r.measured["points"])
    f2 = ws.out / "kernel_summary.csv"
    write_csv(f2, ("nu", "eps", "t", "l", "max_abs_diff", "worst_ratio"), r.measured["rows"])
    f3 = ws.out / "kernel_origin.csv"
    write_csv(f3, ("nu", "quantity", "computed", "closed_form"),
              [(nu, q, c, e) for nu, q, c, e in r.measured["origin"]])
    return [f1, f2, f3], [r]


def cmd_simulate(ws, progress=None):
    cfg = ws.cfg
    ws.discard()
    out = ws.out
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    times = tuple(sorted({0.0, *cfg.snapshot_times}))
    run_cfg = cfg.with_(snapshot_times=times)
    u0 = make_initial_data(cfg.init_kind, run_cfg.grid, cfg.init_amplitude, seed=cfg.seed,
                           budget=cfg.smallness_budget)
    res = run_simulation(run_cfg, u0, progress)
    files = [out / "diagnostics.csv", out / "U_profile.csv"]
    write_series(files[0], res.series)
    write_csv(files[1], ("y", "U_accumulated"), zip(res.series.y, res.series.U_profile))
    for t, f in sorted(res.snapshots.items()):
        p = snapdir / snapshot_name(t)
        write_snapshot(p, f)
        files.append(p)
    results = []
    if cfg.t_end > 0:
        results.append(checks.check_balance(res.series))
        results.append(checks.check_scheme_order(p=cfg.p, nu=cfg.nu, eps=cfg.eps))
        f = out / "monitors.csv"
        mon = checks.run_monitors(res.series)
        write_csv(f, ("quantity", "value"), [(k, float(v)) for k, v in mon.items()])
        files.append(f)
    return files, results


def cmd_verify_linear(ws):
    out = ws.out
    results, files = [], []
    r2 = checks.check_kernel_decay()
    f = out / "kernel_decay.csv"
    write_csv(f, ("l", "t", "sup_S", "sup_K", "sup_Kstar_scaled"), r2.measured["rows"])
    files.append(f)
    r3 = checks.check_taylor()
    f = out / "taylor_remainder.csv"
    write_csv(f, ("l", "m", "t", "measured", "bound"), r3.measured["rows"])
    files.append(f)
    r4 = checks.check_linear_decay()
    f = out / "linear_decay.csv"
    write_csv(f, ("t", "sup_S_u0"), r4.measured["rows"])
    files.append(f)
    f = out / "linear_profile_error.csv"
    write_csv(f, ("t", "scaled_error"), zip((8, 16, 32, 64), r4.measured["combination"]))
    files.append(f)
    r10 = checks.check_duhamel()
    f = out / "duhamel.csv"
    write_csv(f, ("case", "margin"), list(r10.measured["margins"].items()))
    files.append(f)
    results += [r2, r3, r4, r10]
    return files, results


def cmd_verify_decay(ws):
    cfg = ws.run_config()
    series = read_series(ws.out)
    if cfg.t_end <= 0:
        raise MissingInput("the recorded run has t_end = 0; nothing to fit")
    r6 = checks.check_nonlinear_decay(series)
    r7 = checks.check_n0(series, cfg)
    r9 = checks.check_lower_bound(series, r7.measured["N0"], cfg.nu)
    f = ws.out / "decay.csv"
    write_csv(f, ("quantity", "value"), [
        ("linf_slope", r6.measured["slope"]),
        ("linf_slope_stderr", r6.measured["stderr"]),
        ("max_H_over_E0", r6.measured["H_over_E0"]),
        ("N0_T", r7.measured["N0"]),
        ("N0_T_half", r7.measured["N0_half"]),
        ("N0_tail", r7.measured["tail"]),
        ("lower_bound_margin", r9.measured["margin"]),
    ])
    return [f], [r6, r7, r9], cfg


def cmd_profile_compare(ws, y_window=5.0):
    cfg = ws.run_config()
    series = read_series(ws.out)
    snaps = {}
    for t in cfg.snapshot_times:
        p = ws.out / "snapshots" / snapshot_name(t)
        if not p.exists():
            raise MissingInput(f"snapshot {p} not found")
        if t > 0:
            snaps[t] = read_snapshot(p)
    n0 = float(series.N0_partial[-1])
    r8 = checks.check_profile(snaps, n0, y_window, cfg.nu, cfg.eps)
    f = ws.out / "profile_error.csv"
    write_csv(f, ("t", "scaled_error", "envelope_coefficient"),
              [(r.t, r.scaled_error, r.envelope_coefficient) for r in r8.measured["rows"]])
    return [f], [r8], cfg


def cmd_report(ws):
    pages = sorted(ws.out.glob("verdict_*.txt"))
    pages = [p for p in pages if p.name != "verdict_report.txt"]
    if not pages:
        raise MissingInput(f"no verdict pages in {ws.out}")
    lines, results = [], []
    for p in pages:
        for line in p.read_text(encoding="utf-8").splitlines():
            m = re.match(r"(PASS|FAIL)\s+(\d+)\s", line)
            if m:
                lines.append(line)
                results.append(checks.CheckResult(int(m.group(2)), m.group(1) == "PASS",
                                                  detail=line.split(": ", 1)[-1]))
    results.sort(key=lambda r: r.number)
    f = ws.out / "report.txt"
    n_fail = sum(not r.passed for r in results)
    with open(f, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kpb report\n\n")
        fh.write("\n".join(r.line() for r in results) + "\n")
        fh.write(f"\n{len(results) - n_fail} PASS, {n_fail} FAIL\n")
    cfg = None
    try:
        cfg = ws.run_config()
    except MissingInput:
        pass
    return [f], results, cfg


def orchestrate(sub, cfg, out=None, y_window=5.0, stream=None):
    """Run one pipeline.  Returns 0 if every evaluated criterion passed, else 2."""
    if sub not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {sub!r}")
    ws = Workspace(out or cfg.output_dir, cfg)
    run_cfg = None
    if sub == "kernel-table":
        files, results = cmd_kernel_table(ws)
    elif sub == "simulate":
        files, results = cmd_simulate(ws)
    elif sub == "verify-linear":
        files, results = cmd_verify_linear(ws)
    elif sub == "verify-decay":
        files, results, run_cfg = cmd_verify_decay(ws)
    elif sub == "profile-compare":
        files, results, run_cfg = cmd_profile_compare(ws, y_window)
    else:
        files, results, run_cfg = cmd_report(ws)
    ws.finish(sub, files, results, run_cfg)
    stream = stream or sys.stdout
    for r in results:
        print(r.line(), file=stream)
    return 0 if all(r.passed for r in results) else 2


def main(argv=None):
    ap = argparse.ArgumentParser(prog="kpb", description="KP-Burgers decay and profile checks")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", help="output directory (default: output_dir from the config)")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--y-window", type=float, default=5.0, help="|y| window for profile-compare")
    ap.add_argument("--version", action="version", version=f"kpb {__version__}")
    args = ap.parse_args(argv)
    try:
        text = ""
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise MissingInput(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError(None, "seed", "must be an unsigned 64-bit integer")
            cfg = cfg.with_(seed=args.seed)
        return orchestrate(args.subcommand, cfg, args.out, args.y_window)
    except KPBError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
