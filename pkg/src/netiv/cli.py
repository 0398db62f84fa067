"""Command-line interface: ``netiv estimate | diagnose | simulate``.

Exit codes: 0 success (individual estimands may still have failed and are
recorded as such), 1 fatal estimation error, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import build_kernel, wild_bootstrap
from .errors import NetivError
from .estimators import StudyData, ade, aie, aoe, ase, spillover_diagnostic
from .exposure import ExposureSpec, compute_exposures
from .graph import degree_subpopulation, full_population, interference_sets, load_edge_list, Subpopulation
from .variance import hac_variance, residuals_ade, residuals_aie, residuals_aoe, residuals_ase

EXIT_OK, EXIT_FATAL, EXIT_CONFIG = 0, 1, 2
ZCRIT_DEFAULT = 1.96


class ConfigError(Exception):
    """Bad flags, missing files or malformed inputs."""


@dataclass
class RunConfig:
    mode: str
    edges: str | None = None
    nodes: str | None = None
    estimands: list = field(default_factory=list)
    iem: str = "constant"
    t: int | None = None
    z: int | None = None
    t_prime: int | None = None
    K: int = 1
    subpop: str = "all"
    hac_b: list = field(default_factory=list)
    boot: int = 0
    boot_b: int | None = None
    alpha: float = 0.05
    seed: int = 0
    critical: float = ZCRIT_DEFAULT
    out: str | None = None
    csv: str | None = None
    threads: int = 1
    timing: bool = False

    def validate(self):
        for name in ("edges", "nodes"):
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"--{name} is required")
            if not Path(path).is_file():
                raise ConfigError(f"--{name}: file not found: {path}")
        try:
            self.spec = ExposureSpec.parse(self.iem)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.mode == "estimate" and not self.estimands:
            raise ConfigError("at least one --estimand is required")
        for e in self.estimands:
            if e not in ("ade", "aie", "aoe", "ase"):
                raise ConfigError(f"unknown estimand {e!r}")
        if "ade" in self.estimands and self.t is None:
            raise ConfigError("estimand ade needs --t")
        if "ase" in self.estimands and None in (self.z, self.t, self.t_prime):
            raise ConfigError("estimand ase needs --z, --t and --t-prime")
        if self.K < 1:
            raise ConfigError("--K must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("--alpha must lie in (0, 1)")
        if self.boot < 0:
            raise ConfigError("--boot must be >= 0")
        if not self.hac_b:
            self.hac_b = [2 * max(self.spec.radius, 1)]
        if any(b < 0 for b in self.hac_b):
            raise ConfigError("--hac-b values must be >= 0")
        if self.boot_b is None:
            self.boot_b = self.hac_b[0]
        return self


def load_node_data(path):
    """Read node data with header ``id,y,d,z`` and an optional ``eligible`` column.

    Returns
    -------
    data : StudyData
    ids : list of str
        Node labels in file order; this is the node universe.
    eligible : ndarray of bool or None
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in (next(reader, None) or [])]
        if header[:4] != ["id", "y", "d", "z"]:
            raise ConfigError(f"{path}: expected header 'id,y,d,z' (got {','.join(header)})")
        has_elig = len(header) > 4 and header[4] == "eligible"
        ids, ys, ds, zs, el = [], [], [], [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 4 + has_elig:
                raise ConfigError(f"{path}:{lineno}: expected {4 + has_elig} columns")
            nid = row[0].strip()
            if nid in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate id {nid!r}")
            seen.add(nid)
            try:
                y = float(row[1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: y is not numeric ({row[1]!r})") from None
            if not math.isfinite(y):
                raise ConfigError(f"{path}:{lineno}: y must be finite")
            vals = []
            for name, raw in (("d", row[2]), ("z", row[3])) + ((("eligible", row[4]),) if has_elig else ()):
                raw = raw.strip()
                if raw not in ("0", "1"):
                    raise ConfigError(f"{path}:{lineno}: {name} must be 0 or 1 (got {raw!r})")
                vals.append(int(raw))
            ids.append(nid)
            ys.append(y)
            ds.append(vals[0])
            zs.append(vals[1])
            if has_elig:
                el.append(bool(vals[2]))
    if not ids:
        raise ConfigError(f"{path}: no rows")
    data = StudyData(np.array(ys), np.array(ds), np.array(zs))
    return data, ids, (np.array(el) if has_elig else None)


def parse_subpop(rule, net, eligible):
    """``all``, ``degree=d`` or ``degree>=d``, optionally suffixed with ``,eligible``."""
    parts = [p.strip() for p in rule.split(",")]
    use_elig = "eligible" in parts[1:]
    if any(p not in ("eligible",) for p in parts[1:]):
        raise ConfigError(f"bad --subpop {rule!r}")
    if use_elig and eligible is None:
        raise ConfigError("--subpop uses eligible but node data has no eligible column")
    head = parts[0]
    mask = eligible if use_elig else None
    if head == "all":
        S = full_population(net)
        if mask is not None:
            idx = np.flatnonzero(mask)
            S = Subpopulation(idx, {"rule": "all", "eligible": True}, () if idx.size else ("empty",))
        return S
    try:
        if head.startswith("degree>="):
            d = int(head[len("degree>="):])
            keep = net.degrees >= d
            if mask is not None:
                keep &= mask
            idx = np.flatnonzero(keep)
            meta = {"rule": "degree>=", "delta": d, "eligible": use_elig}
            return Subpopulation(idx, meta, () if idx.size else ("empty",))
        if head.startswith("degree="):
            return degree_subpopulation(net, int(head[len("degree="):]), mask)
    except ValueError:
        pass
    raise ConfigError(f"bad --subpop {rule!r}")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _clean(x, flags, where):
    """Make a value JSON-safe; non-finite floats become null with a flag."""
    if isinstance(x, dict):
        return {str(k): _clean(v, flags, f"{where}.{k}") for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v, flags, where) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            flags.append(f"non_finite:{where}")
            return None
        return x
    return x


class _Runner:
    def __init__(self, cfg):
        self.cfg = cfg
        self.data, self.ids, self.eligible = load_node_data(cfg.nodes)
        try:
            self.net = load_edge_list(cfg.edges, ids=self.ids)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.S = parse_subpop(cfg.subpop, self.net, self.eligible)
        self.T = compute_exposures(self.net, self.data.Z, self.data.D, cfg.spec)
        self.kernel = None

    def inputs(self):
        cfg = self.cfg
        return {
            "edges": cfg.edges,
            "edges_sha256": _sha256(cfg.edges),
            "nodes": cfg.nodes,
            "nodes_sha256": _sha256(cfg.nodes),
            "n_nodes": self.net.n,
            "n_edges": int(len(self.net.edges)),
            "subpopulation": {"rule": cfg.subpop, "size": self.S.size,
                              "meta": self.S.meta, "warnings": list(self.S.warnings)},
            "exposure": str(cfg.spec),
            "exposure_support": list(self.T.support),
        }

    def _boot_kernel(self):
        if self.kernel is None:
            self.kernel = build_kernel(self.net, self.S, self.cfg.boot_b)
        return self.kernel

    def _inference(self, vec, index):
        cfg = self.cfg
        hac = []
        for b in cfg.hac_b:
            h = hac_variance(self.net, self.S, vec, b)
            hac.append({"bandwidth": h.bandwidth, "variance": h.variance, "se": h.se,
                        "negative_flag": h.negative_flag})
        boot = None
        if cfg.boot:
            seed = int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0])
            r = wild_bootstrap(vec, self._boot_kernel(), cfg.boot, cfg.alpha, seed, cfg.threads)
            boot = {"bandwidth": cfg.boot_b, "ci": list(r.ci), "ci_normal": list(r.ci_normal),
                    "se_boot": r.se_boot, "B": r.B, "alpha": r.alpha, "seed": r.seed}
        return hac, boot

    def _groups(self):
        cfg, S, data, T = self.cfg, self.S, self.data, self.T
        E = None
        for name in cfg.estimands:
            if name in ("aie", "aoe") and E is None:
                E = interference_sets(self.net, S, cfg.K)
            if name == "ade":
                yield name, ("ADEY", "ADED", "LADE"), {"t": cfg.t}, \
                    (lambda: ade(S, data, T, cfg.t)), \
                    (lambda w: residuals_ade(S, data, T, cfg.t, with_ratio=w)), (0, 1, 2), (0, 1, 2)
            elif name == "aie":
                yield name, ("AIEY", "AIED", "ADED", "LAIE"), {"K": cfg.K}, \
                    (lambda E=E: aie(S, data, E)), \
                    (lambda w, E=E: residuals_aie(S, data, E, with_ratio=w)), (0, 1, 2, 3), (0, 1, 2, 3)
            elif name == "aoe":
                yield name, ("AOEY", "AOED", "LAOE"), {"K": cfg.K}, \
                    (lambda E=E: aoe(S, data, E)), \
                    (lambda w, E=E: residuals_aoe(S, data, E, with_ratio=w)), (0, 1, 2), (0, 1, 2)
            else:
                cond = {"z": cfg.z, "t": cfg.t, "t_prime": cfg.t_prime}
                yield name, ("ASEY", "ASED", "LASE"), cond, \
                    (lambda: ase(S, data, T, cfg.z, cfg.t, cfg.t_prime)), \
                    (lambda w: residuals_ase(S, data, T, cfg.z, cfg.t, cfg.t_prime, with_ratio=w)), \
                    (0, 1, 2), (0, 1, 2)

    def estimate(self):
        records, failed = [], []
        index = 0
        for group, names, cond, est_fn, res_fn, est_pos, res_pos in self._groups():
            try:
                reports = est_fn()
                resid = res_fn(reports[est_pos[-1]].point is not None)
            except (NetivError, ValueError) as exc:
                failed.append({"estimand": group, "error": str(exc)})
                for nm in names:
                    records.append({"estimand": nm, "group": group, "conditioning": cond,
                                    "point": None, "components": {}, "cell_counts": {},
                                    "flags": ["failed"], "hac": [], "bootstrap": None,
                                    "error": str(exc)})
                continue
            for nm, ep, rp in zip(names, est_pos, res_pos):
                rep = reports[ep]
                vec = resid[rp]
                hac, boot = ([], None)
                if rep.point is not None and vec is not None:
                    hac, boot = self._inference(vec, index)
                index += 1
                label = "ADED_marginal" if group in ("aie",) and nm == "ADED" else nm
                records.append({"estimand": label, "group": group, "conditioning": rep.conditioning,
                                "point": rep.point, "components": rep.components,
                                "cell_counts": rep.cell_counts, "flags": list(rep.flags),
                                "hac": hac, "bootstrap": boot, "error": None})
        return records, failed

    def diagnose(self):
        cfg = self.cfg
        diag = spillover_diagnostic(self.S, self.data, self.T, self.net, cfg.hac_b[0],
                                    critical=cfg.critical)
        return {"bandwidth": cfg.hac_b[0], "critical": cfg.critical, "rows": diag.rows,
                "flags": diag.flags, "notes": diag.notes}


def _settings(cfg):
    keys = ("estimands", "iem", "t", "z", "t_prime", "K", "subpop", "hac_b", "boot", "boot_b",
            "alpha", "seed", "critical")
    out = {k: getattr(cfg, k) for k in keys}
    out["iem"] = str(cfg.spec)
    return out


def _write_csv(path, records):
    fields = ["estimand", "group", "conditioning", "point", "hac_bandwidth", "hac_se",
              "hac_negative", "boot_lo", "boot_hi", "flags", "error"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in records:
            base = {"estimand": r["estimand"], "group": r["group"],
                    "conditioning": json.dumps(r["conditioning"], sort_keys=True),
                    "point": r["point"], "flags": ";".join(r["flags"]), "error": r["error"] or ""}
            boot = r["bootstrap"] or {}
            ci = boot.get("ci") or [None, None]
            hacs = r["hac"] or [{}]
            for h in hacs:
                w.writerow(dict(base, hac_bandwidth=h.get("bandwidth"), hac_se=h.get("se"),
                                hac_negative=h.get("negative_flag"), boot_lo=ci[0], boot_hi=ci[1]))


def _emit(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _threads(value):
    if value is None:
        env = os.environ.get("NETIV_THREADS")
        value = int(env) if env else 1
    if value == 0:
        value = os.cpu_count() or 1
    return max(int(value), 1)


def run_estimate(cfg):
    """Run the estimation (or diagnostic) request and write the report document."""
    t0 = time.perf_counter()
    runner = _Runner(cfg)
    doc = {"tool": "netiv", "version": __version__, "mode": cfg.mode,
           "inputs": runner.inputs(), "settings": _settings(cfg)}
    if runner.S.size == 0:
        raise NetivError(f"subpopulation {cfg.subpop!r} is empty")
    flags = []
    if cfg.mode == "diagnose":
        doc["diagnostic"] = runner.diagnose()
    else:
        records, failed = runner.estimate()
        doc["records"] = records
        doc["summary"] = {"n_records": len(records), "failed_estimands": len(failed),
                          "failures": failed}
    if cfg.timing:
        doc["timing"] = {"wall_seconds": time.perf_counter() - t0}
    doc = _clean(doc, flags, "report")
    if flags:
        doc["flags"] = flags
    _emit(doc, cfg.out)
    if cfg.csv and cfg.mode == "estimate":
        _write_csv(cfg.csv, doc["records"])
    return doc


def run_simulate(args):
    """Run a replication study from a JSON config and write its summaries."""
    from .simulation import load_config, monte_carlo_run

    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid config {args.config}: {exc}") from None
    if args.reps is not None:
        cfg.reps = int(args.reps)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    cfg.threads = _threads(args.threads)
    summary = monte_carlo_run(cfg)
    out_dir = Path(args.out_dir or ".")
    summary.write(out_dir)
    for name, row in summary.rows.items():
        cov = " ".join(f"{m}={v:.3f}" for m, v in row.coverage.items())
        print(f"{name:6s} truth={row.truth:.4f} bias={row.bias:.4f} rmse={row.rmse:.4f} {cov}")
    print(f"redraws={summary.redraws} failures={summary.failures} -> {out_dir}")
    return summary


def build_parser():
    parser = argparse.ArgumentParser(prog="netiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netiv {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)

    for mode, help_text in (("estimate", "point estimates, HAC SEs and bootstrap CIs"),
                            ("diagnose", "spillover diagnostic across exposure levels")):
        p = sub.add_parser(mode, help=help_text)
        p.add_argument("--edges", required=True, help="CSV edge list with header i,j")
        p.add_argument("--nodes", required=True, help="CSV node data with header id,y,d,z[,eligible]")
        p.add_argument("--estimand", action="append", default=[], dest="estimands",
                       choices=["ade", "aie", "aoe", "ase"], help="repeatable")
        p.add_argument("--iem", default="constant", help="exposure spec, e.g. threshold:src=Z,r=1,c=0")
        p.add_argument("--t", type=int, help="exposure level for ade/ase")
        p.add_argument("--z", type=int, choices=[0, 1], help="instrument arm for ase")
        p.add_argument("--t-prime", type=int, dest="t_prime", help="comparison level for ase")
        p.add_argument("--K", type=int, default=1, help="interference radius for aie/aoe")
        p.add_argument("--subpop", default="all", help="all | degree=d | degree>=d, optionally ',eligible'")
        p.add_argument("--hac-b", type=int, action="append", default=[], dest="hac_b",
                       help="HAC bandwidth (repeatable; default 2 x exposure radius)")
        p.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 = off)")
        p.add_argument("--boot-b", type=int, dest="boot_b", help="bootstrap bandwidth (default first --hac-b)")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--critical", type=float, default=ZCRIT_DEFAULT,
                       help="diagnostic critical value")
        p.add_argument("--out", help="JSON report path (default stdout)")
        p.add_argument("--csv", help="flat CSV report path")
        p.add_argument("--threads", type=int, help="worker threads (0 = auto; env NETIV_THREADS)")
        p.add_argument("--timing", action="store_true", help="record wall-clock time in the report")

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a JSON config")
    p.add_argument("config", help="config path or bundled config name")
    p.add_argument("--reps", type=int, help="override the replication count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out-dir", dest="out_dir", help="directory for summary.json/summary.csv")
    p.add_argument("--threads", type=int, help="worker threads (0 = auto; env NETIV_THREADS)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.mode == "simulate":
            run_simulate(args)
            return EXIT_OK
        cfg = RunConfig(args.mode, args.edges, args.nodes, args.estimands, args.iem, args.t,
                        args.z, args.t_prime, args.K, args.subpop, args.hac_b, args.boot,
                        args.boot_b, args.alpha, args.seed, args.critical, args.out, args.csv,
                        _threads(args.threads), args.timing).validate()
        run_estimate(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"netiv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"netiv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NetivError, ValueError) as exc:
        print(f"netiv: estimation failed: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
