"""Replication harness: bias, RMSE and interval coverage over repeated draws."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..bootstrap import build_kernel, wild_bootstrap
from ..errors import NetivError
from ..estimators import StudyData, ade, aie, aoe
from ..exposure import ExposureSpec
from ..graph import degree_subpopulation, distance_indicator, full_population, interference_sets, load_edge_list
from ..variance import hac_variance, residuals_ade, residuals_aie, residuals_aoe
from .dgp import DgpSpec, Model, default_iem, draw_coefficients
from .oracle import population_params_closed_form, population_params_mc

ZCRIT = 1.959963984540054
ADE_NAMES = ("ADEY", "ADED", "LADE")
AIE_NAMES = ("AIEY", "AIED", "LAIE")
AOE_NAMES = ("AOEY", "AOED", "LAOE")
MAX_REDRAWS = 1000


@dataclass
class McConfig:
    """Settings for one replication study.

    ``truth`` is ``"closed_form"`` (ring designs) or ``"mc"``. ``iem`` may
    be ``"correct"``, ``"incorrect"`` or an exposure spec string.
    ``bandwidths`` are used for both HAC and bootstrap intervals;
    ``boot_B = 0`` turns the bootstrap off.
    """

    dgp: DgpSpec
    iem: str = "correct"
    reps: int = 1000
    estimands: tuple = ("ADEY", "ADED", "LADE", "AIEY", "AIED", "LAIE")
    t: int | None = None
    aie_radius: int | None = None
    bandwidths: tuple = ()
    boot_B: int = 0
    alpha: float = 0.05
    seed: int = 0
    redraw_zero_aded: bool = True
    truth: str = "closed_form"
    oracle_reps: int = 1_000_000
    edges: str | None = None
    subpop: str = "all"
    threads: int = 1

    def __post_init__(self):
        if int(self.reps) < 1:
            raise ValueError("reps must be >= 1")
        if self.truth not in ("closed_form", "mc"):
            raise ValueError("truth must be 'closed_form' or 'mc'")
        if self.dgp.kind == "RealNet" and self.truth == "closed_form":
            raise ValueError("RealNet has no closed form; set truth to 'mc'")
        if self.dgp.kind == "RealNet" and not self.edges:
            raise ValueError("RealNet needs an edge list")
        if self.t is None:
            self.t = {"DGP1": 2, "DGP2": 1, "RealNet": 1}[self.dgp.kind]
        known = set(ADE_NAMES + AIE_NAMES + AOE_NAMES)
        bad = [e for e in self.estimands if e not in known]
        if bad:
            raise ValueError(f"unknown estimands {bad}")
        self.estimands = tuple(self.estimands)
        self.bandwidths = tuple(int(b) for b in self.bandwidths)

    def exposure(self):
        if self.iem in ("correct", "incorrect"):
            return default_iem(self.dgp, self.iem == "correct")
        return ExposureSpec.parse(self.iem)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "dgp"}
        out["dgp"] = self.dgp.to_dict()
        out["estimands"] = list(self.estimands)
        out["bandwidths"] = list(self.bandwidths)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        dgp = d.pop("dgp")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        return cls(DgpSpec(**dgp), **d)


def load_config(path_or_name):
    """Read a JSON config from a path, or from the bundled configs by name."""
    p = Path(path_or_name)
    if p.is_file():
        text = p.read_text()
        base = p.parent
    else:
        bundled = resources.files("netiv") / "configs" / p.name
        if not bundled.is_file():
            raise FileNotFoundError(f"config not found: {path_or_name}")
        text = bundled.read_text()
        base = None
    cfg = McConfig.from_dict(json.loads(text))
    if cfg.edges and base is not None and not Path(cfg.edges).is_absolute():
        cfg.edges = str(base / cfg.edges)
    return cfg


@dataclass
class EstimandSummary:
    estimand: str
    truth: float
    mean: float
    bias: float
    rmse: float
    n_ok: int
    failures: int
    coverage: dict = field(default_factory=dict)


@dataclass
class McSummary:
    """Results of a replication study."""

    config: dict
    rows: dict
    redraws: int
    failures: int
    truth: dict
    estimates: dict = field(repr=False, default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config,
            "redraws": self.redraws,
            "failures": self.failures,
            "truth": self.truth,
            "estimands": {k: vars(v) for k, v in self.rows.items()},
        }

    def csv_rows(self):
        """Flat rows: one per estimand and method (point, hac_b*, boot_b*)."""
        out = []
        for name, r in self.rows.items():
            out.append({"estimand": name, "method": "point", "truth": r.truth, "mean": r.mean,
                        "bias": r.bias, "rmse": r.rmse, "coverage": "", "n_ok": r.n_ok,
                        "failures": r.failures})
            for method, cov in r.coverage.items():
                out.append({"estimand": name, "method": method, "truth": r.truth, "mean": "",
                            "bias": "", "rmse": "", "coverage": cov, "n_ok": r.n_ok,
                            "failures": r.failures})
        return out

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=_jsonable)
        rows = self.csv_rows()
        with open(out_dir / "summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["estimand"])
            w.writeheader()
            w.writerows(rows)
        return out_dir


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x)}")


class _Study:
    """Fixed parts shared by all replications."""

    def __init__(self, cfg):
        self.cfg = cfg
        dgp = cfg.dgp
        net = load_edge_list(cfg.edges) if dgp.kind == "RealNet" else None
        self.model = Model(dgp, net, draw_coefficients(dgp, None if net is None else net.n))
        self.net = self.model.net
        self.iem = cfg.exposure()
        self.S = _subpopulation(self.net, cfg.subpop)
        if self.S.size == 0:
            raise ValueError(f"subpopulation rule {cfg.subpop!r} selects no units")
        self.K = int(cfg.aie_radius or max(self.iem.radius, 1))
        self.E = interference_sets(self.net, self.S, self.K)
        self.pairs = {b: distance_indicator(self.net, self.S, b) for b in cfg.bandwidths}
        self.kernels = {}
        if cfg.boot_B:
            self.kernels = {b: build_kernel(self.net, self.S, b) for b in cfg.bandwidths}
        self.truth = self._truth()

    def _truth(self):
        cfg = self.cfg
        if cfg.truth == "closed_form":
            variant = cfg.iem if cfg.iem in ("correct", "incorrect") else None
            if variant is None or cfg.subpop != "all":
                raise ValueError("closed-form truth needs iem 'correct'/'incorrect' and subpop 'all'")
            table = population_params_closed_form(cfg.dgp, self.model.coefs, variant, cfg.aie_radius)
        else:
            table = population_params_mc(cfg.dgp, self.model.coefs, self.net, cfg.oracle_reps,
                                         cfg.seed + 1, iem=self.iem, S=self.S,
                                         aie_radius=self.K)
        tg = table.targets(cfg.t)
        t = cfg.t
        names = {f"ADEY({t})": "ADEY", f"ADED({t})": "ADED", f"LADE({t})": "LADE"}
        out = {names.get(k, k): v for k, v in tg.items() if k not in ("ADEY", "ADED")}
        out["ADED_marginal"] = tg["ADED"]
        out["ADEY_marginal"] = tg["ADEY"]
        return out

    def needs(self, group):
        return any(e in self.cfg.estimands for e in group)

    def replicate(self, r):
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, r])
        redraws = 0
        while True:
            Z = self.model.draw_instruments(rng)
            D, Y = self.model.respond(Z)
            data = StudyData(Y, D.astype(np.int64), Z)
            T = self.iem.evaluate(self.net, data.Z, data.D)
            if not cfg.redraw_zero_aded or not self._zero_denominator(data, T):
                break
            redraws += 1
            if redraws >= MAX_REDRAWS:
                raise RuntimeError("instrument redraw limit reached; denominators keep vanishing")
        boot_seed = int(np.random.SeedSequence([cfg.seed, r, 1]).generate_state(1)[0])
        results = {}
        pending = []
        groups = []
        # (names, estimator, residuals, positions of names in the estimator and residual tuples)
        if self.needs(ADE_NAMES):
            groups.append((ADE_NAMES, lambda: ade(self.S, data, T, cfg.t),
                           lambda w: residuals_ade(self.S, data, T, cfg.t, with_ratio=w),
                           (0, 1, 2), (0, 1, 2)))
        if self.needs(AIE_NAMES):
            groups.append((AIE_NAMES, lambda: aie(self.S, data, self.E),
                           lambda w: residuals_aie(self.S, data, self.E, with_ratio=w),
                           (0, 1, 3), (0, 1, 3)))
        if self.needs(AOE_NAMES):
            groups.append((AOE_NAMES, lambda: aoe(self.S, data, self.E),
                           lambda w: residuals_aoe(self.S, data, self.E, with_ratio=w),
                           (0, 1, 2), (0, 1, 2)))
        for names, est_fn, res_fn, est_pos, res_pos in groups:
            try:
                reports = est_fn()
                ratio_ok = reports[est_pos[2]].point is not None
                resid = res_fn(ratio_ok)
            except NetivError:
                for nm in names:
                    results[nm] = None
                continue
            for nm, ep, rp in zip(names, est_pos, res_pos):
                if nm not in cfg.estimands:
                    continue
                point = reports[ep].point
                vec = resid[rp]
                if point is None or vec is None:
                    results[nm] = None
                    continue
                entry = {"point": point, "intervals": {}}
                for b in cfg.bandwidths:
                    h = hac_variance(self.net, self.S, vec, b, self.pairs[b])
                    entry["intervals"][f"hac_b{b}"] = (point - ZCRIT * h.se, point + ZCRIT * h.se)
                results[nm] = entry
                pending.append((nm, vec))
        if cfg.boot_B and pending:
            # all estimands of a replicate share multiplier draws
            for b in cfg.bandwidths:
                boots = wild_bootstrap([v for _, v in pending], self.kernels[b], cfg.boot_B,
                                       cfg.alpha, boot_seed)
                for (nm, _), bt in zip(pending, boots):
                    results[nm]["intervals"][f"boot_b{b}"] = bt.ci
                    results[nm]["intervals"][f"bootnorm_b{b}"] = bt.ci_normal
        return redraws, results

    def _zero_denominator(self, data, T):
        S = self.S
        z = data.Z[S.indices]
        if self.needs(ADE_NAMES):
            tz = T[S.indices] == self.cfg.t
            a, b = tz & (z == 1), tz & (z == 0)
            if a.any() and b.any():
                if data.D[S.indices][a].mean() == data.D[S.indices][b].mean():
                    return True
        if self.needs(AIE_NAMES + AOE_NAMES):
            if (z == 1).any() and (z == 0).any():
                d = data.D[S.indices]
                if d[z == 1].mean() == d[z == 0].mean():
                    return True
        return False


def _subpopulation(net, rule):
    rule = (rule or "all").strip()
    if rule == "all":
        return full_population(net)
    if rule.startswith("degree="):
        return degree_subpopulation(net, int(rule.split("=", 1)[1]))
    raise ValueError(f"unknown subpopulation rule {rule!r}")


def monte_carlo_run(cfg, keep_estimates=False):
    """Run the replication study described by ``cfg``.

    Replication ``r`` draws from a stream seeded by ``(seed, r)`` so the
    result does not depend on ``cfg.threads``. Replications whose
    estimators fail are counted, not fatal.
    """
    study = _Study(cfg)
    reps = range(int(cfg.reps))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            outs = list(pool.map(study.replicate, reps))
    else:
        outs = [study.replicate(r) for r in reps]

    redraws = sum(o[0] for o in outs)
    rows, estimates = {}, {}
    failures = 0
    for name in cfg.estimands:
        truth = study.truth[name]
        pts, covered = [], {}
        fails = 0
        for _, res in outs:
            e = res.get(name)
            if e is None:
                fails += 1
                continue
            pts.append(e["point"])
            for method, (lo, hi) in e["intervals"].items():
                covered.setdefault(method, []).append(lo <= truth <= hi)
        failures += fails
        pts = np.asarray(pts)
        if pts.size:
            err = pts - truth
            mean, bias, rmse = float(pts.mean()), float(err.mean()), float(np.sqrt(np.mean(err ** 2)))
        else:
            mean = bias = rmse = float("nan")
        cov = {m: float(np.mean(v)) for m, v in sorted(covered.items())}
        rows[name] = EstimandSummary(name, float(truth), mean, bias, rmse, int(pts.size), fails, cov)
        if keep_estimates:
            estimates[name] = pts
    return McSummary(cfg.to_dict(), rows, int(redraws), int(failures), dict(study.truth), estimates)
