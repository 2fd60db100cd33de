"""Experiment configurations, validation and runners behind the command line.

A configuration is one JSON document.  Every runner writes CSV/JSON files into
an output directory together with ``manifest.json`` (config hash, seeds,
library version, output file hashes).  Outputs carry no timestamps, so reruns
with the same seeds are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .certificates import (IllConditionedError, build_pre_certificate, golfing_certificate,
                           golfing_config, make_system, verify_nondegeneracy)
from .certificates.golfing import trace_soundness
from .certificates.interpolation import interpolation_errors
from .domain import DiscreteMeasure, Domain, partition, random_separated_positions
from .features import draw_features, forward, hnorm, make_feature_map
from .kernels import KernelModel, acceptable_report, scan_report

log = logging.getLogger(__name__)

EXPERIMENTS = ("certificate-sweep", "phase-transition", "golfing-demo", "gmm-pipeline",
               "kernel-report")
FAMILIES = ("fejer_fourier", "weighted_gaussian_fourier", "gmm_characteristic")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with ``line N:``."""


# ---------------------------------------------------------------- validation

def _line_of(text: str, key: str | None) -> int:
    """1-based line of the first ``"key"`` in the raw text (1 if absent)."""
    if key is None:
        return 1
    pos = text.find(f'"{key}"')
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 1


class _Checker:
    def __init__(self, text: str, cfg: dict):
        self.text = text
        self.cfg = cfg

    def fail(self, key, msg):
        raise ConfigError(f"line {_line_of(self.text, key)}: {msg}")

    def need(self, key, kind=None):
        if key not in self.cfg:
            self.fail(None, f"missing required field {key!r}")
        v = self.cfg[key]
        if kind is not None and not isinstance(v, kind):
            self.fail(key, f"field {key!r} has the wrong type")
        return v

    def int_list(self, key, lo=1, allow_empty=False):
        v = self.need(key)
        if not isinstance(v, list) or not all(isinstance(i, int) and not isinstance(i, bool)
                                              for i in v):
            self.fail(key, f"{key!r} must be a list of integers")
        if not v and not allow_empty:
            self.fail(key, f"{key!r} must not be empty")
        if any(i < lo for i in v):
            self.fail(key, f"{key!r} entries must be >= {lo}")
        return v

    def positive(self, key, default=None, integer=False):
        v = self.cfg.get(key, default)
        if v is None:
            self.fail(None, f"missing required field {key!r}")
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok or not v > 0:
            self.fail(key, f"{key!r} must be a positive {'integer' if integer else 'number'}")
        return v


def _domain(ch: _Checker) -> Domain:
    obj = ch.cfg.get("domain", {"kind": "torus", "d": 1})
    if not isinstance(obj, dict):
        ch.fail("domain", "'domain' must be an object")
    try:
        return Domain.from_json({"kind": obj.get("kind", "torus"), "d": obj.get("d", 1),
                                 "half_width": obj.get("half_width", 0.5),
                                 "sep_norm": obj.get("sep_norm", "inf")})
    except (ValueError, TypeError) as e:
        ch.fail("domain", str(e))


def _feature_map(ch: _Checker, dom: Domain):
    fam = ch.need("family", str)
    if fam not in FAMILIES:
        ch.fail("family", f"unknown family {fam!r}; choose one of {', '.join(FAMILIES)}")
    params = ch.cfg.get("params", {})
    if not isinstance(params, dict):
        ch.fail("params", "'params' must be an object")
    try:
        return make_feature_map(fam, params, dom)
    except (KeyError, ValueError, TypeError) as e:
        ch.fail("params", f"invalid parameters for {fam}: {e}")


def _measure_spec(ch: _Checker, dom: Domain):
    spec = ch.need("measure", dict)
    if "atoms" in spec:
        try:
            mu = DiscreteMeasure.from_json(spec, dom)
        except (KeyError, ValueError, TypeError) as e:
            ch.fail("atoms", f"invalid atoms: {e}")
        if mu.s == 0 or np.any(mu.amplitudes == 0):
            ch.fail("atoms", "atoms need nonzero amplitudes")
        return mu
    if "s" not in spec or "separation" not in spec:
        ch.fail("measure", "'measure' needs 'atoms' or both 's' and 'separation'")
    if not isinstance(spec["s"], int) or spec["s"] < 1:
        ch.fail("s", "'s' must be a positive integer")
    if not isinstance(spec["separation"], (int, float)) or spec["separation"] <= 0:
        ch.fail("separation", "'separation' must be positive")
    return None


def parse_config(text: str) -> dict:
    """Parse and validate a configuration; raises :class:`ConfigError`."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("line 1: configuration must be a JSON object")
    ch = _Checker(text, cfg)
    exp = ch.need("experiment", str)
    if exp not in EXPERIMENTS:
        ch.fail("experiment", f"unknown experiment {exp!r}; choose one of {', '.join(EXPERIMENTS)}")
    if exp != "kernel-report":
        ch.int_list("seeds", lo=0)
    if exp in ("certificate-sweep", "phase-transition", "golfing-demo"):
        dom = _domain(ch)
        _feature_map(ch, dom)
    if exp == "certificate-sweep":
        ch.int_list("m")
        _measure_spec(ch, _domain(ch))
    elif exp == "phase-transition":
        ch.int_list("m")
        ch.int_list("s")
        ch.positive("separation")
        if ch.cfg.get("check", "heuristic") not in ("heuristic", "certified", "both"):
            ch.fail("check", "'check' must be heuristic, certified or both")
    elif exp == "golfing-demo":
        ch.positive("m", integer=True)
        _measure_spec(ch, _domain(ch))
    elif exp == "gmm-pipeline":
        means = ch.need("means", list)
        w = ch.need("weights", list)
        try:
            arr = np.asarray(means, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != len(w):
                raise ValueError
        except (ValueError, TypeError):
            ch.fail("means", "'means' must be a list of points, one per weight")
        if any(not isinstance(v, (int, float)) or v <= 0 for v in w) or abs(sum(w) - 1) > 1e-9:
            ch.fail("weights", "'weights' must be positive and sum to 1")
        ch.positive("n", integer=True)
        ch.positive("m", integer=True)
        if "sigma_C" in cfg:
            ch.positive("sigma_C")
        if "lambda" in cfg:
            ch.positive("lambda")
        rho = cfg.get("rho", 0.05)
        if not isinstance(rho, (int, float)) or not 0 < rho < 1:
            ch.fail("rho", "'rho' must lie in (0, 1)")
    elif exp == "kernel-report":
        k = ch.need("kernel", dict)
        if k.get("family") not in ("gaussian", "fejer"):
            ch.fail("kernel", "kernel family must be 'gaussian' or 'fejer'")
        dom = _domain(ch)
        try:
            KernelModel(k["family"], dom, sigma=k.get("sigma"), f_c=k.get("f_c"))
        except (ValueError, TypeError) as e:
            ch.fail("kernel", str(e))
        ch.positive("s_max", integer=True)
    return cfg


# ---------------------------------------------------------------- output helpers

def jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class _Out:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str):
        (self.root / name).write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()


def _map(fn, cells, workers: int):
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, cells))


# ---------------------------------------------------------------- shared pieces

def _fmap(cfg):
    dom = Domain.from_json({"kind": "torus", "d": 1, **cfg.get("domain", {})})
    return make_feature_map(cfg["family"], cfg.get("params", {}), dom)


def _positions_signs(cfg, dom: Domain, seed: int, s: int | None = None):
    spec = cfg.get("measure", {})
    if "atoms" in spec:
        mu = DiscreteMeasure.from_json(spec, dom)
        return mu.positions, np.sign(mu.amplitudes)
    s = s if s is not None else spec["s"]
    sep = spec.get("separation", cfg.get("separation"))
    rng = np.random.default_rng([seed, s, 7])
    margin = float(spec.get("margin", cfg.get("margin", 0.0)))
    x = random_separated_positions(dom, s, sep, rng, margin=margin)
    sg = spec.get("signs")
    sg = np.asarray(sg, dtype=float) if sg is not None else rng.choice([-1.0, 1.0], size=s)
    return x, sg


def _lattice(dom: Domain, n: int) -> np.ndarray:
    from .certificates.nondegeneracy import heuristic_lattice
    return heuristic_lattice(dom, n)


def _default_lattice(d: int) -> int:
    return 2048 if d == 1 else 256


# ---------------------------------------------------------------- certificate sweep

def _sweep_cell(args):
    cfg, m, seed = args
    fm = _fmap(cfg)
    dom = fm.domain
    K = fm.limit_kernel()
    x, sg = _positions_signs(cfg, dom, seed)
    n = int(cfg.get("lattice", _default_lattice(dom.d)))
    out = {"m": m, "seed": seed, "error": "", "degenerate": "", "max_abs_eta": float("nan"),
           "samples": None}
    try:
        system = make_system(x, sg, dom, K.v_diag)
        cert = build_pre_certificate(system, draw_features(fm, m, seed))
        pts = _lattice(dom, n)
        eta = cert.value(pts)
        part = partition(system.positions, float(cfg.get("eps_near", 1e-2)), dom)
        rep = verify_nondegeneracy(cert, part, mode="heuristic", heuristic_points=n)
        out.update(degenerate=int(rep.verdict == "degenerate"), max_abs_eta=rep.max_abs_eta,
                   samples=(pts, eta))
    except (IllConditionedError, ValueError, np.linalg.LinAlgError) as e:
        out["error"] = f"{type(e).__name__}: {e}"
    return out


def run_certificate_sweep(cfg: dict, out: _Out, workers: int = 1) -> dict:
    cells = [(cfg, m, s) for m in cfg["m"] for s in cfg["seeds"]]
    res = _map(_sweep_cell, cells, workers)
    d = _fmap(cfg).d
    xcols = [f"x{i + 1}" for i in range(d)]
    for m in cfg["m"]:
        rows = []
        for r in res:
            if r["m"] != m or r["samples"] is None:
                continue
            pts, eta = r["samples"]
            rows.extend([r["seed"], *map(float, p), float(e)] for p, e in zip(pts, eta))
        out.write(f"eta_m{m}.csv", _csv(rows, ["seed", *xcols, "eta"]))
    flags = [[r["m"], r["seed"], r["degenerate"], r["max_abs_eta"], r["error"]] for r in res]
    out.write("degeneracy.csv", _csv(flags, ["m", "seed", "degenerate", "max_abs_eta", "error"]))
    summary = {}
    for m in cfg["m"]:
        cell = [r for r in res if r["m"] == m]
        ok = [r for r in cell if not r["error"]]
        summary[str(m)] = {"runs": len(cell), "failures": len(cell) - len(ok),
                           "degenerate": sum(r["degenerate"] for r in ok)}
    out.write("summary.json", dumps(summary))
    return summary


# ---------------------------------------------------------------- phase transition

def _phase_cell(args):
    cfg, s, m, seed = args
    fm = _fmap(cfg)
    dom = fm.domain
    K = fm.limit_kernel()
    check = cfg.get("check", "heuristic")
    row = {"s": s, "m": m, "seed": seed, "heuristic": "", "certified": "", "error": ""}
    try:
        x, sg = _positions_signs(cfg, dom, seed, s=s)
        system = make_system(x, sg, dom, K.v_diag)
        cert = build_pre_certificate(system, draw_features(fm, m, seed))
        if check in ("heuristic", "both"):
            part = partition(system.positions, 1e-2, dom)
            n = int(cfg.get("heuristic_points", 4096 if dom.d == 1 else 256))
            rep = verify_nondegeneracy(cert, part, mode="heuristic", heuristic_points=n)
            row["heuristic"] = int(rep.passed)
        if check in ("certified", "both"):
            arep = acceptable_report(K, s)
            part = partition(system.positions, arep.eps_near, dom)
            rep = verify_nondegeneracy(cert, part, fm.lipschitz, arep)
            row["certified"] = int(rep.passed)
    except (IllConditionedError, ValueError, np.linalg.LinAlgError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    except Exception as e:  # keep the sweep alive; the cell records the failure
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def threshold_m(rates: dict, m_list: list, level: float):
    """Smallest m whose success rate, and that of every larger m, is >= level (None if none)."""
    best = None
    for m in sorted(m_list, reverse=True):
        if rates[m] >= level:
            best = m
        else:
            break
    return best


def run_phase_transition(cfg: dict, out: _Out, workers: int = 1) -> dict:
    cells = [(cfg, s, m, seed) for s in cfg["s"] for m in cfg["m"] for seed in cfg["seeds"]]
    res = _map(_phase_cell, cells, workers)
    keys = ["s", "m", "seed", "heuristic", "certified", "error"]
    out.write("cells.csv", _csv([[r[k] for k in keys] for r in res], keys))
    level = float(cfg.get("success_level", 0.5))
    check = cfg.get("check", "heuristic")
    kinds = ("heuristic", "certified") if check == "both" else (check,)
    table, thresholds = [], {k: {} for k in kinds}
    for s in cfg["s"]:
        rates = {k: {} for k in kinds}
        for m in cfg["m"]:
            cell = [r for r in res if r["s"] == s and r["m"] == m]
            row = [s, m, len(cell), sum(bool(r["error"]) for r in cell)]
            for kind in ("heuristic", "certified"):
                if kind not in kinds:
                    row.append(float("nan"))
                    continue
                # failed cells count as unsuccessful
                rate = sum(r[kind] == 1 for r in cell) / len(cell)
                rates[kind][m] = rate
                row.append(rate)
            table.append(row)
        for kind in kinds:
            # None: the success level is not reached within the m grid
            thresholds[kind][str(s)] = threshold_m(rates[kind], cfg["m"], level)
    out.write("success_rates.csv", _csv(table, ["s", "m", "runs", "failures",
                                               "rate_heuristic", "rate_certified"]))
    out.write("thresholds.json", dumps({"success_level": level, "m_star": thresholds}))
    return {"m_star": thresholds, "rates": table}


# ---------------------------------------------------------------- golfing demo

def _golf_cell(args):
    cfg, seed = args
    fm = _fmap(cfg)
    dom = fm.domain
    K = fm.limit_kernel()
    x, sg = _positions_signs(cfg, dom, seed)
    m = int(cfg["m"])
    row = {"seed": seed, "error": ""}
    try:
        rep = acceptable_report(K, max(len(sg), int(cfg.get("s_max", len(sg)))),
                                **cfg.get("kernel_options", {}))
        system = make_system(x, sg, dom, K.v_diag)
        draw = draw_features(fm, m, seed)
        gcfg = golfing_config(rep, fm.lipschitz, len(sg), m, rho=float(cfg.get("rho", 0.05)),
                              **cfg.get("golfing", {}))
        cert, trace = golfing_certificate(draw, system, gcfg, K, np.random.default_rng([seed, 1]))
        part = partition(system.positions, rep.eps_near, dom)
        nd = verify_nondegeneracy(cert, part, fm.lipschitz, rep)
        ev, eg = interpolation_errors(cert, system)
        row.update(success=trace.success, accepted=len(trace.accepted), L=gcfg.L,
                   post_conditions=trace.post_conditions, nondegeneracy=nd.verdict,
                   interp_value_err=ev, interp_grad_err=eg,
                   soundness=trace_soundness(trace, draw, system),
                   trace=trace.to_json(), config=gcfg.to_json(), nd_report=nd.to_json())
    except Exception as e:  # recorded per seed, never aborts the run
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def run_golfing_demo(cfg: dict, out: _Out, workers: int = 1) -> dict:
    res = _map(_golf_cell, [(cfg, s) for s in cfg["seeds"]], workers)
    keys = ["seed", "success", "accepted", "L", "post_conditions", "nondegeneracy",
            "interp_value_err", "interp_grad_err", "soundness", "error"]
    out.write("summary.csv", _csv([[r.get(k, "") for k in keys] for r in res], keys))
    for r in res:
        if not r["error"]:
            out.write(f"trace_seed{r['seed']}.json",
                      dumps({"trace": r["trace"], "config": r["config"],
                             "nondegeneracy": r["nd_report"]}))
    return {"successes": sum(bool(r.get("success")) for r in res), "runs": len(res)}


# ---------------------------------------------------------------- gmm pipeline

def _gmm_cell(args):
    import warnings

    from .blasso import SolverConfig
    from .gmm import (GmmModel, SketchConfig, noise_bound, recover, recovery_domain,
                      sample_gmm, samples_from_csv, sketch_stream, true_measure)
    cfg, seed = args
    model = GmmModel(cfg["means"], cfg["weights"])
    d = model.d
    row = {"seed": seed, "error": ""}
    try:
        if "samples_csv" in cfg:
            T = samples_from_csv(Path(cfg["samples_csv"]).read_text())
        else:
            T = sample_gmm(model, int(cfg["n"]), seed)
        sc = SketchConfig(float(cfg.get("sigma_C", 1 / math.sqrt(d))), int(cfg["m"]),
                          int(cfg.get("omega_seed", 1000)) + seed, d)
        sk = sketch_stream(np.array_split(T, int(cfg.get("batches", 10))), sc)
        dom = recovery_domain(T)
        draw = sc.draw(dom)
        noise = hnorm(sk.y - forward(draw, true_measure(model, dom)))
        bound = noise_bound(sk.n, float(cfg.get("rho", 0.05)), sc.M_C)
        lam = float(cfg.get("lambda", bound))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est, res = recover(sk, lam, SolverConfig(max_spikes=int(cfg.get("max_spikes", 20))),
                               domain=dom)
        row["warnings"] = "; ".join(str(w.message) for w in caught)
        errs_x, errs_w = [], []
        for x0, w0 in zip(model.means, model.weights):
            if est.s == 0:
                errs_x.append(float("inf"))
                errs_w.append(float(w0))
                continue
            j = int(np.argmin(np.linalg.norm(est.means - x0, axis=1)))
            errs_x.append(float(np.linalg.norm(est.means[j] - x0)))
            errs_w.append(abs(float(est.weights[j] - w0)))
        row.update(n=sk.n, m=sc.m, M_C=sc.M_C, lam=lam, noise=noise, bound=bound,
                   noise_ok=noise <= bound, components=est.s, max_mean_err=max(errs_x),
                   max_weight_err=max(errs_w), converged=res.converged, model=est.to_json())
    except Exception as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def run_gmm_pipeline(cfg: dict, out: _Out, workers: int = 1) -> dict:
    res = _map(_gmm_cell, [(cfg, s) for s in cfg["seeds"]], workers)
    keys = ["seed", "n", "m", "M_C", "lam", "noise", "bound", "noise_ok", "components",
            "max_mean_err", "max_weight_err", "converged", "warnings", "error"]
    out.write("results.csv", _csv([[r.get(k, "") for k in keys] for r in res], keys))
    out.write("models.json", dumps({str(r["seed"]): r.get("model") for r in res}))
    return {"runs": len(res), "noise_ok": sum(bool(r.get("noise_ok")) for r in res)}


# ---------------------------------------------------------------- kernel report

def run_kernel_report(cfg: dict, out: _Out, workers: int = 1) -> dict:
    k = cfg["kernel"]
    dom = Domain.from_json({"kind": "torus" if k["family"] == "fejer" else "box", "d": 1,
                            "half_width": 5.0, **cfg.get("domain", {})})
    K = KernelModel(k["family"], dom, sigma=k.get("sigma"), f_c=k.get("f_c"))
    rep = acceptable_report(K, int(cfg["s_max"]), cfg.get("overrides"), **cfg.get("options", {}))
    out.write("report.json", dumps(rep.to_json()))
    result = {"report": rep.to_json()}
    if cfg.get("scan", False):
        seed = (cfg.get("seeds") or [0])[0]
        sr = scan_report(K, int(cfg["s_max"]), rep.eps_near, rep.Delta,
                         int(cfg.get("n_probe", 2000)), seed)
        out.write("scan_report.json", dumps(sr.to_json()))
        result["scan"] = sr.to_json()
    return result


RUNNERS = {
    "certificate-sweep": run_certificate_sweep,
    "phase-transition": run_phase_transition,
    "golfing-demo": run_golfing_demo,
    "gmm-pipeline": run_gmm_pipeline,
    "kernel-report": run_kernel_report,
}


def run(text: str, out_dir: str | os.PathLike, workers: int = 1,
        experiment: str | None = None) -> dict:
    """Validate ``text``, run the experiment and write outputs plus ``manifest.json``."""
    cfg = parse_config(text)
    if experiment is not None and cfg["experiment"] != experiment:
        raise ConfigError(f"line {_line_of(text, 'experiment')}: config is for "
                          f"{cfg['experiment']!r}, not {experiment!r}")
    out = _Out(Path(out_dir))
    log.info("running %s into %s", cfg["experiment"], out.root)
    result = RUNNERS[cfg["experiment"]](cfg, out, workers)
    manifest = {
        "experiment": cfg["experiment"],
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "seeds": cfg.get("seeds", []),
        "version": __version__,
        "outputs": dict(sorted(out.files.items())),
    }
    (out.root / "manifest.json").write_text(dumps(manifest))
    return result
