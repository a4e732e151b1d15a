"""Command-line experiment runner.

    mixchain sample     --config cfg.json --out runs/ising7
    mixchain construct  --config cfg.json --out runs/mix
    mixchain exact      --config cfg.json --out runs/exact
    mixchain benchmark  --out runs/bench
    mixchain synth-data --config cfg.json --out data/

Configs are JSON; ``"preset": "ising7"`` (or ``--preset``) fills in defaults
and explicit fields override them. Exit codes: 0 success, 1 invalid input,
2 failure while running.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import _jit
from . import chains as ch
from . import diagnostics as dg
from . import exact as ex
from . import models as md
from . import semigrad as sg
from .logmodular import MixtureProposal

LABELS = ("gibbs", "combo-i", "combo-r", "combo-f", "m3-only", "m3-f")

PRESETS = {
    **{f"ising{n}": {
        "model": {"kind": "ising", "n": n},
        "samplers": [{"label": "gibbs"}, {"label": "combo-f"},
                     {"label": "combo-i"}, {"label": "combo-r"}],
        "construction": {"r": 20, "mode": "greedy", "kind": "super"},
        "chains": 20, "steps": 20000, "repetitions": 50, "trace_repetitions": 1,
    } for n in (6, 7, 8)},
    # budgets for the data-like presets were fixed on calibration seeds 100-109
    "water-like": {
        "model": {"synthetic": "water-like", "n": 50, "L": 500, "seed": 0},
        "samplers": [{"label": "gibbs"}, {"label": "combo-i"}, {"label": "combo-r"}],
        "construction": {"r": 200, "mode": "greedy", "kind": "sub"},
        "chains": 20, "steps": 2000, "repetitions": 10, "trace_repetitions": 1,
        "report_at": [400],
    },
    "sensor-like": {
        "model": {"synthetic": "sensor-like", "n": 46, "L": 10, "seed": 0},
        "samplers": [{"label": "gibbs"}, {"label": "combo-i"}, {"label": "combo-r"}],
        "construction": {"r": 200, "mode": "greedy", "kind": "sub"},
        "chains": 20, "steps": 5000, "repetitions": 10, "trace_repetitions": 1,
    },
    "game-like": {
        "model": {"synthetic": "game-like", "n": 48, "L": 10, "seed": 0},
        "samplers": [{"label": "gibbs"}, {"label": "combo-i"}, {"label": "combo-r"}],
        "construction": {"r": 200, "mode": "greedy", "kind": "sub"},
        "ell": 5, "chains": 20, "steps": 5000, "repetitions": 10, "trace_repetitions": 1,
    },
}

DEFAULTS = {
    "samplers": [{"label": "gibbs"}, {"label": "combo-i"}],
    "construction": {"r": 20, "mode": "greedy", "kind": "sub", "k_min": 0},
    "chains": 20, "steps": 50000, "record_every": 1, "repetitions": 1,
    "trace_repetitions": None, "burn_in": 0.0, "alpha": ch.DEFAULT_ALPHA, "ell": None,
    "seed": 0, "checkpoints": 100, "report_at": [], "workers": 1,
    # exact
    "limit": ex.SPECTRAL_LIMIT, "epsilon": 0.25, "distance_steps": 0,
    # benchmark
    "r_values": [1, 20, 200], "bench_steps": 200000, "bench_repeats": 3,
}


class ConfigError(ValueError):
    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")


# --- config ------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw, preset=None):
    raw = dict(raw or {})
    name = preset or raw.pop("preset", None)
    raw.pop("preset", None)
    cfg = copy.deepcopy(DEFAULTS)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError("config.preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[name])
        cfg["preset"] = name
    return _merge(cfg, raw)


def _int(cfg, key, lo=None, path="config"):
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}")
    return v


def _num(cfg, key, lo, hi, path="config"):
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not lo <= v <= hi:
        raise ConfigError(f"{path}.{key}", f"expected a number in [{lo}, {hi}], got {v!r}")
    return float(v)


def validate_run(cfg):
    _int(cfg, "chains", 2)
    _int(cfg, "steps", 0)
    _int(cfg, "record_every", 1)
    _int(cfg, "repetitions", 1)
    _int(cfg, "seed", 0)
    _int(cfg, "workers", 1)
    _int(cfg, "checkpoints", 1)
    if cfg.get("trace_repetitions") is not None:
        _int(cfg, "trace_repetitions", 0)
    _num(cfg, "burn_in", 0.0, 0.99)
    _num(cfg, "alpha", 0.0, 1.0)
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError("config.alpha", "must lie strictly between 0 and 1")
    if cfg.get("ell") is not None:
        _int(cfg, "ell", 0)
    if not isinstance(cfg.get("report_at"), list):
        raise ConfigError("config.report_at", "expected a list of iterations")


def _construction(cfg, entry, path):
    c = _merge(cfg["construction"], {k: entry[k] for k in ("r", "mode", "kind", "k_min") if k in entry})
    _int(c, "r", 1, path)
    if "k_min" in c:
        _int(c, "k_min", 0, path)
    if c.get("mode") not in ("greedy", "random"):
        raise ConfigError(f"{path}.mode", f"expected 'greedy' or 'random', got {c.get('mode')!r}")
    if c.get("kind") not in ("sub", "super"):
        raise ConfigError(f"{path}.kind", f"expected 'sub' or 'super', got {c.get('kind')!r}")
    if entry.get("label") == "combo-r":
        c["mode"] = "random"
    return c


def parse_samplers(cfg, model):
    items = cfg.get("samplers")
    if not isinstance(items, list) or not items:
        raise ConfigError("config.samplers", "expected a non-empty list")
    out = []
    seen = set()
    for i, entry in enumerate(items):
        path = f"config.samplers[{i}]"
        if isinstance(entry, str):
            entry = {"label": entry}
        label = entry.get("label")
        if label not in LABELS:
            raise ConfigError(f"{path}.label", f"unknown label {label!r}; choose from {list(LABELS)}")
        name = entry.get("name", label)
        if name in seen:
            raise ConfigError(f"{path}.label", f"duplicate sampler name {name!r}")
        seen.add(name)
        if label.endswith("-f") and not isinstance(model, md.IsingComplete):
            raise ConfigError(f"{path}.label", f"{label} uses the two-component Ising mixture; model is not ising")
        alpha = entry.get("alpha", cfg["alpha"])
        if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
            raise ConfigError(f"{path}.alpha", "must lie strictly between 0 and 1")
        construction = None
        if label in ("combo-i", "combo-r", "m3-only"):
            construction = _construction(cfg, entry, f"{path}")
        out.append({"name": name, "label": label, "alpha": float(alpha), "construction": construction})
    return out


def build_model(spec, base_dir=Path(".")):
    path = "config.model"
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    try:
        if "path" in spec:
            return md.load_model(base_dir / spec["path"])
        if "synthetic" in spec:
            params = md.SynthParams(**spec.get("params", {}))
            return md.synthesize_model(spec["synthetic"], int(spec["n"]), spec.get("L"),
                                       int(spec.get("seed", 0)), params)
        kind = spec.get("kind")
        if kind == "ising" and "beta" not in spec:
            return md.IsingComplete.critical(int(spec["n"]))
        if "matrix_csv" in spec:
            C = md.load_matrix_csv(base_dir / spec["matrix_csv"])
            sub = spec.get("subsample")
            if sub:
                C = md.subsample_matrix(C, int(sub["n"]), int(sub["L"]), int(sub.get("seed", 0)))
            if kind == "facility_location":
                return md.FacilityLocation(C)
            if kind == "logdet_dpp":
                return md.LogDetDpp(C, float(spec.get("sigma", 1.0)))
            raise ConfigError(f"{path}.kind", f"matrix_csv is supported for facility_location and logdet_dpp, not {kind!r}")
        return md.model_from_dict(spec)
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(path, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(path, str(exc)) from None


# --- outputs -----------------------------------------------------------------

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _versions():
    import numba
    import scipy
    return {"mixchain": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "jit": _jit.USING_NUMBA}


class Manifest:
    """Written first as incomplete, rewritten with hashes when the command finishes."""

    def __init__(self, out, command, cfg):
        self.out = Path(out)
        self.path = self.out / "manifest.json"
        self.doc = {"command": command, "config": cfg, "versions": _versions(),
                    "complete": False, "seeds": {}, "files": {}}
        self._write()

    def _write(self):
        dump_json(self.doc, self.path)

    def finish(self, error=None):
        files = sorted(p for p in self.out.rglob("*") if p.is_file() and p != self.path)
        self.doc["files"] = {str(p.relative_to(self.out)): sha256(p) for p in files}
        self.doc["complete"] = error is None
        if error is not None:
            self.doc["error"] = error
        self._write()


def rep_seed(seed, rep):
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def _stable_key(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def get_mixture(model, construction, seed, cache_dir):
    """Build (or reload) a mixture; greedy sub constructions use no randomness and ignore seed."""
    if construction["mode"] == "greedy" and construction["kind"] == "sub":
        seed = 0
    conf = sg.ConstructionConfig(r=construction["r"], permutation_mode=construction["mode"],
                                 semigradient_kind=construction["kind"], seed=seed,
                                 k_min=construction.get("k_min", 0))
    key = _stable_key({"model": model.to_dict(), "r": conf.r, "mode": conf.permutation_mode,
                       "kind": conf.semigradient_kind, "seed": conf.seed, "k_min": conf.k_min})
    cache_dir.mkdir(parents=True, exist_ok=True)
    mix_path = cache_dir / f"mixture_{key}.json"
    if mix_path.exists():
        return MixtureProposal.load(mix_path), mix_path
    q, log = sg.build_mixture(model, conf)
    q.save(mix_path)
    dump_json({"config": vars(conf), "components": log}, cache_dir / f"mixture_{key}_log.json")
    return q, mix_path


def make_sampler(entry, model, q, ell):
    label = entry["label"]
    if label == "gibbs":
        return ch.Gibbs(entry["name"]) if ell is None else ch.GibbsSwap(ell, entry["name"])
    if label.startswith("m3"):
        return ch.M3(q, entry["name"]) if ell is None else ch.M3FixedSize(q, ell, entry["name"])
    if ell is None:
        return ch.Combined(q, entry["alpha"], entry["name"])
    return ch.CombinedFixedSize(q, ell, entry["alpha"], entry["name"])


def _mixture_for(entry, model, seed, cache_dir):
    if entry["label"].endswith("-f"):
        return sg.handcrafted_ising_mixture(model.n, model.beta), None
    if entry["construction"] is None:
        return None, None
    return get_mixture(model, entry["construction"], seed, cache_dir)


def _check_size(model, cfg, ell):
    if model.n > md.MAX_SAMPLING_N:
        raise ConfigError("config.model", f"n = {model.n} exceeds the sampling limit of {md.MAX_SAMPLING_N}")
    if ell is not None and ell > model.n:
        raise ConfigError("config.ell", f"ell = {ell} exceeds n = {model.n}")


# --- commands ----------------------------------------------------------------

def cmd_sample(cfg, out, base_dir=Path(".")):
    validate_run(cfg)
    model = build_model(cfg.get("model"), base_dir)
    ell = cfg.get("ell")
    _check_size(model, cfg, ell)
    samplers = parse_samplers(cfg, model)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "sample", cfg)
    try:
        _run_sample(cfg, model, samplers, ell, out, manifest)
    except BaseException as exc:
        manifest.finish(error=f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return out


def _run_sample(cfg, model, samplers, ell, out, manifest):
    md.save_model(model, out / "model.json")
    for sub in ("traces", "psrf", "mixtures"):
        (out / sub).mkdir(exist_ok=True)
    reps = cfg["repetitions"]
    keep_traces = reps if cfg["trace_repetitions"] is None else cfg["trace_repetitions"]
    records = 1 + cfg["steps"] // cfg["record_every"]
    cps = dg.default_checkpoints(records, cfg["checkpoints"])
    iters = (cps - 1) * cfg["record_every"]
    seeds = {f"rep{r}": rep_seed(cfg["seed"], r) for r in range(reps)}
    manifest.doc["seeds"] = seeds
    summary = []
    for entry in samplers:
        name = entry["name"]
        curves, per_elems, clocks, acc = [], [], [], []
        mixtures = set()
        for r in range(reps):
            s = seeds[f"rep{r}"]
            q, mix_path = _mixture_for(entry, model, s, out / "mixtures")
            if mix_path is not None:
                mixtures.add(mix_path.name)
            sampler = make_sampler(entry, model, q, ell)
            trace = ch.run_chains(model, sampler, cfg["chains"], cfg["steps"], cfg["record_every"],
                                  seed=s, workers=cfg["workers"])
            if r < keep_traces:
                trace.write_csv(out / "traces" / f"{name}_rep{r}.csv")
            acc.append(trace.accepted.sum() / max(1, cfg["steps"] * cfg["chains"]))
            if cps.size:
                agg, per = dg.psrf_curve(trace, cps, cfg["burn_in"])
                curves.append(agg)
                per_elems.append(per)
                clocks.append(dg.wallclock_axis(trace, cps))
        row = {"sampler": name, "label": entry["label"], "repetitions": reps,
               "acceptance_rate": float(np.mean(acc)), "mixtures": ";".join(sorted(mixtures))}
        if cps.size:
            mean_curve = np.mean(curves, axis=0)
            mean_per = np.mean(per_elems, axis=0)
            dg.write_psrf_csv(out / "psrf" / f"{name}_iteration.csv", iters, mean_curve, mean_per)
            dg.write_psrf_csv(out / "psrf" / f"{name}_wallclock.csv",
                              np.mean(clocks, axis=0).round().astype(np.int64), mean_curve, mean_per,
                              key="wallclock_ns")
            _write_rep_curves(out / "psrf" / f"{name}_repetitions.csv", iters, curves)
            row["final_psrf"] = float(mean_curve[-1])
            for thr in (1.2, 1.1):
                hit = dg.first_crossing(mean_curve, iters, thr)
                row[f"iterations_to_{thr}"] = "" if hit is None else hit
            for it in cfg["report_at"]:
                k = int(np.searchsorted(iters, it, side="right")) - 1
                row[f"psrf_at_{it}"] = float(mean_curve[k]) if k >= 0 else ""
                row[f"batches_le_1.2_at_{it}"] = (
                    int(sum(c[k] <= 1.2 for c in curves)) if k >= 0 else "")
        summary.append(row)
    _write_rows(out / "summary.csv", summary)


def _write_rep_curves(path, iters, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["checkpoint"] + [f"rep_{r}" for r in range(len(curves))])
        for k, it in enumerate(iters):
            w.writerow([int(it)] + [repr(float(c[k])) for c in curves])


def _write_rows(path, rows):
    keys = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def cmd_construct(cfg, out, base_dir=Path(".")):
    _int(cfg, "seed", 0)
    model = build_model(cfg.get("model"), base_dir)
    construction = _construction(cfg, {}, "config.construction")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "construct", cfg)
    try:
        conf = sg.ConstructionConfig(r=construction["r"], permutation_mode=construction["mode"],
                                     semigradient_kind=construction["kind"], seed=cfg["seed"],
                                     k_min=construction.get("k_min", 0))
        q, log = sg.build_mixture(model, conf)
        q.save(out / "mixture.json")
        dump_json({"config": vars(conf), "components": log}, out / "construction_log.json")
        manifest.doc["seeds"] = {"construction": cfg["seed"]}
    except BaseException as exc:
        manifest.finish(error=f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return out


def cmd_exact(cfg, out, base_dir=Path(".")):
    _int(cfg, "seed", 0)
    model = build_model(cfg.get("model"), base_dir)
    limit = _int(cfg, "limit", 1)
    if model.n > limit:
        raise md.EnumerationLimitError(model.n, limit)
    _num(cfg, "epsilon", 1e-12, 1 - 1e-12)
    _int(cfg, "distance_steps", 0)
    ell = cfg.get("ell")
    if ell is not None:
        _int(cfg, "ell", 0)
    _check_size(model, cfg, ell)
    samplers = parse_samplers(cfg, model)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "exact", cfg)
    try:
        report = _run_exact(cfg, model, samplers, ell, out, limit)
        dump_json(report, out / "report.json")
    except BaseException as exc:
        manifest.finish(error=f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return report


def _run_exact(cfg, model, samplers, ell, out, limit):
    dist = ex.enumerate_distribution(model, limit)
    report = {"n": model.n, "logZ": dist.logZ, "Z": math.exp(dist.logZ) if dist.logZ < 700 else None,
              "pi_min": dist.pi_min, "marginals": ex.exact_marginals(dist).tolist(), "samplers": {}}
    n = model.n
    seed = rep_seed(cfg["seed"], 0)
    for entry in samplers:
        q, _ = _mixture_for(entry, model, seed, out / "mixtures")
        sampler = make_sampler(entry, model, q, ell)
        T = ex.build_transition_matrix(model, sampler, limit)
        P, pi = T.matrix, T.pi
        lazy = ex.lazify(P)
        spec = ex.spectral_gap(P, pi, limit=limit)
        lazy_gap = ex.spectral_gap(lazy, pi, limit=limit).gap
        rec = {"gap": spec.gap, "lambda2": spec.lambda2, "lazy_gap": lazy_gap,
               "row_error": ex.row_stochastic_error(P),
               "detailed_balance": ex.detailed_balance_check(P, pi),
               "stationarity": ex.stationarity_error(P, pi)}
        if lazy_gap > 0:
            lo, hi = ex.mixing_time_bounds(min(lazy_gap, 1.0), float(pi.min()), cfg["epsilon"])
            rec["mixing_time_lower"], rec["mixing_time_upper"] = lo, hi
        if q is not None:
            if ell is None:
                rec["tv_pi_q"] = ex.tv_distance(pi, np.exp(q.log_table()))
            else:
                lq = np.array([q.fixed_size_logpdf(md.from_mask(int(s), n), ell) for s in T.states])
                rec["tv_pi_q"] = ex.tv_distance(pi, np.exp(lq))
        if ell is None:
            labels = ex.ising_split_labels(T.states, n)
            if labels.min() != labels.max():
                dec = ex.decomposition(P, pi, labels, gap=spec.gap)
                rec.update({"projection_gap": dec.gap_projection,
                            "restriction_gaps": list(dec.gap_restrictions),
                            "p_max": dec.p_max, "decomposition_bound": dec.bound,
                            "bottleneck_omega0": ex.bottleneck_ratio(P, pi, labels == 0)})
        report["samplers"][entry["name"]] = rec
        with open(out / f"{entry['name']}_eigenvalues.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, v in enumerate(spec.eigenvalues):
                w.writerow([i, repr(float(v))])
        if cfg["distance_steps"]:
            d = ex.exact_distance_curve(P, pi, cfg["distance_steps"])
            with open(out / f"{entry['name']}_distance.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "tv_distance"])
                for t, v in enumerate(d, start=1):
                    w.writerow([t, repr(float(v))])
    return report


def _time_sampler(model, sampler, steps, repeats, seed):
    best = None
    for k in range(repeats):
        tr = ch.run_chains(model, sampler, 1, steps, record_every=steps, seed=seed + k)
        ns = int(tr.wallclock_ns[0, -1])
        best = ns if best is None else min(best, ns)
    return best / steps


def cmd_benchmark(cfg, out, base_dir=Path(".")):
    spec = cfg.get("model") or {"kind": "ising", "n": 50}
    model = build_model(spec, base_dir)
    steps = _int(cfg, "bench_steps", 1)
    repeats = _int(cfg, "bench_repeats", 1)
    r_values = cfg.get("r_values")
    if not isinstance(r_values, list) or not r_values or not all(isinstance(r, int) and r >= 1 for r in r_values):
        raise ConfigError("config.r_values", "expected a non-empty list of positive integers")
    construction = _construction(cfg, {}, "config.construction")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "benchmark", cfg)
    try:
        rows = []
        warm = ch.run_chains(model, ch.Gibbs(), 1, 100, seed=0)  # compile outside the timings
        del warm
        for r in r_values:
            c = dict(construction, r=r)
            q, _ = get_mixture(model, c, cfg["seed"], out / "mixtures")
            ch.run_chains(model, ch.M3(q), 1, 100, seed=0)
            for name, s in (("gibbs", ch.Gibbs()), ("m3", ch.M3(q))):
                ns = _time_sampler(model, s, steps, repeats, cfg["seed"])
                rows.append({"sampler": name, "r": r, "n": model.n, "steps": steps,
                             "ns_per_step": ns, "steps_per_second": 1e9 / ns, "jit": _jit.USING_NUMBA})
        _write_rows(out / "benchmark.csv", rows)
        m3 = {row["r"]: row["ns_per_step"] for row in rows if row["sampler"] == "m3"}
        summary = {"m3_ns_per_step": m3}
        if 20 in m3 and 200 in m3:
            ratio = m3[200] / m3[20]
            summary["ratio_r200_r20"] = ratio
            summary["linear_in_r"] = bool(ratio <= 20.0)
        dump_json(summary, out / "benchmark_summary.json")
    except BaseException as exc:
        manifest.finish(error=f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return rows


def cmd_synth_data(cfg, out, base_dir=Path(".")):
    spec = cfg.get("model")
    if spec is None:
        raise ConfigError("config.model", "missing")
    model = build_model(spec, base_dir)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "synth-data", cfg)
    try:
        md.save_model(model, out / "model.json")
        mats = {}
        if isinstance(model, (md.FacilityLocation, md.FlDiversity)):
            mats["matrix.csv"] = model.C
        if isinstance(model, md.LogDetDpp):
            mats["matrix.csv"] = model.K
        if isinstance(model, md.FlDiversity):
            mats["utilities.csv"] = model.w[:, None]
        for fname, M in mats.items():
            with open(out / fname, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"col_{j}" for j in range(M.shape[1])])
                for row in M:
                    w.writerow([repr(float(v)) for v in row])
        manifest.doc["seeds"] = {"model": spec.get("seed", 0)}
    except BaseException as exc:
        manifest.finish(error=f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return model


COMMANDS = {"sample": cmd_sample, "construct": cmd_construct, "exact": cmd_exact,
            "benchmark": cmd_benchmark, "synth-data": cmd_synth_data}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def make_parser():
    p = _Parser(prog="mixchain", description="Mixture-proposal MCMC over subsets.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config file")
        s.add_argument("--preset", choices=sorted(PRESETS))
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path, default=Path("out"))
        s.add_argument("--workers", type=int)
    return p


def load_config(args):
    raw = {}
    base = Path(".")
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be an object")
        base = args.config.parent
    cfg = resolve_config(raw, args.preset)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    return cfg, base


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg, base = load_config(args)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed", "must be non-negative")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command](cfg, args.out, base)
    except (ConfigError, md.EnumerationLimitError, md.MatrixParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: wrote {args.out} in {time.perf_counter() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
