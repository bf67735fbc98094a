"""Experiment drivers: threshold sweeps, ablations, multi-change runs and LLR traces.

Every trial is rebuilt from ``(config, trial index)`` alone, workers own whole
trials, and results are folded in trial order, so outputs do not depend on
the worker count.
"""
import csv
import json
import logging
import math
import multiprocessing
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .. import metrics
from ..detectors import DetectionTask, OracleConfig, TwrConfig, detector_path, stop_level_for, twr_sequential
from ..errors import ConfigError
from .config import build_detector, config_from_dict
from .svg import write_chart
from .trials import PILOT, build_multi_trial, build_trial, derive_seed, detector_seed, gap_from_add

log = logging.getLogger(__name__)

RECORDS = "records.jsonl"
AGGREGATE = "aggregate.csv"
RESOLVED = "resolved_config.json"
PLOT_METRICS = ("pfa", "add", "far", "regret")


@dataclass
class ExperimentResult:
    out_dir: str
    records: list
    rows: list
    llr_mean: dict = field(default_factory=dict)  # name -> (raw mean, penalised mean), index t-1


# ---------------------------------------------------------------------------
# per-trial work
# ---------------------------------------------------------------------------


def _name_key(name):
    return zlib.crc32(name.encode())


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _oracle_for(detectors):
    for d in detectors:
        if isinstance(d, OracleConfig):
            return d
    return OracleConfig()


def run_trial(config, trial, full_paths=False, detail=False):
    """Records (and optionally full LLR paths and step traces) of one trial."""
    data = build_trial(config, trial)
    dets = config.detector_configs()
    m = config.master_seed
    streams = [(metrics.CHANGE, data.change)]
    if data.no_change is not None:
        streams.append((metrics.NO_CHANGE, data.no_change))
    oracle_cfg = _oracle_for(dets)
    oracle_change = detector_path(data.change, oracle_cfg)
    records, llr, steps = [], {}, []
    for det in dets:
        stat = getattr(det, "statistic", "cusum")
        for s_idx, (kind, task) in enumerate(streams):
            seed = detector_seed(m, trial, _name_key(det.name), s_idx)
            keep = full_paths and kind == metrics.CHANGE
            stop = None if keep else stop_level_for(stat, config.thresholds)
            if isinstance(det, OracleConfig) and det == oracle_cfg and kind == metrics.CHANGE:
                path = oracle_change
            else:
                path = detector_path(task, det, _rng(seed), stop_level=stop, trace=detail and keep)
            for B in config.thresholds:
                nu = _int_or_none(path.stopping_time(B))
                o_nu = _int_or_none(oracle_change.stopping_time(B)) if kind == metrics.CHANGE else None
                records.append(metrics.TrialRecord(
                    lam=data.lam if kind == metrics.CHANGE else None, nu=nu, threshold=float(B),
                    detector=det.name, seed=seed, oracle_nu=o_nu, horizon=task.horizon,
                    stream=kind, trial=trial,
                ).to_dict())
            if keep:
                llr[det.name] = (path.llr_raw.tolist(), path.llr_used.tolist())
                for row in path.trace or ():
                    steps.append({"trial": trial, **row})
    return {"trial": trial, "records": records, "llr": llr, "steps": steps}


def _int_or_none(v):
    return None if v is None else int(v)


def _job(args):
    config, trial, full, detail = args
    return run_trial(config, trial, full, detail)


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        for j in jobs:
            yield _job(j)
        return
    with multiprocessing.get_context("fork").Pool(min(workers, len(jobs))) as pool:
        yield from pool.imap(_job, jobs)


def default_workers():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _prepare_dir(out_dir, config):
    try:
        os.makedirs(out_dir, exist_ok=True)
        for sub in ("traces", "plots"):
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    resolved = os.path.join(out_dir, RESOLVED)
    text = config.to_json() + "\n"
    if os.path.exists(resolved):
        with open(resolved) as fh:
            if fh.read() != text and os.path.exists(os.path.join(out_dir, RECORDS)):
                raise ConfigError(f"{out_dir} holds results for a different config; use a fresh --out")
    with open(resolved, "w") as fh:
        fh.write(text)


def _dump(obj):
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _load_done(path, expected_per_trial):
    """Completed trials from an earlier (possibly interrupted) run."""
    by_trial = {}
    if not os.path.exists(path):
        return by_trial
    with open(path) as fh:
        for line in fh:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line of an interrupted run
            by_trial.setdefault(rec["trial"], []).append(rec)
    return {t: r for t, r in by_trial.items() if len(r) == expected_per_trial}


def _llr_file(out_dir, trial):
    return os.path.join(out_dir, "traces", f"llr_trial{trial:04d}.json")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def run_experiment(config, out_dir, workers=1, plots=None, full_paths=None):
    """Run every (detector, threshold, trial) cell and write the result files.

    Finished trials found in ``records.jsonl`` are reused, so an interrupted
    run resumes where it stopped.  ``full_paths`` keeps whole LLR paths on
    the change streams (implied by ``emit_traces``).
    """
    plots = config.emit_plots if plots is None else plots
    full = config.emit_traces if full_paths is None else full_paths
    _prepare_dir(out_dir, config)
    n_streams = 2 if config.no_change else 1
    per_trial = len(config.detectors) * len(config.thresholds) * n_streams
    rec_path = os.path.join(out_dir, RECORDS)
    done = _load_done(rec_path, per_trial)
    if full:
        done = {t: r for t, r in done.items() if os.path.exists(_llr_file(out_dir, t))}
    todo = [t for t in range(config.trials) if t not in done]
    by_trial = dict(done)
    llr_by_trial = {}
    for t in done:
        if full:
            with open(_llr_file(out_dir, t)) as fh:
                llr_by_trial[t] = json.load(fh)
    # keep finished trials in trial order, then append new ones as they complete
    with open(rec_path, "w") as fh:
        for t in sorted(done):
            for rec in done[t]:
                fh.write(_dump(rec) + "\n")
    step_rows = []
    jobs = [(config, t, full, full and config.emit_traces) for t in todo]
    with open(rec_path, "a") as fh:
        for res in _map(jobs, workers):
            t = res["trial"]
            if full:
                with open(_llr_file(out_dir, t), "w") as lf:
                    json.dump(res["llr"], lf)
                llr_by_trial[t] = res["llr"]
            for rec in res["records"]:
                fh.write(_dump(rec) + "\n")
            fh.flush()
            by_trial[t] = res["records"]
            step_rows.extend(res["steps"])
            log.info("trial %d done", t)
    records = [metrics.TrialRecord.from_dict(r) for t in sorted(by_trial) for r in by_trial[t]]
    names = [d.name for d in config.detector_configs()]
    rows = [metrics.aggregate(records, n, float(B)) for n in names for B in config.thresholds]
    write_csv(os.path.join(out_dir, AGGREGATE), metrics.AGGREGATE_COLUMNS, rows)
    result = ExperimentResult(out_dir, records, rows)
    if full:
        result.llr_mean = _mean_llr(llr_by_trial, names)
        _write_llr(out_dir, result.llr_mean, config.horizon, plots)
        if step_rows:
            from ..detectors import TRACE_COLUMNS

            step_rows.sort(key=lambda r: (r["trial"], r["detector"], r["t"]))
            write_csv(os.path.join(out_dir, "traces", "steps.csv"), ("trial",) + TRACE_COLUMNS, step_rows)
    if plots:
        for m_ in PLOT_METRICS:
            series = {n: ([r["B"] for r in rows if r["detector"] == n], [r[m_] for r in rows if r["detector"] == n])
                      for n in names}
            write_chart(os.path.join(out_dir, "plots", f"{m_}.svg"), series, title=f"{m_.upper()} vs threshold",
                        xlabel="B (log scale)", ylabel=m_, logx=True)
    return result


def _mean_llr(llr_by_trial, names):
    out = {}
    for n in names:
        raws = [np.asarray(v[n][0]) for v in llr_by_trial.values() if n in v]
        used = [np.asarray(v[n][1]) for v in llr_by_trial.values() if n in v]
        if raws:
            out[n] = (np.mean(raws, axis=0), np.mean(used, axis=0))
    return out


def _write_llr(out_dir, llr_mean, horizon, plots):
    names = list(llr_mean)
    cols = ["t"] + [f"{n}_{k}" for n in names for k in ("raw", "penalized")]
    rows = []
    for i in range(horizon):
        row = {"t": i + 1}
        for n in names:
            row[f"{n}_raw"] = float(llr_mean[n][0][i])
            row[f"{n}_penalized"] = float(llr_mean[n][1][i])
        rows.append(row)
    write_csv(os.path.join(out_dir, "traces", "llr_mean.csv"), cols, rows)
    if plots:
        t = list(range(1, horizon + 1))
        series = {f"{n} penalized": (t, llr_mean[n][1]) for n in names}
        write_chart(os.path.join(out_dir, "plots", "llr.svg"), series, title="Mean log-likelihood ratio",
                    xlabel="t", ylabel="LLR")


def ablation_variants(base):
    """The four TWR variants {annealing on/off} x {penalisation on/off}; names are fixed."""
    base = {k: v for k, v in dict(base).items() if k != "name"}
    base["type"] = "twr"
    return [
        dict(base, name="twr"),
        dict(base, name="twr-no-penalty", penalty=0.0),
        dict(base, name="twr-no-anneal", anneal=False),
        dict(base, name="twr-no-penalty-no-anneal", penalty=0.0, anneal=False),
    ]


def _twr_entry(config):
    for d in config.detectors:
        if d.get("type") == "twr":
            return d
    return {"type": "twr"}


def run_ablation(config, out_dir, workers=1, plots=None):
    """TWR with and without annealing and penalisation, regret against the oracle per threshold."""
    doc = config.to_dict()
    doc["detectors"] = [{"type": "oracle"}] + ablation_variants(_twr_entry(config))
    doc["no_change"] = False
    sub = config_from_dict(doc)
    res = run_experiment(sub, out_dir, workers, plots, full_paths=False)
    rows = [{"variant": r["detector"], "B": r["B"], "regret": r["regret"], "regret_stderr": r["regret_stderr"],
             "add": r["add"], "pfa": r["pfa"]} for r in res.rows if r["detector"].startswith("twr")]
    write_csv(os.path.join(out_dir, "ablation.csv"), ("variant", "B", "regret", "regret_stderr", "add", "pfa"), rows)
    if plots if plots is not None else config.emit_plots:
        names = [v["name"] for v in ablation_variants({})]
        series = {n: ([r["B"] for r in rows if r["variant"] == n], [r["regret"] for r in rows if r["variant"] == n])
                  for n in names}
        write_chart(os.path.join(out_dir, "plots", "ablation_regret.svg"), series, title="Regret vs threshold",
                    xlabel="B (log scale)", ylabel="regret", logx=True)
    return res, rows


def run_llr_trace(config, out_dir, workers=1, plots=None):
    """Mean raw and penalised LLR per step for the oracle, TWR and adaptive detectors."""
    if not config.emit_traces:
        raise ConfigError("run_llr_trace needs emit_traces = true")
    doc = config.to_dict()
    keep = [d for d in config.detectors if d.get("type") in ("oracle", "twr", "adaptive")]
    if not any(d.get("type") == "oracle" for d in keep):
        keep = [{"type": "oracle"}] + keep
    doc["detectors"] = keep
    doc["no_change"] = False
    return run_experiment(config_from_dict(doc), out_dir, workers, plots, full_paths=True)


# ---------------------------------------------------------------------------
# multiple changes
# ---------------------------------------------------------------------------


@dataclass
class MultiResult:
    gap: int
    pilot_add: float
    change_points: list = field(default_factory=list)  # per trial
    delays: list = field(default_factory=list)  # per trial, per change; None = missed
    false_alarms: list = field(default_factory=list)

    @property
    def all_detected_fraction(self):
        return float(np.mean([all(d is not None for d in row) for row in self.delays]))


def pilot_oracle_add(config, threshold):
    """Oracle delay at ``threshold`` on single-change trials seeded apart from the main run."""
    doc = config.to_dict()
    doc.update(detectors=[{"type": "oracle"}], no_change=False, trials=config.multi.pilot_trials,
               master_seed=derive_seed(config.master_seed, PILOT) % (2**63))
    pc = config_from_dict(doc)
    oc = OracleConfig()
    recs = []
    for t in range(pc.trials):
        data = build_trial(pc, t)
        nu = detector_path(data.change, oc).stopping_time(threshold)
        recs.append(metrics.TrialRecord(lam=data.lam, nu=nu, threshold=threshold, detector="oracle", seed=0))
    return metrics.estimate_add(recs).value


def attribute_alarms(alarms, points, horizon):
    """Per-change delays (None when missed) and the count of alarms not explained by a change.

    Change k is detected by the first alarm in ``[points[k], points[k+1])``.
    """
    bounds = list(points) + [horizon + 1]
    delays, used = [], set()
    for k, lam in enumerate(points):
        hit = next((a for a in alarms if lam <= a < bounds[k + 1]), None)
        delays.append(None if hit is None else hit - lam)
        if hit is not None:
            used.add(hit)
    return delays, sum(a not in used for a in alarms)


def _multi_job(args):
    config, trial, gap, twr_cfg, threshold = args
    task, points = build_multi_trial(config, trial, gap)
    rng = _rng(detector_seed(config.master_seed, trial, _name_key(twr_cfg.name), 0))
    alarms = twr_sequential(task, twr_cfg, threshold, rng)
    delays, fa = attribute_alarms(alarms, points, task.horizon)
    return trial, points, alarms, delays, fa


def run_multi_change(config, out_dir, workers=1, plots=None):
    """TWR with restarts over streams holding ``multi.n_changes`` well-separated changes."""
    ms = config.multi
    if ms.n_changes < 1:
        raise ConfigError("multi.n_changes must be >= 1")
    _prepare_dir(out_dir, config)
    if ms.gap is not None:
        gap, add = int(ms.gap), math.nan
    else:
        add = pilot_oracle_add(config, ms.threshold)
        gap = gap_from_add(add, ms.gap_factor)
    twr_cfg = build_detector(_twr_entry(config))
    if not isinstance(twr_cfg, TwrConfig):
        raise ConfigError("multi-change runs need a twr detector")
    jobs = [(config, t, gap, twr_cfg, float(ms.threshold)) for t in range(config.trials)]
    res = MultiResult(gap, add)
    rows = []
    if workers <= 1:
        outs = map(_multi_job, jobs)
    else:
        pool = multiprocessing.get_context("fork").Pool(min(workers, len(jobs)))
        outs = pool.imap(_multi_job, jobs)
    try:
        for trial, points, alarms, delays, fa in outs:
            res.change_points.append(points)
            res.delays.append(delays)
            res.false_alarms.append(fa)
            for k, (lam, d) in enumerate(zip(points, delays)):
                rows.append({"trial": trial, "change": k + 1, "lam": lam, "nu": "" if d is None else lam + d,
                             "delay": "" if d is None else d, "detected": d is not None, "false_alarms": fa})
    finally:
        if workers > 1:
            pool.close()
            pool.join()
    write_csv(os.path.join(out_dir, "multi.csv"),
              ("trial", "change", "lam", "nu", "delay", "detected", "false_alarms"), rows)
    summary = []
    for k in range(ms.n_changes):
        ds = [row[k] for row in res.delays if row[k] is not None]
        summary.append({"change": k + 1, "n_trials": len(res.delays),
                        "detection_rate": len(ds) / len(res.delays),
                        "mean_delay": float(np.mean(ds)) if ds else math.nan,
                        "delay_stderr": float(np.std(ds, ddof=1) / math.sqrt(len(ds))) if len(ds) > 1 else math.nan})
    write_csv(os.path.join(out_dir, "multi_summary.csv"),
              ("change", "n_trials", "detection_rate", "mean_delay", "delay_stderr"), summary)
    with open(os.path.join(out_dir, "multi_meta.json"), "w") as fh:
        json.dump({"gap": gap, "pilot_oracle_add": add, "all_detected_fraction": res.all_detected_fraction},
                  fh, indent=2, sort_keys=True)
    if plots if plots is not None else config.emit_plots:
        ks = [s["change"] for s in summary]
        write_chart(os.path.join(out_dir, "plots", "multi_delay.svg"), {"twr": (ks, [s["mean_delay"] for s in summary])},
                    title="Mean delay per change", xlabel="change", ylabel="delay")
    return res


# ---------------------------------------------------------------------------
# sweeps over a config key
# ---------------------------------------------------------------------------


def run_sweep(config, out_dir, workers=1, plots=None):
    """``run_experiment`` once per value of ``sweep.key``; rows gain a column named after the key."""
    if not config.sweep:
        raise ConfigError('sweep runs need a "sweep": {"key": ..., "values": [...]} entry')
    key, values = config.sweep["key"], config.sweep["values"]
    doc = config.to_dict()
    doc.pop("sweep")
    if key not in doc or key in ("detectors", "multi", "family", "sweep"):
        raise ConfigError(f"cannot sweep over {key!r}")
    all_rows = []
    for v in values:
        sub = config_from_dict(dict(doc, **{key: v}))
        sub_dir = os.path.join(out_dir, f"{key}={v}")
        res = run_experiment(sub, sub_dir, workers, plots)
        all_rows.extend({key: v, **r} for r in res.rows)
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "sweep.csv"), (key,) + metrics.AGGREGATE_COLUMNS, all_rows)
    return all_rows

