"""``aigts <command> --config run.cfg [--out DIR] [--seed N] [--group-by-user]``

Stages hand off through files in the output directory. Each stage reads only
earlier stage outputs plus the config and writes a manifest next to its
outputs. Failures print one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from collections import Counter, defaultdict
from dataclasses import replace

import numpy as np

from . import __version__
from .catalog import CategoryCatalog, default_catalog
from .clustering import (
    IDLE_NAME,
    ActivityModel,
    ActivitySpan,
    SegmentVector,
    assign_activity,
    cluster_prototype,
    fit_activity_model,
    segment_to_vector,
)
from .config import RunConfig, load_config
from .evaluation import (
    CVPlan,
    importance_report,
    run_general,
    run_groups,
    run_individual,
    write_importance,
    write_report,
)
from .featurization import (
    CodeBook,
    daily_tallies,
    featurize,
    read_features_csv,
    window_tallies,
    write_features_csv,
)
from .ingest import (
    attach_labels,
    filter_low_usage_apps,
    input_paths,
    parse_event_log,
    write_event_log,
    write_rejections,
)
from .regression import fit_model, model_to_dict
from .segmentation import bin_all, segment, select_k_aigts
from .stats import correlation_table, f_statistic, score_features, strata_masks, welch_t
from .synth import SynthConfig, generate_synthetic

COMMANDS = ("synth", "ingest", "segment", "cluster", "featurize", "correlate", "train", "report")


class StageError(Exception):
    def __init__(self, kind, message, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


# -- file helpers --------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _num(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class Stage:
    """Paths and bookkeeping for one command run."""

    def __init__(self, name, cfg):
        self.name = name
        self.cfg = cfg
        self.out = cfg.path(cfg.out_dir)
        self.inputs = []
        self.outputs = []
        self.info = {}

    def p(self, *parts):
        return os.path.join(self.out, *parts)

    def require(self, stage, *parts):
        path = self.p(*parts)
        if not os.path.exists(path):
            raise StageError("missing_prerequisite", f"run stage {stage} first", missing=path, stage=self.name)
        self.inputs.append(path)
        return path

    def produced(self, path):
        self.outputs.append(path)
        return path

    def finish(self):
        os.makedirs(self.p("manifests"), exist_ok=True)
        rel = lambda q: os.path.relpath(q, self.out)  # noqa: E731
        _write_json(
            self.p("manifests", f"{self.name}.json"),
            {
                "stage": self.name,
                "version": __version__,
                "config_hash": self.cfg.hash(),
                "inputs": {rel(q): _sha256(q) for q in sorted(self.inputs) if os.path.isfile(q)},
                "outputs": {rel(q): _sha256(q) for q in sorted(self.outputs)},
                "info": self.info,
            },
        )


def _catalog(cfg):
    if cfg.catalog:
        return CategoryCatalog.load(cfg.path(cfg.catalog))
    candidate = os.path.join(cfg.path(cfg.input_dir), "catalog.json")
    if os.path.exists(candidate):
        return CategoryCatalog.load(candidate)
    return default_catalog()


def _load_log(st):
    d = st.require("ingest", "log")
    st.inputs.extend(input_paths(d))
    log = parse_event_log(input_paths(d))
    cat = CategoryCatalog.load(st.require("ingest", "catalog.json"))
    return log, cat


# -- stages ------------------------------------------------------------------


def cmd_synth(cfg):
    st = Stage("synth", cfg)
    sc = SynthConfig(
        n_users=cfg.synth_users,
        n_days=cfg.synth_days,
        tz=cfg.tz,
        n_regimes=cfg.synth_regimes,
        disjoint=cfg.synth_disjoint,
        noise=cfg.synth_noise,
        label_sigma=cfg.synth_label_sigma,
        esm_every_minutes=cfg.window_minutes,
    )
    log, truth = generate_synthetic(sc, cfg.named_seed("synth"))
    d = cfg.path(cfg.input_dir)
    write_event_log(log, d)
    default_catalog().save(os.path.join(d, "catalog.json"))
    truth.save(os.path.join(d, "ground_truth.json"))
    st.outputs.extend(sorted([*input_paths(d), os.path.join(d, "catalog.json"), os.path.join(d, "ground_truth.json")]))
    st.info = {"users": len(log.users), "app_events": len(log.app_events), "esm": len(log.esm_responses)}
    st.finish()
    return st.info


def cmd_ingest(cfg):
    st = Stage("ingest", cfg)
    d = cfg.path(cfg.input_dir)
    paths = input_paths(d)
    if not paths:
        raise StageError("missing_input", f"no input files in {d}; run stage synth first or supply data")
    st.inputs.extend(paths)
    catalog = _catalog(cfg)
    log = parse_event_log(paths, catalog)
    n_before = len(log.app_events)
    log = filter_low_usage_apps(log, cfg.low_usage_threshold_s)
    os.makedirs(st.out, exist_ok=True)
    write_event_log(log, st.p("log"))
    st.outputs.extend(input_paths(st.p("log")))
    catalog.save(st.produced(st.p("catalog.json")))
    write_rejections(log.rejections, st.produced(st.p("rejections.csv")))
    st.info = {
        "users": len(log.users),
        "app_events": len(log.app_events),
        "app_events_filtered": n_before - len(log.app_events),
        "rejections": len(log.rejections),
    }
    st.finish()
    return st.info


def cmd_segment(cfg):
    st = Stage("segment", cfg)
    log, catalog = _load_log(st)
    series = bin_all(log, catalog, cfg.bin_width_s, cfg.tz)
    if not series:
        raise StageError("empty_input", "no categorised app events to segment")
    plan = select_k_aigts(series, cfg.seg_solver, cfg.seg_k_max, cfg.k_count_mode)
    channels = series[0].channel_names
    seg_rows, curve_rows, k_rows = [], [], []
    for s in series:
        key = (s.user_id, s.day)
        k = plan.chosen_k[key]
        b = segment(s.X, k, cfg.seg_solver)
        k_rows.append([s.user_id, s.day, s.n_bins, _num(s.active_minutes), plan.knee[key], k])
        for kk, v in enumerate(plan.curves[key].values):
            curve_rows.append([s.user_id, s.day, kk, _num(v)])
        for idx, seg in enumerate(b.segments(s.n_bins)):
            sv = segment_to_vector(s.X, seg, s.user_id, s.day, idx, s.bin_width)
            seg_rows.append(
                [
                    s.user_id,
                    s.day,
                    idx,
                    seg[0],
                    seg[1],
                    _num(s.bin_start(seg[0])),
                    _num(s.bin_end(seg[1])),
                    int(sv.idle),
                    *(_num(x) for x in sv.v),
                ]
            )
    header = ["user_id", "day", "seg_index", "start_bin", "end_bin", "start_ts", "end_ts", "idle"]
    _write_csv(st.produced(st.p("segments.csv")), header + [f"v:{c}" for c in channels], seg_rows)
    _write_csv(st.produced(st.p("ig_curves.csv")), ["user_id", "day", "k", "ig"], curve_rows)
    _write_csv(
        st.produced(st.p("k_selection.csv")),
        ["user_id", "day", "n_bins", "active_minutes", "knee", "chosen_k"],
        k_rows,
    )
    st.info = {
        "user_days": len(series),
        "segments": len(seg_rows),
        "median_rate_per_minute": plan.median_rate,
        "count_mode": plan.count_mode,
    }
    st.finish()
    return st.info


def _read_segments(path):
    rows = _read_csv(path)
    if not rows:
        return [], [], []
    channels = [c[2:] for c in rows[0] if c.startswith("v:")]
    vectors = []
    for r in rows:
        v = np.array([float(r["v:" + c]) for c in channels])
        dur = (float(r["end_ts"]) - float(r["start_ts"])) / 60.0
        vectors.append(SegmentVector(r["user_id"], r["day"], int(r["seg_index"]), v, dur, r["idle"] == "1"))
    return rows, vectors, channels


def _default_names(model):
    names = []
    for i, c in enumerate(model.centroids):
        top = model.channel_names[int(np.argmax(c))] if c.max() > 0 else "none"
        names.append(f"A{i:02d}:{top}")
    return names


def cmd_cluster(cfg):
    st = Stage("cluster", cfg)
    rows, vectors, channels = _read_segments(st.require("segment", "segments.csv"))
    if sum(not v.idle for v in vectors) < 3:
        raise StageError("empty_input", "fewer than 3 non-idle segments to cluster")
    model = fit_activity_model(vectors, channels, cfg.cluster_k_max, cfg.named_seed("cluster"), cfg.cluster_n_init)
    model.names = _default_names(model)
    if cfg.activity_names:
        with open(cfg.path(cfg.activity_names)) as fh:
            model.apply_names(json.load(fh))
    labels = [assign_activity(v, model) for v in vectors]
    out_rows = []
    for r, lab in zip(rows, labels):
        minutes = (float(r["end_ts"]) - float(r["start_ts"])) / 60.0
        out_rows.append(
            [r["user_id"], r["day"], r["seg_index"], r["start_ts"], r["end_ts"], lab, model.name_of(lab), _num(minutes)]
        )
    _write_csv(
        st.produced(st.p("activities.csv")),
        ["user_id", "day", "seg_index", "start_ts", "end_ts", "label", "activity", "duration_min"],
        out_rows,
    )
    active = [(v.v, lab) for v, lab in zip(vectors, labels) if lab >= 0]
    proto = cluster_prototype(np.array([a for a, _ in active]), np.array([b for _, b in active]), model.k)
    counts = Counter(labels)
    durations = defaultdict(list)
    for v, lab in zip(vectors, labels):
        durations[lab].append(v.duration)
    proto_rows = []
    for i in range(model.k):
        proto_rows.append(
            [i, model.names[i], counts.get(i, 0), _num(np.mean(durations[i]) if durations[i] else 0.0)]
            + [_num(x) for x in proto[i]]
        )
    if counts.get(-1):
        proto_rows.append([-1, IDLE_NAME, counts[-1], _num(np.mean(durations[-1]))] + [_num(0.0)] * len(channels))
    _write_csv(
        st.produced(st.p("prototypes.csv")),
        ["label", "activity", "n_segments", "mean_minutes"] + [f"v:{c}" for c in channels],
        proto_rows,
    )
    model.save(st.produced(st.p("activity_model.json")))
    st.info = {
        "k": model.k,
        "silhouette_by_k": {str(k): v for k, v in sorted(model.silhouette_by_k.items())},
        "idle_segments": counts.get(-1, 0),
        "mean_activity_minutes": float(np.mean([v.duration for v in vectors])),
    }
    st.finish()
    return st.info


def _timelines(path):
    timelines = defaultdict(list)
    for r in _read_csv(path):
        timelines[(r["user_id"], r["day"])].append(
            ActivitySpan(r["activity"], float(r["start_ts"]), float(r["end_ts"]))
        )
    return dict(timelines)


def _activity_names(model):
    names = list(model.names)
    if "Personalization" in model.channel_names:
        names.append(IDLE_NAME)
    return names


def cmd_featurize(cfg):
    st = Stage("featurize", cfg)
    log, catalog = _load_log(st)
    timelines = _timelines(st.require("cluster", "activities.csv"))
    model = ActivityModel.load(st.require("cluster", "activity_model.json"))
    labels, excluded = attach_labels(log)
    if not labels:
        raise StageError("empty_input", "no valid ESM responses to featurize")
    fm = featurize(log, labels, catalog, timelines, _activity_names(model), cfg.tz, cfg.window_minutes)
    write_features_csv(fm, st.produced(st.p("features.csv")))
    fm.codebook.save(st.produced(st.p("codebook.json")))
    scores = {t: score_features(fm.X, fm.target(t), fm.feature_names) for t in cfg.targets}
    rows = []
    for t, sc in scores.items():
        for s in sc:
            rows.append([t, s.name, _num(s.F)] + [int(s.F >= th) for th in cfg.f_thresholds])
    _write_csv(
        st.produced(st.p("feature_scores.csv")),
        ["target", "feature", "F"] + [f"F>={th:g}" for th in cfg.f_thresholds],
        rows,
    )
    st.info = {"rows": len(fm), "features": len(fm.feature_names), "excluded_esm": excluded}
    st.finish()
    return st.info


def cmd_correlate(cfg):
    st = Stage("correlate", cfg)
    log, catalog = _load_log(st)
    timelines = _timelines(st.require("cluster", "activities.csv"))
    labels, _ = attach_labels(log)

    # valence / arousal: activity and app minutes in the hour before each ESM
    names, M = window_tallies(log, labels, catalog, timelines, cfg.corr_lookback_minutes)
    dims = {
        "valence": np.array([r.valence for r in labels], dtype=np.float64),
        "arousal": np.array([r.arousal for r in labels], dtype=np.float64),
    }
    users = np.array([r.user_id for r in labels], dtype=object)
    report = correlation_table({n: M[:, j] for j, n in enumerate(names)}, dims, strata_masks(users, log.metadata))

    # productivity / interruptions: per-day totals against end-of-day scores
    keys, day_names, D = daily_tallies(log, catalog, timelines, cfg.tz)
    eod = {(e.user_id, e.day): e for e in log.eod_surveys}

    def score(attr):
        vals = [getattr(eod[k], attr) if k in eod else None for k in keys]
        return np.array([np.nan if v is None else float(v) for v in vals])

    day_users = np.array([k[0] for k in keys], dtype=object)
    daily = correlation_table(
        {n: D[:, j] for j, n in enumerate(day_names)},
        {"productivity": score("productivity"), "interruptions": score("interruptions")},
        strata_masks(day_users, log.metadata),
    )
    entries = report.entries + daily.entries
    extremes = report.extremes + daily.extremes
    _write_csv(
        st.produced(st.p("correlations.csv")),
        ["stratum", "dimension", "variable", "rho", "n"],
        [[e.stratum, e.dimension, e.variable, _num(e.rho), e.n] for e in entries],
    )
    _write_csv(
        st.produced(st.p("correlation_extremes.csv")),
        ["stratum", "dimension", "min_variable", "min_rho", "max_variable", "max_rho"],
        [[s, d, lo.variable, _num(lo.rho), hi.variable, _num(hi.rho)] for s, d, lo, hi in extremes],
    )
    st.info = {
        "esm_rows": len(labels),
        "user_days": len(keys),
        "variables": len(names),
        "notices": report.notices + daily.notices,
    }
    st.finish()
    return st.info


def _plan(cfg, kind):
    if kind == "general":
        return CVPlan(cfg.general_outer_k, cfg.general_inner_k, cfg.general_trials, cfg.named_seed("cv"), cfg.group_by_user)
    return CVPlan(cfg.group_outer_k, cfg.group_inner_k, cfg.group_trials, cfg.named_seed("cv"), cfg.group_by_user)


def _feature_sets(cfg):
    return (("all", None), *((f"F>={t:g}", t) for t in cfg.f_thresholds))


def _load_features(st):
    cb = CodeBook.load(st.require("featurize", "codebook.json"))
    return read_features_csv(st.require("featurize", "features.csv"), cb)


def _run_manifest(cfg, st, extra):
    path = st.p("run_manifest.json")
    doc = {}
    if os.path.exists(path):
        with open(path) as fh:
            doc = json.load(fh)
    doc.update(
        {
            "config": cfg.to_dict(),
            "config_hash": cfg.hash(),
            "seeds": {n: cfg.named_seed(n) for n in ("synth", "cluster", "cv", "model")},
            "grids": {m: [s.label() for s in cfg.grid(m)] for m in cfg.models},
            "version": __version__,
        }
    )
    doc.update(extra)
    _write_json(st.produced(path), doc)


def cmd_train(cfg):
    st = Stage("train", cfg)
    fm = _load_features(st)
    plan = _plan(cfg, "general")
    report = run_general(fm, cfg.targets, _feature_sets(cfg), cfg.models, plan, cfg.grids())
    write_report(report, st.produced(st.p("general_report.csv")))
    tables = {
        key: importance_report([imp], fm.feature_names, cfg.importance_top_general)
        for key, imp in sorted(report.importance.items())
        if imp is not None
    }
    write_importance(tables, st.produced(st.p("importance.csv")))
    os.makedirs(st.p("models"), exist_ok=True)
    for target in cfg.targets:
        y = fm.target(target)
        for m in cfg.models:
            row = report.cell("ALL", target, "all", m)
            # refit the most frequently chosen spec on every row
            label = row.chosen.split(";")[0]
            spec = next((s for s in cfg.grid(m) if s.label() == label), cfg.grid(m)[0])
            model = fit_model(spec, fm.X, y)
            _write_json(st.produced(st.p("models", f"{target}_{m}.json")), model_to_dict(model, fm.feature_names))
    _run_manifest(cfg, st, {"general": {"cv_mode": plan.mode, "plan": [plan.outer_k, plan.inner_k, plan.trials]}})
    st.info = {"cells": len(report.rows), "notices": report.notices}
    st.finish()
    return st.info


def _users_meta(st):
    path = st.require("ingest", "log", "users.jsonl")
    return parse_event_log([path]).metadata


def cmd_report(cfg):
    st = Stage("report", cfg)
    fm = _load_features(st)
    meta = _users_meta(st)
    imp_path = st.require("train", "importance.csv")
    plan = _plan(cfg, "group")
    groups = run_groups(
        fm, meta, cfg.targets, cfg.models, plan, cfg.grids(), tuple(cfg.early_work_start), cfg.late_work_start_min
    )
    write_report(groups, st.produced(st.p("group_report.csv")))
    indiv = run_individual(fm, cfg.individual_min_rows, cfg.targets, cfg.models, cfg.individual_k, cfg.named_seed("cv"))
    write_report(indiv, st.produced(st.p("individual_report.csv")))

    kept = [r for r in _read_csv(imp_path) if r["scope"] == "ALL"]
    with open(imp_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scope", "target", "rank", "feature", "share"))
        for r in kept:
            w.writerow([r["scope"], r["target"], r["rank"], r["feature"], r["share"]])
        for (scope, target), imp in sorted(groups.importance.items()):
            if imp is None:
                continue
            for r in importance_report([imp], fm.feature_names, cfg.importance_top_group):
                w.writerow([scope, target, r.rank, r.feature, _num(r.share)])
    st.produced(imp_path)
    _run_manifest(
        cfg,
        st,
        {
            "groups": {"cv_mode": plan.mode, "plan": [plan.outer_k, plan.inner_k, plan.trials], "notices": groups.notices},
            "individual": {"k": cfg.individual_k, "min_rows": cfg.individual_min_rows, "skipped": indiv.skipped},
        },
    )
    st.info = {"group_cells": len(groups.rows), "individual_cells": len(indiv.rows), "skipped": len(indiv.skipped)}
    st.finish()
    return st.info


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "segment": cmd_segment,
    "cluster": cmd_cluster,
    "featurize": cmd_featurize,
    "correlate": cmd_correlate,
    "train": cmd_train,
    "report": cmd_report,
}


def dispatch(command, cfg):
    if command not in HANDLERS:
        raise StageError("unknown_command", f"unknown command {command!r}")
    os.makedirs(cfg.path(cfg.out_dir), exist_ok=True)
    return HANDLERS[command](cfg)


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="aigts", description="App-usage segmentation and affect regression pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key=value run configuration")
        sp.add_argument("--out", help="output directory (overrides out_dir)")
        sp.add_argument("--seed", type=int, help="base seed (overrides seed)")
        sp.add_argument("--group-by-user", action="store_true", help="keep each user's rows in one CV fold")
    sp = sub.add_parser("welch", help="Welch's t-test on two comma-separated samples")
    sp.add_argument("a")
    sp.add_argument("b")
    sp = sub.add_parser("fscore", help="univariate F statistic of two comma-separated vectors")
    sp.add_argument("x")
    sp.add_argument("y")
    return p


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig(base_dir=os.getcwd())
    if args.out:
        cfg = replace(cfg, out_dir=os.path.abspath(args.out))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.group_by_user:
        cfg = replace(cfg, group_by_user=True)
    return cfg


def _fail(kind, message, code, **extra):
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "welch":
            r = welch_t(_floats(args.a), _floats(args.b))
            print(json.dumps({"t": r.t, "df": r.df, "p": r.p}))
            return 0
        if args.command == "fscore":
            print(json.dumps({"F": f_statistic(_floats(args.x), _floats(args.y))}))
            return 0
        cfg = _resolve_config(args)
        info = dispatch(args.command, cfg)
        print(json.dumps({"stage": args.command, "ok": True, **(info or {})}, sort_keys=True, default=str))
        return 0
    except StageError as exc:
        return _fail(exc.kind, str(exc), 2, **exc.extra)
    except (ValueError, OSError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 1, stage=args.command)


if __name__ == "__main__":
    sys.exit(main())
