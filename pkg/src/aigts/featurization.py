"""Lookback windows ending at ESM responses and the 29 window features.

Categorical features are ordinal-encoded against fixed vocabularies (the
catalog, the activity names, and the enumerations below), so the code book
never depends on which rows are in a training split. Code 0 is reserved for
"none" and for anything outside the vocabulary.
"""

from __future__ import annotations

import bisect
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .catalog import COMMUNICATION_UPPER, UNCATEGORIZED
from .ingest import local_datetime

NONE = "none"
WINDOW_MINUTES = 90

FEATURES = (
    "weekday",
    "time_period",
    "sin_weekday",
    "cos_weekday",
    "sin_time",
    "cos_time",
    "is_weekend",
    "num_noti",
    "num_noti_interacted",
    "noti_cat",
    "noti_intr_cat",
    "noti_interacted_pcg",
    "num_communication",
    "main_contact",
    "nunique_activity",
    "main_activity",
    "num_activity",
    "nunique_app",
    "num_app",
    "nunique_app_cat",
    "app_noti",
    "nunique_app_noti",
    "main_cat_app",
    "second_cat_app",
    "nunique_user_activity",
    "num_user_activity",
    "main_user_activity",
    "sec_user_activity",
    "entropy_user_activity",
)

TIME_PERIODS = ("LateNight", "EarlyMorning", "Morning", "Afternoon", "Evening", "Night")
COUNT_BUCKETS = ("0", "1-3", "4-9", "10+")
CONTACT_ORDER = ("family", "friend", "work", "none")
ACTIVE_KINDS = ("bicycling", "walking", "running")


@dataclass
class Window:
    user_id: str
    start_ts: float
    end_ts: float
    app_events: list = field(default_factory=list)
    notifications: list = field(default_factory=list)
    physical: list = field(default_factory=list)
    spans: list = field(default_factory=list)


# -- window construction -----------------------------------------------------


class _UserIndex:
    """Per-user timestamp-sorted events for fast half-open range queries."""

    def __init__(self, events):
        self.events = defaultdict(list)
        for e in events:
            self.events[e.user_id].append(e)
        self.times = {}
        for uid, evs in self.events.items():
            evs.sort(key=lambda e: e.timestamp)
            self.times[uid] = [e.timestamp for e in evs]

    def between(self, uid, lo, hi):
        times = self.times.get(uid)
        if not times:
            return []
        i = bisect.bisect_left(times, lo)
        j = bisect.bisect_left(times, hi)
        return self.events[uid][i:j]


class _SpanIndex:
    def __init__(self, timelines):
        self.spans = defaultdict(list)
        for (uid, _day), spans in (timelines or {}).items():
            self.spans[uid].extend(spans)
        self.starts = {}
        for uid, spans in self.spans.items():
            spans.sort(key=lambda s: s.start)
            self.starts[uid] = [s.start for s in spans]

    def overlapping(self, uid, lo, hi):
        starts = self.starts.get(uid)
        if not starts:
            return []
        j = bisect.bisect_left(starts, hi)
        return [s for s in self.spans[uid][:j] if s.end > lo]


def build_windows(log, labels, timelines=None, minutes=WINDOW_MINUTES):
    """One half-open ``[t - minutes, t)`` window per label row."""
    apps = _UserIndex(log.app_events)
    notis = _UserIndex(log.notification_events)
    phys = _UserIndex(log.activity_events)
    spans = _SpanIndex(timelines)
    span_s = minutes * 60.0
    out = []
    for row in labels:
        lo, hi = row.timestamp - span_s, row.timestamp
        out.append(
            Window(
                row.user_id,
                lo,
                hi,
                apps.between(row.user_id, lo, hi),
                notis.between(row.user_id, lo, hi),
                phys.between(row.user_id, lo, hi),
                spans.overlapping(row.user_id, lo, hi),
            )
        )
    return out


# -- features ----------------------------------------------------------------


def time_period(hour):
    return TIME_PERIODS[int(hour) // 4]


def count_bucket(n):
    if n <= 0:
        return "0"
    if n <= 3:
        return "1-3"
    if n <= 9:
        return "4-9"
    return "10+"


def contextual_features(end_ts, tz="UTC"):
    dt = local_datetime(end_ts, tz)
    wd = dt.weekday()
    h = dt.hour
    return {
        "weekday": wd,
        "time_period": time_period(h),
        "sin_weekday": math.sin(2 * math.pi * wd / 7),
        "cos_weekday": math.cos(2 * math.pi * wd / 7),
        "sin_time": math.sin(2 * math.pi * h / 24),
        "cos_time": math.cos(2 * math.pi * h / 24),
        "is_weekend": int(wd >= 5),
    }


def _modal(items, priority):
    if not items:
        return NONE
    counts = Counter(items)
    return max(priority, key=lambda v: (counts.get(v, 0), -priority.index(v)))


def _is_communication(app_id, catalog):
    return catalog.lookup(app_id)[1] in COMMUNICATION_UPPER


def notification_features(notifications, catalog):
    n = len(notifications)
    n_int = sum(1 for e in notifications if e.interacted)
    return {
        "num_noti": n,
        "num_noti_interacted": n_int,
        "noti_cat": count_bucket(n),
        "noti_intr_cat": count_bucket(n_int),
        "noti_interacted_pcg": n_int / n if n else 0.0,
        "num_communication": sum(1 for e in notifications if _is_communication(e.source_app_id, catalog)),
        "main_contact": _modal([e.sender_relationship for e in notifications], CONTACT_ORDER),
    }


def physical_features(events):
    kinds = [e.kind for e in events if e.kind in ACTIVE_KINDS]
    return {
        "nunique_activity": len(set(kinds)),
        "main_activity": _modal(kinds, ACTIVE_KINDS),
        "num_activity": len(kinds),
    }


def _ranked(totals):
    """Keys by descending total, ties alphabetical."""
    return [k for k, _ in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))]


def app_features(app_events, notifications, catalog, end_ts=None):
    durations = defaultdict(float)
    # fixed summation order keeps totals bit-identical under input permutation
    for e in sorted(app_events, key=lambda e: (e.timestamp, e.app_id, e.duration)):
        sub, _ = catalog.lookup(e.app_id)
        if sub == UNCATEGORIZED:
            continue
        stop = e.end if end_ts is None else min(e.end, end_ts)
        durations[sub] += max(stop - e.timestamp, 0.0)
    ranked = _ranked(durations)
    return {
        "nunique_app": len({e.app_id for e in app_events}),
        "num_app": len(app_events),
        "nunique_app_cat": len(durations),
        "app_noti": sum(1 for e in notifications if not _is_communication(e.source_app_id, catalog)),
        "nunique_app_noti": len({e.source_app_id for e in notifications}),
        "main_cat_app": ranked[0] if ranked else NONE,
        "second_cat_app": ranked[1] if len(ranked) > 1 else NONE,
    }


def activity_minutes(spans, start_ts, end_ts):
    """(minutes per label, number of clipped spans) inside ``[start, end)``."""
    minutes = defaultdict(float)
    count = 0
    for s in sorted(spans, key=lambda s: (s.start, s.end, s.label)):
        lo, hi = max(s.start, start_ts), min(s.end, end_ts)
        if hi > lo:
            minutes[s.label] += (hi - lo) / 60.0
            count += 1
    return dict(minutes), count


def activity_features(spans, start_ts, end_ts):
    minutes, count = activity_minutes(spans, start_ts, end_ts)
    total = (end_ts - start_ts) / 60.0
    ranked = _ranked(minutes)
    p = [minutes[k] / total for k in sorted(minutes)]
    uncovered = max(1.0 - sum(p), 0.0)
    entropy = -sum(x * math.log(x) for x in [*p, uncovered] if x > 0)
    return {
        "nunique_user_activity": len(minutes),
        "num_user_activity": count,
        "main_user_activity": ranked[0] if ranked else NONE,
        "sec_user_activity": ranked[1] if len(ranked) > 1 else NONE,
        "entropy_user_activity": max(entropy, 0.0),
    }


def window_features(window, catalog, tz="UTC"):
    feats = {}
    feats.update(contextual_features(window.end_ts, tz))
    feats.update(notification_features(window.notifications, catalog))
    feats.update(physical_features(window.physical))
    feats.update(app_features(window.app_events, window.notifications, catalog, window.end_ts))
    feats.update(activity_features(window.spans, window.start_ts, window.end_ts))
    return {k: feats[k] for k in FEATURES}


# -- encoding ----------------------------------------------------------------


class CodeBook:
    """Ordinal codes for categorical features: vocabulary index + 1, 0 = none."""

    def __init__(self, vocabularies):
        self.vocab = {k: list(v) for k, v in vocabularies.items()}
        self._index = {k: {c: i + 1 for i, c in enumerate(v)} for k, v in self.vocab.items()}

    @classmethod
    def build(cls, catalog, activity_names=()):
        subs = list(catalog.subcategories)
        acts = sorted(set(activity_names))
        return cls(
            {
                "time_period": TIME_PERIODS,
                "noti_cat": COUNT_BUCKETS,
                "noti_intr_cat": COUNT_BUCKETS,
                "main_contact": CONTACT_ORDER[:3],
                "main_activity": ACTIVE_KINDS,
                "main_cat_app": subs,
                "second_cat_app": subs,
                "main_user_activity": acts,
                "sec_user_activity": acts,
            }
        )

    @property
    def categorical(self):
        return list(self.vocab)

    def encode(self, feature, value):
        return self._index[feature].get(value, 0)

    def decode(self, feature, code):
        code = int(code)
        return self.vocab[feature][code - 1] if code > 0 else NONE

    def to_dict(self):
        return {"version": 1, "reserved": {"0": NONE}, "vocabularies": self.vocab}

    @classmethod
    def from_dict(cls, d):
        return cls(d["vocabularies"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class FeatureMatrix:
    X: np.ndarray
    feature_names: list
    valence: np.ndarray
    arousal: np.ndarray
    user_ids: np.ndarray
    end_ts: np.ndarray
    codebook: CodeBook | None = None

    def __len__(self):
        return len(self.X)

    def target(self, name):
        return {"valence": self.valence, "arousal": self.arousal}[name]

    def subset(self, rows):
        rows = np.asarray(rows)
        return FeatureMatrix(
            self.X[rows],
            list(self.feature_names),
            self.valence[rows],
            self.arousal[rows],
            self.user_ids[rows],
            self.end_ts[rows],
            self.codebook,
        )


def encode_row(feats, codebook):
    out = []
    for name in FEATURES:
        v = feats[name]
        out.append(float(codebook.encode(name, v)) if name in codebook.vocab else float(v))
    return out


def assemble_matrix(windows, feature_rows, labels, codebook):
    """Encode and stack; rows ordered by ``(user_id, end_ts)``."""
    if not len(windows) == len(feature_rows) == len(labels):
        raise ValueError("windows, feature rows and labels must align")
    order = sorted(range(len(labels)), key=lambda i: (labels[i].user_id, labels[i].timestamp, i))
    X = np.array([encode_row(feature_rows[i], codebook) for i in order], dtype=np.float64)
    if not len(order):
        X = np.zeros((0, len(FEATURES)))
    return FeatureMatrix(
        X,
        list(FEATURES),
        np.array([labels[i].valence for i in order], dtype=np.float64),
        np.array([labels[i].arousal for i in order], dtype=np.float64),
        np.array([labels[i].user_id for i in order], dtype=object),
        np.array([labels[i].timestamp for i in order], dtype=np.float64),
        codebook,
    )


def featurize(log, labels, catalog, timelines=None, activity_names=(), tz="UTC", minutes=WINDOW_MINUTES):
    windows = build_windows(log, labels, timelines, minutes)
    rows = [window_features(w, catalog, tz) for w in windows]
    codebook = CodeBook.build(catalog, activity_names)
    return assemble_matrix(windows, rows, labels, codebook)


def window_tallies(log, labels, catalog, timelines=None, minutes=60):
    """Minutes per activity and per upper app category in each lookback window.

    Returns ``(names, matrix)`` with one row per label row.
    """
    windows = build_windows(log, labels, timelines, minutes)
    per_row = []
    for w in windows:
        tally = {}
        acts, _ = activity_minutes(w.spans, w.start_ts, w.end_ts)
        for label, m in acts.items():
            tally[f"activity:{label}"] = m
        for e in w.app_events:
            _, upper = catalog.lookup(e.app_id)
            if upper == UNCATEGORIZED:
                continue
            key = f"app:{upper}"
            tally[key] = tally.get(key, 0.0) + max(min(e.end, w.end_ts) - e.timestamp, 0.0) / 60.0
        per_row.append(tally)
    names = sorted({k for t in per_row for k in t})
    M = np.array([[t.get(k, 0.0) for k in names] for t in per_row], dtype=np.float64)
    return names, M.reshape(len(per_row), len(names))


def daily_tallies(log, catalog, timelines=None, tz="UTC"):
    """Minutes per activity and per upper app category for each user-day.

    Returns ``(keys, names, matrix)`` where ``keys`` are sorted
    ``(user_id, day)`` pairs.
    """
    per_day = defaultdict(lambda: defaultdict(float))
    for (uid, day), spans in (timelines or {}).items():
        for sp in spans:
            per_day[(uid, day)][f"activity:{sp.label}"] += sp.minutes
    for e in log.app_events:
        _, upper = catalog.lookup(e.app_id)
        if upper == UNCATEGORIZED:
            continue
        key = (e.user_id, local_datetime(e.timestamp, tz).date().isoformat())
        per_day[key][f"app:{upper}"] += e.duration / 60.0
    keys = sorted(per_day)
    names = sorted({n for t in per_day.values() for n in t})
    M = np.array([[per_day[k].get(n, 0.0) for n in names] for k in keys], dtype=np.float64)
    return keys, names, M.reshape(len(keys), len(names))


def write_features_csv(matrix, path):
    import csv

    from .ingest import fmt_num

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*matrix.feature_names, "valence", "arousal", "user_id", "end_ts"])
        for i in range(len(matrix)):
            w.writerow(
                [
                    *(repr(float(x)) for x in matrix.X[i]),
                    fmt_num(matrix.valence[i]),
                    fmt_num(matrix.arousal[i]),
                    matrix.user_ids[i],
                    fmt_num(matrix.end_ts[i]),
                ]
            )


def read_features_csv(path, codebook=None):
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    names = header[:-4]
    X = np.array([[float(v) for v in r[: len(names)]] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
    return FeatureMatrix(
        X,
        names,
        np.array([float(r[-4]) for r in rows]),
        np.array([float(r[-3]) for r in rows]),
        np.array([r[-2] for r in rows], dtype=object),
        np.array([float(r[-1]) for r in rows]),
        codebook,
    )
