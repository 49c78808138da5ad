"""Event-log data model, file parsing/serialisation and app filtering.

File layout (one directory per study)::

    app_events.csv     user_id,timestamp,app_id,duration_s
    notifications.csv  user_id,timestamp,source_app_id,interacted,relationship
    physical.csv       user_id,timestamp,kind
    esm.jsonl          {user_id, timestamp, valence, arousal, social_role, valid}
    users.jsonl        {user_id, work_start_hour, sex, age}
    eod.jsonl          {user_id, day, productivity, interruptions}   (optional)
    catalog.json       app -> subcategory, subcategory -> upper category

Timestamps are UTC epoch seconds.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime
from zoneinfo import ZoneInfo

RELATIONSHIPS = ("family", "friend", "work", "none")
ACTIVITY_KINDS = ("bicycling", "walking", "running", "still", "other")
SOCIAL_ROLES = ("work", "private", "both")

APP_HEADER = ["user_id", "timestamp", "app_id", "duration_s"]
NOTI_HEADER = ["user_id", "timestamp", "source_app_id", "interacted", "relationship"]
PHYS_HEADER = ["user_id", "timestamp", "kind"]

FILE_KINDS = {
    "app_events.csv": "app",
    "notifications.csv": "noti",
    "physical.csv": "phys",
    "esm.jsonl": "esm",
    "users.jsonl": "users",
    "eod.jsonl": "eod",
}


class IngestError(Exception):
    """A file could not be read at all (as opposed to a bad row)."""


@dataclass(frozen=True, slots=True)
class AppEvent:
    user_id: str
    timestamp: float
    app_id: str
    duration: float

    @property
    def end(self):
        return self.timestamp + self.duration


@dataclass(frozen=True, slots=True)
class NotificationEvent:
    user_id: str
    timestamp: float
    source_app_id: str
    interacted: bool
    sender_relationship: str


@dataclass(frozen=True, slots=True)
class PhysicalActivityEvent:
    user_id: str
    timestamp: float
    kind: str


@dataclass(frozen=True, slots=True)
class EsmResponse:
    user_id: str
    timestamp: float
    valence: int | None
    arousal: int | None
    social_role: str | None
    valid: bool


@dataclass(frozen=True, slots=True)
class EndOfDaySurvey:
    user_id: str
    day: str
    productivity: float | None
    interruptions: float | None


@dataclass(frozen=True)
class UserInfo:
    user_id: str
    work_start_hour: float | None = None
    sex: str | None = None
    age: int | None = None


@dataclass(frozen=True)
class Rejection:
    file: str
    line: int
    reason: str


@dataclass
class EventLog:
    users: set = field(default_factory=set)
    app_events: list = field(default_factory=list)
    notification_events: list = field(default_factory=list)
    activity_events: list = field(default_factory=list)
    esm_responses: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    eod_surveys: list = field(default_factory=list)
    rejections: list = field(default_factory=list)

    def n_events(self):
        return (
            len(self.app_events)
            + len(self.notification_events)
            + len(self.activity_events)
            + len(self.esm_responses)
        )

    def by_user(self, attr):
        out = defaultdict(list)
        for ev in getattr(self, attr):
            out[ev.user_id].append(ev)
        return out


# -- parsing -----------------------------------------------------------------


class _RowError(ValueError):
    pass


def _num(raw, what):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise _RowError(f"bad {what}: {raw!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise _RowError(f"bad {what}: {raw!r}")
    return v


def _bool(raw):
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes"):
        return True
    if s in ("0", "false", "no"):
        return False
    raise _RowError(f"bad boolean: {raw!r}")


def _enum(raw, allowed, what):
    if raw not in allowed:
        raise _RowError(f"unknown {what}: {raw!r}")
    return raw


def _score(raw):
    """ESM item: int 1..5, or None when missing/out of range."""
    if raw is None or raw == "":
        return None
    try:
        v = float(raw)
    except (TypeError, ValueError):
        return None
    if not v.is_integer() or not 1 <= v <= 5:
        return None
    return int(v)


class _Window:
    def __init__(self, window):
        self.lo, self.hi = window if window is not None else (None, None)

    def check(self, ts):
        if (self.lo is not None and ts < self.lo) or (self.hi is not None and ts > self.hi):
            raise _RowError("timestamp outside study window")
        return ts


def _csv_rows(path, header):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [c.strip() for c in first] != header:
            raise IngestError(f"{path}: expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                yield lineno, None
            else:
                yield lineno, dict(zip(header, row))


def _jsonl_rows(path):
    try:
        fh = open(path)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                yield lineno, None
                continue
            yield lineno, obj if isinstance(obj, dict) else None


def _parse_app(row, win):
    duration = _num(row["duration_s"], "duration")
    if duration < 0:
        raise _RowError("negative duration")
    if not row["user_id"] or not row["app_id"]:
        raise _RowError("missing id")
    return AppEvent(row["user_id"], win.check(_num(row["timestamp"], "timestamp")), row["app_id"], duration)


def _parse_noti(row, win):
    return NotificationEvent(
        row["user_id"],
        win.check(_num(row["timestamp"], "timestamp")),
        row["source_app_id"],
        _bool(row["interacted"]),
        _enum(row["relationship"], RELATIONSHIPS, "relationship"),
    )


def _parse_phys(row, win):
    return PhysicalActivityEvent(
        row["user_id"],
        win.check(_num(row["timestamp"], "timestamp")),
        _enum(row["kind"], ACTIVITY_KINDS, "activity kind"),
    )


def _parse_esm(obj, win):
    if not obj.get("user_id"):
        raise _RowError("missing user_id")
    ts = win.check(_num(obj.get("timestamp"), "timestamp"))
    role = obj.get("social_role")
    if role is not None:
        _enum(role, SOCIAL_ROLES, "social_role")
    valence = _score(obj.get("valence"))
    arousal = _score(obj.get("arousal"))
    flagged = obj.get("valid", True)
    if not isinstance(flagged, bool):
        flagged = _bool(flagged)
    valid = bool(flagged) and valence is not None and arousal is not None and role is not None
    return EsmResponse(obj["user_id"], ts, valence, arousal, role, valid)


def _parse_user(obj, win):
    if not obj.get("user_id"):
        raise _RowError("missing user_id")
    ws = obj.get("work_start_hour")
    age = obj.get("age")
    return UserInfo(
        obj["user_id"],
        None if ws is None else _num(ws, "work_start_hour"),
        obj.get("sex"),
        None if age is None else int(_num(age, "age")),
    )


def _parse_eod(obj, win):
    if not obj.get("user_id") or not obj.get("day"):
        raise _RowError("missing user_id/day")
    p, i = obj.get("productivity"), obj.get("interruptions")
    return EndOfDaySurvey(
        obj["user_id"],
        str(obj["day"]),
        None if p is None else _num(p, "productivity"),
        None if i is None else _num(i, "interruptions"),
    )


def _kind_of(path):
    name = os.path.basename(path)
    if name not in FILE_KINDS:
        raise IngestError(f"unrecognised input file {name!r}")
    return FILE_KINDS[name]


def parse_event_log(paths, catalog=None, window=None):
    """Parse and validate input files into a time-ordered :class:`EventLog`.

    Bad rows never abort the parse: they land in ``log.rejections`` with a
    reason. ``window`` is an optional ``(start, end)`` epoch range. ``catalog``
    is accepted for interface symmetry; app ids outside it are kept here and
    resolved to Uncategorized downstream.
    """
    win = _Window(window)
    buckets = {k: [] for k in ("app", "noti", "phys", "esm", "users", "eod")}
    rejections = []
    parsers = {
        "app": (_parse_app, APP_HEADER),
        "noti": (_parse_noti, NOTI_HEADER),
        "phys": (_parse_phys, PHYS_HEADER),
        "esm": (_parse_esm, None),
        "users": (_parse_user, None),
        "eod": (_parse_eod, None),
    }
    for path in sorted(paths, key=lambda p: (_kind_of(p), str(p))):
        kind = _kind_of(path)
        parse, header = parsers[kind]
        rows = _csv_rows(path, header) if header else _jsonl_rows(path)
        fname = os.path.basename(path)
        for lineno, row in rows:
            if row is None:
                rejections.append(Rejection(fname, lineno, "malformed row"))
                continue
            try:
                buckets[kind].append(parse(row, win))
            except _RowError as exc:
                rejections.append(Rejection(fname, lineno, str(exc)))

    metadata = {u.user_id: u for u in buckets["users"]}
    users = set(metadata)
    for kind in ("app", "noti", "phys", "esm", "eod"):
        users.update(ev.user_id for ev in buckets[kind])

    def ordered(events):
        return sorted(events, key=lambda e: (e.timestamp, e.user_id))

    return EventLog(
        users=users,
        app_events=ordered(buckets["app"]),
        notification_events=ordered(buckets["noti"]),
        activity_events=ordered(buckets["phys"]),
        esm_responses=ordered(buckets["esm"]),
        metadata=metadata,
        eod_surveys=sorted(buckets["eod"], key=lambda e: (e.day, e.user_id)),
        rejections=rejections,
    )


def input_paths(directory):
    """The recognised input files present in ``directory``."""
    return [
        os.path.join(directory, name)
        for name in FILE_KINDS
        if os.path.exists(os.path.join(directory, name))
    ]


# -- serialisation -----------------------------------------------------------


def fmt_num(x):
    if x is None:
        return ""
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def _jnum(x):
    if x is None:
        return None
    return int(x) if float(x).is_integer() else float(x)


def write_event_log(log, directory):
    """Write ``log`` in the on-disk schema; the inverse of :func:`parse_event_log`."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "app_events.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(APP_HEADER)
        for e in log.app_events:
            w.writerow([e.user_id, fmt_num(e.timestamp), e.app_id, fmt_num(e.duration)])
    with open(os.path.join(directory, "notifications.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NOTI_HEADER)
        for e in log.notification_events:
            w.writerow(
                [e.user_id, fmt_num(e.timestamp), e.source_app_id, int(e.interacted), e.sender_relationship]
            )
    with open(os.path.join(directory, "physical.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PHYS_HEADER)
        for e in log.activity_events:
            w.writerow([e.user_id, fmt_num(e.timestamp), e.kind])
    with open(os.path.join(directory, "esm.jsonl"), "w") as fh:
        for e in log.esm_responses:
            rec = {
                "user_id": e.user_id,
                "timestamp": _jnum(e.timestamp),
                "valence": e.valence,
                "arousal": e.arousal,
                "social_role": e.social_role,
                "valid": e.valid,
            }
            fh.write(json.dumps(rec) + "\n")
    with open(os.path.join(directory, "users.jsonl"), "w") as fh:
        for uid in sorted(log.users):
            u = log.metadata.get(uid, UserInfo(uid))
            rec = {"user_id": uid, "work_start_hour": _jnum(u.work_start_hour), "sex": u.sex, "age": u.age}
            fh.write(json.dumps(rec) + "\n")
    if log.eod_surveys:
        with open(os.path.join(directory, "eod.jsonl"), "w") as fh:
            for e in log.eod_surveys:
                rec = {
                    "user_id": e.user_id,
                    "day": e.day,
                    "productivity": _jnum(e.productivity),
                    "interruptions": _jnum(e.interruptions),
                }
                fh.write(json.dumps(rec) + "\n")


def write_rejections(rejections, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "line", "reason"])
        for r in rejections:
            w.writerow([r.file, r.line, r.reason])


# -- filtering and labels ----------------------------------------------------


def app_usage_totals(log):
    totals = defaultdict(float)
    for e in log.app_events:
        totals[e.app_id] += e.duration
    return dict(totals)


def filter_low_usage_apps(log, threshold=3600.0):
    """Drop every app event whose app has < ``threshold`` s of total usage."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    totals = app_usage_totals(log)
    keep = {app for app, total in totals.items() if total >= threshold}
    return replace(log, app_events=[e for e in log.app_events if e.app_id in keep])


@dataclass(frozen=True)
class LabelRow:
    user_id: str
    timestamp: float
    valence: int
    arousal: int


def attach_labels(log):
    """Valid ESM responses as label rows, plus the number excluded."""
    rows = [
        LabelRow(e.user_id, e.timestamp, e.valence, e.arousal)
        for e in log.esm_responses
        if e.valid
    ]
    return rows, len(log.esm_responses) - len(rows)


def local_datetime(ts, tz):
    if isinstance(tz, str):
        tz = ZoneInfo(tz)
    return datetime.fromtimestamp(ts, tz)


def local_day(ts, tz):
    return local_datetime(ts, tz).date()
