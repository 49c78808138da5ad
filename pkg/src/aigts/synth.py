"""Synthetic event logs with planted structure.

Each user-day is split into regimes; inside a regime app sessions are drawn
from that regime's subcategory distribution. ESM labels are a clipped,
rounded linear readout of the window features plus Gaussian noise, so every
downstream stage has a known answer to recover.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np

from .catalog import COMMUNICATION_UPPER, default_catalog
from .evaluation import cohort_of
from .featurization import build_windows, window_features
from .ingest import (
    ACTIVITY_KINDS,
    AppEvent,
    EndOfDaySurvey,
    EsmResponse,
    EventLog,
    LabelRow,
    NotificationEvent,
    PhysicalActivityEvent,
    UserInfo,
)

NUMERIC_FEATURES = (
    "weekday",
    "sin_weekday",
    "cos_weekday",
    "sin_time",
    "cos_time",
    "is_weekend",
    "num_noti",
    "num_noti_interacted",
    "noti_interacted_pcg",
    "num_communication",
    "nunique_activity",
    "num_activity",
    "nunique_app",
    "num_app",
    "nunique_app_cat",
    "app_noti",
    "nunique_app_noti",
)

DEFAULT_VALENCE = {"sin_time": 0.9, "is_weekend": 0.9, "num_noti": -0.15, "nunique_app_cat": 0.15}
DEFAULT_AROUSAL = {"cos_time": -0.8, "num_activity": 0.35, "num_app": 0.02}
WORK_STARTS = (7, 8, 9, 10, 12, 16, 17)


@dataclass
class SynthConfig:
    n_users: int = 25
    n_days: int = 21
    start_date: str = "2024-01-01"
    tz: str = "UTC"
    day_start_hour: float = 8.0
    day_hours: float = 12.0
    bin_width: float = 60.0
    n_regimes: int = 3
    n_archetypes: int = 4
    archetype_support: int = 4
    disjoint: bool = False
    regime_distributions: list | None = None
    min_regime_bins: int = 30
    activity_prob: float = 0.7
    mean_session_bins: float = 3.0
    noise: float = 0.05
    noti_per_hour: float = 4.0
    phys_per_hour: float = 0.6
    esm_every_minutes: float = 90.0
    response_rate: float = 0.7
    invalid_prob: float = 0.01
    valence_weights: dict = field(default_factory=lambda: dict(DEFAULT_VALENCE))
    arousal_weights: dict = field(default_factory=lambda: dict(DEFAULT_AROUSAL))
    valence_bias: float = 3.0
    arousal_bias: float = 2.5
    label_sigma: float = 0.5
    cohort_weights: dict = field(default_factory=dict)
    work_starts: tuple = WORK_STARTS

    def validate(self, n_channels):
        if self.n_users < 1 or self.n_days < 1:
            raise ValueError("need at least one user and one day")
        if self.n_regimes < 1:
            raise ValueError("n_regimes must be >= 1")
        for p in ("activity_prob", "noise", "response_rate", "invalid_prob"):
            v = getattr(self, p)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{p} must lie in [0, 1]")
        if self.label_sigma < 0:
            raise ValueError("label_sigma must be >= 0")
        if self.regime_distributions is not None:
            for row in self.regime_distributions:
                row = np.asarray(row, dtype=np.float64)
                if row.shape != (n_channels,) or (row < 0).any() or abs(row.sum() - 1.0) > 1e-9:
                    raise ValueError("each regime distribution must be non-negative over all channels and sum to 1")
        n_bins = int(self.day_hours * 3600 / self.bin_width)
        if self.n_regimes * self.min_regime_bins > n_bins:
            raise ValueError("day too short for the requested regimes")
        weights = [self.valence_weights, self.arousal_weights]
        for w in self.cohort_weights.values():
            weights.extend([w.get("valence", {}), w.get("arousal", {})])
        for w in weights:
            for name, c in w.items():
                if name not in NUMERIC_FEATURES:
                    raise ValueError(f"label weight on unsupported feature {name!r}")
                if not math.isfinite(c):
                    raise ValueError("label weights must be finite")


@dataclass
class SynthGroundTruth:
    """Planted answers: regime layout per user-day and the label model."""

    channel_names: list
    bin_width: float
    archetypes: list
    boundaries: dict = field(default_factory=dict)
    boundary_times: dict = field(default_factory=dict)
    regime_ids: dict = field(default_factory=dict)
    day_starts: dict = field(default_factory=dict)
    valence_weights: dict = field(default_factory=dict)
    arousal_weights: dict = field(default_factory=dict)
    valence_bias: float = 3.0
    arousal_bias: float = 3.0
    label_sigma: float = 0.5
    cohort_weights: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for key in ("boundaries", "boundary_times", "regime_ids", "day_starts"):
            d[key] = {f"{u}|{day}": v for (u, day), v in sorted(getattr(self, key).items())}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("boundaries", "boundary_times", "regime_ids", "day_starts"):
            d[key] = {tuple(k.split("|", 1)): v for k, v in d.get(key, {}).items()}
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def make_archetypes(n_channels, n_archetypes, support, disjoint, rng):
    """Sparse regime distributions over channels."""
    perm = rng.permutation(n_channels)
    out = []
    for a in range(n_archetypes):
        if disjoint:
            chans = perm[a * support : (a + 1) * support]
            if len(chans) < support:
                raise ValueError("not enough channels for disjoint supports")
        else:
            chans = rng.choice(n_channels, size=support, replace=False)
        p = np.zeros(n_channels)
        p[np.sort(chans)] = rng.dirichlet(np.full(support, 2.0))
        out.append(p)
    return out


def planted_cuts(n_bins, n_regimes, min_len, rng):
    """Random sorted cut positions with every regime at least ``min_len`` long."""
    slack = n_bins - n_regimes * min_len
    extra = np.sort(rng.integers(0, slack + 1, size=n_regimes - 1))
    return [int(min_len * (r + 1) + extra[r]) for r in range(n_regimes - 1)]


def planted_series(bins_per_regime, supports, n_channels, noise=0.0, rng=None, per_bin=1):
    """Indicator matrix with one regime per entry of ``supports``.

    Every bin activates ``per_bin`` channels from its regime's support. With
    probability ``noise`` a bin is replaced by a uniformly random channel.
    Returns ``(X, cuts, regime_of_bin)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lens = [bins_per_regime] * len(supports) if np.isscalar(bins_per_regime) else list(bins_per_regime)
    n = int(sum(lens))
    X = np.zeros((n, n_channels), dtype=np.int8)
    regime = np.repeat(np.arange(len(lens)), lens)
    for b in range(n):
        sup = np.asarray(supports[regime[b]])
        if noise > 0 and rng.random() < noise:
            X[b, rng.integers(n_channels)] = 1
        else:
            X[b, rng.choice(sup, size=min(per_bin, len(sup)), replace=False)] = 1
    return X, [int(c) for c in np.cumsum(lens)[:-1]], regime


def _score(x):
    """Round half up and clip to the 1..5 answer scale."""
    return float(min(max(math.floor(x + 0.5), 1), 5))


def _local_midnight(date_str, day, tz):
    base = datetime.fromisoformat(date_str).date().toordinal() + day
    d = datetime.fromordinal(base).replace(tzinfo=ZoneInfo(tz))
    return d.timestamp(), d.date().isoformat()


def _pick_app(catalog, sub, rng):
    apps = catalog.apps_in(sub)
    return apps[int(rng.integers(len(apps)))]


def _user_weights(cfg, info):
    cw = cfg.cohort_weights.get(cohort_of(info.work_start_hour) or "", None)
    if cw is None:
        return cfg.valence_weights, cfg.arousal_weights
    return cw.get("valence", {}), cw.get("arousal", {})


def label_readout(features, weights, bias):
    return bias + sum(c * float(features[name]) for name, c in sorted(weights.items()))


def generate_synthetic(config=None, seed=0, catalog=None):
    """Build ``(EventLog, SynthGroundTruth)``; bit-reproducible for a seed."""
    cfg = config or SynthConfig()
    catalog = catalog or default_catalog()
    channels = [s for s in catalog.subcategories if catalog.apps_in(s)]
    cfg.validate(len(channels))
    rng = np.random.default_rng(seed)

    if cfg.regime_distributions is not None:
        archetypes = [np.asarray(p, dtype=np.float64) for p in cfg.regime_distributions]
    else:
        archetypes = make_archetypes(len(channels), cfg.n_archetypes, cfg.archetype_support, cfg.disjoint, rng)
    truth = SynthGroundTruth(
        channel_names=channels,
        bin_width=cfg.bin_width,
        archetypes=[a.tolist() for a in archetypes],
        valence_weights=dict(cfg.valence_weights),
        arousal_weights=dict(cfg.arousal_weights),
        valence_bias=cfg.valence_bias,
        arousal_bias=cfg.arousal_bias,
        label_sigma=cfg.label_sigma,
        cohort_weights={k: dict(v) for k, v in cfg.cohort_weights.items()},
    )

    noti_apps = sorted(catalog.app_to_sub)
    users = [f"u{i:02d}" for i in range(cfg.n_users)]
    log = EventLog(users=set(users))
    n_bins = int(cfg.day_hours * 3600 / cfg.bin_width)
    p_end = 1.0 / max(cfg.mean_session_bins, 1.0)
    esm_times = []

    for u in users:
        info = UserInfo(
            u,
            float(cfg.work_starts[int(rng.integers(len(cfg.work_starts)))]),
            "male" if rng.random() < 0.5 else "female",
            int(rng.integers(18, 40)),
        )
        log.metadata[u] = info
        noti_rate = cfg.noti_per_hour * rng.uniform(0.5, 1.5)
        for day in range(cfg.n_days):
            midnight, day_key = _local_midnight(cfg.start_date, day, cfg.tz)
            t_day = midnight + cfg.day_start_hour * 3600
            cuts = planted_cuts(n_bins, cfg.n_regimes, cfg.min_regime_bins, rng)
            regimes = []
            for _ in range(cfg.n_regimes):
                r = int(rng.integers(len(archetypes)))
                while regimes and len(archetypes) > 1 and r == regimes[-1]:
                    r = int(rng.integers(len(archetypes)))
                regimes.append(r)
            edges = [0, *cuts, n_bins]
            key = (u, day_key)
            truth.boundaries[key] = cuts
            truth.boundary_times[key] = [t_day + c * cfg.bin_width for c in cuts]
            truth.regime_ids[key] = regimes
            truth.day_starts[key] = t_day

            for r, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
                dist = archetypes[regimes[r]]
                b = lo
                first = True
                while b < hi:
                    # every regime opens with a session so its start is observable
                    if not first and rng.random() >= cfg.activity_prob:
                        b += 1
                        continue
                    first = False
                    length = min(int(rng.geometric(p_end)), hi - b)
                    if rng.random() < cfg.noise:
                        sub = channels[int(rng.integers(len(channels)))]
                    else:
                        sub = channels[int(rng.choice(len(channels), p=dist))]
                    t = t_day + b * cfg.bin_width
                    log.app_events.append(AppEvent(u, t, _pick_app(catalog, sub, rng), length * cfg.bin_width))
                    b += length

            hours = cfg.day_hours
            n_noti = int(rng.poisson(noti_rate * hours))
            for _ in range(n_noti):
                t = t_day + float(rng.integers(0, int(hours * 3600)))
                app = noti_apps[int(rng.integers(len(noti_apps)))]
                comm = catalog.lookup(app)[1] in COMMUNICATION_UPPER
                rel = ("family", "friend", "work")[int(rng.integers(3))] if comm else "none"
                log.notification_events.append(NotificationEvent(u, t, app, bool(rng.random() < 0.4), rel))
            for _ in range(int(rng.poisson(cfg.phys_per_hour * hours))):
                t = t_day + float(rng.integers(0, int(hours * 3600)))
                kind = ACTIVITY_KINDS[int(rng.integers(len(ACTIVITY_KINDS)))]
                log.activity_events.append(PhysicalActivityEvent(u, t, kind))

            # end-of-day survey: interruptions track the notification load
            prod = 3.0 + 0.5 * rng.standard_normal()
            intr = 1.0 + n_noti / (noti_rate * hours / 2.0) + 0.5 * rng.standard_normal()
            log.eod_surveys.append(EndOfDaySurvey(u, day_key, _score(prod), _score(intr)))

            step = cfg.esm_every_minutes * 60
            j = 1
            while j * step <= hours * 3600:
                if rng.random() < cfg.response_rate:
                    esm_times.append((u, t_day + j * step))
                j += 1

    # labels are a readout of the features the pipeline will later compute
    placeholder = [LabelRow(u, t, 0, 0) for u, t in esm_times]
    windows = build_windows(log, placeholder, None, cfg.esm_every_minutes)
    for (u, t), w in zip(esm_times, windows):
        feats = window_features(w, catalog, cfg.tz)
        vw, aw = _user_weights(cfg, log.metadata[u])
        scores = []
        for weights, bias in ((vw, cfg.valence_bias), (aw, cfg.arousal_bias)):
            raw = label_readout(feats, weights, bias) + cfg.label_sigma * rng.standard_normal()
            scores.append(int(_score(raw)))
        role = ("work", "private", "both")[int(rng.integers(3))]
        if rng.random() < cfg.invalid_prob:
            log.esm_responses.append(EsmResponse(u, t, None, scores[1], role, False))
        else:
            log.esm_responses.append(EsmResponse(u, t, scores[0], scores[1], role, True))

    for attr in ("app_events", "notification_events", "activity_events", "esm_responses"):
        getattr(log, attr).sort(key=lambda e: (e.timestamp, e.user_id))
    log.eod_surveys.sort(key=lambda e: (e.day, e.user_id))
    return log, truth


def one_regime_config(**kw):
    """A config with a single regime per day (handy for label-model checks)."""
    base = dict(n_regimes=1, min_regime_bins=1)
    base.update(kw)
    return SynthConfig(**base)


__all__ = [
    "DEFAULT_AROUSAL",
    "DEFAULT_VALENCE",
    "NUMERIC_FEATURES",
    "SynthConfig",
    "SynthGroundTruth",
    "generate_synthetic",
    "label_readout",
    "make_archetypes",
    "one_regime_config",
    "planted_cuts",
    "planted_series",
]
