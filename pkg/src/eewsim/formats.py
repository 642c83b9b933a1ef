"""On-disk formats: trigger and detection JSON Lines, truth sidecar, metrics CSV.

Each JSON format has a published JSON Schema here; writers are atomic
(temporary file in the target directory, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

from eewsim.errors import ContractError, EEWError, ParseError
from eewsim.geo import GeoPoint
from eewsim.metrics import RunMetrics, Summary
from eewsim.trigger import TriggerMessage

_NUM = {"type": "number"}
_NULLABLE_NUM = {"type": ["number", "null"]}

TRIGGER_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "trigger",
    "type": "object",
    "required": ["phone_id", "lat", "lon", "t", "amp", "w"],
    "additionalProperties": False,
    "properties": {
        "phone_id": {"type": "integer"},
        "lat": {"type": "number", "minimum": -90, "maximum": 90},
        "lon": {"type": "number", "minimum": -180, "maximum": 180},
        "t": _NUM,
        "amp": {"type": "number", "minimum": 0},
        "w": {"type": "number", "minimum": 0, "maximum": 1},
        "src": {"enum": ["p", "s", "fp"]},
    },
}

_ESTIMATE_PROPS = {
    "lat": {"type": "number", "minimum": -90, "maximum": 90},
    "lon": {"type": "number", "minimum": -180, "maximum": 180},
    "t0": _NUM,
    "mag": _NULLABLE_NUM,
    "n": {"type": "integer", "minimum": 2},
    "weight": {"type": "number", "minimum": 0},
    "members": {"type": "array", "items": {"type": "integer"}},
}

DETECTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "detection",
    "type": "object",
    "required": ["t_alert", "lat", "lon", "t0", "mag", "n", "weight", "members", "cities", "final"],
    "properties": {
        "t_alert": _NUM,
        **_ESTIMATE_PROPS,
        "consistency": {"type": "number", "minimum": 0, "maximum": 1},
        "mag_error": {"type": ["string", "null"]},
        "cities": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "mmi", "warn_s"],
                "properties": {"name": {"type": "string"}, "mmi": _NULLABLE_NUM, "warn_s": _NUM},
            },
        },
        "final": {
            "type": "object",
            "required": list(_ESTIMATE_PROPS),
            "properties": _ESTIMATE_PROPS,
        },
    },
}

TRUTH_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "truth",
    "type": "object",
    "required": ["lat", "lon", "depth_km", "mag", "origin_epoch", "local_hour", "seed",
                 "n_phones", "n_steady", "n_event_triggers", "n_false_triggers"],
    "properties": {
        "lat": _NUM, "lon": _NUM, "depth_km": _NUM, "mag": _NUM, "origin_epoch": _NUM,
        "local_hour": _NUM, "seed": {"type": "integer"},
        "n_phones": {"type": "integer"}, "n_steady": {"type": "integer"},
        "n_event_triggers": {"type": "integer"}, "n_false_triggers": {"type": "integer"},
    },
}

METRICS_COLUMNS = ("run", "seed", "detected", "latency_s", "p90_latency_s", "epicenter_error_km",
                   "origin_time_error_s", "magnitude_error", "false_alerts")


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def write_json(path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_jsonl(path, rows) -> None:
    _atomic_write(path, "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in rows))


# ----------------------------------------------------------------------------
# triggers


def trigger_to_dict(m: TriggerMessage, include_src: bool = True) -> dict:
    d = {"phone_id": m.phone_id, "lat": m.location.lat, "lon": m.location.lon,
         "t": m.t_report, "amp": m.amplitude, "w": m.weight}
    if include_src and m.provenance is not None:
        d["src"] = m.provenance
    return d


def trigger_from_dict(d: dict, keep_src: bool = False) -> TriggerMessage:
    missing = [k for k in TRIGGER_SCHEMA["required"] if k not in d]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    extra = set(d) - set(TRIGGER_SCHEMA["properties"])
    if extra:
        raise ValueError(f"unknown field(s) {', '.join(sorted(extra))}")
    if not isinstance(d["phone_id"], int) or isinstance(d["phone_id"], bool):
        raise ValueError("phone_id must be an integer")
    for k in ("lat", "lon", "t", "amp", "w"):
        if not isinstance(d[k], (int, float)) or isinstance(d[k], bool) or not math.isfinite(d[k]):
            raise ValueError(f"{k} must be a finite number")
    src = d.get("src")
    if src is not None and src not in ("p", "s", "fp"):
        raise ValueError(f"unknown src {src!r}")
    return TriggerMessage(d["phone_id"], GeoPoint(float(d["lat"]), float(d["lon"])), float(d["t"]),
                          float(d["amp"]), float(d["w"]), src if keep_src else None)


def write_triggers(path, stream, include_src: bool = True) -> None:
    write_jsonl(path, (trigger_to_dict(m, include_src) for m in stream))


def read_triggers(path, keep_src: bool = False) -> list[TriggerMessage]:
    """Parse a trigger file; provenance is dropped unless ``keep_src``.

    Raises :class:`ParseError` on malformed lines and :class:`ContractError`
    when the lines are not sorted by ``t``.
    """
    out = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                msg = trigger_from_dict(json.loads(line), keep_src)
            except (ValueError, TypeError, EEWError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            if out and msg.t_report < out[-1].t_report:
                raise ContractError(f"line {lineno}: trigger file is not sorted by t")
            out.append(msg)
    return out


# ----------------------------------------------------------------------------
# detections


def _estimate_dict(est, members) -> dict:
    return {"lat": est.epicenter.lat, "lon": est.epicenter.lon, "t0": est.origin_time,
            "mag": _num(est.magnitude), "n": est.n, "weight": est.weight, "members": list(members)}


def detection_to_dict(event, warnings=()) -> dict:
    d = {"t_alert": event.t_alert, **_estimate_dict(event.first, event.alert_members)}
    d["consistency"] = event.first.consistency
    d["mag_error"] = event.first.magnitude_error
    d["cities"] = [{"name": w.name, "mmi": _num(w.predicted_mmi), "warn_s": w.warning_time}
                   for w in warnings]
    d["final"] = _estimate_dict(event.final, event.members)
    return d


def read_jsonl(path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ----------------------------------------------------------------------------
# metrics


def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(x)
    return x


def metrics_csv(runs, summary: Summary, seeds=None) -> str:
    """Per-run rows followed by one ``run=summary`` row.

    In the summary row ``detected`` is the detection rate, ``latency_s`` the
    median latency, the error columns are medians of absolute errors and
    ``false_alerts`` is the total.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for i, r in enumerate(runs):
        seed = "" if seeds is None else seeds[i]
        w.writerow([_fmt(v) for v in (i, seed, r.detected, r.detection_latency, math.nan,
                                      r.epicenter_error, r.origin_time_error, r.magnitude_error,
                                      r.false_alerts)])
    s = summary
    w.writerow([_fmt(v) for v in ("summary", "", s.detection_rate, s.median_latency_s,
                                  s.p90_latency_s, s.median_epicenter_error_km,
                                  s.median_abs_origin_time_error_s, s.median_abs_magnitude_error,
                                  s.false_alerts)])
    return buf.getvalue()


def write_metrics(path, runs: list[RunMetrics], summary: Summary, seeds=None) -> None:
    _atomic_write(path, metrics_csv(runs, summary, seeds))
