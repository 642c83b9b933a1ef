import csv
import io
import json
import math
import shutil
import subprocess

import jsonschema
import pytest

from conftest import DARFIELD, good_phone_intervals, bad_phone_intervals, interval_record
from eewsim.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main, truth_path
from eewsim.formats import DETECTION_SCHEMA, METRICS_COLUMNS, TRIGGER_SCHEMA, TRUTH_SCHEMA, read_jsonl
from eewsim.geo import haversine_km

NOISE_FREE = {
    "seed": 3,
    "earthquake": {"lat": -43.55, "lon": 172.17, "depth_km": 0.0, "mag": 6.0, "origin_epoch": 1.0e9},
    "region": {"bbox": {"lat_min": -44.05, "lat_max": -43.05, "lon_min": 171.57, "lon_max": 172.77},
               "phone_count": 300},
    "physics": {"pga_sigma_log10": 0.0},
    "phones": {"offset_scale_s": 0.0, "diurnal": [[0.0, 1.0]], "k_steepness": math.inf,
               "quality_mixture": [{"probability": 1.0, "weight": 1.0, "threshold_log10": -3.0,
                                    "delay_s": [0.0, 0.0]}]},
    "noise": {"fp_rate_per_phone_hour": 0.0},
    "cities": [{"name": "Christchurch", "lat": -43.532, "lon": 172.637}],
    "snapshots_s": [3.2, 5.2],
}


def write_scenario(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture
def noise_free(tmp_path):
    return write_scenario(tmp_path, NOISE_FREE)


@pytest.fixture
def small_darfield(tmp_path):
    doc = json.loads(DARFIELD.read_text())
    doc["region"]["phone_count"] = 1500
    return write_scenario(tmp_path, doc, "darfield_small.json")


def validate(doc, schema):
    jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)


# ---------------------------------------------------------------- simulate


def test_simulate_writes_sorted_valid_stream(tmp_path, small_darfield):
    out = tmp_path / "trig.jsonl"
    assert main(["simulate", "--scenario", str(small_darfield), "--out", str(out)]) == EXIT_OK
    rows = read_jsonl(out)
    assert rows
    for r in rows:
        validate(r, TRIGGER_SCHEMA)
    assert [r["t"] for r in rows] == sorted(r["t"] for r in rows)
    truth = json.loads(truth_path(out).read_text())
    validate(truth, TRUTH_SCHEMA)
    assert truth["n_event_triggers"] + truth["n_false_triggers"] == len(rows)


def test_simulate_byte_identical(tmp_path, small_darfield):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        assert main(["simulate", "--scenario", str(small_darfield), "--out", str(p), "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert truth_path(a).read_bytes() == truth_path(b).read_bytes()


def test_simulate_seed_changes_output(tmp_path, small_darfield):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["simulate", "--scenario", str(small_darfield), "--out", str(a), "--seed", "1"])
    main(["simulate", "--scenario", str(small_darfield), "--out", str(b), "--seed", "2"])
    assert a.read_bytes() != b.read_bytes()


def test_simulate_penetration_zero(tmp_path):
    doc = json.loads(DARFIELD.read_text())
    doc["region"].pop("phone_count")
    doc["region"]["penetration"] = 0.0
    out = tmp_path / "t.jsonl"
    assert main(["simulate", "--scenario", str(write_scenario(tmp_path, doc)), "--out", str(out)]) == EXIT_OK
    assert out.read_text() == ""


def test_truth_path():
    assert truth_path("runs/x.jsonl").name == "x.truth.json"


# ---------------------------------------------------------------- detect


def test_detect_empty_file(tmp_path, noise_free):
    trig, det = tmp_path / "t.jsonl", tmp_path / "d.jsonl"
    trig.write_text("")
    assert main(["detect", "--scenario", str(noise_free), "--triggers", str(trig), "--out", str(det)]) == 0
    assert det.read_text() == ""


def test_round_trip_noise_free(tmp_path, noise_free):
    trig, det = tmp_path / "t.jsonl", tmp_path / "d.jsonl"
    assert main(["simulate", "--scenario", str(noise_free), "--out", str(trig)]) == 0
    assert main(["detect", "--scenario", str(noise_free), "--triggers", str(trig), "--out", str(det)]) == 0
    rows = read_jsonl(det)
    assert len(rows) == 1
    validate(rows[0], DETECTION_SCHEMA)
    fin = rows[0]["final"]
    assert haversine_km(-43.55, 172.17, fin["lat"], fin["lon"]) <= 2.0
    assert abs(fin["t0"] - 1.0e9) <= 0.5
    assert [c["name"] for c in rows[0]["cities"]] == ["Christchurch"]


def test_detect_unsorted_input(tmp_path, noise_free):
    trig, det = tmp_path / "t.jsonl", tmp_path / "d.jsonl"
    main(["simulate", "--scenario", str(noise_free), "--out", str(trig)])
    lines = trig.read_text().splitlines()
    trig.write_text("\n".join(lines[::-1]) + "\n")
    assert main(["detect", "--scenario", str(noise_free), "--triggers", str(trig), "--out", str(det)]) != 0
    assert not det.exists()


def test_detect_never_reads_provenance(tmp_path, noise_free):
    trig, det_a, det_b = tmp_path / "t.jsonl", tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["simulate", "--scenario", str(noise_free), "--out", str(trig)])
    main(["detect", "--scenario", str(noise_free), "--triggers", str(trig), "--out", str(det_a)])
    stripped = tmp_path / "s.jsonl"
    stripped.write_text("".join(
        json.dumps({k: v for k, v in r.items() if k != "src"}) + "\n" for r in read_jsonl(trig)))
    main(["detect", "--scenario", str(noise_free), "--triggers", str(stripped), "--out", str(det_b)])
    assert det_a.read_bytes() == det_b.read_bytes()


# ---------------------------------------------------------------- run


def test_run_outputs(tmp_path, small_darfield):
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(small_darfield), "--out", str(out), "--seed", "4"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(["triggers.jsonl", "truth.json", "detections.jsonl", "metrics.csv",
                            "snapshot_3.2s.geojson", "snapshot_5.2s.geojson"])
    truth = json.loads((out / "truth.json").read_text())
    for t in (3.2, 5.2):
        snap = json.loads((out / f"snapshot_{t:g}s.geojson").read_text())
        kinds = [f["properties"]["kind"] for f in snap["features"]]
        assert kinds.count("phone") == truth["n_phones"]
        assert kinds.count("wavefront") == 2
        assert 1 <= kinds.count("epicenter") <= 2
        assert len(kinds) <= truth["n_phones"] + 4
        p_wave = next(f for f in snap["features"] if f["properties"].get("wave") == "P")
        assert p_wave["properties"]["radius_km"] == pytest.approx(6.0 * t)
        ring = p_wave["geometry"]["coordinates"][0]
        assert ring[0] == ring[-1]
        for lon, lat in ring[:-1]:
            assert haversine_km(truth["lat"], truth["lon"], lat, lon) == pytest.approx(6.0 * t, abs=1e-6)
    rows = list(csv.reader(io.StringIO((out / "metrics.csv").read_text())))
    assert tuple(rows[0]) == METRICS_COLUMNS
    assert sum(r[0] == "summary" for r in rows) == 1 and len(rows) == 3
    for d in read_jsonl(out / "detections.jsonl"):
        validate(d, DETECTION_SCHEMA)


def test_snapshot_estimated_star_after_alert(tmp_path, noise_free):
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(noise_free), "--out", str(out)]) == 0
    det = read_jsonl(out / "detections.jsonl")
    assert len(det) == 1
    alert_rel = det[0]["t_alert"] - 1.0e9
    for t in (3.2, 5.2):
        snap = json.loads((out / f"snapshot_{t:g}s.geojson").read_text())
        stars = [f for f in snap["features"] if f["properties"]["kind"] == "epicenter"]
        assert len(stars) == (2 if t >= alert_rel else 1)


# ---------------------------------------------------------------- ensemble


def _summary_row(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return [r for r in rows if r[0] == "summary"][0]


def test_ensemble_single_equals_run(tmp_path, noise_free):
    e, r = tmp_path / "ens", tmp_path / "run"
    assert main(["ensemble", "--scenario", str(noise_free), "--out", str(e), "--runs", "1"]) == 0
    assert main(["run", "--scenario", str(noise_free), "--out", str(r)]) == 0
    assert (e / "metrics.csv").read_text() == (r / "metrics.csv").read_text()
    s = json.loads((e / "summary.json").read_text())
    assert s["runs"] == 1 and s["detection_rate"] == 1.0


def test_ensemble_repeatable_and_threads(tmp_path, small_darfield):
    outs = [tmp_path / "a", tmp_path / "b", tmp_path / "c"]
    for o, jobs in zip(outs, ("1", "1", "3")):
        assert main(["ensemble", "--scenario", str(small_darfield), "--out", str(o), "--runs", "3",
                     "--seed", "100", "--jobs", jobs]) == 0
    ref = (outs[0] / "metrics.csv").read_bytes()
    assert all((o / "metrics.csv").read_bytes() == ref for o in outs[1:])
    assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()
    seeds = [r[1] for r in csv.reader(io.StringIO(ref.decode()))][1:4]
    assert seeds == ["100", "101", "102"]


def test_ensemble_bad_runs(tmp_path, noise_free):
    assert main(["ensemble", "--scenario", str(noise_free), "--out", str(tmp_path), "--runs", "0"]) == EXIT_USAGE


# ---------------------------------------------------------------- quality


def write_waveform(tmp_path, rec, name="w.csv"):
    p = tmp_path / name
    rows = ["t,x,y,z"] + [",".join(repr(float(v)) for v in r) for r in zip(rec.t, rec.x, rec.y, rec.z)]
    p.write_text("\n".join(rows) + "\n")
    return p


@pytest.mark.parametrize("intervals,sigma,seed,check", [
    (good_phone_intervals(), 0.005, 11, lambda w: w >= 0.9),
    (bad_phone_intervals(), 0.03, 12, lambda w: w <= 0.05),
])
def test_quality_fixtures(tmp_path, capsys, intervals, sigma, seed, check):
    rec = interval_record(intervals, sigma, seed)
    p = write_waveform(tmp_path, rec)
    assert main(["quality", str(p), "--trigger-time", repr(rec.trigger_time)]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert check(rep["weight"])
    assert set(rep) == {"noise_std", "gaps_gt_1s", "gaps_gt_2s", "interval_p25", "interval_p50",
                        "interval_p75", "weight"}


def test_quality_missing_header(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_text("0,0,0,0\n1,0,0,0\n")
    assert main(["quality", str(p)]) == EXIT_VALIDATION
    assert "line 1" in capsys.readouterr().err


def test_quality_bad_line_number(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_text("t,x,y,z\n0,0,0,0\n1,0,0,0\n2,0,oops,0\n")
    assert main(["quality", str(p)]) == EXIT_VALIDATION
    assert "line 4" in capsys.readouterr().err


def test_quality_too_short_is_runtime(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("t,x,y,z\n0,0,0,0\n1,0,0,0\n")
    assert main(["quality", str(p), "--trigger-time", "0.5"]) == EXIT_RUNTIME


# ---------------------------------------------------------------- exit codes


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["simulate", "--scenario", "x.json"]) == EXIT_USAGE


def test_validation_error_names_field(tmp_path, capsys):
    doc = json.loads(DARFIELD.read_text())
    doc["physics"]["vs"] = -1
    p = write_scenario(tmp_path, doc)
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "t.jsonl")]) == EXIT_VALIDATION
    assert "physics.vs" in capsys.readouterr().err


def test_missing_scenario_file(tmp_path):
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "t.jsonl")]) == EXIT_RUNTIME


@pytest.mark.skipif(shutil.which("eewsim") is None, reason="console script not installed")
def test_console_script(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("a,b\n")
    r = subprocess.run(["eewsim", "quality", str(p)], capture_output=True, text=True)
    assert r.returncode == EXIT_VALIDATION
    r = subprocess.run(["eewsim", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("eewsim ")
