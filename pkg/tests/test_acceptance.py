"""Exit criteria. Each test's docstring first line is its summary label."""
import json
import math
import random
import time

import numpy as np
import pytest

import hrv_oracle
from conftest import synth_series
from rppg_vitals.cli import run_cli
from rppg_vitals.errors import LineError, VitalsError
from rppg_vitals.identity import (
    EmbeddingGallery,
    EmbeddingRecord,
    dumps_gallery,
    enroll,
    identify,
    loads_gallery,
)
from rppg_vitals.pos import pos_pipeline
from rppg_vitals.service import ServiceConfig, make_server
from rppg_vitals.synth import synth_rr, synth_trace
from rppg_vitals.trace import parse_trace, serialize_trace
from rppg_vitals.vitals import (
    DEGENERATE_VARIABILITY,
    RrSeries,
    baevsky_si,
    compute_vitals,
    detect_peaks,
    hrv_metrics,
)

RATES = (48, 72, 90, 120, 180)


def rel_rms(a, b):
    a, b = np.asarray(a), np.asarray(b)
    ref = np.sqrt(np.mean(a * a))
    return np.sqrt(np.mean((a - b) ** 2)) / ref if ref > 0 else np.sqrt(np.mean(b * b))


# C1

@pytest.mark.parametrize("hr", RATES)
def test_c1_hr_recovery(hr):
    """C1 synthetic HR recovery: +-2 bpm noiseless, +-3 bpm at 0.5% noise, <= 1 s per trace"""
    s = synth_series(hr, 60, 30, noise=0.0, amplitude=0.01)
    t0 = time.perf_counter()
    rep = compute_vitals(s)
    elapsed = time.perf_counter() - t0
    assert abs(rep.hr_bpm - hr) <= 2.0
    assert elapsed <= 1.0
    for seed in range(10):
        s = synth_series(hr, 60, 30, noise=0.005, amplitude=0.01, seed=seed)
        t0 = time.perf_counter()
        rep = compute_vitals(s)
        elapsed = time.perf_counter() - t0
        assert abs(rep.hr_bpm - hr) <= 3.0, seed
        assert elapsed <= 1.0


# C2

def _report_close(a, b, rtol=1e-9):
    assert a.quality == b.quality
    assert a.hr_bpm == pytest.approx(b.hr_bpm, rel=rtol)
    assert len(a.rr) == len(b.rr)
    assert rel_rms(a.rr.intervals_ms, b.rr.intervals_ms) <= rtol
    for f in ("pnn50_pct", "rmssd_ms", "sdnn_ms", "stress_index"):
        x, y = getattr(a, f), getattr(b, f)
        assert (x is None) == (y is None), f
        if x is not None:
            assert y == pytest.approx(x, rel=rtol, abs=1e-9), f


def test_c2_gain_invariance():
    """C2 gain invariance: 100 traces x c in {0.1, 1, 3.7, 100}, pulse and report within 1e-9 rel RMS"""
    rng = random.Random(2024)
    for i in range(100):
        hr = rng.uniform(48, 180)
        s = synth_series(hr, rng.uniform(15, 40), 30, noise=rng.uniform(0, 0.005), seed=i,
                         amplitude=rng.uniform(0.005, 0.03))
        base_pulse = pos_pipeline(s).samples
        try:
            base = compute_vitals(s)
        except VitalsError as e:
            base = e
        for c in (0.1, 1.0, 3.7, 100.0):
            sc = s.scaled(c)
            assert rel_rms(base_pulse, pos_pipeline(sc).samples) <= 1e-9
            if isinstance(base, VitalsError):
                with pytest.raises(type(base)):
                    compute_vitals(sc)
            else:
                _report_close(base, compute_vitals(sc))


# C3

def test_c3_hrv_oracle_equivalence():
    """C3a HRV oracle equivalence: pnn50/rmssd/sdnn vs brute force on 1000 random RR series, 1e-9 rel"""
    rng = np.random.default_rng(33)
    for i in range(1000):
        n = int(rng.integers(2, 200))
        rr = synth_rr(float(rng.uniform(400, 1500)), float(rng.uniform(0, 150)), n, seed=i).intervals_ms.tolist()
        pnn, rmssd, sdnn = hrv_metrics(RrSeries(rr))
        assert pnn == pytest.approx(hrv_oracle.pnn50(rr), rel=1e-9, abs=1e-12)
        assert rmssd == pytest.approx(hrv_oracle.rmssd(rr), rel=1e-9, abs=1e-12)
        assert sdnn == pytest.approx(hrv_oracle.sdnn(rr), rel=1e-9, abs=1e-12)


def test_c3_hand_values():
    """C3b HRV hand values for rr=[800,860,900,905]: 33.333 %, 41.73 ms, 49.81 ms"""
    pnn, rmssd, sdnn = hrv_metrics(RrSeries([800, 860, 900, 905]))
    assert round(pnn, 3) == 33.333
    assert round(rmssd, 2) == 41.73
    assert round(sdnn, 2) == 49.81


# C4

def test_c4_baevsky_fixture():
    """C4 Baevsky fixture: alternating 700/900 -> 172.41; constant 800 -> flagged 1212.12 (+-0.01)"""
    si, flag = baevsky_si(RrSeries([700, 900] * 5))
    assert abs(si - 172.41) <= 0.01
    assert flag != DEGENERATE_VARIABILITY
    si, flag = baevsky_si(RrSeries([800] * 10))
    assert flag == DEGENERATE_VARIABILITY
    assert abs(si - 1212.12) <= 0.01


# C5

@pytest.mark.parametrize("hr", RATES)
def test_c5_peak_cadence(hr):
    """C5 peak cadence: beat count within +-1 of floor(duration*hr/60), mean RR within +-5 ms"""
    s = synth_series(hr, 60, 30)
    pulse = pos_pipeline(s)
    peaks, rr = detect_peaks(pulse)
    assert abs(len(peaks) - math.floor(s.duration * hr / 60)) <= 1
    assert abs(rr.mean_ms - 60000 / hr) <= 5


# C6

def _brute_force_nn(vectors, ids, probe):
    norm = math.sqrt(sum(x * x for x in probe))
    q = [x / norm for x in probe]
    best, best_d = None, math.inf
    for v, sid in zip(vectors, ids):
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(v, q)))
        if d < best_d:
            best, best_d = sid, d
    return best, best_d


def test_c6_identity_properties():
    """C6 identity: self-match 0, orthogonal rejected at sqrt(2), 100 shuffles invariant, 100x4 gallery 100% top-1"""
    rng = np.random.default_rng(66)
    D = 128
    centroids = {f"subject{i:03d}": rng.normal(size=D) for i in range(100)}
    centroids = {k: v / np.linalg.norm(v) for k, v in centroids.items()}

    def noisy(c):
        v = c + rng.normal(0, 0.02, size=D)
        return v / np.linalg.norm(v)

    g = EmbeddingGallery(dim=D)
    for sid, c in centroids.items():
        for _ in range(4):
            enroll(g, sid, noisy(c), enrolled_at=0)

    # exact self-match
    for rec in g.records[::37]:
        m = identify(g, rec.vector)
        assert m.decision == rec.subject_id and m.nearest_distance == 0.0

    # orthogonal probe
    small = EmbeddingGallery(dim=D, tau=1.0)
    for j in range(5):
        enroll(small, f"s{j}", np.eye(D)[j])
    m = identify(small, np.eye(D)[50])
    assert m.decision is None
    assert abs(m.nearest_distance - math.sqrt(2)) <= 1e-9

    # permutation invariance
    probes = [noisy(centroids[sid]) for sid in list(centroids)[:10]] + [rng.normal(size=D) for _ in range(5)]
    reference = [identify(g, p) for p in probes]
    order_rng = random.Random(6)
    for _ in range(100):
        recs = list(g.records)
        order_rng.shuffle(recs)
        shuffled = EmbeddingGallery(dim=D, k=g.k, tau=g.tau, records=recs)
        for p, ref in zip(probes[:3] + probes[-2:], reference[:3] + reference[-2:]):
            assert identify(shuffled, p) == ref

    # synthetic separability against a brute-force 1-NN oracle
    vectors = [r.vector.tolist() for r in g.records]
    ids = [r.subject_id for r in g.records]
    correct = 0
    for sid, c in centroids.items():
        probe = noisy(c)
        m = identify(g, probe)
        oracle_sid, oracle_d = _brute_force_nn(vectors, ids, probe.tolist())
        assert m.decision == oracle_sid
        assert m.nearest_distance == pytest.approx(oracle_d, abs=1e-9)
        correct += m.decision == sid
    assert correct == 100


# C7

def _trace_mutations():
    tr, _ = synth_trace(70, 10, 10)
    lines = serialize_trace(tr).splitlines()
    # line numbers are 1-based; line 1 is the header
    def mutate(lineno, fn):
        out = list(lines)
        out[lineno - 1] = fn(out[lineno - 1])
        return "\n".join(out) + "\n", lineno

    return [
        mutate(5, lambda s: s[: len(s) // 2]),
        mutate(17, lambda s: s.replace(",synthetic,", ",synthetic,abc,")),
        mutate(33, lambda s: s.replace(",synthetic,", ",,")),
        mutate(41, lambda s: "x" + s),
        mutate(52, lambda s: ",".join(s.split(",")[:2] + ["-5"] + s.split(",")[3:])),
        mutate(60, lambda s: ",".join(s.split(",")[:4] + ["0"])),
        mutate(71, lambda s: "0.0" + s[s.index(","):]),
        mutate(88, lambda s: s + ",extra"),
        mutate(99, lambda s: ",".join(s.split(",")[:3] + ["inf"] + s.split(",")[4:])),
        mutate(1, lambda s: "time,roi,r,g,b"),
    ]


def _gallery_mutations():
    g = EmbeddingGallery(dim=8, k=3)
    rng = np.random.default_rng(7)
    for i in range(12):
        enroll(g, f"p{i % 4}", rng.normal(size=8), enrolled_at=1.7e9 + i)
    lines = dumps_gallery(g).splitlines()

    def mutate(lineno, fn):
        out = list(lines)
        out[lineno - 1] = fn(out[lineno - 1])
        return "\n".join(out) + "\n", lineno

    return [
        mutate(4, lambda s: s[: len(s) // 2]),
        mutate(2, lambda s: s[:-1]),
        mutate(6, lambda s: s.replace('"subject_id"', '"subject"')),
        mutate(7, lambda s: s.replace('"vector": [', '"vector": ["x", ')),
        mutate(9, lambda s: s.replace("[", "[[", 1).replace("]", "]]", 1)),
        mutate(10, lambda s: json.dumps({**json.loads(s), "vector": [2.0] + json.loads(s)["vector"][1:]})),
        mutate(11, lambda s: json.dumps({**json.loads(s), "subject_id": ""})),
        mutate(12, lambda s: "[]"),
        mutate(13, lambda s: "garbage"),
        mutate(1, lambda s: s[:5]),
    ]


def test_c7_format_round_trips():
    """C7 format round-trips: trace CSV and gallery equal after parse->serialize->parse; 20 mutation fixtures"""
    tr, _ = synth_trace(77, 12, 30, noise_sigma_frac=0.01, seed=3)
    multi = parse_trace(serialize_trace(tr) + "".join(
        f"{t!r},forehead,{r + 1!r},{g + 1!r},{b + 1!r}\n"
        for t, r, g, b in zip(*(getattr(tr.streams["synthetic"], c).tolist() for c in "trgb"))
    ))
    once = parse_trace(serialize_trace(multi))
    twice = parse_trace(serialize_trace(once))
    assert once.allclose(multi, t_atol=1e-9, rtol=1e-9)
    assert twice.allclose(once, t_atol=1e-9, rtol=1e-9)

    g = EmbeddingGallery(dim=32, k=3, tau=0.7)
    rng = np.random.default_rng(1)
    for i in range(9):
        enroll(g, f"id-{i % 3}", rng.normal(size=32))
    back = loads_gallery(dumps_gallery(g))
    assert back.allclose(g, atol=1e-9)
    assert loads_gallery(dumps_gallery(back)).allclose(back, atol=1e-9)
    empty = loads_gallery(dumps_gallery(EmbeddingGallery(dim=5, k=2, tau=0.3)))
    assert (empty.dim, empty.k, empty.tau, len(empty)) == (5, 2, 0.3, 0)

    fixtures = [(parse_trace, doc, line) for doc, line in _trace_mutations()]
    fixtures += [(loads_gallery, doc, line) for doc, line in _gallery_mutations()]
    assert len(fixtures) == 20
    for loader, doc, line in fixtures:
        with pytest.raises(LineError) as ei:
            loader(doc)
        assert ei.value.line == line, (loader.__name__, line, ei.value)


# C8

def test_c8_cli_service_coherence(tmp_path):
    """C8 CLI/service coherence: byte-identical reports on 10 fixtures; 200/400/422 status contract"""
    import http.client
    import threading

    server = make_server(("127.0.0.1", 0), ServiceConfig())
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, port = server.server_address[:2]

    def post(path, body, ctype="text/csv"):
        conn = http.client.HTTPConnection(host, port, timeout=30)
        conn.request("POST", path, body=body.encode(), headers={"Content-Type": ctype})
        resp = conn.getresponse()
        data = resp.read()
        conn.close()
        return resp.status, data

    try:
        for i, hr in enumerate((50, 58, 64, 72, 80, 95, 108, 126, 150, 175)):
            tr, _ = synth_trace(hr, 20 + 4 * i, 30 if i % 2 else 25, noise_sigma_frac=0.001 * i, seed=i)
            path = tmp_path / f"fixture{i}.csv"
            path.write_text(serialize_trace(tr))
            out = tmp_path / f"report{i}.json"
            assert run_cli(["compute", "--trace", str(path), "--out", str(out)]) == 0
            status, body = post("/v1/vitals", path.read_text())
            assert status == 200
            assert out.read_bytes() == body
            assert json.loads(body)["hr_bpm"] == pytest.approx(hr, abs=2)

        assert post("/v1/vitals", "garbage")[0] == 400
        assert post("/v1/vitals", "t,roi,r,g,b\n0,nose,1,1,-1\n")[0] == 422
        status, body = post("/v1/vitals", "t,roi,r,g,b\n" + "".join(f"{i / 30},n,5,5,5\n" for i in range(400)))
        assert (status, json.loads(body)["error"]) == (422, "NoPulse")
        assert post("/v1/identify", "{bad")[0] == 400
        assert post("/v1/identify", "[1, 0]", "application/json")[0] == 422

        conn = http.client.HTTPConnection(host, port, timeout=10)
        conn.request("GET", "/healthz")
        resp = conn.getresponse()
        assert (resp.status, resp.read()) == (200, b"ok")
        conn.close()
    finally:
        server.shutdown()
        server.server_close()
