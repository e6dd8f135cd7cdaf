"""Smoke tests for the python surface of the C++ core."""

import json
import math
import os
import tempfile

import numpy as np
import pytest

import hiercva


def make_config(outdir, paths=64, replicas=2):
    cfg = {
        "seed": 42,
        "output_dir": outdir,
        "model": {
            "economies": [{"a": 0.5, "b": 0.03, "sigma": 0.01, "r0": 0.02}],
            "bank": {"alpha": 0.3, "delta": 0.01, "nu": 0.05, "gamma0": 0.01},
            "clients": [{"alpha": 0.5, "delta": 0.15, "nu": 0.1, "gamma0": 0.12}],
        },
        "grid": {"pricing_steps": 4, "substeps": 4, "dt_years": 1.0},
        "book": {"generate": {"count": 4, "notional_min": 5.0, "notional_max": 5.0}},
        "simulation": {"paths": paths, "replicas": replicas},
        "training": {"epochs": 4, "batches": 8, "width": 8},
        "validation": {"twin": True, "nested": False, "paths": 64, "steps": [1]},
    }
    return hiercva.parse_config(json.dumps(cfg))


def test_random_stream_reproducibility():
    a = hiercva.RandomStream(7).normals(1000)
    b = hiercva.RandomStream(7).normals(1000)
    assert a == b
    c = hiercva.RandomStream(8).normals(1000)
    assert a != c
    z = np.asarray(a)
    assert abs(z.mean()) < 0.1
    assert abs(z.std() - 1.0) < 0.1


def test_simulation_shapes_and_positivity():
    cfg = make_config("unused")
    market, defaults, cube = hiercva.simulate(cfg, 32, 3)
    assert market.n_paths == 32
    assert market.n_steps == 4
    assert defaults.n_replicas == 3
    assert cube.n_clients == 1
    for k in range(32):
        for i in range(5):
            assert market.intensity(k, i, 1) >= 0.0
            assert market.discount(k, i) > 0.0
    # Indicators are absorbing.
    for k in range(8):
        for l in range(3):
            seen = False
            for i in range(5):
                d = defaults.indicator(k, l, i, 1)
                if seen:
                    assert d
                seen = seen or d


def test_labels_and_features():
    cfg = make_config("unused")
    market, defaults, _ = hiercva.simulate(cfg, 64, 2)
    xi = hiercva.defaults_label(0, cfg, market, defaults)
    assert xi.shape == (64, 2)
    assert (xi >= 0.0).all()
    xit = hiercva.intensity_label(0, cfg, market, defaults)
    assert (xit >= 0.0).all()
    # Same continuous-time target: means are in the same ballpark.
    if xi.mean() > 0:
        assert abs(xi.mean() - xit.mean()) < 0.5 * max(xi.mean(), xit.mean())
    f = hiercva.features(1, market, defaults)
    assert f.shape == (128, 1 + 1 + 1 + 1)  # indicator, rate, intensity, lagged rate


def test_twin_estimator_gaussian_toy():
    rng = np.random.default_rng(5)
    y = rng.standard_normal(100000)
    xi1 = y + 0.5 * rng.standard_normal(100000)
    xi2 = y + 0.5 * rng.standard_normal(100000)
    est, se = hiercva.twin_l2_error(y, xi1, xi2)
    assert abs(est) < 3 * se
    est_b, _ = hiercva.twin_l2_error(y + 0.3, xi1, xi2)
    assert abs(est_b - 0.09) < 0.02
    assert abs(hiercva.twin_relative_rmse(np.zeros_like(y), xi1, xi2) - 1.0) < 0.02


def test_planner_arithmetic():
    assert hiercva.optimal_n(1.0, 1.0, 1.0) == pytest.approx(1.0)
    p, n1, n2, t2 = 497.0, 512.0, 1024.0, 10.0
    t1 = t2 * (p + n1) / (p + n2)
    assert hiercva.estimate_p(n1, t1, n2, t2) == pytest.approx(497.0, abs=1e-6)
    assert hiercva.heuristic_m((512 + 497) * 100.0, 512.0, 497.0) == 100
    g_shared = rng_pair()
    q, r, total = hiercva.estimate_qr(g_shared[0], g_shared[1])
    assert q + r == pytest.approx(total, rel=1e-12)


def rng_pair():
    rng = np.random.default_rng(11)
    shared = rng.standard_normal(20000)
    return shared + 0.5 * rng.standard_normal(20000), shared + 0.5 * rng.standard_normal(20000)


def test_full_run_writes_artifacts():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "run")
        cfg = make_config(out)
        manifest = hiercva.run(cfg)
        assert len(manifest["config_hash"]) == 16
        assert manifest["seed"] == 42
        for name in ("book.csv", "models.bin", "percentiles.csv", "error_report.csv"):
            assert os.path.exists(os.path.join(out, name)), name
        assert math.isfinite(manifest["phase_seconds"]["train"])


def test_config_errors_surface_as_exceptions():
    with pytest.raises(hiercva.ConfigError):
        hiercva.parse_config("{ broken")
