import csv
import io
import json
import math

import numpy as np
import pytest

from shadowot.errors import ConfigInvalid, DegenerateData, UnknownExperiment
from shadowot.experiments import (
    DEFAULT_TRIALS,
    EXPERIMENTS,
    ExperimentConfig,
    fit_rate,
    fit_rate_exponent,
    run_experiment,
)

SMALL = {
    "shadow_validation": 9,
    "value_stability": 8,
    "optimizer_stability": 6,
    "cost_stability": 6,
    "bounded_cost_sharpness": 3,
    "sinkhorn_rates": 2,
    "gamma_recovery": 3,
    "pythagorean": 9,
    "data_processing": 20,
}


def small(name, **kw):
    return ExperimentConfig(name=name, trials=SMALL[name], **kw)


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------


def test_fit_square():
    e, b, r2 = fit_rate_exponent([(x, x**2) for x in (0.5, 1, 2, 4)])
    assert e == pytest.approx(2.0, abs=1e-12)
    assert b == pytest.approx(0.0, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_sqrt_with_intercept():
    e, b, r2 = fit_rate_exponent([(x, 3 * math.sqrt(x)) for x in (0.1, 0.2, 0.4, 0.8)])
    assert e == pytest.approx(0.5, abs=1e-12)
    assert b == pytest.approx(math.log(3), abs=1e-12)


def test_fit_confidence_interval_brackets_noisy_slope(rng):
    xs = np.geomspace(0.01, 1, 12)
    fit = fit_rate([(x, x**1.5 * math.exp(0.01 * rng.normal())) for x in xs])
    assert fit["ci_low"] <= 1.5 <= fit["ci_high"]


@pytest.mark.parametrize("pairs", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 1)], [(1, 1), (1, 2), (1, 3)]])
def test_fit_degenerate(pairs):
    with pytest.raises(DegenerateData):
        fit_rate_exponent(pairs)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_unknown_experiment():
    with pytest.raises(UnknownExperiment):
        run_experiment(ExperimentConfig(name="nope"))
    with pytest.raises(UnknownExperiment):
        ExperimentConfig.from_dict({"name": "nope"})


def test_config_from_dict_parses_inf_and_rejects_unknown_keys():
    cfg = ExperimentConfig.from_dict({"name": "value_stability", "p": [1, "inf"], "divergence": "kl"})
    assert cfg.p == (1.0, math.inf) and cfg.divergence == ("kl",)
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"name": "value_stability", "colour": 1})
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(name="value_stability", sizes=()).validated()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(name="value_stability", sizes=(7,)).validated()
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(name="value_stability", epsilon=0).validated()


def test_defaults_cover_every_suite():
    assert set(DEFAULT_TRIALS) == set(EXPERIMENTS)
    assert ExperimentConfig(name="shadow_validation").resolved().trials == 200


# ---------------------------------------------------------------------------
# suites at small scale
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_suite_small_run_is_ok(name):
    rep = run_experiment(small(name))
    assert rep.status == "ok", rep.violations[:1]
    assert rep.summary["certificates"] == rep.summary["holds"] > 0
    assert not rep.violations


@pytest.mark.parametrize("name", ["shadow_validation", "sinkhorn_rates", "bounded_cost_sharpness"])
def test_determinism_bytes(name):
    a = run_experiment(small(name, seed=7)).to_json()
    b = run_experiment(small(name, seed=7)).to_json()
    assert a == b
    c = run_experiment(small(name, seed=8)).to_json()
    assert a != c


def test_workers_do_not_change_the_report():
    cfg = small("value_stability", seed=3)
    assert run_experiment(cfg).to_json() == run_experiment(cfg, workers=2).to_json()


def test_csv_rows_agree_with_json(tmp_path):
    cfg = small("cost_stability", seed=1, out=str(tmp_path))
    rep = run_experiment(cfg)
    data = json.loads((tmp_path / "cost_stability.json").read_text())
    assert "timing" in data and data["status"] == "ok"
    rows = list(csv.DictReader(io.StringIO((tmp_path / "cost_stability.csv").read_text())))
    certs = [(r["trial"], c) for r in data["records"] for c in r["certificates"]]
    assert len(rows) == len(certs) == rep.summary["certificates"]
    for row, (trial, cert) in zip(rows, certs):
        assert int(row["trial"]) == trial
        assert row["theorem"] == cert["theorem"]
        assert float(row["bound"]) == cert["bound"]
        assert float(row["measured"]) == cert["measured"]
        assert row["holds"] == str(cert["holds"])


def test_sharpness_ratios_trend_to_three():
    rep = run_experiment(small("bounded_cost_sharpness"))
    sharp = [r for r in rep.records if str(r["trial"]).startswith("sharpness_")]
    ratios = [r["ratio"] for r in sharp]
    assert [r["params"]["eps"] for r in sharp] == [0.1, 0.01, 0.001]
    for got, want in zip(ratios, (2.899, 2.990, 2.999)):
        assert got == pytest.approx(want, abs=1.5e-3)
    assert abs(ratios[-1] - 3) < 1e-2


def test_optimizer_sweep_exponent_diagnostic():
    rep = run_experiment(small("optimizer_stability", p=(1.0,), q=(1.0,)))
    fit = rep.fits["optimizer_sweep"]
    assert fit["exponent"] >= fit["reference_exponent"] - 0.05


def test_sinkhorn_records_expose_the_gibbs_diagnostic():
    rep = run_experiment(small("sinkhorn_rates"))
    for r in rep.records:
        theorems = {c["theorem"] for c in r["certificates"]}
        assert {"sinkhorn_leger", "sinkhorn_value", "sinkhorn_wq", "sinkhorn_kl_to_optimizer_monotone"} <= theorems
        assert set(r["kl_gibbs_steps"]) == {"up", "down"}
