import json
import math

import pytest

import bhplab

INTERVAL = {"model": {"kind": "interval", "beta": 1}}
OU = {"model": {"kind": "ou", "c": 2, "b": 1.5, "a": 0.1}}


def test_interval_spectrum():
    s = bhplab.spectrum(INTERVAL)
    assert s["closed_form"]
    assert s["lambda1"] == pytest.approx(-0.5)
    assert s["gap"] == pytest.approx(1.5)
    h = bhplab.ground_state(INTERVAL, [math.pi / 2, 0.0, 4.0])
    assert h[0] == pytest.approx(math.sqrt(2 / math.pi))
    assert h[1:] == [0.0, 0.0]


def test_ou_spectrum_and_kernel():
    s = bhplab.spectrum(OU)
    assert s["lambda1"] == pytest.approx(-0.6)
    assert bhplab.ground_state(OU, [0.0])[0] == pytest.approx(0.840896, abs=1e-6)
    assert bhplab.kernel_h(OU, 40.0, 0.3, -0.2) == pytest.approx(1.0, abs=1e-9)


def test_subcritical_is_rejected():
    cfg = {"model": {"kind": "interval", "beta": 0.2}}
    with pytest.raises(bhplab.SubcriticalityError):
        bhplab.spectrum(cfg)
    assert bhplab.spectrum(cfg, allow_subcritical=True)["lambda1"] > 0


def test_bad_config():
    with pytest.raises(bhplab.ValidationError, match="model"):
        bhplab.spectrum({})
    with pytest.raises(ValueError):
        bhplab.spectrum({"model": {"kind": "interval", "betta": 1}})


def test_simulate_is_deterministic():
    cfg = dict(INTERVAL, simulate={"x": 1.5, "horizon": 2, "observation_times": [1]}, seed=8)
    a = bhplab.simulate(cfg)
    b = bhplab.simulate(json.dumps(cfg))
    assert a["records"] == b["records"]
    assert [s["t"] for s in a["snapshots"]] == [0.0, 1.0, 2.0]
    assert a["snapshots"][0]["positions"] == [1.5]
    spine = bhplab.simulate(cfg, spine=True)
    assert spine["spine_nodes"][0] == 0
    assert len(spine["snapshots"][-1]["positions"]) >= 1


def test_verify_report():
    cfg = dict(INTERVAL, experiment={"x": 1.5, "t_grid": [0.5, 1], "replicas": 500}, seed=3)
    report = bhplab.verify(cfg, "martingale")
    assert report["verdict"] == "pass"
    assert bhplab.verify(OU, "slln")["verdict"] == "hypothesis-not-met"
    assert bhplab.verify(INTERVAL, "spectral")["verdict"] == "pass"
    with pytest.raises(bhplab.ValidationError):
        bhplab.verify(INTERVAL, "nonsense")


def test_run_cli(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(INTERVAL))
    code, out, err = bhplab.run_cli("spectral", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0, err
    assert (tmp_path / "o" / "report.json").exists()
    assert bhplab.run_cli("frobnicate")[0] == 1
