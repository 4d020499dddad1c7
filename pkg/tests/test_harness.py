import json

import pytest

from spikevol import harness, sve

PARAMS = sve.LimitParams(
    alpha=0.75, a=0.5, b=1.0, V0=1.0,
    zeta_m_star=0.5, lambda_m_star=1.0,
    zeta_l_star=0.5, lambda_l_star=1.0,
)


def _cfg(**over):
    kw = dict(kind="mean", params=PARAMS, seed=99, n_steps=128, paths=200)
    kw.update(over)
    return harness.ExperimentConfig(**kw)


def _toy_report():
    cfg = _cfg()
    rep = harness.RunReport(kind=cfg.kind, config=cfg.to_mapping(),
                            config_hash=cfg.hash, seed=cfg.seed)
    rep.tables["demo"] = [
        {"t": 0.5, "value": 1.25, "ok": True},
        {"t": 1.0, "value": 0.75, "ok": False},
    ]
    rep.verdicts.append({"criterion": "demo-check", "passed": True,
                         "gating": True, "detail": "toy"})
    return rep


# ---------------------------------------------------------------------------
# configuration


def test_config_validation():
    with pytest.raises(ValueError, match="unknown study kind"):
        _cfg(kind="bogus")
    with pytest.raises(ValueError, match="paths"):
        _cfg(paths=50)
    with pytest.raises(ValueError, match="strictly increasing"):
        _cfg(steps_ladder=(512, 512))


def test_config_mapping_round_trip():
    cfg = _cfg(lam_grid=(0.0, 1.5), y_min=5e-4)
    back = harness.ExperimentConfig.from_mapping(cfg.to_mapping())
    assert back == cfg
    assert back.hash == cfg.hash


def test_config_hash_excludes_out_dir():
    assert _cfg(out_dir="/tmp/a").hash == _cfg(out_dir="/tmp/b").hash
    assert _cfg(seed=1).hash != _cfg(seed=2).hash


# ---------------------------------------------------------------------------
# persistence


def test_persist_and_load_round_trip(tmp_path):
    rep = _toy_report()
    harness.persist(rep, tmp_path)
    back = harness.load(tmp_path)
    assert back.config_hash == rep.config_hash
    assert back.tables["demo"] == rep.tables["demo"]
    assert back.verdicts == rep.verdicts
    assert back.passed()


def test_persist_is_append_only(tmp_path):
    harness.persist(_toy_report(), tmp_path)
    with pytest.raises(FileExistsError):
        harness.persist(_toy_report(), tmp_path)


def test_tampered_artifact_detected(tmp_path):
    harness.persist(_toy_report(), tmp_path)
    csv_path = tmp_path / "demo.csv"
    csv_path.write_text(csv_path.read_text().replace("1.25", "9.99"))
    with pytest.raises(harness.IntegrityError, match="demo.csv"):
        harness.load(tmp_path)


def test_missing_artifact_detected(tmp_path):
    harness.persist(_toy_report(), tmp_path)
    (tmp_path / "demo.csv").unlink()
    with pytest.raises(harness.IntegrityError, match="missing"):
        harness.load(tmp_path)


def test_persisted_bytes_deterministic(tmp_path):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    harness.persist(_toy_report(), d1)
    harness.persist(_toy_report(), d2)
    for name in ("manifest.json", "report.json", "demo.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    # wall clock lives outside the hashed set
    manifest = json.loads((d1 / "manifest.json").read_text())
    assert "timing.log" not in manifest["files"]


# ---------------------------------------------------------------------------
# studies (smoke level; the full gates run in the acceptance suite)


def test_mean_study_produces_verdict_and_tables(tmp_path):
    rep = harness.run_study(_cfg())
    assert rep.kind == "mean"
    assert any(v["criterion"].startswith("AC6") for v in rep.verdicts)
    assert rep.tables
    harness.persist(rep, tmp_path)
    assert (tmp_path / "manifest.json").exists()


def test_equivalence_study_reports_ratios():
    cfg = _cfg(kind="equivalence", paths=100, steps_ladder=(64, 128, 256))
    rep = harness.run_study(cfg)
    assert any(v["criterion"].startswith("AC7") for v in rep.verdicts)
    table = rep.tables["equivalence"]
    assert len(table) == 3
