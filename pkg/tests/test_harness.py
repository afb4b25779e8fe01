import json
import math
from pathlib import Path

import pytest

from rwinspect.cli import main as cli_main
from rwinspect.errors import ConfigError
from rwinspect.harness import (
    SourceCondition,
    emit_plot_data,
    load_config,
    privacy_audit,
    run_batch,
    run_coverage,
)
from rwinspect.rooms import write_suite
from rwinspect.stats import ks_two_sample


@pytest.fixture(scope="module")
def maps_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("maps")
    write_suite(d)
    return d


def write_config(path: Path, maps_dir: Path, **overrides) -> Path:
    doc = {
        "schema_version": 1,
        "maps": [str(maps_dir / "empty.json"), str(maps_dir / "drums.json")],
        "inspector": {"r_I": 0.4, "r_D": 1.0, "speed": 0.1, "measure_seconds": 3.0},
        "detector": {"background": 60.0, "clamp": 0.1},
        "algorithm": {"p_star": 0.005, "T": 200, "n": 10, "z": 3.0, "c_U": 4.0},
        "trials_per_condition": 6,
        "source_conditions": [None, {"strength": 120.0, "random_position": True}],
        "seed_base": 400,
        "discretizations": [2.0],
        "coverage": {"c_u_values": [4.0], "trials": 3, "max_steps": 5000,
                     "discretizations": [2.0]},
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


def test_load_config_roundtrip(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir))
    assert config.algorithm.c_L == pytest.approx(0.4)  # default c_U/10
    assert config.trials_per_condition == 6
    assert len(config.source_conditions) == 2
    assert config.source_conditions[0].label == "none"
    assert config.source_conditions[1].label == "s120@random"


def test_load_config_errors(tmp_path, maps_dir):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "c2.json", maps_dir,
                                 algorithm={"p_star": 0.005, "T": 200, "n": 7,
                                            "z": 3.0, "c_U": 4.0}))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "c3.json", maps_dir,
                                 source_conditions=[{"strength": 5.0}]))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "c4.json", maps_dir,
                                 detector={"background": 60.0, "clamp": 0.3}))


def test_source_condition_placement(maps_dir):
    from rwinspect.geometry import load_map

    m = load_map(maps_dir / "drums.json")
    fixed = SourceCondition(strength=10.0, x=1.0, y=2.0)
    placed = fixed.place(m, seed=1)
    assert placed.source.x == 1.0 and placed.source.strength == 10.0
    free = SourceCondition()
    assert free.place(m, seed=1).source is None
    random_cond = SourceCondition(strength=10.0, random_position=True)
    p1 = random_cond.place(m, seed=5).source
    p2 = random_cond.place(m, seed=5).source
    p3 = random_cond.place(m, seed=6).source
    assert (p1.x, p1.y) == (p2.x, p2.y)  # deterministic in the seed
    assert (p1.x, p1.y) != (p3.x, p3.y)
    assert not m.point_in_obstacle(p1.x, p1.y)


def test_run_batch_accounting(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir))
    out = tmp_path / "out"
    summary = run_batch(config, out_dir=out, save_steps=True)
    assert len(summary.rows) == 2 * 2 * 6
    for cond, data in summary.conditions.items():
        assert data["trials"] == 6
        decisions = data["decisions"]
        assert decisions["absence_confirmed"] + decisions["anomaly_detected"] == 6
        if data["source_present"]:
            assert "fnr" in data
        else:
            assert "fpr" in data
    # outputs exist and carry the schema version
    doc = json.loads((out / "summary.json").read_text())
    assert doc["schema_version"] == 1
    assert set(doc["conditions"]) == set(summary.conditions)
    for name in ("trials.csv", "pvalues.csv", "steps.csv"):
        assert (out / name).exists()


def test_run_batch_zero_trials(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir, trials_per_condition=0))
    summary = run_batch(config)
    assert summary.rows == []
    for data in summary.conditions.values():
        assert data["trials"] == 0


def test_run_batch_skips_full_map(tmp_path, maps_dir):
    # A map with no free space is skipped with an error, not fatal.
    blocked = {
        "l_x": 1.0, "l_y": 1.0, "background": 60.0,
        "obstacles": [{"kind": "circle", "center": [0.5, 0.5], "radius": 0.49}],
    }
    path = maps_dir / "blocked.json"
    path.write_text(json.dumps(blocked))
    config = load_config(write_config(
        tmp_path / "c.json", maps_dir,
        maps=[str(maps_dir / "empty.json"), str(path)],
        source_conditions=[None], trials_per_condition=2,
    ))
    summary = run_batch(config)
    assert any(s.startswith("blocked|") for s in summary.skipped)
    assert len(summary.rows) == 2


def test_batch_deterministic_across_workers(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir, trials_per_condition=4))
    out1, out2 = tmp_path / "w1", tmp_path / "w8"
    run_batch(config, workers=1, out_dir=out1)
    run_batch(config, workers=4, out_dir=out2)
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()
    assert (out1 / "trials.csv").read_bytes() == (out2 / "trials.csv").read_bytes()
    assert (out1 / "pvalues.csv").read_bytes() == (out2 / "pvalues.csv").read_bytes()


def test_leaky_record_quarantined(tmp_path, maps_dir):
    # Nothing written by trial/batch may contain the leaky recorder data.
    config = load_config(write_config(tmp_path / "c.json", maps_dir, trials_per_condition=2))
    out = tmp_path / "out"
    run_batch(config, out_dir=out, save_steps=True)
    for path in out.iterdir():
        text = path.read_text().lower()
        assert "leaky" not in text
        assert "segment" not in text


def test_privacy_audit_separates_leaky(tmp_path, maps_dir):
    config = load_config(write_config(
        tmp_path / "c.json", maps_dir,
        maps=[str(maps_dir / "empty.json"), str(maps_dir / "dense.json")],
        algorithm={"p_star": 0.005, "T": 1000, "n": 10, "z": 3.0, "c_U": 2.0},
        trials_per_condition=5, source_conditions=[None],
    ))
    out = tmp_path / "audit"
    report = privacy_audit(config, out_dir=out)
    data = report.pairs["empty|dense"]
    assert data["ve_rejections"] <= 1
    assert data["leaky_rejections"] >= 4
    assert data["mi_nonreject"] >= 4
    assert (out / "audit.json").exists()
    assert (out / "audit.csv").exists()
    assert (out / "audit_cdf.png").exists()


def test_privacy_audit_self_comparison_null(tmp_path, maps_dir):
    # A map against itself (different seeds) rejects at roughly alpha.
    config = load_config(write_config(
        tmp_path / "c.json", maps_dir,
        maps=[str(maps_dir / "empty.json")],
        algorithm={"p_star": 0.005, "T": 1000, "n": 10, "z": 3.0, "c_U": 2.0},
        trials_per_condition=30, source_conditions=[None],
    ))
    from rwinspect.policy import run_trial

    results = []
    for k in range(30):
        pa = config.algorithm
        from rwinspect.policy import AlgoParams

        quiet = AlgoParams(background=pa.background, l_x=pa.l_x, l_y=pa.l_y,
                           p_star=1e-300, T=pa.T, n=pa.n, z=pa.z, c_L=pa.c_L, c_U=pa.c_U)
        m = config.load_maps()[0][1]
        a = run_trial(quiet, m, config.detector, config.inspector, seed=1000 + k,
                      record_omniscient=False)
        b = run_trial(quiet, m, config.detector, config.inspector, seed=9000 + k,
                      record_omniscient=False)
        results.append(ks_two_sample(a.memory.V_e, b.memory.V_e).p_value <= 0.05)
    assert sum(results) <= 6  # ~1.5 expected of 30 at alpha = 0.05


def test_privacy_audit_requires_two_maps(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir,
                                      maps=[str(maps_dir / "empty.json")],
                                      algorithm={"p_star": 0.005, "T": 1000, "n": 10,
                                                 "z": 3.0, "c_U": 2.0}))
    with pytest.raises(ConfigError, match="2 maps"):
        privacy_audit(config)


def test_run_coverage_and_outputs(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir,
                                      maps=[str(maps_dir / "empty.json")]))
    out = tmp_path / "cov"
    results = run_coverage(config, out_dir=out)
    assert len(results) == 3  # 1 map x 1 c_U x 3 trials
    table = (out / "covertimes.csv").read_text().strip().splitlines()
    assert table[0] == "env_id,c_U,bins,trial,cover_steps,cover_seconds"
    assert len(table) == 1 + 3  # one epsilon per trial row
    assert (out / "covercurves.csv").exists()


def test_emit_plot_data_kinds(tmp_path, maps_dir):
    config = load_config(write_config(tmp_path / "c.json", maps_dir, trials_per_condition=4))
    batch_dir = tmp_path / "batch"
    run_batch(config, out_dir=batch_dir, save_steps=True)
    cov_dir = tmp_path / "cov"
    run_coverage(config, out_dir=cov_dir)

    p = emit_plot_data(batch_dir, "pvalue_evolution")
    rows = p.read_text().strip().splitlines()
    assert rows[0] == "condition,t,mean_log10_p,n_trials"
    floor = math.log10(config.algorithm.p_star / config.algorithm.n)
    for line in rows[1:]:
        value = float(line.split(",")[2])
        assert value >= floor - 1e-12
    # Source-present conditions end at the floor (terminated trials hold it).
    src_rows = [r for r in rows[1:] if "s120@random" in r]
    assert float(src_rows[-1].split(",")[2]) == pytest.approx(floor)
    assert (batch_dir / "pvalue_evolution.png").exists()

    p = emit_plot_data(batch_dir, "step_cdf")
    header = p.read_text().splitlines()[0]
    assert header == "condition,ds,f_empirical,f_reference,dkw_lo,dkw_hi"
    assert (batch_dir / "step_cdf.png").exists()

    p = emit_plot_data(cov_dir, "coverage_curve", start_t=10)
    body = p.read_text().strip().splitlines()
    ts = [int(line.split(",")[3]) for line in body[1:]]
    assert min(ts) >= 10  # curves start after the initial steps
    assert (cov_dir / "coverage_curve.png").exists()

    with pytest.raises(ValueError, match="unknown plot kind"):
        emit_plot_data(batch_dir, "sparkline")


def test_step_cdf_within_dkw_band(tmp_path, maps_dir):
    config = load_config(write_config(
        tmp_path / "c.json", maps_dir,
        maps=[str(maps_dir / "empty.json")],
        algorithm={"p_star": 0.005, "T": 2000, "n": 10, "z": 3.0, "c_U": 4.0},
        trials_per_condition=2, source_conditions=[None],
    ))
    batch_dir = tmp_path / "batch"
    run_batch(config, out_dir=batch_dir, save_steps=True)
    p = emit_plot_data(batch_dir, "step_cdf")
    inside = 0
    total = 0
    for line in p.read_text().strip().splitlines()[1:]:
        _, _, fe, fr, lo, hi = line.split(",")
        total += 1
        inside += float(lo) <= float(fe) <= float(hi)
    assert inside == total  # pooled 4000-sample ECDF sits inside the band


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_trial_and_exit_codes(tmp_path, maps_dir, capsys):
    cfg = write_config(tmp_path / "c.json", maps_dir)
    code = cli_main(["trial", "--map", str(maps_dir / "empty.json"),
                     "--config", str(cfg), "--seed", "3"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["decision"] == "absence_confirmed"
    assert doc["steps"] == 200

    assert cli_main(["trial", "--map", str(maps_dir / "empty.json")]) == 1  # missing args
    assert cli_main(["nonsense"]) == 1
    assert cli_main(["trial", "--map", str(maps_dir / "empty.json"),
                     "--config", str(tmp_path / "nope.json"), "--seed", "1"]) == 2
    capsys.readouterr()


def test_cli_trial_source_override(tmp_path, maps_dir, capsys):
    cfg = write_config(tmp_path / "c.json", maps_dir,
                       algorithm={"p_star": 0.005, "T": 1000, "n": 10, "z": 3.0, "c_U": 4.0})
    code = cli_main(["trial", "--map", str(maps_dir / "empty.json"),
                     "--config", str(cfg), "--seed", "3", "--source", "5,5,400"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["decision"] == "anomaly_detected"
    assert cli_main(["trial", "--map", str(maps_dir / "empty.json"),
                     "--config", str(cfg), "--seed", "3", "--source", "zap"]) == 1
    capsys.readouterr()


def test_cli_plot_data_unknown_kind(tmp_path, maps_dir, capsys):
    cfg = write_config(tmp_path / "c.json", maps_dir, trials_per_condition=2)
    out = tmp_path / "b"
    assert cli_main(["batch", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli_main(["plot-data", "--in", str(out), "--kind", "nope"]) == 1
    assert cli_main(["plot-data", "--in", str(out), "--kind", "pvalue_evolution"]) == 0
    capsys.readouterr()


def test_cli_bound(tmp_path, maps_dir, capsys):
    cfg = write_config(tmp_path / "c.json", maps_dir)
    out_file = tmp_path / "bound.json"
    code = cli_main(["bound", "--map", str(maps_dir / "empty.json"),
                     "--epsilon", "2.0", "--delta", "0.2",
                     "--config", str(cfg), "--rollouts", "40",
                     "--out", str(out_file)])
    assert code == 0
    doc = json.loads(out_file.read_text())
    assert doc["rounds"] == 5
    assert doc["union_bounds_used"] == 50
    assert doc["T_bound"] > 0
    capsys.readouterr()
