import json

import pytest

from bpecsim.cli import CSV_HEADER, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_region_text_report(capsys):
    code, out, _ = run_cli(capsys, "region", "0.75", "0", str(32 / 35))
    assert code == 0
    assert "max_sum_rate=0.4" in out
    assert "outer_bound_achievable=true" in out
    assert "inter_modal_sum=0.4" in out
    assert "c1:" in out and "c2:" in out and "c3:" in out


def test_region_missing_arguments_exit(capsys):
    with pytest.raises(SystemExit):
        main(["region", "0.75"])


def test_region_json_fields(capsys):
    code, out, _ = run_cli(capsys, "region", "0.75", "0", str(32 / 35), "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert abs(report["max_sum_rate"] - 0.4) < 1e-9
    assert abs(report["inter_modal_sum"] - 0.4) < 1e-9
    assert report["outer_bound_achievable"] is True
    assert report["binding_region"] == "c1"
    assert len(report["c1_halfspaces"]) == 2
    assert all(len(v) == 2 for v in report["vertices"])
    # stable key order
    code2, out2, _ = run_cli(capsys, "region", "0.75", "0", str(32 / 35), "--format", "json")
    assert out == out2


def test_region_rejects_bad_probability(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["region", "1.5", "0", "0.5"])
    assert exc.value.code != 0


def test_sweep_csv_header_and_rows(tmp_path, capsys):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = run_cli(
        capsys, "sweep", "--delta-a", "0.75", "--delta-b", "0",
        "--eta-grid", "0:1:0.01", "--out", str(out_path),
    )
    assert code == 0
    text = out_path.read_bytes()
    lines = text.decode().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 102  # header + 101 grid points
    # byte-stable across runs
    out2 = tmp_path / "sweep2.csv"
    run_cli(capsys, "sweep", "--delta-a", "0.75", "--delta-b", "0",
            "--eta-grid", "0:1:0.01", "--out", str(out2))
    assert out2.read_bytes() == text


def test_sweep_blank_intermodal_when_reversed(tmp_path, capsys):
    out_path = tmp_path / "rev.csv"
    code, _, _ = run_cli(
        capsys, "sweep", "--delta-a", "0.1", "--delta-b", "0.6",
        "--eta-grid", "0:1:0.5", "--out", str(out_path),
    )
    assert code == 0
    rows = out_path.read_text().splitlines()[1:]
    for row in rows:
        assert row.split(",")[5] == ""


def test_sweep_equal_deltas_has_constant_outer_sum(tmp_path, capsys):
    out_path = tmp_path / "eq.csv"
    run_cli(capsys, "sweep", "--delta-a", "0.4", "--delta-b", "0.4",
            "--eta-grid", "0:1:0.1", "--out", str(out_path))
    rows = out_path.read_text().splitlines()[1:]
    u = 2 * 1.4 * 0.6 / 2.4
    for row in rows:
        assert abs(float(row.split(",")[1]) - u) < 1e-9


def test_sweep_rejects_malformed_grid(capsys):
    code, _, err = run_cli(
        capsys, "sweep", "--delta-a", "0.5", "--delta-b", "0",
        "--eta-grid", "1:0:-0.1",
    )
    assert code == 1
    assert "grid" in err


def test_figure_fig3_contains_threshold_row(tmp_path, capsys):
    out_path = tmp_path / "fig3.csv"
    code, _, _ = run_cli(capsys, "figure", "fig3", "--out", str(out_path))
    assert code == 0
    rows = [r.split(",") for r in out_path.read_text().splitlines()[1:]]
    target = [r for r in rows if abs(float(r[0]) - 32 / 35) < 1e-9]
    assert len(target) == 1
    outer, inter = float(target[0][1]), float(target[0][5])
    assert abs(outer - 0.4) < 1e-9 and abs(inter - 0.4) < 1e-9


def test_figure_fig4_row_count(tmp_path, capsys):
    out_path = tmp_path / "fig4.csv"
    run_cli(capsys, "figure", "fig4", "--out", str(out_path))
    lines = out_path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 102


def test_figure_fig5_summary(tmp_path, capsys):
    out_path = tmp_path / "fig5.csv"
    run_cli(capsys, "figure", "fig5", "--out", str(out_path))
    lines = out_path.read_text().splitlines()
    assert lines[0] == "label,r1,r2,value"
    values = {}
    for line in lines[1:]:
        label, _, _, value = line.split(",")
        if value:
            values[label] = float(value)
    assert abs(values["inter_modal_sum"] - 0.890625) < 1e-9
    assert abs(values["outer_max_sum"] - 87 / 96) < 1e-9
    assert values["inter_modal_sum"] > values["intra_modal_sum"]
    assert values["intra_modal_reported"] == 0.875


def test_figure_unknown_name(capsys):
    with pytest.raises(SystemExit):
        main(["figure", "fig9"])


def test_simulate_json_report(tmp_path, capsys):
    out_path = tmp_path / "sim.json"
    code, _, _ = run_cli(
        capsys, "simulate", "--n", "2000", "--n-t", "0", "--trials", "5",
        "--seed", "7", "--out", str(out_path),
    )
    assert code == 0
    report = json.loads(out_path.read_text())
    assert report["n"] == 2000
    assert report["trials"] == 5
    assert abs(report["analytic_sum_rate"] - 0.4) < 1e-9
    assert 0.0 <= report["mean_sum_rate"] <= 1.0
    # single fixed-seed trial is stable
    code, out1, _ = run_cli(capsys, "simulate", "--n", "1000", "--n-t", "0",
                            "--trials", "1", "--seed", "3")
    code, out2, _ = run_cli(capsys, "simulate", "--n", "1000", "--n-t", "0",
                            "--trials", "1", "--seed", "3")
    assert out1 == out2


def test_simulate_nofeedback_analytic_field(capsys):
    code, out, _ = run_cli(
        capsys, "simulate", "--scheme", "nofb", "--n", "1000", "--n-t", "0",
        "--trials", "2", "--seed", "1",
    )
    report = json.loads(out)
    assert abs(report["analytic_sum_rate"] - 11 / 35) < 1e-9


def test_simulate_validates_config(capsys):
    with pytest.raises(SystemExit):
        main(["simulate", "--delta-a", "1.7"])
    with pytest.raises(SystemExit):
        main(["simulate", "--trials", "0"])


def test_config_file_defaults_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"n": 1500, "trials": 3, "seed": 11, "n_t": 0}))
    code, out, _ = run_cli(capsys, "--config", str(cfg), "simulate")
    report = json.loads(out)
    assert report["n"] == 1500 and report["trials"] == 3
    code, out, _ = run_cli(
        capsys, "--config", str(cfg), "simulate", "--trials", "4"
    )
    report = json.loads(out)
    assert report["n"] == 1500 and report["trials"] == 4
