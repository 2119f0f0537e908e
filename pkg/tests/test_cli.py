"""Command-line interface: exit codes, determinism, report files."""

import json

import pytest

from commutant.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_verify_identities_passes(capsys):
    code, out, _ = run(capsys, "verify-identities", "--decomp", "dyadic",
                       "--probes", "32")
    assert code == 0
    assert "max deviation: 0" in out
    assert out.strip().endswith("verdict: pass")


def test_verify_identities_cantor(capsys):
    code, out, _ = run(capsys, "verify-identities", "--decomp", "cantor",
                       "--probes", "16", "--nmax", "6")
    assert code == 0


def test_gen_and_factor_roundtrip(tmp_path, capsys):
    op = tmp_path / "op.json"
    code, out, _ = run(capsys, "gen", "--kind", "compactlike", "--seed", "1",
                       "--support", "8", "--out", str(op))
    assert code == 0
    assert op.exists()
    wit = tmp_path / "w.json"
    rep = tmp_path / "r.json"
    code, out, _ = run(capsys, "factor", "--op", str(op), "--method",
                       "coarsen", "--eps", "0.1", "--out", str(wit),
                       "--report", str(rep))
    assert code == 0
    report = json.loads(rep.read_text())
    assert report["verdict"] == "pass"
    assert report["format"] == "report/v1"
    assert "timings" not in report
    witness = json.loads(wit.read_text())
    assert witness["format"] == "witness/v1"


def test_factor_methods_all_pass(tmp_path, capsys):
    op = tmp_path / "op.json"
    run(capsys, "gen", "--kind", "blocksparse", "--seed", "3", "--support",
        "16", "--out", str(op))
    for method in ("easy", "corner", "compact", "side"):
        code, out, _ = run(capsys, "factor", "--op", str(op), "--method",
                           method, "--eps", "0.25")
        assert code == 0, method


def test_deterministic_outputs(tmp_path, capsys):
    paths = []
    for tag in ("a", "b"):
        op = tmp_path / f"op_{tag}.json"
        rep = tmp_path / f"rep_{tag}.json"
        run(capsys, "gen", "--kind", "compactlike", "--seed", "9", "--out",
            str(op), "--report", str(rep))
        paths.append((op.read_bytes(), rep.read_bytes()))
    assert paths[0] == paths[1]


def test_parse_error_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "factor", "--op", str(tmp_path / "nope.json"),
                       "--method", "easy")
    assert code == 2
    assert "error:" in err
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    code, _, err = run(capsys, "factor", "--op", str(bad), "--method", "easy")
    assert code == 2


def test_demo_diagcomm_and_margin_failure(capsys):
    code, out, _ = run(capsys, "demo", "--name", "diagcomm", "--blocks", "12",
                       "--block-dim", "2", "--seed", "7")
    assert code == 0
    assert "verdict: pass" in out
    code, _, err = run(capsys, "demo", "--name", "diagcomm", "--blocks", "3",
                       "--block-dim", "2", "--seed", "7")
    assert code == 4
    assert "blocks" in err


def test_demo_mainaux(capsys):
    code, out, _ = run(capsys, "demo", "--name", "mainaux", "--seed", "5")
    assert code == 0
    assert "verdict: pass" in out


def test_demo_pipeline_small(capsys, tmp_path):
    rep = tmp_path / "rep.json"
    code, out, _ = run(capsys, "demo", "--name", "ell1-pipeline", "--blocks",
                       "4", "--seed", "5", "--report", str(rep))
    assert code == 0
    report = json.loads(rep.read_text())
    assert report["residuals"]["pullback"] <= 1e-8


def test_demo_direct_sum(capsys):
    code, out, _ = run(capsys, "demo", "--name", "direct-sum", "--seed", "2")
    assert code == 0


def test_oracle_sylvester_scalar_output(capsys):
    code, out, _ = run(capsys, "oracle", "--name", "sylvester-dense")
    assert code == 0
    assert "-0.769231" in out


def test_oracle_sylvester_seeded(capsys):
    code, out, _ = run(capsys, "oracle", "--name", "sylvester-dense", "--n",
                       "6", "--seed", "4")
    assert code == 0


def test_oracle_series_direct(capsys):
    code, out, _ = run(capsys, "oracle", "--name", "series-direct",
                       "--probes", "24")
    assert code == 0
    assert "max deviation 0" in out


def test_oracle_trace_identity_obstructed(capsys):
    code, out, _ = run(capsys, "oracle", "--name", "trace", "--n", "8")
    assert code == 0
    assert "obstructed" in out


def test_probe_env_override(capsys, monkeypatch):
    monkeypatch.setenv("COMMUTANT_PROBES", "16")
    code, out, _ = run(capsys, "verify-identities")
    assert code == 0
    assert "probes=16" in out
    monkeypatch.setenv("COMMUTANT_PROBES", "zero")
    code, _, err = run(capsys, "verify-identities")
    assert code == 2
