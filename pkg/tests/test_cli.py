import csv
import json
from fractions import Fraction

from app.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, dispatch
from app.models.schemas import InvariantReportSchema
from app.services.export import CELL_FIELDS, RECORD_FIELDS, read_pgm

OUTSIDE_QUERY = ["invariants", "--signature", "3,3,4", "--selection", "1,1,2", "--lift", "0",
                 "--s", "0.1", "--t", "0.2"]


def first_json(text: str) -> dict:
    """First JSON object printed to stdout"""
    return json.JSONDecoder().raw_decode(text[text.index("{"):])[0]


def test_invariants_outside_component(capsys):
    assert dispatch(OUTSIDE_QUERY) == EXIT_INFEASIBLE
    payload = first_json(capsys.readouterr().out)
    assert payload["error"] == "ConditionC1Violated"
    assert set(payload["details"]["margins"]) == {"v2_sq", "v3_sq", "v1_sq"}


def test_bad_arguments(capsys):
    assert dispatch(["invariants", "--signature", "2,3,6", "--selection", "1,1,2",
                     "--s", "0.1", "--t", "0.1"]) == EXIT_USAGE
    assert "--signature" in first_json(capsys.readouterr().out)["message"]

    assert dispatch(["invariants", "--signature", "3,3,4", "--s", "0.1", "--t", "0.1"]) == EXIT_USAGE
    assert "--selection" in first_json(capsys.readouterr().out)["message"]

    assert dispatch(["invariants", "--signature", "3,3,4", "--selection", "9,9,9",
                     "--s", "0.1", "--t", "0.1"]) == EXIT_USAGE
    assert first_json(capsys.readouterr().out)["error"] == "InvalidSelection"

    assert dispatch(["census", "--case", "regular"]) == EXIT_USAGE
    assert "--n-max" in first_json(capsys.readouterr().out)["message"]

    assert dispatch(["unfold"]) == EXIT_USAGE


def test_invariants_at_passing_point(capsys, passing_query):
    sel, branch, cell, query = passing_query
    code = dispatch(["invariants", "--signature", sel.signature.label, "--selection", sel.label,
                     "--lift", str(sel.lift), "--branch", branch.value,
                     "--s", str(cell.s), "--t", str(cell.t)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    schema = InvariantReportSchema.model_validate_json(out[out.index("{"):])
    assert schema.to_report() == query.report


def test_config_file_and_flag_precedence(tmp_path, capsys):
    config = tmp_path / "query.env"
    config.write_text("signature=3,3,4\nselection=1,1,2\nlift=0\ns=0.1\nt=0.2\n")
    assert dispatch(["invariants", "--config", str(config)]) == EXIT_INFEASIBLE
    assert first_json(capsys.readouterr().out)["error"] == "ConditionC1Violated"

    assert dispatch(["invariants", "--config", str(config), "--selection", "9,9,9"]) == EXIT_USAGE
    capsys.readouterr()
    assert dispatch(["invariants", "--config", str(tmp_path / "missing.env")]) == EXIT_USAGE


def test_scan_writes_raster_and_cells(tmp_path, passing_query):
    sel, branch, _, _ = passing_query
    out = tmp_path / "scan" / "region.pgm"
    code = dispatch(["scan", "--signature", sel.signature.label, "--selection", sel.label,
                     "--lift", str(sel.lift), "--branch", branch.value,
                     "--s-range", "0:0.4:8", "--t-range", "0:0.4:6", "--out", str(out)])
    assert code == EXIT_OK
    assert out.read_text().startswith("P2\n")
    raster = read_pgm(out)
    assert len(raster) == 6 and all(len(row) == 8 for row in raster)
    assert {v for row in raster for v in row} <= {0, 1, 2, 3}

    with open(out.with_suffix(".csv"), newline="") as f:
        reader = csv.DictReader(f)
        assert reader.fieldnames == CELL_FIELDS
        assert len(list(reader)) == 48


def test_goldman_raster(tmp_path, sig334):
    out = tmp_path / "goldman.pgm"
    code = dispatch(["goldman", "--signature", "3,3,4", "--selection", "1,1,1",
                     "--s-range", "0:0.4:5", "--t-range", "0:0.4:5", "--out", str(out)])
    assert code == EXIT_OK
    assert {v for row in read_pgm(out) for v in row} <= {0, 1, 2}


def test_special_line_census_outputs(tmp_path):
    reference = tmp_path / "reference.csv"
    reference.write_text("signature\n20,20,20\n")
    out = tmp_path / "run" / "census.csv"
    code = dispatch(["census", "--case", "special-line", "--n-max", "5", "--out", str(out),
                     "--reference", str(reference)])
    assert code == EXIT_OK

    with open(out, newline="") as f:
        reader = csv.DictReader(f)
        assert reader.fieldnames == RECORD_FIELDS
        rows = list(reader)
    for row in rows:
        assert 0 < Fraction(row["e_over_chi"]) <= Fraction(1, 2)
        assert row["case"] == "special-line"
    assert len(out.with_suffix(".jsonl").read_text().splitlines()) == len(rows)

    run_dir = out.parent
    assert (run_dir / "stats.txt").read_text().startswith("Census Summary\n")
    assert (run_dir / "triples.csv").exists()
    with open(run_dir / "triples_diff.csv", newline="") as f:
        diff = list(csv.DictReader(f))
    assert {"signature": "20,20,20", "status": "missing"} in diff


def test_census_budget_exit_code(tmp_path, capsys):
    out = tmp_path / "census.csv"
    code = dispatch(["census", "--n-max", "4", "--lifts", "0", "--s-range", "0:0.4:4",
                     "--t-range", "0:0.4:4", "--max-cells", "1", "--out", str(out)])
    assert code == EXIT_INFEASIBLE
    assert first_json(capsys.readouterr().out)["error"] == "BudgetExceeded"
    assert out.exists()


def test_census_jsonl_path_follows_out(tmp_path, capsys):
    config = tmp_path / "census.env"
    config.write_text(f"jsonl={tmp_path / 'elsewhere.jsonl'}\n")
    assert dispatch(["census", "--case", "special-line", "--n-max", "4", "--config", str(config)]) == EXIT_USAGE
    assert "--jsonl" in first_json(capsys.readouterr().out)["message"]
