from fractions import Fraction
from pathlib import Path

import pytest

from app.models.schemas import CensusRecordSchema, CensusSummarySchema, CellResultSchema
from app.services.census import CellResult, GridSpec, Stage, make_record, run_census, scan_grid, summarize
from app.services.charvar import Branch, Case, make_selection
from app.services.export import (
    RECORD_FIELDS,
    cell_row,
    ensure_data_directory,
    fmt_bool,
    fmt_float,
    fmt_rational,
    generate_stats,
    load_reference,
    read_pgm,
    record_row,
    stage_raster,
    triple_rows,
    triples_diff,
    within_reference_band,
    write_pgm,
)


SAMPLES = Path(__file__).parent.parent / "docs" / "samples"


def test_formatters():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert float(fmt_float(1 / 3)) == 1 / 3
    assert fmt_float(None) == ""
    assert fmt_rational(Fraction(-7, 12)) == "-7/12"
    assert fmt_rational(Fraction(2)) == "2/1"
    assert fmt_bool(True) == "true" and fmt_bool(False) == "false"


def test_ensure_data_directory(tmp_path):
    run_dir = ensure_data_directory(tmp_path / "data")
    assert run_dir.is_dir()
    assert run_dir.parent == tmp_path / "data"


def test_stage_raster_puts_large_t_on_top(tmp_path):
    grid = GridSpec(0, 1, 0, 1, 3, 2)
    cells = [CellResult(i, j, grid.s_at(i), grid.t_at(j), Stage.OUTSIDE) for j in range(2) for i in range(3)]
    cells[5] = CellResult(2, 1, grid.s_at(2), grid.t_at(1), Stage.CHARVAR, goldman=1.0)
    raster = stage_raster(cells, grid)
    assert raster == [[0, 0, 1], [0, 0, 0]]

    path = write_pgm(tmp_path / "r.pgm", raster, 3, comment="test")
    assert path.read_text().splitlines()[:4] == ["P2", "# test", "3 2", "3"]
    assert read_pgm(path) == raster


def test_cell_row_of_outside_cell():
    row = cell_row(CellResult(1, 2, 0.5, 0.25, Stage.OUTSIDE, min_margin=-0.5, reason="ConditionC1Violated"))
    assert row["stage"] == "outside"
    assert row["palette"] == "0"
    assert row["goldman"] == "" and row["e"] == ""
    assert row["reason"] == "ConditionC1Violated"


def test_record_row_and_stats(passing_query, tmp_path):
    sel, branch, cell, _ = passing_query
    record = make_record(sel, branch, [cell])
    schema = CensusRecordSchema.from_record(record)
    row = record_row(schema)
    assert list(row) == RECORD_FIELDS
    assert row["signature"] == sel.signature.label
    assert Fraction(row["e_over_chi"]) == cell.report.e_over_chi
    assert row["consistency"] == "true"

    restored = CensusRecordSchema.model_validate_json(schema.model_dump_json())
    assert record_row(restored) == row
    assert CellResultSchema.model_validate(cell).palette_code == cell.palette_code

    summary = summarize(Case.REGULAR, 3, 4, [record], signatures=1, selections=1, relaxed=[])
    stats = generate_stats(CensusSummarySchema.model_validate(summary), tmp_path / "stats.txt", 533)
    text = stats.read_text()
    assert text.startswith("Census Summary\n" + "=" * 50 + "\n")
    assert "Reference triples: 533" in text
    assert "- 0/1: 1" in text

    triples = triple_rows([schema])
    assert triples == [{"signature": sel.signature.label, "records": "1",
                        "selections": f"{sel.label}/{sel.lift}/{branch.value}"}]


def test_reference_and_diff(tmp_path):
    plain = tmp_path / "plain.txt"
    plain.write_text("# expected\n3,3,4\n3,4,4\n")
    triples = tmp_path / "triples.csv"
    triples.write_text('signature,records,selections\n"3,3,4",2,x\n"5,5,5",1,y\n')
    assert load_reference(plain) == {"3,3,4", "3,4,4"}
    assert load_reference(triples) == {"3,3,4", "5,5,5"}

    diff = triples_diff(["3,3,4", "5,5,5", "10,3,4"], load_reference(plain))
    assert diff == [{"signature": "3,4,4", "status": "missing"},
                    {"signature": "5,5,5", "status": "extra"},
                    {"signature": "10,3,4", "status": "extra"}]


@pytest.mark.parametrize("count,inside", [(506, True), (533, True), (560, True), (505, False), (561, False)])
def test_reference_band(count, inside):
    assert within_reference_band(count, 533) is inside


def test_documented_samples_match_writers(tmp_path, sig334):
    assert (SAMPLES / "census_header.csv").read_text().strip() == ",".join(RECORD_FIELDS)

    grid = GridSpec(0, 1, 0, 1, 4, 3)
    sel = make_selection(sig334, Case.REGULAR, (1, 1, 2))
    cells = scan_grid(sel, Branch.PLUS, grid, workers=1)
    pgm = write_pgm(tmp_path / "region.pgm", stage_raster(cells, grid), 3,
                    comment="stages (3,3,4) 1,1,2 lift 0 plus")
    assert pgm.read_text() == (SAMPLES / "region_outside.pgm").read_text()

    empty = run_census(Case.REGULAR, 3, workers=1)
    stats = generate_stats(CensusSummarySchema.model_validate(empty.summary), tmp_path / "stats.txt")
    assert stats.read_text() == (SAMPLES / "stats_empty.txt").read_text()

    assert load_reference(SAMPLES / "reference.txt") == {"3,3,4", "3,3,5", "3,4,4"}
