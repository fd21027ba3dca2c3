"""CSV, JSON-lines, PGM and stats.txt writers for scans and censuses."""
import csv
import datetime
import logging
import math
from collections import defaultdict
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set

from pydantic import BaseModel

from app.config import DATA_DIR
from app.models.schemas import CensusRecordSchema, CensusSummarySchema, format_fraction
from app.services.census import CellResult, GridSpec

logger = logging.getLogger(__name__)

CELL_FIELDS = [
    "i", "j", "s", "t", "stage", "palette", "goldman", "min_margin", "reason",
    "f", "e", "e_over_chi", "tau", "tau_mod2_closed", "consistency",
]

RECORD_FIELDS = [
    "signature", "case", "l1", "l2", "l3", "lift", "branch", "s", "t", "min_margin", "goldman",
    "chi", "f", "e", "e_over_chi", "tau", "tau_mod2_closed", "tau_mod2_numeric",
    "consistency", "numeric_agrees", "e_cor",
    "cells_charvar", "cells_pass", "cells_pass_goldman_negative",
]

TRIPLE_FIELDS = ["signature", "records", "selections"]
DIFF_FIELDS = ["signature", "status"]

REFERENCE_BAND = 0.05


def fmt_float(x: Optional[float]) -> str:
    if x is None:
        return ""
    return format(x, ".17g")


def fmt_rational(x: Optional[Fraction]) -> str:
    return "" if x is None else format_fraction(x)


def fmt_bool(x: bool) -> str:
    return "true" if x else "false"


def ensure_data_directory(root: Path = DATA_DIR) -> Path:
    """Create and return a timestamped run directory under the data root"""
    root.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.datetime.now().strftime('%Y%m%d_%H%M%S')
    run_dir = root / timestamp
    run_dir.mkdir(exist_ok=True, parents=True)
    return run_dir


def cell_row(cell: CellResult) -> Dict[str, str]:
    report = cell.report
    return {
        "i": str(cell.i),
        "j": str(cell.j),
        "s": fmt_float(cell.s),
        "t": fmt_float(cell.t),
        "stage": cell.stage.name.lower(),
        "palette": str(cell.palette_code),
        "goldman": fmt_float(cell.goldman),
        "min_margin": fmt_float(cell.min_margin),
        "reason": cell.reason or "",
        "f": str(report.f) if report else "",
        "e": fmt_rational(report.e) if report else "",
        "e_over_chi": fmt_rational(report.e_over_chi) if report else "",
        "tau": fmt_rational(report.tau) if report else "",
        "tau_mod2_closed": fmt_rational(report.tau_mod2_closed) if report else "",
        "consistency": fmt_bool(report.consistency) if report else "",
    }


def record_row(record: CensusRecordSchema) -> Dict[str, str]:
    cell = record.representative
    report = cell.report
    return {
        "signature": record.signature,
        "case": record.case.value,
        "l1": str(record.l1),
        "l2": str(record.l2),
        "l3": str(record.l3),
        "lift": str(record.lift),
        "branch": record.branch.value if record.branch else "",
        "s": fmt_float(cell.s),
        "t": fmt_float(cell.t),
        "min_margin": fmt_float(cell.min_margin),
        "goldman": fmt_float(cell.goldman),
        "chi": fmt_rational(report.chi),
        "f": str(report.f),
        "e": fmt_rational(report.e),
        "e_over_chi": fmt_rational(report.e_over_chi),
        "tau": fmt_rational(report.tau),
        "tau_mod2_closed": fmt_rational(report.tau_mod2_closed),
        "tau_mod2_numeric": fmt_float(report.tau_mod2_numeric),
        "consistency": fmt_bool(report.consistency),
        "numeric_agrees": fmt_bool(report.numeric_agrees),
        "e_cor": fmt_rational(report.e_cor),
        "cells_charvar": str(record.stage_counts["charvar"]),
        "cells_pass": str(record.stage_counts["quadrangle_pass"]),
        "cells_pass_goldman_negative": str(record.stage_counts["pass_goldman_negative"]),
    }


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Dict[str, str]]) -> Path:
    with open(path, 'w', newline='', encoding='utf-8') as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_jsonl(path: Path, models: Iterable[BaseModel]) -> Path:
    with open(path, 'w', encoding='utf-8') as f:
        for model in models:
            f.write(model.model_dump_json() + "\n")
    return path


def stage_raster(cells: Sequence[CellResult], grid: GridSpec) -> List[List[int]]:
    """Palette codes with the largest t on the top row"""
    raster = [[0] * grid.ns for _ in range(grid.nt)]
    for cell in cells:
        raster[grid.nt - 1 - cell.j][cell.i] = cell.palette_code
    return raster


def goldman_raster(cells: Sequence[CellResult], grid: GridSpec) -> List[List[int]]:
    raster = [[0] * grid.ns for _ in range(grid.nt)]
    for cell in cells:
        raster[grid.nt - 1 - cell.j][cell.i] = cell.goldman_code
    return raster


def write_pgm(path: Path, raster: Sequence[Sequence[int]], maxval: int, comment: str = "") -> Path:
    """Plain (P2) graymap"""
    height = len(raster)
    width = len(raster[0]) if height else 0
    with open(path, 'w', encoding='ascii') as f:
        f.write("P2\n")
        if comment:
            f.write(f"# {comment}\n")
        f.write(f"{width} {height}\n{maxval}\n")
        for row in raster:
            f.write(" ".join(str(v) for v in row) + "\n")
    return path


def read_pgm(path: Path) -> List[List[int]]:
    tokens = []
    with open(path, encoding='ascii') as f:
        for line in f:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path} is not a plain PGM file")
    width, height = int(tokens[1]), int(tokens[2])
    values = [int(v) for v in tokens[4:]]
    return [values[r * width:(r + 1) * width] for r in range(height)]


def triple_rows(records: Sequence[CensusRecordSchema]) -> List[Dict[str, str]]:
    """One row per signature with at least one certified selection"""
    grouped: Dict[str, List[str]] = defaultdict(list)
    for record in records:
        branch = f"/{record.branch.value}" if record.branch else ""
        grouped[record.signature].append(f"{record.l1},{record.l2},{record.l3}/{record.lift}{branch}")
    return [{"signature": sig, "records": str(len(items)), "selections": ";".join(items)}
            for sig, items in grouped.items()]


def load_reference(path: Path) -> Set[str]:
    """Signatures from a triples.csv or from plain 'n1,n2,n3' lines"""
    signatures = set()
    with open(path, newline='', encoding='utf-8') as f:
        for row in csv.reader(f):
            if not row or not row[0].strip() or row[0].startswith("#") or row[0] == "signature":
                continue
            if "," in row[0]:
                signatures.add(row[0].strip())
            else:
                signatures.add(",".join(cell.strip() for cell in row[:3]))
    return signatures


def _signature_key(label: str):
    return tuple(int(n) for n in label.split(","))


def triples_diff(found: Iterable[str], reference: Set[str]) -> List[Dict[str, str]]:
    found = set(found)
    rows = [{"signature": sig, "status": "missing"} for sig in reference - found]
    rows += [{"signature": sig, "status": "extra"} for sig in found - reference]
    return sorted(rows, key=lambda r: _signature_key(r["signature"]))


def within_reference_band(count: int, reference_count: int, band: float = REFERENCE_BAND) -> bool:
    low = math.floor(reference_count * (1 - band))
    high = math.ceil(reference_count * (1 + band))
    return low <= count <= high


def generate_stats(summary: CensusSummarySchema, stats_file: Path,
                   reference_count: Optional[int] = None) -> Path:
    """Write the plain-text census summary"""
    with open(stats_file, 'w', encoding='utf-8') as f:
        f.write("Census Summary\n")
        f.write("=" * 50 + "\n")
        f.write(f"Case: {summary.case.value}\n")
        f.write(f"Orders: {summary.n_min} <= n_j <= {summary.n_max}\n")
        f.write(f"Signatures scanned: {summary.signatures}\n")
        f.write(f"Selections tried: {summary.selections}\n")
        f.write(f"Records (selection, lift, branch): {summary.records}\n")
        f.write(f"Triples with a certified selection: {summary.triples}\n")
        if reference_count is not None:
            f.write(f"Reference triples: {reference_count}\n")
        f.write("\n")

        if summary.records:
            f.write(f"e/chi range: [{fmt_rational(summary.e_over_chi_min)}, "
                    f"{fmt_rational(summary.e_over_chi_max)}]\n")
            f.write("Distinct e/chi values:\n")
            for value in summary.distinct_e_over_chi:
                f.write(f"- {fmt_rational(value)} ({float(value):.6f})\n")
            f.write("\n")

        f.write(f"3 tau = 2(e + chi) mod 2: {summary.consistent}/{summary.records}\n")
        f.write(f"Numeric Toledo agrees with closed form: {summary.numeric_agreement}/{summary.records}\n")
        f.write("Relation residual histogram:\n")
        for residual, count in summary.residual_histogram.items():
            f.write(f"- {residual}: {count}\n")
        if summary.relaxed_total:
            f.write(f"\nRelaxed cells (Q1 only): {summary.relaxed_total}, "
                    f"consistent: {summary.relaxed_consistent}\n")
    return stats_file
