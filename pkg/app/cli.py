"""Command-line front end: point queries, region scans, censuses and Goldman rasters."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dotenv import dotenv_values
from pydantic import ValidationError

from app.errors import (
    BudgetExceeded,
    CPlaneRepresentation,
    DegenerateInput,
    EmptyEnumeration,
    InvalidSelection,
    InvalidSignature,
    TurnoverError,
)
from app.models.schemas import CensusRecordSchema, CensusSummarySchema, InvariantReportSchema, RunConfig
from app.services.census import Budget, CensusResult, Stage, run_census, scan_grid, stage_counts
from app.services.charvar import Case, CharVarPoint, make_selection
from app.services.export import (
    CELL_FIELDS,
    DIFF_FIELDS,
    RECORD_FIELDS,
    TRIPLE_FIELDS,
    cell_row,
    ensure_data_directory,
    generate_stats,
    goldman_raster,
    load_reference,
    record_row,
    stage_raster,
    triple_rows,
    triples_diff,
    within_reference_band,
    write_csv,
    write_jsonl,
    write_pgm,
)
from app.services.invariants import query_point

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2

BAD_ARGUMENTS = (InvalidSignature, InvalidSelection, CPlaneRepresentation, EmptyEnumeration, DegenerateInput)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--config', help='key=value file; keys are flag names, explicit flags win')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    common.add_argument('--tol', type=float, help='classification tolerance')
    common.add_argument('--workers', type=int, help='worker processes (default: TURNOVER_WORKERS or 1)')
    common.add_argument('--out', help='output file (PGM for scan and goldman, CSV for census)')

    selection = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    selection.add_argument('--signature', help='orders n1,n2,n3, e.g. 3,3,4')
    selection.add_argument('--selection', help='rotation numbers l1,l2,l3')
    selection.add_argument('--lift', type=int, help='SU lift of gamma: 0, 1 or 2')
    selection.add_argument('--branch', choices=['plus', 'minus'], help='sign of the square root of delta')

    region = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    region.add_argument('--s-range', dest='s_range', help='a:b:n cells along s (default 0:4:200)')
    region.add_argument('--t-range', dest='t_range', help='a:b:n cells along t (default 0:4:200)')

    parser = argparse.ArgumentParser(prog='turnover',
                                     description='Disc orbibundles from PU(2,1) representations of turnover groups.')
    commands = parser.add_subparsers(dest='command', required=True)

    invariants = commands.add_parser('invariants', parents=[common, selection],
                                     argument_default=argparse.SUPPRESS,
                                     help='invariants at one point, printed as JSON')
    invariants.add_argument('--case', choices=[c.value for c in Case])
    invariants.add_argument('--s', type=float)
    invariants.add_argument('--t', type=float)

    scan = commands.add_parser('scan', parents=[common, selection, region],
                               argument_default=argparse.SUPPRESS,
                               help='stage raster and per-cell CSV of an (s, t) window')
    scan.add_argument('--csv', help='per-cell CSV')
    scan.add_argument('--record-relaxed', dest='record_relaxed', action='store_true',
                      help='also compute invariants where only Q1 holds')

    census = commands.add_parser('census', parents=[common, region],
                                 argument_default=argparse.SUPPRESS,
                                 help='census over all signatures up to --n-max')
    census.add_argument('--case', choices=[c.value for c in Case])
    census.add_argument('--n-max', dest='n_max', type=int)
    census.add_argument('--n-min', dest='n_min', type=int)
    census.add_argument('--branch-policy', dest='branch_policy', choices=['plus', 'minus', 'both'])
    census.add_argument('--lifts', help='comma separated subset of 0,1,2')
    census.add_argument('--auto-extent', dest='auto_extent', action='store_true')
    census.add_argument('--record-relaxed', dest='record_relaxed', action='store_true')
    census.add_argument('--reference', help='expected triples to diff against')
    census.add_argument('--max-seconds', dest='max_seconds', type=float)
    census.add_argument('--max-cells', dest='max_cells', type=int)

    commands.add_parser('goldman', parents=[common, selection, region],
                        argument_default=argparse.SUPPRESS,
                        help='raster of the sign of the Goldman discriminant')
    return parser


def _normalize_key(key: str) -> str:
    return key.strip().lstrip('-').replace('-', '_').lower()


def merge_config(command: str, cli: Dict[str, object], config_file: Optional[str]) -> Dict[str, object]:
    """File values first, explicit flags on top"""
    merged: Dict[str, object] = {}
    if config_file:
        if not Path(config_file).is_file():
            raise FileNotFoundError(f"--config: no such file '{config_file}'")
        merged.update({_normalize_key(k): v for k, v in dotenv_values(config_file).items() if v is not None})
    merged.update(cli)
    merged['command'] = command
    if isinstance(merged.get('lifts'), str):
        merged['lifts'] = [int(k) for k in merged['lifts'].split(',') if k.strip()]
    return merged


def _print_error(payload: Dict[str, object]):
    print(json.dumps(payload, indent=2))


def _validation_payload(e: ValidationError) -> Dict[str, object]:
    problems = []
    for error in e.errors():
        flag = f"--{str(error['loc'][0]).replace('_', '-')}" if error['loc'] else ""
        problems.append(f"{flag}: {error['msg']}" if flag else error['msg'])
    return {"error": "ValidationError", "message": "; ".join(problems), "details": {"errors": problems}}


def _prepare(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def run_invariants(config: RunConfig) -> int:
    sel = make_selection(config.parsed_signature, config.case, config.rotation_numbers, config.lift)
    point = CharVarPoint(config.s, config.t, config.branch) if config.case is Case.REGULAR else None
    result = query_point(sel, point, config.tol)
    print(InvariantReportSchema.model_validate(result.report).model_dump_json(indent=2))
    return EXIT_OK


def _scan(config: RunConfig, record_relaxed: bool = False):
    sel = make_selection(config.parsed_signature, Case.REGULAR, config.rotation_numbers, config.lift)
    grid = config.grid()
    cells = scan_grid(sel, config.branch, grid, workers=config.workers, tol=config.tol,
                      record_relaxed=record_relaxed)
    return sel, grid, cells


def run_scan(config: RunConfig) -> int:
    sel, grid, cells = _scan(config, config.record_relaxed)
    label = f"({sel.signature.label}) {sel.label} lift {sel.lift} {config.branch.value}"
    pgm = _prepare(Path(config.out)) if config.out else ensure_data_directory() / "region.pgm"
    csv_path = _prepare(Path(config.csv)) if config.csv else pgm.with_suffix(".csv")

    write_pgm(pgm, stage_raster(cells, grid), 3, comment=f"stages {label}")
    write_csv(csv_path, CELL_FIELDS, (cell_row(c) for c in cells))
    logger.info(f"Wrote {pgm} and {csv_path}")

    counts = stage_counts(cells)
    print(f"\n{'='*80}")
    print(f"Scan of {label}: {grid.ns}x{grid.nt} cells")
    print(f"{'='*80}")
    for name, count in counts.items():
        print(f"- {name}: {count}")
    reports = {str(c.report.e) for c in cells if c.stage is Stage.QUADRANGLE_PASS}
    if reports:
        print(f"Euler numbers on passing cells: {', '.join(sorted(reports))}")
    return EXIT_OK


def run_goldman(config: RunConfig) -> int:
    sel, grid, cells = _scan(config)
    pgm = _prepare(Path(config.out)) if config.out else ensure_data_directory() / "goldman.pgm"
    write_pgm(pgm, goldman_raster(cells, grid), 2,
              comment=f"goldman sign ({sel.signature.label}) {sel.label} lift {sel.lift}")
    negative = sum(1 for c in cells if c.goldman_code == 2)
    positive = sum(1 for c in cells if c.goldman_code == 1)
    logger.info(f"Wrote {pgm}")
    print(f"G < 0 on {negative} cells, G >= 0 on {positive} cells of the character variety")
    return EXIT_OK


def write_census(result: CensusResult, out: Path, reference: Optional[str]) -> List[CensusRecordSchema]:
    records = [CensusRecordSchema.from_record(r) for r in result.records]
    summary = CensusSummarySchema.model_validate(result.summary)
    directory = out.parent

    write_csv(out, RECORD_FIELDS, (record_row(r) for r in records))
    write_jsonl(out.with_suffix(".jsonl"), records)
    triples = triple_rows(records)
    write_csv(directory / "triples.csv", TRIPLE_FIELDS, triples)

    reference_count = None
    if reference:
        expected = load_reference(Path(reference))
        reference_count = len(expected)
        write_csv(directory / "triples_diff.csv", DIFF_FIELDS,
                  triples_diff((row["signature"] for row in triples), expected))
        if not within_reference_band(len(triples), reference_count):
            logger.warning(f"{len(triples)} triples found against {reference_count} expected; "
                           f"see {directory / 'triples_diff.csv'}")
    generate_stats(summary, directory / "stats.txt", reference_count)
    logger.info(f"Census written to {directory}")
    return records


def run_census_command(config: RunConfig) -> int:
    budget = Budget(max_seconds=config.max_seconds, max_cells=config.max_cells)
    out = _prepare(Path(config.out)) if config.out else ensure_data_directory() / "census.csv"
    status = EXIT_OK
    try:
        result = run_census(config.case, config.n_max, config.grid(), config.branch_policy,
                            config.n_min, config.lifts, config.auto_extent,
                            workers=config.workers, tol=config.tol, budget=budget,
                            record_relaxed=config.record_relaxed)
    except BudgetExceeded as e:
        logger.error(f"Census incomplete: {e.message}")
        _print_error(e.to_dict())
        if not isinstance(e.partial, CensusResult):
            return EXIT_INFEASIBLE
        result = e.partial
        status = EXIT_INFEASIBLE

    write_census(result, out, config.reference)
    summary = result.summary
    print(f"\n{'='*80}")
    print(f"{config.case.value} census, {config.n_min} <= n_j <= {config.n_max}")
    print(f"{'='*80}")
    print(f"Records: {summary.records} over {summary.triples} triples")
    if summary.records:
        print(f"e/chi in [{summary.e_over_chi_min}, {summary.e_over_chi_max}]")
    print(f"Consistent with 3 tau = 2(e + chi): {summary.consistent}/{summary.records}")
    print(f"Results saved to: {out.parent}/")
    return status


COMMANDS = {
    "invariants": run_invariants,
    "scan": run_scan,
    "census": run_census_command,
    "goldman": run_goldman,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    command = args.pop('command')
    verbose = args.pop('verbose', False)
    config_file = args.pop('config', None)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(levelname)s: %(message)s')

    try:
        config = RunConfig(**merge_config(command, args, config_file))
    except ValidationError as e:
        payload = _validation_payload(e)
        logger.error(payload["message"])
        _print_error(payload)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as e:
        logger.error(str(e))
        _print_error({"error": type(e).__name__, "message": str(e), "details": {}})
        return EXIT_USAGE

    try:
        return COMMANDS[command](config)
    except BAD_ARGUMENTS as e:
        logger.error(e.message)
        _print_error(e.to_dict())
        return EXIT_USAGE
    except TurnoverError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        _print_error(e.to_dict())
        return EXIT_INFEASIBLE


def main():
    sys.exit(dispatch())
