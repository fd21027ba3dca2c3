"""Grid scans of the (s, t) plane and per-signature censuses.

Cells are pure functions of (selection, branch, grid, index), so a scan can be
spread over any number of workers and still produce the same ordered output.
"""
import asyncio
import logging
import math
import time
from collections import Counter
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from app.config import DEFAULT_TOL, DEFAULT_WORKERS
from app.errors import BudgetExceeded, DegenerateInput, EmptyEnumeration, TurnoverError
from app.services.charvar import (
    Branch,
    Case,
    CharVarPoint,
    EigenvalueSelection,
    RepresentationTriple,
    TurnoverSignature,
    c1_margins,
    delta,
    enumerate_selections,
    solve,
)
from app.services.invariants import InvariantReport, invariant_report
from app.services.quadrangle import find_quadrangle

logger = logging.getLogger(__name__)

ROWS_PER_WORKER = 4
AUTO_EXTENT_STEPS = 4


@dataclass(frozen=True)
class GridSpec:
    s_min: float = 0.0
    s_max: float = 4.0
    t_min: float = 0.0
    t_max: float = 4.0
    ns: int = 200
    nt: int = 200

    def __post_init__(self):
        if self.s_min < 0 or self.t_min < 0:
            raise DegenerateInput("grid must lie in the quadrant s, t >= 0")
        if self.ns < 1 or self.nt < 1:
            raise DegenerateInput("grid needs at least one cell per axis")
        if self.s_max <= self.s_min or self.t_max <= self.t_min:
            raise DegenerateInput("grid ranges must be increasing")

    @staticmethod
    def parse_range(text: str) -> Tuple[float, float, int]:
        """'a:b:n' -> (a, b, n)"""
        try:
            low, high, count = text.split(":")
            return float(low), float(high), int(count)
        except ValueError:
            raise DegenerateInput(f"expected a range 'a:b:n', got '{text}'")

    @classmethod
    def from_ranges(cls, s_range: str, t_range: str) -> "GridSpec":
        s_min, s_max, ns = cls.parse_range(s_range)
        t_min, t_max, nt = cls.parse_range(t_range)
        return cls(s_min, s_max, t_min, t_max, ns, nt)

    def s_at(self, i: int) -> float:
        return self.s_min + (i + 0.5) * (self.s_max - self.s_min) / self.ns

    def t_at(self, j: int) -> float:
        return self.t_min + (j + 0.5) * (self.t_max - self.t_min) / self.nt

    def expanded(self, factor: float = 2.0) -> "GridSpec":
        """Same resolution count over a larger window anchored at (s_min, t_min)"""
        return replace(self, s_max=self.s_min + factor * (self.s_max - self.s_min),
                       t_max=self.t_min + factor * (self.t_max - self.t_min))

    @property
    def cells(self) -> int:
        return self.ns * self.nt


class Stage(IntEnum):
    OUTSIDE = 0
    CHARVAR = 1
    QUADRANGLE_PASS = 2


class BranchPolicy(str, Enum):
    PLUS = "plus"
    MINUS = "minus"
    BOTH = "both"

    @property
    def branches(self) -> Tuple[Branch, ...]:
        if self is BranchPolicy.BOTH:
            return (Branch.PLUS, Branch.MINUS)
        return (Branch(self.value),)


@dataclass(frozen=True)
class CellResult:
    i: int
    j: int
    s: float
    t: float
    stage: Stage
    goldman: Optional[float] = None
    min_margin: Optional[float] = None
    reason: Optional[str] = None
    report: Optional[InvariantReport] = None
    relaxed_report: Optional[InvariantReport] = None

    @property
    def palette_code(self) -> int:
        """0 outside, 1 CharVar, 2 quadrangle pass, 3 pass with G < 0"""
        if self.stage is Stage.QUADRANGLE_PASS and self.goldman is not None and self.goldman < 0:
            return 3
        return int(self.stage)

    @property
    def goldman_code(self) -> int:
        if self.goldman is None:
            return 0
        return 2 if self.goldman < 0 else 1


def _certify(rep: RepresentationTriple, tol: float,
             record_relaxed: bool) -> Tuple[Stage, Optional[float], Optional[str],
                                            Optional[InvariantReport], Optional[InvariantReport]]:
    sel = rep.selection
    try:
        qd, certificate = find_quadrangle(rep, tol)
    except TurnoverError as e:
        return Stage.CHARVAR, None, type(e).__name__, None, None

    if not certificate.passed:
        relaxed = None
        if record_relaxed and certificate.q1_holds:
            try:
                relaxed = invariant_report(sel, qd, rep, tol=tol)
            except TurnoverError as e:
                logger.debug(f"relaxed invariants unavailable: {e}")
        reason = "quadrangle:" + ",".join(certificate.failed)
        return Stage.CHARVAR, certificate.min_margin, reason, None, relaxed

    try:
        report = invariant_report(sel, qd, rep, tol=tol)
    except TurnoverError as e:
        logger.warning(f"({sel.signature.label}) {sel.label} at ({rep.point.s:.6g}, {rep.point.t:.6g}) "
                       f"passes the quadrangle conditions but has no invariants: {e}")
        return Stage.CHARVAR, certificate.min_margin, type(e).__name__, None, None
    return Stage.QUADRANGLE_PASS, certificate.min_margin, None, report, None


def evaluate_cell(sel: EigenvalueSelection, branch: Branch, i: int, j: int, s: float, t: float,
                  tol: float = DEFAULT_TOL, record_relaxed: bool = False) -> CellResult:
    margin = None
    try:
        margins = c1_margins(sel, s, t)
        margin = margins.minimum if not margins.holds else delta(sel, s, t, margins)
        rep = solve(sel, CharVarPoint(s, t, branch))
    except TurnoverError as e:
        logger.debug(f"cell ({i}, {j}) outside: {e}")
        return CellResult(i, j, s, t, Stage.OUTSIDE, min_margin=margin, reason=type(e).__name__)

    stage, margin, reason, report, relaxed = _certify(rep, tol, record_relaxed)
    return CellResult(i, j, s, t, stage, goldman=rep.goldman(), min_margin=margin,
                      reason=reason, report=report, relaxed_report=relaxed)


def scan_row(sel: EigenvalueSelection, branch: Branch, grid: GridSpec, j: int,
             tol: float = DEFAULT_TOL, record_relaxed: bool = False) -> List[CellResult]:
    # module level so process pools can pickle it
    t = grid.t_at(j)
    return [evaluate_cell(sel, branch, i, j, grid.s_at(i), t, tol, record_relaxed)
            for i in range(grid.ns)]


def evaluate_rigid(sel: EigenvalueSelection, tol: float = DEFAULT_TOL,
                   record_relaxed: bool = False) -> CellResult:
    """The single triple of a special case"""
    try:
        rep = solve(sel)
    except TurnoverError as e:
        logger.debug(f"({sel.signature.label}) {sel.label} infeasible: {e}")
        return CellResult(0, 0, math.nan, math.nan, Stage.OUTSIDE, reason=type(e).__name__)
    stage, margin, reason, report, relaxed = _certify(rep, tol, record_relaxed)
    return CellResult(0, 0, rep.point.s, rep.point.t, stage, goldman=rep.goldman(),
                      min_margin=margin, reason=reason, report=report, relaxed_report=relaxed)


@dataclass
class Budget:
    max_seconds: Optional[float] = None
    max_cells: Optional[int] = None
    cells: int = 0
    started: float = field(default_factory=time.monotonic)

    def charge(self, cells: int):
        self.cells += cells

    def exceeded(self) -> Optional[str]:
        if self.max_cells is not None and self.cells >= self.max_cells:
            return f"cell budget of {self.max_cells} exhausted"
        if self.max_seconds is not None and time.monotonic() - self.started >= self.max_seconds:
            return f"time budget of {self.max_seconds}s exhausted"
        return None


@dataclass(frozen=True)
class CensusRecord:
    signature: TurnoverSignature
    case: Case
    selection: EigenvalueSelection
    branch: Optional[Branch]
    representative: CellResult
    stage_counts: Dict[str, int]
    distinct_e: Tuple[Fraction, ...]

    @property
    def report(self) -> InvariantReport:
        return self.representative.report

    @property
    def key(self) -> Tuple:
        return (self.signature.orders, self.selection.rotation_numbers, self.selection.lift,
                self.branch.value if self.branch else "")


@dataclass
class CensusSummary:
    case: Case
    n_min: int
    n_max: int
    signatures: int = 0
    selections: int = 0
    records: int = 0
    triples: int = 0
    distinct_e_over_chi: List[Fraction] = field(default_factory=list)
    e_over_chi_min: Optional[Fraction] = None
    e_over_chi_max: Optional[Fraction] = None
    consistent: int = 0
    numeric_agreement: int = 0
    residual_histogram: Dict[str, int] = field(default_factory=dict)
    relaxed_total: int = 0
    relaxed_consistent: int = 0


@dataclass
class CensusResult:
    records: List[CensusRecord]
    summary: CensusSummary


def stage_counts(cells: Sequence[CellResult]) -> Dict[str, int]:
    counts = Counter(cell.stage for cell in cells)
    return {
        "outside": counts[Stage.OUTSIDE],
        "charvar": counts[Stage.CHARVAR] + counts[Stage.QUADRANGLE_PASS],
        "quadrangle_pass": counts[Stage.QUADRANGLE_PASS],
        "pass_goldman_negative": sum(1 for c in cells if c.palette_code == 3),
    }


def make_record(sel: EigenvalueSelection, branch: Optional[Branch],
                cells: Sequence[CellResult]) -> Optional[CensusRecord]:
    passing = [c for c in cells if c.stage is Stage.QUADRANGLE_PASS]
    if not passing:
        return None
    # cells arrive ordered by (j, i); max keeps the first of equal margins
    representative = max(passing, key=lambda c: c.min_margin)
    distinct_e = tuple(sorted({c.report.e for c in passing}))
    if len(distinct_e) > 1:
        logger.warning(f"({sel.signature.label}) {sel.label} lift {sel.lift}: "
                       f"passing region carries several Euler numbers {[str(e) for e in distinct_e]}")
    return CensusRecord(signature=sel.signature, case=sel.case, selection=sel, branch=branch,
                        representative=representative, stage_counts=stage_counts(cells),
                        distinct_e=distinct_e)


def census_signatures(case: Case, n_max: int, n_min: int = 3) -> Iterator[TurnoverSignature]:
    """Hyperbolic signatures in lexicographic order; special cases let n2 start at 2."""
    low2 = n_min if case is Case.REGULAR else 2
    for n1 in range(n_min, n_max + 1):
        for n2 in range(low2, n_max + 1):
            for n3 in range(n_min, n_max + 1):
                if Fraction(1, n1) + Fraction(1, n2) + Fraction(1, n3) < 1:
                    yield TurnoverSignature(n1, n2, n3)


def _touches_far_frame(cells: Sequence[CellResult], grid: GridSpec) -> bool:
    return any(c.stage is not Stage.OUTSIDE and (c.i == grid.ns - 1 or c.j == grid.nt - 1)
               for c in cells)


def summarize(case: Case, n_min: int, n_max: int, records: Sequence[CensusRecord],
              signatures: int, selections: int, relaxed: Sequence[InvariantReport]) -> CensusSummary:
    ratios = sorted({r.report.e_over_chi for r in records})
    residuals = (r.report.relation_residual for r in records)
    histogram = Counter(f"{x.numerator}/{x.denominator}" for x in residuals)
    return CensusSummary(
        case=case, n_min=n_min, n_max=n_max,
        signatures=signatures, selections=selections,
        records=len(records),
        triples=len({r.signature for r in records}),
        distinct_e_over_chi=ratios,
        e_over_chi_min=ratios[0] if ratios else None,
        e_over_chi_max=ratios[-1] if ratios else None,
        consistent=sum(1 for r in records if r.report.consistency),
        numeric_agreement=sum(1 for r in records if r.report.numeric_agrees),
        residual_histogram=dict(sorted(histogram.items())),
        relaxed_total=len(relaxed),
        relaxed_consistent=sum(1 for r in relaxed if r.consistency),
    )


class CensusRunner:
    """Async engine for grid scans and censuses over an executor"""

    def __init__(self, workers: int = DEFAULT_WORKERS, tol: float = DEFAULT_TOL,
                 budget: Optional[Budget] = None, progress_callback: Optional[Callable] = None,
                 record_relaxed: bool = False):
        self.workers = max(1, workers)
        self.tol = tol
        self.budget = budget or Budget()
        self.progress_callback = progress_callback
        self.record_relaxed = record_relaxed

    async def _send_progress(self, message_type: str, data: dict):
        """Send progress update via callback if provided"""
        if self.progress_callback:
            await self.progress_callback(message_type, data)

    @contextmanager
    def _pool_scope(self) -> Iterator[Executor]:
        pool = ProcessPoolExecutor(self.workers) if self.workers > 1 else ThreadPoolExecutor(1)
        try:
            yield pool
        finally:
            pool.shutdown(wait=True, cancel_futures=True)

    async def _scan(self, pool: Executor, sel: EigenvalueSelection, branch: Branch,
                    grid: GridSpec) -> List[CellResult]:
        loop = asyncio.get_running_loop()
        cells: List[CellResult] = []
        batch = self.workers * ROWS_PER_WORKER
        for start in range(0, grid.nt, batch):
            reason = self.budget.exceeded()
            if reason:
                raise BudgetExceeded(reason, partial=cells)
            rows = range(start, min(start + batch, grid.nt))
            futures = [loop.run_in_executor(pool, scan_row, sel, branch, grid, j,
                                            self.tol, self.record_relaxed)
                       for j in rows]
            for row in await asyncio.gather(*futures):
                cells.extend(row)
            self.budget.charge(len(rows) * grid.ns)
        return cells

    async def _scan_extent(self, pool: Executor, sel: EigenvalueSelection, branch: Branch,
                           grid: GridSpec, auto_extent: bool) -> List[CellResult]:
        cells = await self._scan(pool, sel, branch, grid)
        if not auto_extent:
            return cells
        for _ in range(AUTO_EXTENT_STEPS):
            if not _touches_far_frame(cells, grid):
                break
            grid = grid.expanded()
            logger.debug(f"({sel.signature.label}) {sel.label}: expanding grid to "
                         f"[{grid.s_min}, {grid.s_max}] x [{grid.t_min}, {grid.t_max}]")
            cells = await self._scan(pool, sel, branch, grid)
        return cells

    async def scan_grid(self, sel: EigenvalueSelection, branch: Branch,
                        grid: GridSpec) -> List[CellResult]:
        with self._pool_scope() as pool:
            return await self._scan(pool, sel, branch, grid)

    async def run_census(self, case: Case, n_max: int, grid: Optional[GridSpec] = None,
                         branch_policy: BranchPolicy = BranchPolicy.BOTH, n_min: int = 3,
                         lifts: Sequence[int] = (0, 1, 2),
                         auto_extent: bool = False) -> CensusResult:
        grid = grid or GridSpec()
        signatures = list(census_signatures(case, n_max, n_min))
        records: List[CensusRecord] = []
        relaxed: List[InvariantReport] = []
        selection_total = 0
        loop = asyncio.get_running_loop()

        with self._pool_scope() as pool:
            for index, sig in enumerate(signatures, 1):
                try:
                    selections = enumerate_selections(sig, case, lifts)
                except EmptyEnumeration as e:
                    logger.debug(str(e))
                    continue
                selection_total += len(selections)
                await self._send_progress("signature_started", {
                    "signature": sig.label,
                    "selections": len(selections),
                    "index": index,
                    "total": len(signatures),
                })

                found = 0
                try:
                    if case is Case.REGULAR:
                        for sel in selections:
                            for branch in branch_policy.branches:
                                cells = await self._scan_extent(pool, sel, branch, grid, auto_extent)
                                relaxed.extend(c.relaxed_report for c in cells if c.relaxed_report)
                                record = make_record(sel, branch, cells)
                                if record:
                                    records.append(record)
                                    found += 1
                    else:
                        reason = self.budget.exceeded()
                        if reason:
                            raise BudgetExceeded(reason)
                        futures = [loop.run_in_executor(pool, evaluate_rigid, sel, self.tol,
                                                        self.record_relaxed)
                                   for sel in selections]
                        for sel, cell in zip(selections, await asyncio.gather(*futures)):
                            if cell.relaxed_report:
                                relaxed.append(cell.relaxed_report)
                            record = make_record(sel, None, [cell])
                            if record:
                                records.append(record)
                                found += 1
                        self.budget.charge(len(selections))
                except BudgetExceeded as e:
                    logger.warning(f"census stopped at ({sig.label}): {e.message}")
                    raise BudgetExceeded(e.message, partial=CensusResult(
                        records, summarize(case, n_min, n_max, records, index - 1,
                                           selection_total, relaxed)))

                logger.info(f"({sig.label}): {found} of {len(selections)} selections certified")
                await self._send_progress("signature_done", {
                    "signature": sig.label,
                    "records": found,
                    "index": index,
                    "total": len(signatures),
                })

        summary = summarize(case, n_min, n_max, records, len(signatures), selection_total, relaxed)
        return CensusResult(records, summary)


def scan_grid(sel: EigenvalueSelection, branch: Branch, grid: GridSpec,
              workers: int = DEFAULT_WORKERS, tol: float = DEFAULT_TOL,
              record_relaxed: bool = False) -> List[CellResult]:
    runner = CensusRunner(workers=workers, tol=tol, record_relaxed=record_relaxed)
    return asyncio.run(runner.scan_grid(sel, branch, grid))


def run_census(case: Case, n_max: int, grid: Optional[GridSpec] = None,
               branch_policy: BranchPolicy = BranchPolicy.BOTH, n_min: int = 3,
               lifts: Sequence[int] = (0, 1, 2), auto_extent: bool = False,
               workers: int = DEFAULT_WORKERS, tol: float = DEFAULT_TOL,
               budget: Optional[Budget] = None, record_relaxed: bool = False) -> CensusResult:
    runner = CensusRunner(workers=workers, tol=tol, budget=budget, record_relaxed=record_relaxed)
    return asyncio.run(runner.run_census(case, n_max, grid, branch_policy, n_min, lifts, auto_extent))
