from datetime import datetime
from fractions import Fraction
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    field_validator,
    model_validator,
)

from app.config import DEFAULT_TOL, DEFAULT_WORKERS
from app.errors import TurnoverError
from app.services.census import BranchPolicy, CensusRecord, GridSpec
from app.services.charvar import Branch, Case, TurnoverSignature
from app.services.invariants import InvariantReport


def _parse_fraction(value: Any) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (Fraction, int, str)):
        raise ValueError(f"expected an exact rational 'p/q', got {value!r}")
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"'{value}' is not a rational number")


def format_fraction(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


Rational = Annotated[
    Fraction,
    PlainValidator(_parse_fraction),
    PlainSerializer(format_fraction, return_type=str, when_used="json"),
    WithJsonSchema({"type": "string", "pattern": r"^-?\d+/\d+$"}),
]


def _check_signature(value: Optional[str]) -> Optional[str]:
    if value is None:
        return value
    try:
        return TurnoverSignature.parse(value).label
    except TurnoverError as e:
        raise ValueError(e.message)


def _check_selection(value: Optional[str]) -> Optional[str]:
    if value is None:
        return value
    parts = value.split(",")
    if len(parts) != 3 or not all(p.strip().lstrip("-").isdigit() for p in parts):
        raise ValueError(f"expected three comma separated integers l1,l2,l3, got '{value}'")
    return ",".join(p.strip() for p in parts)


def _check_range(value: Optional[str]) -> Optional[str]:
    if value is None:
        return value
    try:
        low, high, count = GridSpec.parse_range(value)
    except TurnoverError as e:
        raise ValueError(e.message)
    if low < 0 or high <= low or count < 1:
        raise ValueError(f"range '{value}' needs 0 <= a < b and n >= 1")
    return value


class InvariantReportSchema(BaseModel):
    model_config = ConfigDict(from_attributes=True, arbitrary_types_allowed=True)

    chi: Rational
    l1: int
    l2: int
    l3: int
    f: int
    e: Rational
    e_over_chi: Rational
    tau: Rational
    tau_mod2_closed: Rational
    tau_mod2_numeric: float
    consistency: bool
    numeric_agrees: bool
    e_cor: Rational
    holonomy_i_angle: Optional[float] = None
    holonomy_j_angle: Optional[float] = None

    def to_report(self) -> InvariantReport:
        return InvariantReport(**self.model_dump())


class CellResultSchema(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    i: int
    j: int
    s: float
    t: float
    stage: int
    palette_code: int
    goldman_code: int
    goldman: Optional[float] = None
    min_margin: Optional[float] = None
    reason: Optional[str] = None
    report: Optional[InvariantReportSchema] = None
    relaxed_report: Optional[InvariantReportSchema] = None


class CensusRecordSchema(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    signature: str
    case: Case
    l1: int
    l2: int
    l3: int
    lift: int
    branch: Optional[Branch] = None
    representative: CellResultSchema
    stage_counts: Dict[str, int]
    distinct_e: List[Rational]

    @classmethod
    def from_record(cls, record: CensusRecord) -> "CensusRecordSchema":
        sel = record.selection
        return cls(
            signature=record.signature.label,
            case=record.case,
            l1=sel.l1, l2=sel.l2, l3=sel.l3,
            lift=sel.lift,
            branch=record.branch,
            representative=CellResultSchema.model_validate(record.representative),
            stage_counts=record.stage_counts,
            distinct_e=list(record.distinct_e),
        )


class CensusSummarySchema(BaseModel):
    model_config = ConfigDict(from_attributes=True, arbitrary_types_allowed=True)

    case: Case
    n_min: int
    n_max: int
    signatures: int
    selections: int
    records: int
    triples: int
    distinct_e_over_chi: List[Rational]
    e_over_chi_min: Optional[Rational] = None
    e_over_chi_max: Optional[Rational] = None
    consistent: int
    numeric_agreement: int
    residual_histogram: Dict[str, int]
    relaxed_total: int = 0
    relaxed_consistent: int = 0


class RunConfig(BaseModel):
    """Merged command line and config-file settings for one CLI run"""
    model_config = ConfigDict(extra="forbid")

    command: Literal["invariants", "scan", "census", "goldman"]
    signature: Optional[str] = None
    case: Case = Case.REGULAR
    selection: Optional[str] = None
    lift: int = Field(0, ge=0, le=2)
    branch: Branch = Branch.PLUS
    branch_policy: BranchPolicy = BranchPolicy.BOTH
    s: Optional[float] = Field(None, ge=0)
    t: Optional[float] = Field(None, ge=0)
    s_range: Optional[str] = None
    t_range: Optional[str] = None
    n_min: int = Field(3, ge=3)
    n_max: Optional[int] = Field(None, ge=3, le=60)
    lifts: List[int] = Field(default_factory=lambda: [0, 1, 2])
    auto_extent: bool = False
    record_relaxed: bool = False
    tol: float = Field(DEFAULT_TOL, gt=0, lt=1e-3)
    workers: int = Field(DEFAULT_WORKERS, ge=1)
    max_seconds: Optional[float] = Field(None, gt=0)
    max_cells: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None
    csv: Optional[str] = None
    reference: Optional[str] = None

    @field_validator("signature")
    @classmethod
    def check_signature(cls, value: Optional[str]) -> Optional[str]:
        return _check_signature(value)

    @field_validator("selection")
    @classmethod
    def check_selection(cls, value: Optional[str]) -> Optional[str]:
        return _check_selection(value)

    @field_validator("s_range", "t_range")
    @classmethod
    def check_range(cls, value: Optional[str]) -> Optional[str]:
        return _check_range(value)

    @field_validator("lifts")
    @classmethod
    def check_lifts(cls, value: List[int]) -> List[int]:
        if not value or any(k not in (0, 1, 2) for k in value):
            raise ValueError("lifts must be a nonempty subset of 0,1,2")
        return sorted(set(value))

    @model_validator(mode="after")
    def check_required_flags(self) -> "RunConfig":
        if self.command == "census":
            if self.n_max is None:
                raise ValueError("--n-max is required for census")
            if self.n_max < self.n_min:
                raise ValueError("--n-max must be at least --n-min")
            return self
        for flag in ("signature", "selection"):
            if getattr(self, flag) is None:
                raise ValueError(f"--{flag} is required for {self.command}")
        if self.command == "invariants":
            if self.case is Case.REGULAR and (self.s is None or self.t is None):
                raise ValueError("--s and --t are required for a regular invariants query")
        elif self.case is not Case.REGULAR:
            raise ValueError(f"--case must be regular for {self.command}; special cases are rigid points")
        return self

    @property
    def parsed_signature(self) -> TurnoverSignature:
        return TurnoverSignature.parse(self.signature)

    @property
    def rotation_numbers(self) -> Tuple[int, int, int]:
        return tuple(int(p) for p in self.selection.split(","))

    def grid(self) -> GridSpec:
        default = GridSpec()
        s_min, s_max, ns = GridSpec.parse_range(self.s_range) if self.s_range else (
            default.s_min, default.s_max, default.ns)
        t_min, t_max, nt = GridSpec.parse_range(self.t_range) if self.t_range else (
            default.t_min, default.t_max, default.nt)
        return GridSpec(s_min, s_max, t_min, t_max, ns, nt)


class InvariantRequest(BaseModel):
    signature: str = Field(..., description="Orders n1,n2,n3, e.g. '3,3,4'")
    case: Case = Case.REGULAR
    selection: str = Field(..., description="Rotation numbers l1,l2,l3")
    lift: int = Field(0, ge=0, le=2)
    branch: Branch = Branch.PLUS
    s: Optional[float] = Field(None, gt=0)
    t: Optional[float] = Field(None, gt=0)

    @field_validator("signature")
    @classmethod
    def check_signature(cls, value: str) -> str:
        return _check_signature(value)

    @field_validator("selection")
    @classmethod
    def check_selection(cls, value: str) -> str:
        return _check_selection(value)


class CensusJobRequest(BaseModel):
    case: Case = Case.REGULAR
    n_max: int = Field(..., ge=3, le=20)
    n_min: int = Field(3, ge=3)
    s_range: str = "0:4:200"
    t_range: str = "0:4:200"
    branch_policy: BranchPolicy = BranchPolicy.BOTH
    lifts: List[int] = Field(default_factory=lambda: [0, 1, 2])
    auto_extent: bool = False

    @field_validator("s_range", "t_range")
    @classmethod
    def check_range(cls, value: str) -> str:
        return _check_range(value)


class JobProgress(BaseModel):
    signatures_done: int
    total_signatures: int
    records_found: int


class JobResponse(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    job_id: str
    case: str
    n_min: int
    n_max: int
    status: str
    created_at: datetime
    completed_at: Optional[datetime] = None
    progress: Optional[JobProgress] = None
    summary: Optional[Dict[str, Any]] = None
    error_message: Optional[str] = None


class JobListItem(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    job_id: str
    case: str
    n_max: int
    status: str
    created_at: datetime
    records_found: int


class WebSocketMessage(BaseModel):
    type: str
    data: dict
