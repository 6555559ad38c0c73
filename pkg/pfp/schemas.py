import math
from pydantic import BaseModel, Field, ConfigDict, computed_field, field_validator, model_validator
from typing import Optional, List, Literal, Tuple


# Channel-spec documents
ComplexEntry = Tuple[float, float]
MatrixDoc = List[List[ComplexEntry]]


class SymbolDoc(BaseModel):
    name: str
    prob: Optional[float] = None
    state_BE: MatrixDoc


class InputDoc(BaseModel):
    name: str
    prob: Optional[float] = None
    state: MatrixDoc


class ChannelDocument(BaseModel):
    kind: Literal["cq", "kraus"]
    dB: int = Field(..., ge=1)
    dE: Optional[int] = Field(default=None, ge=1)
    symbols: Optional[List[SymbolDoc]] = None
    kraus: Optional[List[MatrixDoc]] = None
    inputs: Optional[List[InputDoc]] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_kind_fields(self):
        if self.kind == "cq":
            if self.dE is None:
                raise ValueError("cq channel requires dE")
            if not self.symbols:
                raise ValueError("cq channel requires a non-empty symbols list")
            if self.kraus is not None or self.inputs is not None:
                raise ValueError("cq channel cannot carry kraus or inputs")
        else:
            if not self.kraus:
                raise ValueError("kraus channel requires a non-empty kraus list")
            if self.symbols is not None or self.dE is not None:
                raise ValueError("kraus channel cannot carry symbols or dE")
        return self


class SystemLayout(BaseModel):
    """Ordered tensor factors, e.g. [("B", 2), ("E", 2)]."""
    factors: List[Tuple[str, int]]

    model_config = ConfigDict(frozen=True)

    @field_validator("factors")
    @classmethod
    def check_factors(cls, factors):
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels: {labels}")
        for label, dim in factors:
            if dim < 1:
                raise ValueError(f"subsystem {label} has non-positive dimension {dim}")
        return factors

    @classmethod
    def of(cls, **dims: int) -> "SystemLayout":
        return cls(factors=list(dims.items()))

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.factors]

    @property
    def dims(self) -> List[int]:
        return [dim for _, dim in self.factors]

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)


# Region
class RatePoint(BaseModel):
    rate: float = Field(..., ge=0.0, description="private rate R, bits per channel use")
    key_rate: float = Field(..., ge=0.0, description="secret-key rate R_s, bits per channel use")


class CornerPoint(RatePoint):
    distribution: List[float]
    holevo_b: float
    holevo_e: float


class OptimizerConfig(BaseModel):
    grid_resolution: int = Field(default=200, ge=1)
    grid_max_symbols: int = Field(default=3, ge=1)
    restarts: int = Field(default=20, ge=1)
    tolerance: float = Field(default=1e-8, gt=0.0)
    max_iterations: int = Field(default=500, ge=1)
    initial_step: float = Field(default=0.1, gt=0.0)
    fd_step: float = Field(default=1e-7, gt=0.0)
    seed: int = 0


class OptimizationResult(BaseModel):
    value: float
    distribution: List[float]
    converged: bool = True
    method: Literal["grid", "gradient"]


class BoundarySample(BaseModel):
    key_rate: float
    max_rate: float
    distribution: List[float]
    converged: bool = True


class EnvelopePoint(BaseModel):
    key_rate: float
    max_rate: float


class RegionBoundary(BaseModel):
    blocklength: int = 1
    symbols: List[str]
    corner_p: CornerPoint
    corner_q: CornerPoint
    samples: List[BoundarySample]
    envelope: List[EnvelopePoint]


# Typicality
class TypicalityParams(BaseModel):
    n: int = Field(..., ge=1)
    delta: float = Field(..., gt=0.0)
    epsilon_target: float = Field(default=0.2, gt=0.0)


class TypicalityReport(BaseModel):
    n: int
    delta: float
    widened_delta: float
    system: str
    eps_hat: float
    eps_worst: float
    eps_conditional: float
    eps_unconditional: float
    alpha_hat: float
    beta_hat: float
    c_min: float
    min_operator_gap: float
    sequences_checked: int
    exhaustive: bool
    eps_ok: bool
    alpha_ok: bool
    beta_ok: bool
    passed: bool = Field(serialization_alias="pass")


# Protocol
class CodeSpec(BaseModel):
    n: int = Field(..., ge=1)
    rate: float = Field(..., gt=0.0)
    key_rate: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    trials: int = Field(default=1, ge=1)

    @computed_field
    @property
    def message_bits(self) -> int:
        return max(1, math.ceil(self.n * self.rate - 1e-9))

    @computed_field
    @property
    def key_bits_requested(self) -> int:
        return max(0, math.ceil(self.n * self.key_rate - 1e-9))

    @computed_field
    @property
    def key_bits(self) -> int:
        return min(self.key_bits_requested, self.message_bits)


class FanoCheck(BaseModel):
    error_probability: float
    conditional_entropy: float
    bound: float
    mutual_information: float
    holevo_kb: Optional[float] = None
    data_processing_ok: Optional[bool] = None
    passed: bool


class TrialRecord(BaseModel):
    trial: int
    seed: int
    avg_error: float
    max_oe: float
    security_distance: float
    security_distance_marginal: float
    ideal_gap: float
    fano_ok: bool


class ProtocolReport(BaseModel):
    spec: CodeSpec
    seed: int
    avg_error: float
    oe_per_message: List[float]
    security_distance: float
    security_distance_marginal: float
    ideal_gap: float
    holevo_kb: Optional[float] = None
    symbol_frequencies: List[float]
    fano: Optional[FanoCheck] = None
    trials: List[TrialRecord] = []
    median_avg_error: Optional[float] = None
    median_security_distance: Optional[float] = None
    median_security_distance_marginal: Optional[float] = None
    decode_matrix: List[List[float]] = Field(default_factory=list, exclude=True)


class CoveringReport(BaseModel):
    n: int
    key_rate: float
    key_bits: int
    code_size: int
    trials: int
    seed: int
    threshold: float
    threshold_eps: Optional[float] = None
    fraction_exceeding: float
    mean_oe: float
    median_oe: float
    oe_values: List[float]


# Resource inequalities
ResourceKind = Literal["channel", "secret_key", "private_cbit"]


class Resource(BaseModel):
    kind: ResourceKind
    rate: float = Field(default=1.0, ge=0.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def channel_rate_fixed(self):
        if self.kind == "channel" and self.rate != 1.0:
            raise ValueError("channel resource <N> always has rate 1")
        return self


class DerivationStep(BaseModel):
    rule: str
    premises: List[str]
    conclusion: str


class ResourceInequality(BaseModel):
    lhs: List[Resource]
    rhs: List[Resource]
    provenance: List[DerivationStep] = []
    clipped: bool = False


class RIDerivation(BaseModel):
    father: ResourceInequality
    rule: ResourceInequality
    child: ResourceInequality
    mutual_info_b: float
    mutual_info_e: float
    accounting_rate: float
    coherent_information: Optional[float] = None
    discrepancy: bool = False
    feasible: Optional[bool] = None


# CLI
class RunConfig(BaseModel):
    subcommand: Literal["region", "simulate", "covering", "typicality", "ri"]
    channel: str
    n: List[int] = [1]
    rate: Optional[float] = Field(default=None, gt=0.0)
    key_rate: float = Field(default=0.0, ge=0.0)
    delta: float = Field(default=0.15, gt=0.0)
    trials: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    samples: Optional[int] = Field(default=None, ge=1)
    format: Optional[Literal["csv", "json", "text"]] = None
    out: Optional[str] = None
    probs: Optional[List[float]] = None
    system: Literal["B", "E"] = "E"
    epsilon: Optional[float] = None
    threshold: Optional[float] = None
    trace: Optional[str] = None
    budget_mb: Optional[int] = Field(default=None, ge=1)
    action: Optional[Literal["derive"]] = None

    @field_validator("n")
    @classmethod
    def check_blocklengths(cls, n):
        if not n or any(value < 1 for value in n):
            raise ValueError("blocklengths must be positive")
        return n
