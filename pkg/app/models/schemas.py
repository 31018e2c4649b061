"""
Pydantic models for hierkrig.
Defines search-space declarations, kernel kinds, configuration objects and study records.
"""

from enum import Enum
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Tuple, Union
from pydantic import BaseModel, Field, field_validator, model_validator

from app.utils.helpers import parse_list


class KernelKind(str, Enum):
    """Enumeration of correlation kernels."""
    STAN = "stan"
    ARC = "arc"
    ICO = "ico"
    ICO_CORRECTED = "icocor"
    IMP = "imp"
    IMP_ARC = "imparc"

    @classmethod
    def parse(cls, name: Union[str, "KernelKind"]) -> "KernelKind":
        """Parse a kernel name case-insensitively."""
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            known = ", ".join(kind.value for kind in cls)
            raise ValueError(f"Unknown kernel '{name}' (known kernels: {known})")

    @property
    def label(self) -> str:
        """Display name used in reports."""
        return _KERNEL_LABELS[self]

    @property
    def uses_activity(self) -> bool:
        """Whether the kernel reads variable activity at all."""
        return self is not KernelKind.STAN


_KERNEL_LABELS = {
    KernelKind.STAN: "Stan",
    KernelKind.ARC: "Arc",
    KernelKind.ICO: "Ico",
    KernelKind.ICO_CORRECTED: "IcoCor",
    KernelKind.IMP: "Imp",
    KernelKind.IMP_ARC: "ImpArc",
}

ALL_KERNELS: Tuple[KernelKind, ...] = tuple(KernelKind)


# --------------------------------------------------------------------------
# Search spaces
# --------------------------------------------------------------------------

class NumericDimension(BaseModel):
    """Bounded real-valued dimension."""
    kind: Literal["numeric"] = "numeric"
    name: str = Field(..., description="Dimension identifier", min_length=1)
    lower: float = Field(..., description="Lower bound")
    upper: float = Field(..., description="Upper bound")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_bounds(self) -> "NumericDimension":
        if not self.lower < self.upper:
            raise ValueError(f"Dimension '{self.name}': lower ({self.lower}) must be < upper ({self.upper})")
        return self

    @property
    def width(self) -> float:
        return self.upper - self.lower


class CategoricalDimension(BaseModel):
    """Dimension taking one of a finite set of levels."""
    kind: Literal["categorical"] = "categorical"
    name: str = Field(..., description="Dimension identifier", min_length=1)
    levels: Tuple[str, ...] = Field(..., description="Declared levels")

    model_config = {"frozen": True}

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        if len(v) < 2:
            raise ValueError("A categorical dimension needs at least 2 levels")
        if len(set(v)) != len(v):
            raise ValueError("Categorical levels must be distinct")
        return v


Dimension = Annotated[Union[NumericDimension, CategoricalDimension], Field(discriminator="kind")]


class ActivityRule(BaseModel):
    """
    Activity predicate of one dimension on the value of another.

    Numeric parents are compared against ``threshold`` with ``operator``;
    categorical parents are tested for membership in ``levels``.
    """
    target: int = Field(..., description="Index of the conditional dimension", ge=0)
    parent: int = Field(..., description="Index of the dimension the predicate reads", ge=0)
    operator: Optional[Literal[">", ">=", "<", "<="]] = Field(None, description="Numeric comparison")
    threshold: Optional[float] = Field(None, description="Numeric threshold")
    levels: Optional[Tuple[str, ...]] = Field(None, description="Activating parent levels")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_predicate(self) -> "ActivityRule":
        if self.target == self.parent:
            raise ValueError(f"Rule for dimension {self.target} must not reference itself")
        numeric = self.operator is not None or self.threshold is not None
        if numeric and self.levels is not None:
            raise ValueError("A rule is either a numeric comparison or a level membership, not both")
        if numeric and (self.operator is None or self.threshold is None):
            raise ValueError("A numeric rule needs both operator and threshold")
        if not numeric and not self.levels:
            raise ValueError("A membership rule needs a non-empty level set")
        return self

    @property
    def is_numeric(self) -> bool:
        return self.threshold is not None


class SearchSpace(BaseModel):
    """Ordered dimensions plus at most one activity rule per dimension."""
    dimensions: Tuple[Dimension, ...] = Field(..., min_length=1)
    rules: Tuple[ActivityRule, ...] = Field(default_factory=tuple)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_structure(self) -> "SearchSpace":
        names = [dim.name for dim in self.dimensions]
        if len(names) != len(set(names)):
            raise ValueError("Dimension names must be unique")

        d = len(self.dimensions)
        parents = {}
        for rule in self.rules:
            if rule.target >= d or rule.parent >= d:
                raise ValueError(f"Rule references a dimension outside 0..{d - 1}")
            if rule.target in parents:
                raise ValueError(f"Dimension {rule.target} has more than one rule")
            parent_dim = self.dimensions[rule.parent]
            if rule.is_numeric and isinstance(parent_dim, CategoricalDimension):
                raise ValueError(f"Numeric rule on categorical parent '{parent_dim.name}'")
            if not rule.is_numeric:
                if isinstance(parent_dim, NumericDimension):
                    raise ValueError(f"Membership rule on numeric parent '{parent_dim.name}'")
                unknown = set(rule.levels) - set(parent_dim.levels)
                if unknown:
                    raise ValueError(f"Rule levels {sorted(unknown)} not declared by '{parent_dim.name}'")
            parents[rule.target] = rule.parent

        # Single parent per node: following parent links must terminate.
        for start in parents:
            seen = {start}
            node = parents[start]
            while node in parents:
                if node in seen:
                    raise ValueError("Activity rules form a cycle")
                seen.add(node)
                node = parents[node]
        return self

    @property
    def dim(self) -> int:
        return len(self.dimensions)

    @property
    def names(self) -> List[str]:
        return [dimension.name for dimension in self.dimensions]

    def rule_for(self, index: int) -> Optional[ActivityRule]:
        """Return the rule governing dimension ``index``, if any."""
        for rule in self.rules:
            if rule.target == index:
                return rule
        return None

    def is_conditional(self, index: int) -> bool:
        return self.rule_for(index) is not None


# --------------------------------------------------------------------------
# Model and optimizer configuration
# --------------------------------------------------------------------------

def _default_likelihood_budget() -> int:
    from app.core.config import settings
    return settings.likelihood_budget


class FitConfig(BaseModel):
    """Configuration of the maximum likelihood fit."""
    likelihood_budget: int = Field(default_factory=_default_likelihood_budget, ge=2,
                                   description="Likelihood evaluations for DIRECT")
    use_reinterpolation: bool = Field(True, description="Re-interpolate the uncertainty estimate")
    nugget_lower: Optional[float] = Field(None, gt=0, description="Overrides the nugget box lower bound")
    nugget_upper: Optional[float] = Field(None, gt=0, description="Overrides the nugget box upper bound")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_nugget_box(self) -> "FitConfig":
        if self.nugget_lower is not None and self.nugget_upper is not None:
            if self.nugget_lower > self.nugget_upper:
                raise ValueError("nugget_lower must not exceed nugget_upper")
        return self


class DEConfig(BaseModel):
    """Differential Evolution settings (rand/1/bin)."""
    population: Optional[int] = Field(None, ge=4, description="Population size, 10 * dimension if unset")
    weight: float = Field(0.8, gt=0, le=2, description="Differential weight F")
    crossover: float = Field(0.5, ge=0, le=1, description="Crossover probability CR")
    strategy: Literal["rand/1/bin"] = "rand/1/bin"

    model_config = {"frozen": True}


def _default_smbo_init() -> int:
    from app.core.config import settings
    return settings.smbo_init


def _default_smbo_budget() -> int:
    from app.core.config import settings
    return settings.smbo_budget


def _default_ei_budget() -> int:
    from app.core.config import settings
    return settings.ei_budget


class SmboConfig(BaseModel):
    """Configuration of one sequential model-based optimization run."""
    init_size: int = Field(default_factory=_default_smbo_init, ge=1)
    total_budget: int = Field(default_factory=_default_smbo_budget, ge=1)
    kernel: KernelKind = KernelKind.IMP
    fit: FitConfig = Field(default_factory=FitConfig)
    de_budget: int = Field(default_factory=_default_ei_budget, ge=4, description="EI evaluations per iteration")
    de: DEConfig = Field(default_factory=DEConfig)
    design: Literal["uniform", "lhs"] = "uniform"
    duplicate_tolerance: float = Field(1e-9, ge=0)
    perturbation_radius: float = Field(1e-3, gt=0)

    model_config = {"frozen": True}

    @field_validator("kernel", mode="before")
    @classmethod
    def parse_kernel(cls, v: Any) -> KernelKind:
        return KernelKind.parse(v)

    @model_validator(mode="after")
    def validate_budget(self) -> "SmboConfig":
        if self.init_size > self.total_budget:
            raise ValueError(f"init_size ({self.init_size}) exceeds total_budget ({self.total_budget})")
        return self


# --------------------------------------------------------------------------
# Benchmark
# --------------------------------------------------------------------------

class Situation(str, Enum):
    """Situations of the hierarchical test function."""
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"


class StudyKind(str, Enum):
    """Enumeration of experimental studies."""
    MODEL_QUALITY = "model_quality"
    SMBO = "smbo"


class TestFunctionSpec(BaseModel):
    """Constants of the hierarchical quadratic test function."""
    b: float = Field(..., ge=0, description="Discontinuity height")
    c: float = Field(..., gt=0, lt=1, description="Activation threshold")
    d: float = Field(..., gt=0, lt=1, description="Optimum location control")

    model_config = {"frozen": True}

    __test__ = False  # not a pytest class

    def key(self) -> Tuple[float, float, float]:
        return (self.b, self.c, self.d)


class StudyRecord(BaseModel):
    """Outcome of one (study, kernel, spec, replication) cell."""
    study: StudyKind
    kernel: KernelKind
    b: float
    c: float
    d: float
    situation: Situation
    replication: int = Field(..., ge=0)
    metric: float = Field(..., description="RMSE or suboptimality; NaN until a failure is imputed")
    seed: int = Field(..., ge=0)
    wall_time_s: float = Field(0.0, ge=0)
    failed: bool = False

    model_config = {"use_enum_values": False}

    @property
    def spec(self) -> TestFunctionSpec:
        return TestFunctionSpec(b=self.b, c=self.c, d=self.d)

    def sort_key(self) -> Tuple[str, str, float, float, float, int]:
        return (self.study.value, self.kernel.value, self.b, self.c, self.d, self.replication)


RESULT_COLUMNS: Tuple[str, ...] = (
    "study", "kernel", "b", "c", "d", "situation", "replication",
    "metric", "seed", "wall_time_s", "failed",
)

SCOPES: Tuple[str, ...] = ("overall", "A", "B", "C", "D", "E")


# --------------------------------------------------------------------------
# Command-line run configuration
# --------------------------------------------------------------------------

class RunConfig(BaseModel):
    """Merged configuration of one harness command."""
    study: Optional[StudyKind] = None
    kernels: List[KernelKind] = Field(default_factory=lambda: list(ALL_KERNELS), min_length=1)
    reps: int = Field(..., ge=1, description="Replications per grid cell")
    seed: int = Field(..., ge=0, description="Master seed")
    budget: int = Field(..., ge=1, description="True-objective evaluations per SMBO run")
    init: int = Field(..., ge=1, description="Initial design size of SMBO runs")
    grid_b: List[float] = Field(default_factory=lambda: [0.0, 0.1], min_length=1)
    grid_c: List[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8], min_length=1)
    grid_d: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9], min_length=1)
    out: Optional[Path] = None
    workers: int = Field(1, ge=1)
    scope: str = "all"
    design: Literal["uniform", "lhs"] = "uniform"
    timings: bool = False

    @field_validator("kernels", mode="before")
    @classmethod
    def parse_kernels(cls, v: Any) -> List[KernelKind]:
        names = parse_list(v) if isinstance(v, str) else v
        kernels = [KernelKind.parse(name) for name in names]
        if len(set(kernels)) != len(kernels):
            raise ValueError("Kernel list contains duplicates")
        return kernels

    @field_validator("grid_b", "grid_c", "grid_d", mode="before")
    @classmethod
    def parse_grid(cls, v: Any) -> Any:
        return parse_list(v) if isinstance(v, str) else v

    @field_validator("grid_b")
    @classmethod
    def validate_grid_b(cls, v: List[float]) -> List[float]:
        bad = [value for value in v if value < 0]
        if bad:
            raise ValueError(f"b values must be nonnegative, got {bad}")
        return v

    @field_validator("grid_c", "grid_d")
    @classmethod
    def validate_grid_unit(cls, v: List[float]) -> List[float]:
        bad = [value for value in v if not 0 < value < 1]
        if bad:
            raise ValueError(f"values must lie strictly between 0 and 1, got {bad}")
        return v

    @field_validator("scope")
    @classmethod
    def validate_scope(cls, v: str) -> str:
        value = v.strip()
        if value.lower() in ("all", "overall"):
            return value.lower()
        if value.upper() in SCOPES:
            return value.upper()
        raise ValueError(f"Scope must be one of: all, {', '.join(SCOPES)}")

    @model_validator(mode="after")
    def validate_budget(self) -> "RunConfig":
        if self.init > self.budget:
            raise ValueError(f"init ({self.init}) exceeds budget ({self.budget})")
        return self

    def grid(self) -> List[TestFunctionSpec]:
        """All (b, c, d) combinations in b-major order."""
        return [
            TestFunctionSpec(b=b, c=c, d=d)
            for b in self.grid_b
            for c in self.grid_c
            for d in self.grid_d
        ]
