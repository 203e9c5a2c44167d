"""
Latency Budget Accounting

Pure Python implementation - NO Django imports.
Named per-stage millisecond costs, their computed total against a declared
total, and a per-frame check of measured synthesis time.
"""
from dataclasses import dataclass, field

from core.errors import InvalidArgumentError


DEFAULT_FRAME_BUDGET_MS = 33.0


@dataclass(frozen=True)
class LatencyBudget:
    """Ordered (stage, milliseconds) entries plus the total the source declares."""
    stages: tuple = ()
    declared_total: float | None = None
    name: str = "custom"

    def __post_init__(self):
        stages = tuple((str(stage), float(ms)) for stage, ms in self.stages)
        for stage, ms in stages:
            if ms < 0:
                raise InvalidArgumentError(f"Stage '{stage}' has negative cost {ms} ms")
        object.__setattr__(self, "stages", stages)

    @property
    def total(self) -> float:
        return float(sum(ms for _, ms in self.stages))

    @classmethod
    def from_dict(cls, data: dict) -> "LatencyBudget":
        return cls(
            stages=tuple((entry["stage"], entry["ms"]) for entry in data.get("stages", [])),
            declared_total=data.get("declared_total"),
            name=data.get("name", "custom"),
        )


# End-to-end telepresence system, sender to receiver display
SYSTEM_BUDGET = LatencyBudget(
    stages=(
        ("Capture", 56),
        ("Upload to vmem", 11),
        ("Debayering", 13),
        ("Pre-processing", 5),
        ("Encoding", 5),
        ("Download to mem", 1),
        ("RTC transmission", 2),
        ("Upload to vmem (receiver)", 1),
        ("Decoding", 5),
        ("View synthesis", 28),
        ("Display output", 27),
    ),
    declared_total=149,
    name="system",
)

# Per-frame view synthesis breakdown
SYNTHESIS_BUDGET = LatencyBudget(
    stages=(
        ("Cascaded disparity", 4.7),
        ("Encoder", 6.1),
        ("Decoder and refiner", 9.3),
        ("Blending", 1.4),
        ("Rasterization", 1.0),
        ("Other", 1.0),
    ),
    declared_total=23.5,
    name="synthesis",
)

PRESETS = {"system": SYSTEM_BUDGET, "synthesis": SYNTHESIS_BUDGET}


@dataclass
class LatencyReport:
    """Result of latency accounting."""
    rows: list = field(default_factory=list)
    computed_total: float = 0.0
    declared_total: float | None = None
    discrepancy: float | None = None
    measured_ms: float | None = None
    frame_budget_ms: float = DEFAULT_FRAME_BUDGET_MS
    within_frame_budget: bool | None = None

    @property
    def has_discrepancy(self) -> bool:
        return self.discrepancy is not None and abs(self.discrepancy) > 1e-9

    def as_table(self) -> str:
        width = max([len(stage) for stage, _ in self.rows] + [len("Computed total")])
        lines = [f"{'Stage':<{width}}  {'ms':>8}"]
        lines += [f"{stage:<{width}}  {ms:>8.1f}" for stage, ms in self.rows]
        lines.append(f"{'Computed total':<{width}}  {self.computed_total:>8.1f}")
        if self.declared_total is not None:
            lines.append(f"{'Declared total':<{width}}  {self.declared_total:>8.1f}")
            flag = "  (mismatch)" if self.has_discrepancy else ""
            lines.append(f"{'Discrepancy':<{width}}  {self.discrepancy:>8.1f}{flag}")
        if self.measured_ms is not None:
            verdict = "ok" if self.within_frame_budget else "over budget"
            lines.append(
                f"{'Measured synthesis':<{width}}  {self.measured_ms:>8.1f}  "
                f"(budget {self.frame_budget_ms:.1f} ms/frame: {verdict})"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "stages": [{"stage": stage, "ms": ms} for stage, ms in self.rows],
            "computed_total": self.computed_total,
            "declared_total": self.declared_total,
            "discrepancy": self.discrepancy,
            "measured_ms": self.measured_ms,
            "frame_budget_ms": self.frame_budget_ms,
            "within_frame_budget": self.within_frame_budget,
        }


def latency_report(
    budget: LatencyBudget,
    measured_ms: float | None = None,
    frame_budget_ms: float = DEFAULT_FRAME_BUDGET_MS,
) -> LatencyReport:
    """
    Sum a budget and compare it with its declared total.

    The declared total is reported alongside the computed one and never
    reconciled. When `measured_ms` is given it is checked against the
    per-frame budget.
    """
    computed = budget.total
    declared = None if budget.declared_total is None else float(budget.declared_total)
    return LatencyReport(
        rows=list(budget.stages),
        computed_total=computed,
        declared_total=declared,
        discrepancy=None if declared is None else computed - declared,
        measured_ms=measured_ms,
        frame_budget_ms=frame_budget_ms,
        within_frame_budget=None if measured_ms is None else measured_ms <= frame_budget_ms,
    )
