"""Solver output container shared by the exact and ADMM solvers."""

from dataclasses import dataclass, field
from typing import Optional

from .model import Allocation


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    primal_residual: float
    coupling_change: float
    objective: float
    modes: str


@dataclass
class SolveReport:
    method: str
    objective: float
    modes: tuple
    allocation: Allocation
    iterations: int = 0
    converged: bool = True
    trace: list = field(default_factory=list)
    # ADMM only: the coupling-feasible iterate before the polish re-solve
    raw_objective: Optional[float] = None
    raw_allocation: Optional[Allocation] = None
    T: float = 1.0

    @property
    def mode_bits(self):
        return "".join(str(m) for m in self.modes)

    def to_dict(self, with_trace=False):
        out = {
            "method": self.method,
            "objective": self.objective,
            "modes": self.mode_bits,
            "a": self.allocation.a,
            "tau": list(self.allocation.tau),
            "wpt_time_s": self.allocation.a * self.T,
            "offload_time_s": [t * self.T for t in self.allocation.tau],
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if self.raw_allocation is not None:
            out["raw_objective"] = self.raw_objective
            out["raw_a"] = self.raw_allocation.a
            out["raw_tau"] = list(self.raw_allocation.tau)
        if with_trace:
            out["trace"] = [vars(r) for r in self.trace]
        return out
