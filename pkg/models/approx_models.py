"""
Approximation Models
Configuration and reporting for minimax and base-2 activation polynomials
"""

from typing import List, Optional

from pydantic import BaseModel, Field, model_validator, validator


class ApproxConfig(BaseModel):
    """Settings for fitting and quantizing an activation polynomial on [-a, a]"""
    interval_a: float = Field(default=4.0, gt=0, description="Half-width a of the interval [-a, a]")
    degree: int = Field(default=2, ge=1, le=4, description="Polynomial degree n")
    grid_points: int = Field(default=100_001, ge=100_000, description="Dense grid size for sup-norm evaluation")
    remez_grid_points: int = Field(default=20_001, ge=1_001, description="Grid size for extrema search in Remez")
    tolerance: float = Field(default=1e-10, gt=0, description="Relative equioscillation tolerance")
    max_iterations: int = Field(default=100, ge=1, description="Remez iteration cap")
    bound: Optional[float] = Field(None, gt=0, description="Error bound K; defaults to delta(f,p) + delta(f,p_hat)")
    radius: int = Field(default=2, ge=0, le=6, description="Exponent search radius around the rounded polynomial")


class ScanConstraints(BaseModel):
    """Bounded polyhedron: every candidate q must satisfy lower_i <= q(x_i) <= upper_i"""
    points: List[float] = Field(..., description="Constraint abscissae x_i")
    lower: List[float] = Field(..., description="Lower bounds l_i")
    upper: List[float] = Field(..., description="Upper bounds u_i")

    @validator('points')
    def validate_points(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("Constraint points must be pairwise distinct")
        return v

    @model_validator(mode="after")
    def validate_bounds(self):
        if not len(self.points) == len(self.lower) == len(self.upper):
            raise ValueError("points, lower and upper must have equal length")
        for lo, hi in zip(self.lower, self.upper):
            if lo > hi:
                raise ValueError(f"Lower bound {lo} exceeds upper bound {hi}")
        return self


class ApproximationReport(BaseModel):
    """Fitted minimax polynomial next to its rounded and scanned base-2 versions"""
    interval_a: float
    degree: int
    minimax_coefficients: List[float] = Field(..., description="p, ascending powers")
    minimax_error: float = Field(..., description="delta(f, p)")
    rounded_exponents: List[Optional[int]] = Field(..., description="p_hat exponents, ascending; None for zero terms")
    rounded_error: float = Field(..., description="delta(f, p_hat)")
    scanned_exponents: List[Optional[int]] = Field(..., description="p* exponents, ascending; None for zero terms")
    scanned_signs: List[int] = Field(..., description="Coefficient signs of p*")
    scanned_error: float = Field(..., description="delta(f, p*)")
    bound: float = Field(..., description="Error bound K used by the scan")
    radius: int
    candidates: int = Field(..., description="Exponent tuples enumerated")
    feasible: int = Field(..., description="Tuples inside the polyhedron and under K")
    reference_exponents: Optional[List[int]] = Field(None, description="Reference p* exponents, ascending")
    reference_error: Optional[float] = Field(None, description="delta(f, reference p*) on this interval")

    @property
    def chain_holds(self) -> bool:
        """delta(f,p) <= delta(f,p*) <= delta(f,p_hat), up to grid precision"""
        slack = 1e-12
        return (self.minimax_error <= self.scanned_error + slack
                and self.scanned_error <= self.rounded_error + slack)

    @property
    def matches_reference(self) -> Optional[bool]:
        if self.reference_exponents is None:
            return None
        return list(self.scanned_exponents) == list(self.reference_exponents)

    def to_text(self) -> str:
        def terms(exponents, signs=None):
            parts = []
            for power in range(len(exponents) - 1, -1, -1):
                e = exponents[power]
                if e is None:
                    continue
                sign = "-" if signs and signs[power] < 0 else "+"
                parts.append(f"{sign} 2^{e} x^{power}")
            return " ".join(parts).lstrip("+ ") or "0"

        p_terms = " ".join(
            f"{c:+.9f} x^{k}" for k, c in reversed(list(enumerate(self.minimax_coefficients)))
        )
        lines = [
            f"interval          [-{self.interval_a}, {self.interval_a}]   degree {self.degree}",
            f"minimax p         {p_terms}",
            f"delta(f, p)       {self.minimax_error:.9f}",
            f"rounded p_hat     {terms(self.rounded_exponents)}",
            f"delta(f, p_hat)   {self.rounded_error:.9f}",
            f"scanned p*        {terms(self.scanned_exponents, self.scanned_signs)}",
            f"delta(f, p*)      {self.scanned_error:.9f}",
            f"bound K           {self.bound:.9f}   radius {self.radius}   "
            f"feasible {self.feasible}/{self.candidates}",
            f"chain holds       {self.chain_holds}",
        ]
        if self.reference_exponents is not None:
            lines.append(f"reference p*      {terms(self.reference_exponents)}")
            lines.append(f"delta(f, ref p*)  {self.reference_error:.9f}")
            lines.append(f"scan matches      {self.matches_reference}")
        return "\n".join(lines)
