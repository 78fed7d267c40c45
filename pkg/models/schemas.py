import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class NonlinearitySpec(BaseModel):
    """Positive combination of powers f(s) = sum c_i s^q_i, extended by zero"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["pure_power", "sum_of_powers"] = Field(default="pure_power", description="Family tag")
    exponents: List[float] = Field(default_factory=lambda: [3.0], min_length=1, description="Exponents q_i > 1")
    coefficients: Optional[List[float]] = Field(default=None, description="Positive coefficients c_i")
    p: Optional[float] = Field(default=None, description="Subcritical witness exponent")
    mu: Optional[float] = Field(default=None, description="Ambrosetti-Rabinowitz exponent")

    @field_validator('exponents')
    @classmethod
    def check_exponents(cls, v):
        if any(q <= 1.0 for q in v):
            raise ValueError("every exponent must satisfy q > 1")
        return v

    @model_validator(mode='after')
    def fill_defaults(self):
        if self.coefficients is None:
            self.coefficients = [1.0] * len(self.exponents)
        if len(self.coefficients) != len(self.exponents):
            raise ValueError("coefficients and exponents must have the same length")
        if any(c <= 0.0 for c in self.coefficients):
            raise ValueError("coefficients must be positive")
        if self.kind == "pure_power" and len(self.exponents) != 1:
            raise ValueError("pure_power takes exactly one exponent")
        mu_max = min(self.exponents) + 1.0
        if self.mu is None:
            self.mu = 0.5 * (2.0 + mu_max)
        if not 2.0 < self.mu <= mu_max:
            raise ValueError(f"mu={self.mu} must lie in (2, {mu_max}]")
        if self.p is None:
            self.p = max(self.exponents)
        if self.p < max(self.exponents):
            raise ValueError(f"p={self.p} must bound every exponent (max {max(self.exponents)})")
        return self

    def is_subcritical(self, dimension: int) -> bool:
        if dimension <= 2:
            return True
        critical = (dimension + 2.0) / (dimension - 2.0)
        return all(q < critical for q in self.exponents) and self.p < critical


class TruncationParams(BaseModel):
    """Truncation slope and the five nested radii"""
    model_config = ConfigDict(extra="forbid")

    a: Optional[float] = Field(default=None, gt=0.0, description="Truncation slope")
    radii: List[float] = Field(
        default_factory=lambda: [0.3, 0.9, 1.0, 1.1, 1.2],
        min_length=5,
        max_length=5,
        description="R0 < R1 < R2 < R3 < R4",
    )
    alpha1: Optional[float] = Field(default=None, description="Lower potential bound for the slope constraint")

    @field_validator('radii')
    @classmethod
    def check_radii(cls, v):
        if v[0] <= 0.0:
            raise ValueError("radii must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"radii must be strictly increasing, got {v}")
        return v

    @property
    def slope(self) -> float:
        if self.a is None:
            raise ValueError("truncation slope is unresolved")
        return self.a


class PolynomialTerm(BaseModel):
    """Monomial coefficient * prod x_i^powers_i"""
    model_config = ConfigDict(extra="forbid")

    coefficient: float = Field(..., description="Monomial coefficient")
    powers: List[int] = Field(..., description="Non-negative integer powers per coordinate")

    @field_validator('powers')
    @classmethod
    def check_powers(cls, v):
        if any(k < 0 for k in v):
            raise ValueError("powers must be non-negative")
        return v


class PotentialSpec(BaseModel):
    """Analytic potential V(x) = 1 + P(x) exp(-|x|^2)"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["gaussian_saddle", "gaussian_max", "custom_polynomial_bump", "constant"] = Field(
        default="gaussian_saddle", description="Built-in family"
    )
    beta: float = Field(default=0.3, description="Amplitude of the Gaussian families")
    terms: Optional[List[PolynomialTerm]] = Field(default=None, description="Polynomial P for the custom kind")
    alpha1: Optional[float] = Field(default=None, description="Certified lower bound")
    alpha2: Optional[float] = Field(default=None, description="Certified upper bound")
    N: int = Field(default=2, ge=2, description="Space dimension")
    E_basis: Optional[List[List[float]]] = Field(default=None, description="User subspace for degenerate points")
    radius_candidates: Optional[List[float]] = Field(default=None, description="Candidate radii for R1")

    @model_validator(mode='after')
    def fill_bounds(self):
        if self.kind == "custom_polynomial_bump":
            if not self.terms:
                raise ValueError("custom_polynomial_bump needs polynomial terms")
            for term in self.terms:
                if len(term.powers) != self.N:
                    raise ValueError(f"term powers {term.powers} do not match dimension {self.N}")
            if self.alpha1 is None or self.alpha2 is None:
                raise ValueError("custom_polynomial_bump must declare alpha1 and alpha2")
        elif self.kind in ("gaussian_saddle", "gaussian_max") and self.beta <= 0.0:
            raise ValueError("beta must be positive for the Gaussian families")
        lower, upper = self._builtin_bounds()
        if self.alpha1 is None:
            self.alpha1 = lower
        if self.alpha2 is None:
            self.alpha2 = upper
        if self.alpha1 > self.alpha2:
            raise ValueError("alpha1 must not exceed alpha2")
        if self.E_basis is not None:
            for vec in self.E_basis:
                if len(vec) != self.N:
                    raise ValueError("E_basis vectors must match the dimension")
        return self

    def _builtin_bounds(self):
        # max of t exp(-t) over t >= 0 is 1/e
        swing = self.beta / math.e
        if self.kind == "gaussian_saddle":
            return 1.0 - swing, 1.0 + swing
        if self.kind == "gaussian_max":
            return 1.0 - swing, 1.0
        if self.kind == "constant":
            return 1.0, 1.0
        return self.alpha1, self.alpha2


class LimitProblemConfig(BaseModel):
    """Radial shooting configuration"""
    model_config = ConfigDict(extra="forbid")

    dimension: int = Field(default=2, ge=2, description="Dimension of the radial problem")
    k: float = Field(default=1.0, gt=0.0, description="Linear coefficient of the limit problem")
    r_max_scale: float = Field(default=20.0, gt=0.0, description="r_max = r_max_scale / sqrt(k)")
    n_points: int = Field(default=4096, ge=64, description="Radial grid points")
    tol: float = Field(default=1e-11, gt=0.0, description="Integrator relative tolerance")


class GridConfig(BaseModel):
    """Uniform two-dimensional grid"""
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=256, ge=9, description="Points per dimension")
    L_margin: float = Field(default=8.0, ge=0.0, description="Decay room beyond R4/eps")
    spacing: Optional[float] = Field(default=None, gt=0.0, description="Fixed spacing; overrides n")


class SolverConfig(BaseModel):
    """Newton solver settings"""
    model_config = ConfigDict(extra="forbid")

    tol: float = Field(default=1e-9, gt=0.0, description="Sup-norm residual tolerance")
    max_iter: int = Field(default=50, ge=1, description="Newton iteration cap")
    linear_solver: Literal["minres", "direct"] = Field(default="minres", description="Inner linear solver")
    krylov_tol: float = Field(default=1e-12, gt=0.0, description="Relative tolerance of inner solves")
    krylov_maxiter: int = Field(default=400, ge=1, description="Inner iteration cap")


class MinmaxConfig(BaseModel):
    """Cone sampling and degree settings"""
    model_config = ConfigDict(extra="forbid")

    n_t: int = Field(default=41, ge=3, description="Curve parameter samples")
    n_xi: int = Field(default=21, ge=3, description="Samples per radial direction of B0 in E")
    n_theta: int = Field(default=16, ge=4, description="Angular samples of B0 in E when dim E = 2")
    n_circle: int = Field(default=256, ge=8, description="Boundary samples for the winding number")
    n_degree_t: int = Field(default=6, ge=1, description="Curve parameters checked by the degree sweep")
    t0: Optional[float] = Field(default=None, gt=0.0, le=1.0, description="Lower curve parameter for degrees")
    tau0: float = Field(default=0.5, gt=0.0, lt=1.0, description="First dilation of the N=2 curve")
    tau1: float = Field(default=1.25, gt=1.0, description="Last dilation of the N=2 curve")


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps_list: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05], min_length=1)

    @field_validator('eps_list')
    @classmethod
    def check_eps(cls, v):
        if any(e <= 0.0 for e in v):
            raise ValueError("eps values must be positive")
        return v


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Optional[Path] = Field(default=None, description="Output directory")
    formats: List[Literal["json", "csv", "field"]] = Field(default_factory=lambda: ["json", "csv", "field"])


class EpsProblem(BaseModel):
    """Truncated problem at one eps on the grid [-L, L]^2"""
    model_config = ConfigDict(extra="forbid")

    eps: float = Field(..., gt=0.0)
    truncation: TruncationParams
    potential: PotentialSpec
    nonlinearity: NonlinearitySpec
    n: int = Field(..., ge=9)
    L: float = Field(..., gt=0.0)
    margin: float = Field(default=8.0, ge=0.0)
    e_basis: Optional[List[List[float]]] = Field(default=None, description="Orthonormal basis of E")

    @model_validator(mode='after')
    def check_geometry(self):
        if self.truncation.a is None:
            raise ValueError("EpsProblem needs a resolved truncation slope")
        required = self.truncation.radii[4] / self.eps + self.margin
        if self.L < required - 1e-12:
            raise ValueError(f"L={self.L} is below R4/eps + margin = {required}")
        if self.potential.N != 2:
            raise ValueError("the grid solver works in two dimensions")
        return self

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)


class RunConfig(BaseModel):
    """Complete run configuration"""
    model_config = ConfigDict(extra="forbid")

    nonlinearity: NonlinearitySpec = Field(default_factory=NonlinearitySpec)
    truncation: TruncationParams = Field(default_factory=TruncationParams)
    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    limit_problem: LimitProblemConfig = Field(default_factory=LimitProblemConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    minmax: MinmaxConfig = Field(default_factory=MinmaxConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode='after')
    def resolve(self):
        alpha1 = self.truncation.alpha1 if self.truncation.alpha1 is not None else self.potential.alpha1
        if alpha1 is None or alpha1 <= 0.0:
            raise ValueError(f"potential lower bound alpha1={alpha1} must be positive")
        self.truncation.alpha1 = alpha1
        mu = self.nonlinearity.mu
        ceiling = (1.0 - 2.0 / mu) * alpha1
        if self.truncation.a is None:
            self.truncation.a = 0.9 * ceiling
        if not 0.0 < self.truncation.a < ceiling:
            raise ValueError(
                f"truncation slope a={self.truncation.a} violates the slope bound "
                f"0 < a < (1 - 2/mu) * alpha1 = {ceiling:.6g}"
            )
        if not self.nonlinearity.is_subcritical(self.limit_problem.dimension):
            raise ValueError(f"nonlinearity is not subcritical in dimension {self.limit_problem.dimension}")
        if self.potential.radius_candidates is None:
            self.potential.radius_candidates = [self.truncation.radii[1]]
        return self

    def grid_for(self, eps: float):
        """Return (n, L) for the grid at this eps"""
        L = self.truncation.radii[4] / eps + self.grid.L_margin
        if self.grid.spacing is None:
            return self.grid.n, L
        intervals = int(math.ceil(2.0 * L / self.grid.spacing))
        return intervals + 1, 0.5 * intervals * self.grid.spacing

    def problem_for(self, eps: float, e_basis=None) -> EpsProblem:
        n, L = self.grid_for(eps)
        return EpsProblem(
            eps=eps,
            truncation=self.truncation,
            potential=self.potential,
            nonlinearity=self.nonlinearity,
            n=n,
            L=L,
            margin=self.grid.L_margin,
            e_basis=e_basis,
        )
