from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_serializer
from scipy.interpolate import CubicSpline

from .schemas import NonlinearitySpec


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_serializer("*", mode="wrap", when_used="json")
    def serialize_arrays(self, value, handler):
        if isinstance(value, np.ndarray):
            return value.tolist()
        return handler(value)


class CheckResult(BaseModel):
    """Outcome of one named property check"""
    name: str = Field(..., description="Check identifier")
    passes: bool = Field(..., description="Whether the check holds")
    detail: str = Field(default="", description="Observed values or the violating sample")
    value: Optional[float] = Field(default=None, description="Key observed quantity")


class RadialProfile(ArrayModel):
    """Radial ground-state profile on a uniform grid"""
    r: np.ndarray = Field(..., description="Uniform radial grid starting at 0")
    values: np.ndarray = Field(..., description="U(r_i)")
    derivatives: np.ndarray = Field(..., description="U'(r_i)")
    k: float = Field(..., description="Linear coefficient")
    dimension: int = Field(..., description="Space dimension N")

    _spline: Optional[CubicSpline] = PrivateAttr(default=None)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def n_points(self) -> int:
        return int(self.r.size)

    @property
    def U0(self) -> float:
        return float(self.values[0])

    def evaluate(self, rho: np.ndarray) -> np.ndarray:
        """Cubic interpolation in r with zero extension beyond r_max"""
        if self._spline is None:
            # U'(0) = 0 is imposed at the centre
            self._spline = CubicSpline(self.r, self.values, bc_type=((1, 0.0), 'natural'))
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        inside = rho <= self.r_max
        out[inside] = self._spline(rho[inside])
        return out


class GroundState(ArrayModel):
    """Radial ground state of the limit problem and its integrals"""
    profile: RadialProfile
    nonlinearity: NonlinearitySpec
    energy: float = Field(..., description="m_k = Phi_k(U)")
    grad_norm_sq: float = Field(..., description="||grad U||^2")
    l2_norm_sq: float = Field(..., description="||U||^2")
    F_integral: float = Field(..., description="int F(U)")
    fU_integral: float = Field(..., description="int f(U) U")
    decay_rate: float = Field(..., description="Fitted exponential decay rate")
    shooting_iterations: int = Field(default=0, description="Bisection steps")

    @property
    def k(self) -> float:
        return self.profile.k

    @property
    def dimension(self) -> int:
        return self.profile.dimension

    def summary(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "N": self.dimension,
            "m_k": self.energy,
            "U0": self.profile.U0,
            "grad_norm_sq": self.grad_norm_sq,
            "l2_norm_sq": self.l2_norm_sq,
            "F_integral": self.F_integral,
            "fU_integral": self.fU_integral,
            "decay_rate": self.decay_rate,
            "r_max": self.profile.r_max,
            "n_points": self.profile.n_points,
        }


class MPCurve(ArrayModel):
    """Mountain-pass path t -> amplitude * U(./dilation)"""
    state: GroundState
    t: np.ndarray = Field(..., description="Parameter grid on [0, 1]")
    amplitudes: np.ndarray = Field(..., description="Amplitude per t")
    dilations: np.ndarray = Field(..., description="Dilation per t")
    energies: np.ndarray = Field(..., description="Phi_k along the grid")
    t_star: float = Field(..., description="Parameter of the ground state on the path")
    theta: Optional[float] = Field(default=None, description="Dilation endpoint (N >= 3)")
    tau0: Optional[float] = Field(default=None, description="First dilation (N = 2)")
    tau1: Optional[float] = Field(default=None, description="Last dilation (N = 2)")
    tau2: Optional[float] = Field(default=None, description="Final amplitude (N = 2)")

    @property
    def energy_max(self) -> float:
        return float(self.energies.max())

    def params_at(self, t: float) -> Tuple[float, float]:
        """(amplitude, dilation) at an arbitrary t in [0, 1]"""
        t = min(max(float(t), 0.0), 1.0)
        if self.theta is not None:
            return (1.0, t * self.theta) if t > 0.0 else (0.0, 1.0)
        third = 1.0 / 3.0
        if t <= third:
            return t / third, self.tau0
        if t <= 2.0 * third:
            s = (t - third) / third
            return 1.0, self.tau0 + s * (self.tau1 - self.tau0)
        s = (t - 2.0 * third) / third
        return 1.0 + s * (self.tau2 - 1.0), self.tau1


class CriticalPointClass(ArrayModel):
    """Classification of the critical point of V at the origin"""
    case: Literal["V1", "V2", "V3"]
    E_basis: np.ndarray = Field(..., description="Rows are orthonormal vectors spanning E")
    hessian_eigenvalues: np.ndarray

    @property
    def dim_E(self) -> int:
        return int(self.E_basis.shape[0])


class V0Report(BaseModel):
    passes: bool
    observed_min: float
    observed_max: float
    alpha1: float
    alpha2: float
    argmin: List[float]
    argmax: List[float]
    violating_point: Optional[List[float]] = None


class RadiusSelection(BaseModel):
    accepted: Optional[float] = None
    rejected: Dict[str, List[float]] = Field(
        default_factory=dict, description="Radius -> near-violating angles"
    )
    level_set_size: Dict[str, int] = Field(default_factory=dict)


class GridField(ArrayModel):
    """Values on the uniform grid of [-L, L]^2, row-major, first index along x1"""
    n: int
    L: float
    values: np.ndarray

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(n=self.n, L=self.L, values=values)


class NewtonSolution(ArrayModel):
    field: GridField
    iterations: int
    residual: float


class SaddleResult(ArrayModel):
    """Converged pair (u_eps, lambda_eps) of the barycenter-constrained equation"""
    u_eps: GridField
    lambda_eps: List[float] = Field(..., description="Multiplier in E coordinates")
    energy: float
    residual: float = Field(..., description="Sup norm of the constrained residual")
    barycenter_norm: float
    barycenter_check: float = Field(..., description="Barycenter norm from an independent quadrature")
    iterations: int
    min_value: float = Field(..., description="Smallest grid value")

    @property
    def lambda_norm(self) -> float:
        return float(np.linalg.norm(self.lambda_eps))


class BoundaryGapReport(BaseModel):
    delta: float = Field(..., description="m minus the largest energy on the lateral boundary")
    max_end_energy: float = Field(..., description="Largest energy over t = 1")
    max_rim_energy: float = Field(..., description="Largest energy over |xi| = R0/eps")
    end_negative: bool
    passes: bool


class ConeMax(BaseModel):
    value: float
    t: float
    xi: List[float]


class DegreeReport(BaseModel):
    t: float
    degree: int
    trace: List[Dict[str, float]] = Field(default_factory=list, description="Boundary samples of psi")


class EnergyBracket(BaseModel):
    lower: float = Field(..., description="Saddle energy")
    upper: float = Field(..., description="Cone max")
    m: float = Field(..., description="Ground-state level at k = 1")
    m_alpha1: float = Field(..., description="Ground-state level at k = alpha1")

    @property
    def width(self) -> float:
        return self.upper - self.lower


class UntruncationReport(BaseModel):
    max_outside: float
    location: List[float]
    crossover: float
    passes: bool
    residuals_identical: Optional[bool] = None


class ConcentrationClass(BaseModel):
    case: Literal["inside_B1", "boundary_B1", "ramp", "outside_B2"]
    radius: float = Field(..., description="Physical distance |eps y| of the spike")


class SpikeDiagnostics(BaseModel):
    y_eps: List[float] = Field(..., description="Spike centre in grid coordinates")
    eps_y: List[float] = Field(..., description="eps * y_eps")
    h1_distance: float
    h1_translate: List[float] = Field(..., description="Translate achieving the minimum")
    decay_rate: float
    sup_outside_B1: float
    local_identity: float
    concentration: ConcentrationClass


class PowerLawFit(BaseModel):
    constant: float
    exponent: Optional[float] = Field(default=None, description="Fitted slope; None at the noise floor")
    exponent_stderr: Optional[float] = None
    points: int = 0
    noise_floor: bool = False
    violation: bool = False


class SpikeRun(BaseModel):
    """One row of an eps sweep"""
    eps: float
    status: Literal["ok", "boundary_gap", "saddle_divergence", "solver_error"]
    detail: str = ""
    energy_lower: Optional[float] = None
    energy_upper: Optional[float] = None
    m: Optional[float] = None
    m_grid: Optional[float] = Field(default=None, description="Autonomous level on the same grid")
    lambda_norm: Optional[float] = None
    barycenter_norm: Optional[float] = None
    delta_gap: Optional[float] = None
    degree: Optional[int] = Field(default=None, description="Degree at the ground-state parameter")
    degree_min: Optional[int] = Field(default=None, description="Smallest degree over the sampled t in [t0, 1]")
    degree_max: Optional[int] = Field(default=None, description="Largest degree over the sampled t in [t0, 1]")
    eps_y_norm: Optional[float] = None
    h1_distance: Optional[float] = None
    max_outside: Optional[float] = None
    untruncation_passes: Optional[bool] = None


class SpikeOutcome(ArrayModel):
    """Everything the pipeline produced for one eps"""
    row: SpikeRun
    cone_max: Optional[ConeMax] = None
    gap: Optional[BoundaryGapReport] = None
    degree: Optional[DegreeReport] = None
    degree_sweep: List[DegreeReport] = Field(default_factory=list)
    saddle: Optional[SaddleResult] = None
    bracket: Optional[EnergyBracket] = None
    diagnostics: Optional[SpikeDiagnostics] = None
    untruncation: Optional[UntruncationReport] = None
