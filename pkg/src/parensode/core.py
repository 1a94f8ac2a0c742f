"""Problem definitions, solver configuration and solution containers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

MAX_DIM = 32

RhsFn = Callable[[Sequence[Any], Sequence[float], Any], list]


# ----------------------------------------------------------------------------
# errors
# ----------------------------------------------------------------------------


class ParensodeError(Exception):
    """Base class for all library errors."""


class InvalidSpec(ParensodeError):
    pass


class AlgorithmMismatch(ParensodeError):
    pass


class AdaptiveUnsupported(ParensodeError):
    pass


class BadTolerance(ParensodeError):
    pass


class DimMismatch(ParensodeError):
    pass


class SingularSystem(ParensodeError):
    pass


class NonFiniteDerivative(ParensodeError):
    pass


class NonFiniteState(ParensodeError):
    pass


class UnsupportedNoise(ParensodeError):
    pass


class OutOfRange(ParensodeError):
    pass


class ParseError(ParensodeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# ----------------------------------------------------------------------------
# enums
# ----------------------------------------------------------------------------


class Algorithm(enum.Enum):
    Tsit5 = "tsit5"
    Rosenbrock23 = "rosenbrock23"
    EM = "em"
    SIEA = "siea"

    @property
    def is_sde(self) -> bool:
        return self in (Algorithm.EM, Algorithm.SIEA)

    @classmethod
    def parse(cls, name: Union[str, "Algorithm"]) -> "Algorithm":
        if isinstance(name, Algorithm):
            return name
        key = name.lower()
        for a in cls:
            if a.value == key:
                return a
        raise InvalidSpec(f"unknown algorithm {name!r}")


class Precision(enum.Enum):
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.F32 else np.float64)


class RetCode(enum.IntEnum):
    Success = 0
    MaxIters = 1
    DtBelowMin = 2
    Diverged = 3
    Terminated = 4


class NoiseKind(enum.Enum):
    Diagonal = "diagonal"
    General = "general"


class ExecModel(enum.Enum):
    Kernel = "kernel"
    Array = "array"


# ----------------------------------------------------------------------------
# problems
# ----------------------------------------------------------------------------


def _check_dim(dim: int) -> None:
    if not (1 <= dim <= MAX_DIM):
        raise InvalidSpec(f"state dimension must be in 1..{MAX_DIM}, got {dim}")


@dataclass(frozen=True)
class ODESystem:
    """du/dt = rhs(u, p, t).

    ``rhs`` must be written over a generic scalar (plain arithmetic and the
    helpers in :mod:`parensode.ad`) so that dual numbers can flow through it.
    ``native_id`` names a compiled twin of the same model, if one exists.
    """

    dim: int
    rhs: RhsFn
    name: str = "ode"
    analytic_jacobian: Optional[Callable[..., list]] = None
    native_id: Optional[int] = None

    def __post_init__(self) -> None:
        _check_dim(self.dim)


@dataclass(frozen=True)
class SDESystem:
    """dX = drift(X, p, t) dt + diffusion(X, p, t) dW."""

    dim: int
    noise_dim: int
    drift: RhsFn
    diffusion: Callable[..., list]
    noise_kind: NoiseKind = NoiseKind.Diagonal
    name: str = "sde"
    native_id: Optional[int] = None

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if self.noise_dim < 1:
            raise InvalidSpec("noise_dim must be >= 1")
        if self.noise_kind is NoiseKind.Diagonal and self.noise_dim != self.dim:
            raise InvalidSpec("diagonal noise requires noise_dim == dim")


System = Union[ODESystem, SDESystem]


@dataclass(frozen=True)
class ProblemInstance:
    system: System
    u0: tuple
    p: tuple
    tspan: tuple[float, float]
    seed: int
    index: int


@dataclass(frozen=True)
class EnsembleSpec:
    base: System
    u0_base: Sequence[float]
    tspan: tuple[float, float]
    n_traj: int
    vary: Optional[Callable[[int], tuple]] = None
    p_base: Sequence[float] = ()

    def variant(self, i: int) -> tuple[tuple, tuple, int]:
        if self.vary is None:
            return tuple(self.u0_base), tuple(self.p_base), 0
        u0, p, off = self.vary(i)
        return tuple(u0), tuple(p), int(off)


def validate_spec(spec: EnsembleSpec) -> None:
    if spec.n_traj < 1:
        raise InvalidSpec("n_traj must be >= 1")
    t0, tf = spec.tspan
    if not (math.isfinite(t0) and math.isfinite(tf)) or not t0 < tf:
        raise InvalidSpec(f"degenerate tspan {spec.tspan}")
    if len(spec.u0_base) != spec.base.dim:
        raise DimMismatch("u0_base length does not match system dim")


def make_ensemble(spec: EnsembleSpec, base_seed: int = 0) -> list[ProblemInstance]:
    validate_spec(spec)
    out = []
    for i in range(spec.n_traj):
        u0, p, off = spec.variant(i)
        if len(u0) != spec.base.dim:
            raise DimMismatch(f"vary({i}) returned u0 of length {len(u0)}")
        out.append(ProblemInstance(spec.base, u0, p, tuple(spec.tspan), base_seed + off, i))
    return out


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ControllerParams:
    eta: float = 0.9
    alpha: float = 7 / 50
    beta: float = 2 / 25
    qmin_factor: float = 0.2
    qmax_factor: float = 5.0

    @classmethod
    def for_algorithm(cls, algo: Algorithm) -> "ControllerParams":
        if algo is Algorithm.Rosenbrock23:
            return cls(alpha=0.25, beta=0.0)
        return cls()


@dataclass(frozen=True)
class SaveSpec:
    """Either every accepted step (``grid is None``) or ``grid`` uniform points."""

    grid: Optional[int] = None

    @classmethod
    def every_step(cls) -> "SaveSpec":
        return cls(None)

    @classmethod
    def uniform(cls, k: int) -> "SaveSpec":
        return cls(int(k))

    @property
    def every(self) -> bool:
        return self.grid is None

    def grid_times(self, tspan: tuple[float, float]) -> np.ndarray:
        t0, tf = tspan
        k = self.grid
        g = t0 + (tf - t0) * np.arange(k, dtype=np.float64) / (k - 1)
        g[-1] = tf
        return g


@dataclass(frozen=True)
class SolveConfig:
    algorithm: Algorithm = Algorithm.Tsit5
    adaptive: bool = True
    dt0: Optional[float] = None
    abstol: float = 1e-6
    rtol: float = 1e-3
    saveat: SaveSpec = field(default_factory=SaveSpec)
    max_steps: int = 100_000
    dtmin: Optional[float] = None
    dtmax: Optional[float] = None
    controller: Optional[ControllerParams] = None
    base_seed: int = 0
    precision: Precision = Precision.F64

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if isinstance(self.precision, str):
            object.__setattr__(self, "precision", Precision(self.precision.lower()))

    @property
    def ctrl(self) -> ControllerParams:
        return self.controller or ControllerParams.for_algorithm(self.algorithm)

    def step_bounds(self, tspan: tuple[float, float]) -> tuple[float, float]:
        """Resolved (dtmin, dtmax) for a time span."""
        span = tspan[1] - tspan[0]
        dtmin = self.dtmin if self.dtmin is not None else 1e-14 * max(1.0, abs(span))
        dtmax = self.dtmax if self.dtmax is not None else span
        return dtmin, dtmax


def validate_config(cfg: SolveConfig, sys: System) -> None:
    """Raise if ``cfg`` is inconsistent on its own or with ``sys``."""
    algo = cfg.algorithm
    if isinstance(sys, SDESystem) != algo.is_sde:
        kind = "SDE" if isinstance(sys, SDESystem) else "ODE"
        raise AlgorithmMismatch(f"{algo.name} cannot solve an {kind} system")
    if algo.is_sde and cfg.adaptive:
        raise AdaptiveUnsupported(f"{algo.name} supports fixed time-stepping only")
    if algo is Algorithm.SIEA and sys.noise_kind is not NoiseKind.Diagonal:
        raise UnsupportedNoise("SIEA supports diagonal noise only")
    if not (cfg.abstol > 0) or not math.isfinite(cfg.abstol):
        raise BadTolerance(f"abstol must be > 0, got {cfg.abstol}")
    if not (cfg.rtol >= 0) or not math.isfinite(cfg.rtol):
        raise BadTolerance(f"rtol must be >= 0, got {cfg.rtol}")
    if not cfg.adaptive and cfg.dt0 is None:
        raise InvalidSpec("fixed-step solves need dt0")
    for name in ("dt0", "dtmin", "dtmax"):
        v = getattr(cfg, name)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise InvalidSpec(f"{name} must be a positive finite number")
    lo = cfg.dtmin if cfg.dtmin is not None else 0.0
    hi = cfg.dtmax if cfg.dtmax is not None else math.inf
    if lo > hi or (cfg.dt0 is not None and not lo <= cfg.dt0 <= hi):
        raise InvalidSpec("need dtmin <= dt0 <= dtmax")
    if cfg.max_steps < 1:
        raise InvalidSpec("max_steps must be >= 1")
    if cfg.saveat.grid is not None and cfg.saveat.grid < 2:
        raise InvalidSpec("a save grid needs at least 2 points")
    c = cfg.ctrl
    if not (0 < c.eta <= 1) or c.alpha <= 0 or c.beta < 0:
        raise InvalidSpec("controller gains out of range")
    if not (0 < c.qmin_factor < 1 < c.qmax_factor):
        raise InvalidSpec("need 0 < qmin_factor < 1 < qmax_factor")


# ----------------------------------------------------------------------------
# solutions
# ----------------------------------------------------------------------------

STAT_FIELDS = ("n_accept", "n_reject", "n_f_evals", "n_jac_evals", "n_factorizations", "n_event_warnings")
N_STATS = len(STAT_FIELDS)


@dataclass
class Stats:
    n_accept: int = 0
    n_reject: int = 0
    n_f_evals: int = 0
    n_jac_evals: int = 0
    n_factorizations: int = 0
    n_event_warnings: int = 0

    @classmethod
    def from_row(cls, row) -> "Stats":
        return cls(*(int(x) for x in row))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    retcode: RetCode
    stats: Stats

    @property
    def t(self) -> np.ndarray:
        return self.times

    @property
    def u(self) -> np.ndarray:
        return self.states


class SolutionBuffers:
    """Preallocated output storage for an ensemble.

    ``states`` has shape (N, cap, n). In every-step mode ``times`` is (N, cap);
    in grid mode a single shared grid of k points is kept plus ``t_end`` so
    that a trajectory stopped by an event can report its final time.
    """

    def __init__(self, n_traj: int, dim: int, cfg: SolveConfig, tspan: tuple[float, float],
                 has_events: bool = False):
        self.n_traj = n_traj
        self.dim = dim
        self.every = cfg.saveat.every
        dtype = cfg.precision.dtype
        if self.every:
            if not cfg.adaptive and not has_events:
                nsteps = fixed_step_count(tspan, cfg.dt0)
                self.cap = min(cfg.max_steps, nsteps) + 1
            else:
                self.cap = cfg.max_steps + 1
            self.times = np.zeros((n_traj, self.cap), dtype=np.float64)
            self.grid = None
        else:
            self.cap = cfg.saveat.grid
            self.grid = cfg.saveat.grid_times(tspan)
            self.times = None
        self.states = np.zeros((n_traj, self.cap, dim), dtype=dtype)
        self.t_end = np.full(n_traj, tspan[1], dtype=np.float64)
        self.lengths = np.zeros(n_traj, dtype=np.int64)
        self.retcodes = np.zeros(n_traj, dtype=np.int32)
        self.stats = np.zeros((n_traj, N_STATS), dtype=np.int64)

    @property
    def nbytes(self) -> int:
        return self.states.nbytes

    def trajectory(self, i: int) -> Trajectory:
        n = int(self.lengths[i])
        if self.every:
            times = self.times[i, :n].copy()
        else:
            times = self.grid[:n].copy()
            if n and self.retcodes[i] == RetCode.Terminated:
                times[n - 1] = self.t_end[i]
        return Trajectory(times, self.states[i, :n].copy(), RetCode(int(self.retcodes[i])),
                          Stats.from_row(self.stats[i]))

    def same_as(self, other: "SolutionBuffers") -> bool:
        """Bitwise equality of all buffers."""
        pairs = [(self.states, other.states), (self.lengths, other.lengths),
                 (self.retcodes, other.retcodes), (self.stats, other.stats), (self.t_end, other.t_end)]
        if self.every:
            pairs.append((self.times, other.times))
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in pairs)


class EnsembleSolution:
    def __init__(self, buffers: SolutionBuffers, wall_time_ms: float, exec_model: ExecModel):
        self.buffers = buffers
        self.wall_time_ms = wall_time_ms
        self.exec_model = exec_model
        self._cache: Optional[list[Trajectory]] = None

    def __len__(self) -> int:
        return self.buffers.n_traj

    def __getitem__(self, i: int) -> Trajectory:
        return self.buffers.trajectory(i)

    @property
    def trajectories(self) -> list[Trajectory]:
        if self._cache is None:
            self._cache = [self.buffers.trajectory(i) for i in range(self.buffers.n_traj)]
        return self._cache

    @property
    def retcodes(self) -> np.ndarray:
        return self.buffers.retcodes

    def final_states(self) -> np.ndarray:
        b = self.buffers
        idx = np.maximum(b.lengths - 1, 0)
        return b.states[np.arange(b.n_traj), idx]


def fixed_step_count(tspan: tuple[float, float], dt: float) -> int:
    """Number of fixed steps covering ``tspan``; the last one may be short."""
    span = tspan[1] - tspan[0]
    r = span / dt
    n = round(r)
    if n >= 1 and abs(r - n) <= 1e-10 * max(1.0, r):
        return int(n)
    return max(1, math.ceil(r))


def fixed_step_time(t0: float, tf: float, dt: float, k: int, nsteps: int) -> float:
    return tf if k >= nsteps else t0 + k * dt
