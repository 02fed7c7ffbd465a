"""Fixed-step gradient descent on separable 1-smooth convex test instances.

Instances are per-coordinate mixtures of two families, both minimized at the
origin with minimum value 0:

* quadratic with curvature ``a`` in (0, 1]:  a*x^2/2
* Huber with kink ``delta`` > 0:  x^2/2 inside |x| <= delta, affine outside

Separable sums keep exact minimizers and 1-smoothness while letting the
dimension grow for randomized checks.  The iteration is
``x_{i+1} = x_i - h_i * grad f(x_i)``.

Randomized generators take a ``numpy.random.Generator`` (PCG64 via
``default_rng`` everywhere in this package) so seeded runs reproduce
trace statistics; bit-exactness across platforms is not promised.
"""

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .schedule import CompClass, ScheduleError, StepSchedule


def _coord_value(x, is_huber, param):
    ax = np.abs(x)
    quad = 0.5 * param * x * x
    hub = np.where(ax <= param, 0.5 * x * x, param * ax - 0.5 * param * param)
    return np.where(is_huber, hub, quad)


def _coord_grad(x, is_huber, param):
    # Huber gradient at the kink takes the quadratic branch; both agree there.
    quad = param * x
    hub = np.where(np.abs(x) <= param, x, param * np.sign(x))
    return np.where(is_huber, hub, quad)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Separable test function: per-coordinate quadratic or Huber.

    ``param[i]`` is the curvature for quadratic coordinates and the kink
    location for Huber coordinates.  Minimizer is the origin, f* = 0.
    """

    is_huber: np.ndarray
    param: np.ndarray

    def __post_init__(self):
        hub = np.asarray(self.is_huber, dtype=bool).reshape(-1)
        par = np.asarray(self.param, dtype=np.float64).reshape(-1)
        if hub.shape != par.shape:
            raise ScheduleError("is_huber and param must have matching shapes")
        if not np.all(par > 0.0):
            raise ScheduleError("parameters must be positive")
        if not np.all(par[~hub] <= 1.0):
            raise ScheduleError("quadratic curvatures above 1 break 1-smoothness")
        hub.flags.writeable = False
        par.flags.writeable = False
        object.__setattr__(self, "is_huber", hub)
        object.__setattr__(self, "param", par)

    @property
    def dim(self) -> int:
        return int(self.param.size)

    def value(self, x):
        return _coord_value(x, self.is_huber, self.param).sum(axis=-1)

    def grad(self, x):
        return _coord_grad(x, self.is_huber, self.param)

    def describe(self) -> str:
        if self.dim == 1:
            kind = "huber" if self.is_huber[0] else "quad"
            key = "delta" if self.is_huber[0] else "a"
            return f"{kind}:{key}={self.param[0]:.12g}"
        nh = int(self.is_huber.sum())
        return f"separable(d={self.dim}, huber={nh}, quad={self.dim - nh})"


def quad_instance(a: float = 1.0, d: int = 1) -> ProblemInstance:
    return ProblemInstance(np.zeros(d, dtype=bool), np.full(d, float(a)))


def huber_instance(delta: float, d: int = 1) -> ProblemInstance:
    return ProblemInstance(np.ones(d, dtype=bool), np.full(d, float(delta)))


def random_instance(rng: np.random.Generator, d: int) -> ProblemInstance:
    """Random per-coordinate mixture; deltas log-uniform, curvatures uniform."""
    is_huber = rng.random(d) < 0.5
    param = np.where(
        is_huber,
        10.0 ** rng.uniform(-3.0, 0.0, d),
        rng.uniform(0.05, 1.0, d),
    )
    return ProblemInstance(is_huber, param)


def random_x0(rng: np.random.Generator, d: int) -> np.ndarray:
    """Gaussian start point with a random decade of overall scale."""
    return rng.standard_normal(d) * 10.0 ** rng.uniform(-1.0, 1.0)


@dataclass(frozen=True, eq=False)
class GDTrace:
    """Full history of one run: points, gradients, and values, 0..n."""

    x: np.ndarray  # (n+1, d)
    g: np.ndarray  # (n+1, d)
    f: np.ndarray  # (n+1,)
    schedule: StepSchedule
    instance: ProblemInstance

    fstar: float = 0.0

    @property
    def xstar(self) -> np.ndarray:
        return np.zeros(self.x.shape[-1])

    @property
    def n(self) -> int:
        return int(self.f.size - 1)

    def objective_gap(self) -> float:
        return float(self.f[-1] - self.fstar)

    def half_grad_sq(self) -> float:
        return float(0.5 * np.sum(self.g[-1] * self.g[-1]))

    def half_dist_sq(self) -> float:
        return float(0.5 * np.sum(self.x[-1] * self.x[-1]))

    def to_csv(self, fileobj=None) -> str:
        """Columns: i, x (semicolon-joined), f_i, grad_norm."""
        out = fileobj or io.StringIO()
        w = csv.writer(out)
        w.writerow(["i", "x", "f_i", "grad_norm"])
        for i in range(self.n + 1):
            w.writerow(
                [
                    i,
                    ";".join(format(v, ".17g") for v in self.x[i]),
                    format(self.f[i], ".17g"),
                    format(float(np.linalg.norm(self.g[i])), ".17g"),
                ]
            )
        return out.getvalue() if fileobj is None else ""


def raw_run(steps, is_huber, param, x0):
    """Iterate GD returning raw arrays; broadcasts over leading batch axes.

    ``x0`` has shape (..., d) and the instance arrays broadcast against it.
    Returns ``(xs, gs, fs)`` with shapes (n+1, ..., d) twice and (n+1, ...).
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    n = len(steps)
    xs = np.empty((n + 1,) + x.shape)
    gs = np.empty_like(xs)
    fs = np.empty((n + 1,) + x.shape[:-1])
    for i in range(n + 1):
        xs[i] = x
        gs[i] = _coord_grad(x, is_huber, param)
        fs[i] = _coord_value(x, is_huber, param).sum(axis=-1)
        if i < n:
            x = x - steps[i] * gs[i]
    return xs, gs, fs


def run(schedule: StepSchedule, instance: ProblemInstance, x0) -> GDTrace:
    """Run gradient descent with the schedule's steps from ``x0``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape != (instance.dim,):
        raise ScheduleError(f"x0 has shape {x0.shape}, instance dimension is {instance.dim}")
    xs, gs, fs = raw_run(schedule.steps, instance.is_huber, instance.param, x0)
    return GDTrace(xs, gs, fs, schedule, instance)


class TightPair(NamedTuple):
    huber: ProblemInstance
    quad: ProblemInstance


# Which Huber kink makes each certified inequality an equality from x0 = 1.
TIGHT_PURPOSES = ("defining", "f-line", "g-line")


def tight_delta(comp_class: CompClass, purpose: str, rate: float) -> float:
    if not (0.0 < rate <= 1.0):
        raise ScheduleError(f"rate must lie in (0, 1], got {rate}")
    if purpose not in TIGHT_PURPOSES:
        raise ScheduleError(f"unknown purpose {purpose!r}, expected one of {TIGHT_PURPOSES}")
    if comp_class is CompClass.F:
        if purpose != "defining":
            raise ScheduleError("f-class schedules only have the defining tight instance")
        return rate
    if comp_class is CompClass.G:
        if purpose != "defining":
            raise ScheduleError("g-class schedules only have the defining tight instance")
        return 2.0 * rate / (1.0 + rate)
    # class S: the defining inequality is tight for any delta <= rate; take
    # delta = rate.  The implied objective-gap bound needs rate/(2 - rate),
    # the implied gradient bound needs rate itself.
    if purpose == "f-line":
        return rate / (2.0 - rate)
    return rate


def tight_instance(comp_class: CompClass, purpose: str, rate: float) -> TightPair:
    """The 1-D Huber instance that meets the class inequality with equality
    from ``x0 = 1``, plus its full-curvature quadratic companion."""
    return TightPair(huber_instance(tight_delta(comp_class, purpose, rate)), quad_instance(1.0))


class WorstCaseResult(NamedTuple):
    delta_star: float
    worst_value: float
    quad_value: float
    criterion: str


WORST_CASE_CRITERIA = ("objective_gap_per_D2", "gradnorm_per_gap")


def worst_case_scan(
    schedule: StepSchedule, criterion: str, grid_size: int = 256
) -> WorstCaseResult:
    """Empirical worst case over the 1-D Huber family from ``x0 = 1``.

    Scans the kink over a log-uniform grid in (1e-6, 1], plus the unit
    quadratic.  All grid runs execute as one separable batch since the
    coordinates evolve independently.
    """
    if criterion not in WORST_CASE_CRITERIA:
        raise ScheduleError(f"unknown criterion {criterion!r}, expected one of {WORST_CASE_CRITERIA}")
    if grid_size < 100:
        raise ScheduleError(f"grid_size must be at least 100, got {grid_size}")
    deltas = np.geomspace(1e-6, 1.0, grid_size)
    is_huber = np.ones((grid_size, 1), dtype=bool)
    param = deltas.reshape(-1, 1)
    x0 = np.ones((grid_size, 1))
    xs, gs, fs = raw_run(schedule.steps, is_huber, param, x0)

    if criterion == "objective_gap_per_D2":
        vals = fs[-1] / 0.5  # D = 1
    else:
        f0 = fs[0]
        vals = 0.5 * gs[-1, :, 0] ** 2 / f0
    i = int(np.argmax(vals))

    qx, qg, qf = raw_run(schedule.steps, np.zeros(1, dtype=bool), np.ones(1), np.ones(1))
    if criterion == "objective_gap_per_D2":
        quad_val = float(qf[-1] / 0.5)
    else:
        quad_val = float(0.5 * qg[-1, 0] ** 2 / qf[0])
    return WorstCaseResult(float(deltas[i]), float(vals[i]), quad_val, criterion)


def certified_bound(schedule: StepSchedule, criterion: str) -> "float | None":
    """The certified value for a scan criterion, or None when the class
    does not certify it (F certifies gap, G certifies gradient, S both)."""
    if schedule.comp_class is CompClass.S:
        return 1.0 / (2.0 / schedule.rate - 1.0)
    if schedule.comp_class is CompClass.F and criterion == "objective_gap_per_D2":
        return schedule.rate
    if schedule.comp_class is CompClass.G and criterion == "gradnorm_per_gap":
        return schedule.rate
    return None
