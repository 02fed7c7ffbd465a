"""Recursive and closed-form schedule families built from the join algebra."""

import decimal

import numpy as np

from .numerics import bisect_root
from .schedule import (
    CompClass,
    CompositionTree,
    JoinOp,
    ResourceCapError,
    ScheduleError,
    StepSchedule,
    UncertifiedScheduleError,
    empty_schedule,
    join,
    join_rate,
    middle_step,
    validate_schedule,
)

# Length 2^k - 1 at level k: keep the doubling family under ~8 MB of steps.
MAX_SILVER_LEVEL = 20
MAX_EXTEND_LEN = 100_000


def silver(k: int) -> StepSchedule:
    """Level-``k`` balanced self-join schedule of length ``2^k - 1``, class S.

    Built iteratively by doubling: each level concatenates two copies of the
    previous one around the middle step of their self-join, so the result is
    float-identical to evaluating the balanced join tree.  Rate is
    ``(1+sqrt(2))^-k``.
    """
    if k < 0:
        raise ScheduleError(f"level must be nonnegative, got {k}")
    if k > MAX_SILVER_LEVEL:
        raise ResourceCapError(f"level {k} exceeds cap {MAX_SILVER_LEVEL} (length 2^k - 1)")
    steps = np.empty(0)
    eta = 1.0
    tree = CompositionTree()
    for _ in range(k):
        mu = middle_step(JoinOp.SJOIN, eta, eta)
        steps = np.concatenate([steps, [mu], steps])
        tree = CompositionTree(JoinOp.SJOIN, tree, tree, mu)
        eta = join_rate(JoinOp.SJOIN, eta, eta)
    out = StepSchedule(steps, CompClass.S, eta, tree)
    validate_schedule(out)
    return out


def right_heavy(k: int) -> StepSchedule:
    """Level-``k`` objective-gap schedule: prepend a silver block at each level.

    ``h(0)`` is empty; ``h(i+1) = silver(i) |> h(i)``.  Class F, length 2^k - 1.
    """
    if k < 0:
        raise ScheduleError(f"level must be nonnegative, got {k}")
    if k > MAX_SILVER_LEVEL:
        raise ResourceCapError(f"level {k} exceeds cap {MAX_SILVER_LEVEL}")
    h = empty_schedule(CompClass.F)
    for i in range(k):
        h = join(JoinOp.FJOIN, silver(i), h)
    return h


def left_heavy(k: int) -> StepSchedule:
    """Gradient-norm mirror of :func:`right_heavy`: ``h(i+1) = h(i) <| silver(i)``."""
    if k < 0:
        raise ScheduleError(f"level must be nonnegative, got {k}")
    if k > MAX_SILVER_LEVEL:
        raise ResourceCapError(f"level {k} exceeds cap {MAX_SILVER_LEVEL}")
    h = empty_schedule(CompClass.G)
    for i in range(k):
        h = join(JoinOp.GJOIN, h, silver(i))
    return h


def sigma_seed() -> StepSchedule:
    """The two-step short-stepsize seed ``[] <| ([] >< [])``, class G."""
    return join(
        JoinOp.GJOIN,
        empty_schedule(CompClass.G),
        join(JoinOp.SJOIN, empty_schedule(CompClass.S), empty_schedule(CompClass.S)),
    )


def _resolve_seed(seed) -> StepSchedule:
    if isinstance(seed, StepSchedule):
        if seed.comp_class is not CompClass.G:
            raise ScheduleError(f"custom seed must be class g, got {seed.comp_class.value}")
        validate_schedule(seed)
        return seed
    if seed == "empty":
        return empty_schedule(CompClass.G)
    if seed == "sigma":
        return sigma_seed()
    raise ScheduleError(f"unknown seed {seed!r}: expected 'empty', 'sigma', or a g-schedule")


def dynamic_short(n: int, seed="empty") -> StepSchedule:
    """Extend a g-class seed to length ``n`` by joining the empty schedule.

    Each appended step lands in ``(0, 2)``, so the objective value decreases
    monotonically along the run.  The appended steps satisfy the closed-form
    recurrence ``mu' = (3 - 2*mu + sqrt(9 - 4*mu)) / (2*(2 - mu))`` with rate
    ``(2 - mu)/2``, which :func:`short_step_recurrence` exposes for checks.
    """
    h = _resolve_seed(seed)
    if n < h.n:
        raise ScheduleError(f"target length {n} is shorter than the seed ({h.n})")
    if n > MAX_EXTEND_LEN:
        raise ResourceCapError(f"length {n} exceeds cap {MAX_EXTEND_LEN}")
    tail = empty_schedule(CompClass.S)
    while h.n < n:
        h = join(JoinOp.GJOIN, h, tail)
    return h


def f_extend(n: int, seed=None) -> StepSchedule:
    """Objective-gap counterpart of :func:`dynamic_short`: prepend empty f-joins.

    Equals the reversal of :func:`dynamic_short` run from the reversed seed.
    """
    h = empty_schedule(CompClass.F) if seed is None else seed
    if h.comp_class is not CompClass.F:
        raise ScheduleError(f"seed must be class f, got {h.comp_class.value}")
    validate_schedule(h)
    if n < h.n:
        raise ScheduleError(f"target length {n} is shorter than the seed ({h.n})")
    if n > MAX_EXTEND_LEN:
        raise ResourceCapError(f"length {n} exceeds cap {MAX_EXTEND_LEN}")
    head = empty_schedule(CompClass.S)
    while h.n < n:
        h = join(JoinOp.FJOIN, head, h)
    return h


def short_step_recurrence(n: int, mu1: float = 1.5):
    """Closed-form (mu_i, eta_i) sequence for empty-seeded short steps.

    Independent of the join machinery; used to cross-check
    :func:`dynamic_short`.  Iterated in 50-digit decimal arithmetic: the
    recurrence stores the rate inside the difference 2 - mu, so a binary64
    iteration would drift by ~1e-12 after 100 steps and mask real errors.
    Returns float arrays of length ``n``.
    """
    if n < 1:
        raise ScheduleError("need n >= 1")
    mus = np.empty(n)
    etas = np.empty(n)
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        two = decimal.Decimal(2)
        mu = decimal.Decimal(mu1)
        for i in range(n):
            mus[i] = float(mu)
            etas[i] = float((two - mu) / two)
            mu = (3 - 2 * mu + (9 - 4 * mu).sqrt()) / (2 * (two - mu))
    return mus, etas


def constant_optimal(comp_class: CompClass, n: int, unverified: bool = False) -> StepSchedule:
    """Best constant schedule of length ``n`` for the given class.

    The common step solves ``1/(1 + 2*h*n) = (h-1)^(2n)`` for classes G/F and
    ``1/(1 + h*n) = (h-1)^n`` for class S, on ``h in (1, 2)`` by bisection.
    Not join-built (no tree).  The S variant is proven only for n <= 2 and is
    flagged conjectured beyond that; the F variant is conjectured outright and
    requires ``unverified=True``.
    """
    if n < 1:
        raise ScheduleError(f"need n >= 1, got {n}")
    if comp_class is CompClass.F and not unverified:
        raise UncertifiedScheduleError(
            "the constant f-class schedule is conjectural and carries no rate "
            "certificate; pass unverified=True to build it anyway"
        )
    lo, hi = 1.0 + 1e-12, 2.0 - 1e-12
    if comp_class is CompClass.S:
        fn = lambda h: 1.0 / (1.0 + h * n) - (h - 1.0) ** n
    else:
        fn = lambda h: 1.0 / (1.0 + 2.0 * h * n) - (h - 1.0) ** (2 * n)
    hbar = bisect_root(fn, lo, hi, tol=1e-14)
    if comp_class is CompClass.S:
        rate = 1.0 / (1.0 + hbar * n)
        conjectured = n >= 3
    else:
        rate = 1.0 / (1.0 + 2.0 * hbar * n)
        conjectured = comp_class is CompClass.F
    out = StepSchedule(np.full(n, hbar), comp_class, rate, tree=None, conjectured=conjectured)
    validate_schedule(out)
    return out
