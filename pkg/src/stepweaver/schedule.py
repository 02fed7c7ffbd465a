"""Core algebra of composable stepsize schedules.

A schedule is a finite sequence of positive stepsizes for fixed-step
gradient descent on 1-smooth convex functions, carrying a composability
class and a certified worst-case rate ``eta``:

* class F  --  final objective gap:    f(x_n) - f*  <=  eta/2 * ||x0 - x*||^2
* class G  --  final gradient norm:    ||g_n||^2/2  <=  eta * (f(x0) - f*)
* class S  --  a mixed contraction that yields F- and G-type guarantees
               simultaneously (see :func:`fg_rates_from_s`).

Certified schedules obey closed-form identities tying the rate to the
steps: for F and G, ``eta = 1/(1 + 2*sum(h)) = prod(h_i - 1)^2``; for S,
``eta = 1/(1 + sum(h)) = prod(h_i - 1)``.  The empty schedule belongs to
all three classes with rate exactly 1.

Schedules of compatible classes combine with three join operations.  A
join concatenates its operands around one closed-form middle step ``mu``
and multiplies rates through a closed-form scalar join.  All values here
are immutable; every operation is a pure function.
"""

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_IDENTITY_TOL = 1e-9


class ScheduleError(ValueError):
    """Base class for schedule construction errors."""


class ClassMismatchError(ScheduleError):
    """An operand does not belong to the composability class an operation needs."""


class IdentityError(ScheduleError):
    """A schedule's rate disagrees with its closed-form step identities."""


class UncertifiedScheduleError(ScheduleError):
    """Operation requires a certified (non-conjectured, join-built) schedule."""


class ResourceCapError(RuntimeError):
    """A size guard was exceeded (enumeration length, table size, ...)."""


class CompClass(str, enum.Enum):
    F = "f"
    G = "g"
    S = "s"


class JoinOp(enum.Enum):
    SJOIN = "><"
    FJOIN = "|>"
    GJOIN = "<|"

    @property
    def symbol(self) -> str:
        return self.value


# Concatenation-order operand classes and result class for each join.
_OPERAND_CLASSES = {
    JoinOp.SJOIN: (CompClass.S, CompClass.S),
    JoinOp.FJOIN: (CompClass.S, CompClass.F),
    JoinOp.GJOIN: (CompClass.G, CompClass.S),
}
_RESULT_CLASS = {
    JoinOp.SJOIN: CompClass.S,
    JoinOp.FJOIN: CompClass.F,
    JoinOp.GJOIN: CompClass.G,
}


def operand_classes(op: JoinOp):
    """Required (left, right) classes for a join, in concatenation order."""
    return _OPERAND_CLASSES[op]


def result_class(op: JoinOp) -> CompClass:
    return _RESULT_CLASS[op]


# ---------------------------------------------------------------------------
# Scalar join formulas.
#
# ``alpha`` is always the rate of the S-class operand; ``beta`` the rate of
# the other operand (F for |>, G for <|, the second S for ><).  The middle
# steps use rationalized forms equivalent to the subtractive ones,
#   s:    mu = 1 + (sqrt(a^2+6ab+b^2) - (a+b)) / (2ab)
#   f/g:  mu = 1 + (sqrt(a^2+8ab) - a) / (4ab)
# but free of cancellation when one rate is much smaller than the other.
# The symmetric grouping (a*a + b*b) + 6*(a*b) makes the s-join exactly
# commutative in floating point.
# ---------------------------------------------------------------------------


def _sjoin_rate(alpha, beta):
    return (2.0 * alpha * beta) / (
        (alpha + beta) + np.sqrt((alpha * alpha + beta * beta) + 6.0 * (alpha * beta))
    )


def _fgjoin_rate(alpha, beta):
    return (2.0 * alpha * beta) / (
        (alpha + 4.0 * beta) + np.sqrt(alpha * alpha + 8.0 * (alpha * beta))
    )


def _sjoin_mu(alpha, beta):
    return 1.0 + 2.0 / (
        (alpha + beta) + np.sqrt((alpha * alpha + beta * beta) + 6.0 * (alpha * beta))
    )


def _fgjoin_mu(alpha, beta):
    return 1.0 + 2.0 / (alpha + np.sqrt(alpha * alpha + 8.0 * (alpha * beta)))


def _require_positive(alpha, beta):
    if not (alpha > 0.0 and beta > 0.0):
        raise ScheduleError(f"join rates must be positive, got alpha={alpha}, beta={beta}")


def join_rate(op: JoinOp, alpha: float, beta: float) -> float:
    """Scalar join of two rates.

    ``alpha`` is the S-side rate, ``beta`` the F/G/second-S side.  Values
    above 1 are accepted: the formulas are defined for all positive scalars,
    which the asymptotic-bound computations rely on.
    """
    _require_positive(alpha, beta)
    if op is JoinOp.SJOIN:
        return float(_sjoin_rate(alpha, beta))
    return float(_fgjoin_rate(alpha, beta))


def middle_step(op: JoinOp, alpha: float, beta: float) -> float:
    """Middle stepsize inserted by a join; always > 1."""
    _require_positive(alpha, beta)
    if op is JoinOp.SJOIN:
        return float(_sjoin_mu(alpha, beta))
    return float(_fgjoin_mu(alpha, beta))


# ---------------------------------------------------------------------------
# Construction trees.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompositionTree:
    """Binary construction tree over empty-schedule leaves.

    ``op is None`` marks a leaf.  ``mu`` is filled when the tree comes from
    a materialized schedule and is left ``None`` on freshly built shapes.
    Equality and hashing are by identity: subtrees are routinely shared, so
    structural comparison would blow up on large balanced trees.
    """

    op: "JoinOp | None" = None
    left: "CompositionTree | None" = None
    right: "CompositionTree | None" = None
    mu: "float | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def length(self) -> int:
        """Total schedule length: one step per join node (shared nodes counted per use)."""
        memo: dict[int, int] = {}
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in memo:
                continue
            if node.is_leaf:
                memo[id(node)] = 0
            elif not expanded:
                stack.append((node, True))
                stack.append((node.left, False))
                stack.append((node.right, False))
            else:
                memo[id(node)] = memo[id(node.left)] + memo[id(node.right)] + 1
        return memo[id(self)]


LEAF = CompositionTree()


def admissible_classes(tree: CompositionTree) -> frozenset:
    """Classes a tree can evaluate to: leaves admit all three, joins one."""
    out: dict[int, frozenset] = {}
    stack = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in out:
            continue
        if node.is_leaf:
            out[id(node)] = frozenset((CompClass.F, CompClass.G, CompClass.S))
        elif not expanded:
            stack.append((node, True))
            stack.append((node.left, False))
            stack.append((node.right, False))
        else:
            lneed, rneed = _OPERAND_CLASSES[node.op]
            if lneed in out[id(node.left)] and rneed in out[id(node.right)]:
                out[id(node)] = frozenset((_RESULT_CLASS[node.op],))
            else:
                out[id(node)] = frozenset()
    return out[id(tree)]


def trees_equal(a: CompositionTree, b: CompositionTree, check_mu: bool = False) -> bool:
    """Structural tree equality (iterative; ignores mu unless asked)."""
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x.is_leaf != y.is_leaf:
            return False
        if x.is_leaf:
            continue
        if x.op is not y.op:
            return False
        if check_mu and x.mu != y.mu:
            return False
        stack.append((x.left, y.left))
        stack.append((x.right, y.right))
    return True


# ---------------------------------------------------------------------------
# Schedules.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepSchedule:
    """A stepsize sequence with its composability class and certified rate.

    ``tree`` records the join construction when there is one; schedules
    without a tree (e.g. optimal constant schedules) are not join-built and
    are excluded from tree-based operations such as reversal.
    ``conjectured`` marks schedules whose class membership is numerically
    supported but unproven; they are barred from joins.
    """

    steps: np.ndarray
    comp_class: CompClass
    rate: float
    tree: "CompositionTree | None" = None
    conjectured: bool = False

    def __post_init__(self):
        arr = np.asarray(self.steps, dtype=np.float64)
        arr = arr.reshape(-1).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "steps", arr)
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def n(self) -> int:
        return int(self.steps.size)

    @property
    def step_sum(self) -> float:
        return float(self.steps.sum())

    @property
    def is_join_built(self) -> bool:
        return self.tree is not None and not self.conjectured

    def describe(self) -> str:
        tag = " (conjectured)" if self.conjectured else ""
        return f"{self.comp_class.value}-schedule n={self.n} rate={self.rate:.10g}{tag}"

    def __repr__(self):  # keep long schedules readable
        head = ", ".join(f"{s:.6g}" for s in self.steps[:6])
        more = ", ..." if self.n > 6 else ""
        return f"StepSchedule([{head}{more}], {self.comp_class.value}, rate={self.rate:.10g}, n={self.n})"


def empty_schedule(comp_class: CompClass) -> StepSchedule:
    """The length-0 schedule; member of every class with rate exactly 1."""
    return StepSchedule(np.empty(0), comp_class, 1.0, tree=LEAF)


def closed_form_rates(steps: np.ndarray, comp_class: CompClass):
    """The two closed-form rate expressions for a step sequence.

    Returns ``(denominator_form, product_form)``: for F/G these are
    ``1/(1+2*sum)`` and ``prod(h-1)^2``, for S ``1/(1+sum)`` and ``prod(h-1)``.
    Empty schedules give ``(1.0, 1.0)``.
    """
    steps = np.asarray(steps, dtype=np.float64)
    if steps.size == 0:
        return 1.0, 1.0
    if comp_class is CompClass.S:
        return 1.0 / (1.0 + steps.sum()), float(np.prod(steps - 1.0))
    prod = float(np.prod(steps - 1.0))
    return 1.0 / (1.0 + 2.0 * steps.sum()), prod * prod


def validate_schedule(s: StepSchedule, tol: float = DEFAULT_IDENTITY_TOL) -> None:
    """Check positivity and the closed-form rate identities to relative ``tol``."""
    if s.n and not np.all(s.steps > 0.0):
        raise IdentityError(f"steps must be positive: {s!r}")
    if not (0.0 < s.rate <= 1.0):
        raise IdentityError(f"rate must lie in (0, 1], got {s.rate}")
    if s.n == 0:
        if s.rate != 1.0:
            raise IdentityError(f"empty schedule must have rate exactly 1, got {s.rate}")
        return
    denom_form, prod_form = closed_form_rates(s.steps, s.comp_class)
    for name, val in (("1/(1+c*sum h)", denom_form), ("prod(h-1) form", prod_form)):
        if abs(s.rate - val) > tol * s.rate:
            raise IdentityError(
                f"{s.comp_class.value}-identity violated: rate={s.rate!r} but {name}={val!r} "
                f"(relative error {abs(s.rate - val) / s.rate:.3e} > {tol:g})"
            )


def join(op: JoinOp, a: StepSchedule, b: StepSchedule, identity_tol: float = DEFAULT_IDENTITY_TOL) -> StepSchedule:
    """Join two certified schedules: concatenate around the middle step.

    Operands are taken in concatenation order: ``|>`` needs (S, F), ``<|``
    needs (G, S), ``><`` needs (S, S).  The result's rate is the scalar join
    of the operand rates and is validated against the closed-form identities.
    """
    lneed, rneed = _OPERAND_CLASSES[op]
    if a.comp_class is not lneed or b.comp_class is not rneed:
        raise ClassMismatchError(
            f"{op.symbol} requires (left={lneed.value}, right={rneed.value}), "
            f"got (left={a.comp_class.value}, right={b.comp_class.value})"
        )
    if a.conjectured or b.conjectured:
        raise UncertifiedScheduleError(
            "cannot join conjectured schedules: their class membership is unproven"
        )
    if op is JoinOp.GJOIN:
        alpha, beta = b.rate, a.rate
    else:
        alpha, beta = a.rate, b.rate
    mu = middle_step(op, alpha, beta)
    rate = join_rate(op, alpha, beta)
    steps = np.concatenate([a.steps, [mu], b.steps])
    tree = None
    if a.tree is not None and b.tree is not None:
        tree = CompositionTree(op, a.tree, b.tree, mu)
    out = StepSchedule(steps, _RESULT_CLASS[op], rate, tree)
    validate_schedule(out, identity_tol)
    return out


_REVERSED_CLASS = {CompClass.F: CompClass.G, CompClass.G: CompClass.F, CompClass.S: CompClass.S}
_REVERSED_OP = {JoinOp.FJOIN: JoinOp.GJOIN, JoinOp.GJOIN: JoinOp.FJOIN, JoinOp.SJOIN: JoinOp.SJOIN}


def _mirror_tree(tree: CompositionTree) -> CompositionTree:
    out: dict[int, CompositionTree] = {}
    stack = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in out:
            continue
        if node.is_leaf:
            out[id(node)] = LEAF
        elif not expanded:
            stack.append((node, True))
            stack.append((node.left, False))
            stack.append((node.right, False))
        else:
            out[id(node)] = CompositionTree(
                _REVERSED_OP[node.op], out[id(node.right)], out[id(node.left)], node.mu
            )
    return out[id(tree)]


def reverse(h: StepSchedule) -> StepSchedule:
    """Reversal duality: flip the steps, swap F and G, keep the rate.

    Only proven for join-built schedules, so a construction tree is
    required.  The tree is mirrored with ``|>`` and ``<|`` exchanged.
    """
    if h.tree is None:
        raise UncertifiedScheduleError(
            "reversal is certified only for schedules with a construction tree"
        )
    return StepSchedule(
        h.steps[::-1].copy(), _REVERSED_CLASS[h.comp_class], h.rate, _mirror_tree(h.tree)
    )


def fg_rates_from_s(h: StepSchedule):
    """Objective-gap and gradient-norm rates implied by an S-class schedule.

    Both equal ``1/(1 + 2*sum h) = 1/(2/eta - 1)``.
    """
    if h.comp_class is not CompClass.S:
        raise ClassMismatchError(f"expected an s-class schedule, got {h.comp_class.value}")
    r = 1.0 / (2.0 / h.rate - 1.0)
    return r, r


def materialize(tree: CompositionTree, comp_class: CompClass, identity_tol: float = DEFAULT_IDENTITY_TOL) -> StepSchedule:
    """Evaluate a construction tree bottom-up into a schedule of the given class.

    Shared subtrees are evaluated once.  Raises ``ClassMismatchError`` if the
    tree cannot produce the requested class.
    """
    if comp_class not in admissible_classes(tree):
        raise ClassMismatchError(
            f"tree does not admit class {comp_class.value} "
            f"(admits {{{', '.join(sorted(c.value for c in admissible_classes(tree)))}}})"
        )
    memo: dict[tuple[int, CompClass], StepSchedule] = {}
    stack = [(tree, comp_class, False)]
    while stack:
        node, cls, expanded = stack.pop()
        key = (id(node), cls)
        if key in memo:
            continue
        if node.is_leaf:
            memo[key] = empty_schedule(cls)
            continue
        lcls, rcls = _OPERAND_CLASSES[node.op]
        if not expanded:
            stack.append((node, cls, True))
            stack.append((node.left, lcls, False))
            stack.append((node.right, rcls, False))
        else:
            memo[key] = join(
                node.op, memo[(id(node.left), lcls)], memo[(id(node.right), rcls)], identity_tol
            )
    return memo[(id(tree), comp_class)]
