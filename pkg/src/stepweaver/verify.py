"""Numerical verification of certified rates.

Every class has a trace-level certificate inequality that is nonnegative on
any genuine 1-smooth convex run and zero on the class's tight instances:

* F: a weighted aggregation of per-point inequalities with weights ``v``
  built recursively from the construction tree (sum v = 1/eta);
* G: ``eta*(f_0 - f_n) - (1-eta)/2 * ||g_n||^2 >= 0``;
* S: ``sum h_i*(2(f_i - f_n) + ||g_i||^2 + 2<g_i, x_0 - x_i>)
        - ||x_n - x_0||^2 - (1-eta)/eta^2 * ||g_n||^2 >= 0``.

S-class schedules additionally certify objective-gap and gradient-norm
bounds with explicit residual terms that vanish on their tight instances.
All slacks are compared against tolerances scaled by max(1, ||x0||^2, f_0)
so mixed-scale random instances are judged fairly.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .gd import (
    GDTrace,
    huber_instance,
    random_instance,
    random_x0,
    raw_run,
    run,
    tight_delta,
    tight_instance,
)
from .io import RunConfig
from .schedule import (
    ClassMismatchError,
    CompClass,
    CompositionTree,
    IdentityError,
    JoinOp,
    ScheduleError,
    StepSchedule,
    closed_form_rates,
    join_rate,
    materialize,
    middle_step,
    reverse,
    validate_schedule,
)

BATTERY_DIMS = (1, 2, 4, 8)


@dataclass(frozen=True)
class CertificateV:
    """Nonnegative aggregation weights for the F-class certificate."""

    weights: np.ndarray
    eta: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if np.any(w < 0.0):
            raise IdentityError("certificate weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0 / self.eta) > 1e-10 / self.eta:
            raise IdentityError(
                f"certificate weights sum to {total!r}, expected 1/eta = {1.0 / self.eta!r}"
            )


def build_f_certificate(tree: CompositionTree) -> CertificateV:
    """Construct the certificate weights for an F-class construction tree.

    Walking the F-spine bottom-up: a leaf carries ``v = [1]``; joining an
    S-schedule ``a`` (rate alpha) onto a certificate ``w`` (rate beta) gives
    ``v = [a, 1 + 1/alpha, sqrt(beta/eta) * w]`` at the joined rate eta.
    The scaling factor is checked against its two algebraically equal forms
    ``beta/eta - 2*beta/alpha`` and ``alpha*beta*(mu-1)/eta``.
    """
    chain = []
    node = tree
    while not node.is_leaf:
        if node.op is not JoinOp.FJOIN:
            raise ClassMismatchError(
                f"tree rooted at {node.op.symbol if node.op else 'leaf'} is not an f-class construction"
            )
        chain.append(node)
        node = node.right
    v = np.array([1.0])
    eta = 1.0
    for nd in reversed(chain):
        a = materialize(nd.left, CompClass.S)
        beta = eta
        eta = join_rate(JoinOp.FJOIN, a.rate, beta)
        scale = np.sqrt(beta / eta)
        alt1 = beta / eta - 2.0 * beta / a.rate
        mu = middle_step(JoinOp.FJOIN, a.rate, beta)
        alt2 = a.rate * beta * (mu - 1.0) / eta
        for alt in (alt1, alt2):
            if abs(scale - alt) > 1e-12 * scale:
                raise IdentityError(
                    f"certificate scaling identity violated: sqrt(beta/eta)={scale!r} vs {alt!r}"
                )
        v = np.concatenate([a.steps, [1.0 + 1.0 / a.rate], scale * v])
    return CertificateV(v, eta)


# ---------------------------------------------------------------------------
# Slack evaluations.  The raw forms accept batched arrays: X, G of shape
# (N, ..., d) and F of shape (N, ...); slacks come back with the batch shape.
# ---------------------------------------------------------------------------


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _f_cert_slack_raw(v, X, G, F):
    terms = 2.0 * (F - F[-1]) + _dot(G, G) + 2.0 * _dot(G, X[0] - X)
    weighted = np.tensordot(v, terms, axes=(0, 0))
    combo = np.tensordot(v, G, axes=(0, 0))
    return weighted - _dot(combo, combo)


def _f_direct_slack_raw(eta, X, G, F):
    return eta * 0.5 * _dot(X[0], X[0]) - (F[-1] - 0.0)


def _g_slack_raw(eta, X, G, F):
    return eta * (F[0] - F[-1]) - 0.5 * (1.0 - eta) * _dot(G[-1], G[-1])


def _s_slack_raw(steps, eta, X, G, F):
    terms = 2.0 * (F[:-1] - F[-1]) + _dot(G[:-1], G[:-1]) + 2.0 * _dot(G[:-1], X[0] - X[:-1])
    weighted = np.tensordot(steps, terms, axes=(0, 0))
    diff = X[-1] - X[0]
    return weighted - _dot(diff, diff) - (1.0 - eta) / (eta * eta) * _dot(G[-1], G[-1])


def _s_fg_slacks_raw(steps, eta, X, G, F):
    r = 1.0 / (2.0 / eta - 1.0)
    res_f = X[-1] - G[-1] / eta  # x* = 0
    f_resid = 0.5 * _dot(res_f, res_f)
    f_slack = r * (0.5 * _dot(X[0], X[0]) - f_resid) - F[-1]
    hg = np.tensordot(steps, G[:-1], axes=(0, 0))
    res_g = G[0] - eta * hg - eta * G[-1]
    g_resid = 0.5 * _dot(res_g, res_g)
    g_slack = r * (F[0] - g_resid) - 0.5 * _dot(G[-1], G[-1])
    return f_slack, g_slack, f_resid, g_resid


def _q_min_batched(X, G, F, max_elems: int = 2**23):
    """Chunked wrapper over :func:`_q_min_raw`: bounds the (B, N, N) buffers."""
    n_points = X.shape[0] + 1  # star row appended inside
    chunk = max(1, max_elems // (n_points * n_points))
    batch = X.shape[1]
    return np.concatenate(
        [
            np.atleast_1d(_q_min_raw(X[:, i : i + chunk], G[:, i : i + chunk], F[:, i : i + chunk]))
            for i in range(0, batch, chunk)
        ]
    )


def _q_min_raw(X, G, F, include_star: bool = True):
    """Minimum over all ordered pairs of the smooth-convex interpolation
    quantity Q_ij = 2f_i - 2f_j - 2<g_j, x_i - x_j> - ||g_i - g_j||^2."""
    if include_star:
        X = np.concatenate([X, np.zeros_like(X[:1])])
        G = np.concatenate([G, np.zeros_like(G[:1])])
        F = np.concatenate([F, np.zeros_like(F[:1])])
    # batch axes to the front: (N, B, d) -> (B, N, d); add B=1 if unbatched
    squeeze = X.ndim == 2
    if squeeze:
        X, G, F = X[:, None, :], G[:, None, :], F[:, None]
    Xb = np.moveaxis(X, 0, 1)
    Gb = np.moveaxis(G, 0, 1)
    Fb = np.moveaxis(F, 0, 1)
    gx = np.einsum("bjd,bid->bij", Gb, Xb)  # gx[b,i,j] = <g_j, x_i>
    gxd = np.einsum("bjd,bjd->bj", Gb, Xb)  # <g_j, x_j>
    gg = np.einsum("bid,bjd->bij", Gb, Gb)
    gsq = np.einsum("bid,bid->bi", Gb, Gb)
    Q = (
        2.0 * (Fb[:, :, None] - Fb[:, None, :])
        - 2.0 * (gx - gxd[:, None, :])
        - (gsq[:, :, None] + gsq[:, None, :] - 2.0 * gg)
    )
    return Q.min(axis=(1, 2)) if not squeeze else float(Q.min())


def check_f_certificate(cert: CertificateV, trace: GDTrace) -> float:
    """Certificate slack for one trace; nonnegative for genuine instances."""
    if cert.weights.size != trace.n + 1:
        raise ScheduleError(
            f"certificate has {cert.weights.size} weights, trace has {trace.n + 1} points"
        )
    return float(_f_cert_slack_raw(cert.weights, trace.x, trace.g, trace.f))


def check_g_inequality(trace: GDTrace, eta: float) -> float:
    return float(_g_slack_raw(eta, trace.x, trace.g, trace.f))


def check_s_inequality(schedule: StepSchedule, trace: GDTrace, eta: float) -> float:
    if schedule.n != trace.n:
        raise ScheduleError(f"schedule has {schedule.n} steps, trace has {trace.n}")
    return float(_s_slack_raw(schedule.steps, eta, trace.x, trace.g, trace.f))


def check_s_implies_fg(schedule: StepSchedule, trace: GDTrace):
    """Slacks of the objective-gap and gradient-norm bounds implied by class S."""
    if schedule.comp_class is not CompClass.S:
        raise ClassMismatchError(f"expected class s, got {schedule.comp_class.value}")
    if schedule.n != trace.n:
        raise ScheduleError(f"schedule has {schedule.n} steps, trace has {trace.n}")
    f_slack, g_slack, _, _ = _s_fg_slacks_raw(
        schedule.steps, schedule.rate, trace.x, trace.g, trace.f
    )
    return float(f_slack), float(g_slack)


def fg_residuals(schedule: StepSchedule, trace: GDTrace):
    """Residual halves-of-squared-norms in the implied F/G bounds; both vanish
    on the respective tight instances."""
    _, _, f_resid, g_resid = _s_fg_slacks_raw(
        schedule.steps, schedule.rate, trace.x, trace.g, trace.f
    )
    return float(f_resid), float(g_resid)


def defining_slack(schedule: StepSchedule, trace: GDTrace) -> float:
    """Right-minus-left of the class's defining inequality on a trace."""
    eta = schedule.rate
    X, G, F = trace.x, trace.g, trace.f
    if schedule.comp_class is CompClass.F:
        return float(eta * 0.5 * _dot(X[0], X[0]) - (F[-1] - 0.0))
    if schedule.comp_class is CompClass.G:
        return float(eta * (F[0] - 0.0) - 0.5 * _dot(G[-1], G[-1]))
    lhs = (
        0.5 * (1.0 - eta) * _dot(G[-1], G[-1])
        + 0.5 * eta * eta * _dot(X[-1], X[-1])
        + (eta - eta * eta) * (F[-1] - 0.0)
    )
    return float(0.5 * eta * eta * _dot(X[0], X[0]) - lhs)


# ---------------------------------------------------------------------------
# Composite verification.
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    slack: float
    tolerance: float
    instance: str


@dataclass
class VerificationReport:
    schedule: str
    comp_class: str
    n: int
    rate: float
    conjectured: bool
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def certified(self) -> bool:
        return self.passed and not self.conjectured

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["certified"] = self.certified
        return d

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def summary(self) -> str:
        lines = [
            f"schedule: {self.schedule}",
            f"result: {'PASS' if self.passed else 'FAIL'}"
            + (" (conjectured: inequality checks only)" if self.conjectured else ""),
        ]
        for c in self.checks:
            lines.append(
                f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: slack={c.slack:.3e} "
                f"tol={c.tolerance:.1e} ({c.instance})"
            )
        return "\n".join(lines)


def battery_instances(config: RunConfig):
    """The deterministic random battery as ``(index, instance, x0)`` triples.

    Instances cycle through dimensions 1, 2, 4, 8 and are drawn from numpy's
    default PCG64 generator seeded with ``config.seed``, so any battery index
    named in a report is reproducible with the same config.
    """
    rng = np.random.default_rng(config.seed)
    out = []
    for i in range(config.battery):
        d = BATTERY_DIMS[i % len(BATTERY_DIMS)]
        inst = random_instance(rng, d)
        out.append((i, inst, random_x0(rng, d)))
    return out


def battery_instance(config: RunConfig, index: int):
    """Replay helper: the single battery instance a report witness names."""
    if not 0 <= index < config.battery:
        raise ScheduleError(f"battery index {index} outside [0, {config.battery})")
    return battery_instances(config)[index][1:]


def _battery(config: RunConfig):
    """Battery grouped by dimension as stacked (B, d) arrays for batched runs."""
    groups: dict[int, list] = {}
    for i, inst, x0 in battery_instances(config):
        groups.setdefault(inst.dim, []).append((i, inst.is_huber, inst.param, x0))
    for d, items in groups.items():
        idx = np.array([it[0] for it in items])
        is_huber = np.stack([it[1] for it in items])
        param = np.stack([it[2] for it in items])
        x0 = np.stack([it[3] for it in items])
        yield d, idx, is_huber, param, x0


def _scales(x0, f0):
    return np.maximum(1.0, np.maximum(_dot(x0, x0), f0))


def _min_with_witness(slacks, scales, idx, d):
    rel = slacks / scales
    j = int(np.argmin(rel))
    return float(rel[j]), f"battery instance #{int(idx[j])} (d={d})"


def verify_schedule(schedule: StepSchedule, config: "RunConfig | None" = None) -> VerificationReport:
    """Run every class-appropriate check; failures become report entries.

    A certified PASS needs the closed-form identities, tightness on the
    class's extremal instances, the certificate inequality across the random
    battery, interpolation nonnegativity on every trace, and (for join-built
    schedules) the reversal duality.
    """
    config = config or RunConfig()
    report = VerificationReport(
        schedule=schedule.describe(),
        comp_class=schedule.comp_class.value,
        n=schedule.n,
        rate=schedule.rate,
        conjectured=schedule.conjectured,
    )
    checks = report.checks
    eta = schedule.rate

    # identities
    try:
        validate_schedule(schedule, config.identity_tol)
        denom_form, prod_form = closed_form_rates(schedule.steps, schedule.comp_class)
        dev = max(abs(eta - denom_form), abs(eta - prod_form)) / eta
        checks.append(CheckResult("identity", True, dev, config.identity_tol, "closed forms"))
    except IdentityError as err:
        checks.append(CheckResult("identity", False, float("nan"), config.identity_tol, str(err)))

    # tightness on the extremal pair
    pair = tight_instance(schedule.comp_class, "defining", eta)
    for inst, label in ((pair.quad, "tight quadratic"), (pair.huber, "tight " + pair.huber.describe())):
        tr = run(schedule, inst, np.ones(1))
        slack = defining_slack(schedule, tr)
        checks.append(
            CheckResult(f"tightness/{label}", abs(slack) <= config.tight_tol, slack, config.tight_tol, label)
        )
    if schedule.comp_class is CompClass.S:
        for purpose in ("f-line", "g-line"):
            delta = tight_delta(CompClass.S, purpose, eta)
            tr = run(schedule, huber_instance(delta), np.ones(1))
            f_slack, g_slack = check_s_implies_fg(schedule, tr)
            f_resid, g_resid = fg_residuals(schedule, tr)
            slack, resid = (f_slack, f_resid) if purpose == "f-line" else (g_slack, g_resid)
            label = f"huber delta={delta:.12g}"
            checks.append(
                CheckResult(
                    f"tightness/implied-{purpose}",
                    abs(slack) <= config.tight_tol and abs(resid) <= config.tight_tol,
                    slack,
                    config.tight_tol,
                    f"{label}, residual={resid:.3e}",
                )
            )

    # certificate battery + interpolation on random separable instances
    cert = None
    if schedule.comp_class is CompClass.F and schedule.tree is not None:
        cert = build_f_certificate(schedule.tree)
    worst: dict[str, tuple] = {}
    q_worst = (np.inf, "")
    for d, idx, is_huber, param, x0 in _battery(config):
        X, G, F = raw_run(schedule.steps, is_huber, param, x0)
        scales = _scales(x0, F[0])
        if schedule.comp_class is CompClass.F:
            if cert is not None:
                slacks = _f_cert_slack_raw(cert.weights, X, G, F)
                key = "certificate"
            else:
                slacks = _f_direct_slack_raw(eta, X, G, F)
                key = "gap-inequality"
            entries = {key: slacks}
        elif schedule.comp_class is CompClass.G:
            entries = {"gradient-inequality": _g_slack_raw(eta, X, G, F)}
        else:
            f_slack, g_slack, _, _ = _s_fg_slacks_raw(schedule.steps, eta, X, G, F)
            entries = {
                "mixed-inequality": _s_slack_raw(schedule.steps, eta, X, G, F),
                "implied-gap": f_slack,
                "implied-gradient": g_slack,
            }
        for key, slacks in entries.items():
            rel, witness = _min_with_witness(slacks, scales, idx, d)
            if key not in worst or rel < worst[key][0]:
                worst[key] = (rel, witness)
        qm = _q_min_batched(X, G, F)
        j = int(np.argmin(qm))
        if qm[j] < q_worst[0]:
            q_worst = (float(qm[j]), f"battery instance #{int(idx[j])} (d={d})")
    for key, (rel, witness) in sorted(worst.items()):
        checks.append(
            CheckResult(
                f"battery/{key}",
                rel >= -config.slack_tol,
                rel,
                config.slack_tol,
                f"{config.battery} instances, seed {config.seed:#x}; min at {witness}",
            )
        )
    checks.append(
        CheckResult(
            "interpolation",
            q_worst[0] >= -config.q_tol,
            q_worst[0],
            config.q_tol,
            f"min Q over all pairs; at {q_worst[1]}",
        )
    )

    # reversal duality for join-built schedules: the reversed schedule keeps
    # the rate, satisfies the swapped class's identities, and meets its own
    # tight pair at equality
    if schedule.tree is not None:
        rev = reverse(schedule)
        ok = rev.rate == schedule.rate
        slack = rev.rate - schedule.rate
        try:
            validate_schedule(rev, config.identity_tol)
            rpair = tight_instance(rev.comp_class, "defining", rev.rate)
            for inst in rpair:
                tr = run(rev, inst, np.ones(1))
                rslack = defining_slack(rev, tr)
                if abs(rslack) > config.tight_tol:
                    ok = False
                    slack = rslack
        except IdentityError:
            ok = False
        checks.append(
            CheckResult(
                "reversal-duality",
                ok,
                slack,
                config.tight_tol,
                f"reverse is class {rev.comp_class.value} at the same rate and stays tight",
            )
        )

    checks.sort(key=lambda c: c.name)
    return report
