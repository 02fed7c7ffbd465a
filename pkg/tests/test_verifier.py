import json
import math

import numpy as np
import pytest

from stepweaver.builders import constant_optimal, dynamic_short, silver
from stepweaver.gd import huber_instance, quad_instance, random_instance, random_x0, run
from stepweaver.io import RunConfig
from stepweaver.optimizer import obs_f, obs_g, obs_s
from stepweaver.schedule import (
    ClassMismatchError,
    CompClass,
    IdentityError,
    JoinOp,
    StepSchedule,
    empty_schedule,
    join,
    join_rate,
    materialize,
    middle_step,
    reverse,
)
from stepweaver.verify import (
    CertificateV,
    build_f_certificate,
    check_f_certificate,
    check_g_inequality,
    check_s_implies_fg,
    check_s_inequality,
    defining_slack,
    fg_residuals,
    verify_schedule,
    _q_min_raw,
)

SQ2 = math.sqrt(2.0)


def one_step_f():
    return join(JoinOp.FJOIN, empty_schedule(CompClass.S), empty_schedule(CompClass.F))


def one_step_g():
    return join(JoinOp.GJOIN, empty_schedule(CompClass.G), empty_schedule(CompClass.S))


class TestCertificateConstruction:
    def test_leaf(self):
        cert = build_f_certificate(empty_schedule(CompClass.F).tree)
        assert np.array_equal(cert.weights, [1.0])
        assert cert.eta == 1.0

    def test_single_join(self):
        cert = build_f_certificate(one_step_f().tree)
        assert np.allclose(cert.weights, [2.0, 2.0], rtol=1e-15)
        assert cert.weights.sum() == pytest.approx(4.0, rel=1e-14)

    def test_three_step_weights_sum(self):
        h = obs_f(3)
        cert = build_f_certificate(h.tree)
        assert cert.weights.sum() == pytest.approx(6.0 + 4.0 * SQ2, abs=1e-10)

    @pytest.mark.parametrize("n", [1, 2, 5, 10, 32, 64])
    def test_weights_sum_is_reciprocal_rate(self, n):
        h = obs_f(n)
        cert = build_f_certificate(h.tree)
        assert cert.weights.sum() == pytest.approx(1.0 / h.rate, rel=1e-10)
        assert np.all(cert.weights >= 0.0)
        assert cert.eta == pytest.approx(h.rate, rel=1e-14)

    def test_scaling_identity_at_every_join(self):
        # sqrt(beta/eta) = beta/eta - 2 beta/alpha = alpha*beta*(mu-1)/eta
        for h in (obs_f(7), obs_f(20), one_step_f()):
            node = h.tree
            while not node.is_leaf:
                a = materialize(node.left, CompClass.S)
                beta_tree = node.right
                beta = materialize(beta_tree, CompClass.F).rate
                eta = join_rate(JoinOp.FJOIN, a.rate, beta)
                mu = middle_step(JoinOp.FJOIN, a.rate, beta)
                scale = math.sqrt(beta / eta)
                assert scale == pytest.approx(beta / eta - 2.0 * beta / a.rate, rel=1e-12)
                assert scale == pytest.approx(a.rate * beta * (mu - 1.0) / eta, rel=1e-12)
                node = node.right

    def test_rejects_non_f_trees(self):
        with pytest.raises(ClassMismatchError):
            build_f_certificate(silver(2).tree)


class TestInequalities:
    def test_f_certificate_zero_on_single_point(self):
        cert = CertificateV(np.array([1.0]), 1.0)
        tr = run(empty_schedule(CompClass.F), quad_instance(1.0), 3.0)
        assert check_f_certificate(cert, tr) == 0.0

    def test_f_certificate_tight_on_extremal_pair(self):
        h = obs_f(5)
        cert = build_f_certificate(h.tree)
        for inst in (quad_instance(1.0), huber_instance(h.rate)):
            tr = run(h, inst, 1.0)
            assert abs(check_f_certificate(cert, tr)) < 1e-12

    def test_f_certificate_nonnegative_on_battery(self):
        h = obs_f(5)
        cert = build_f_certificate(h.tree)
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(500):
            d = int(rng.integers(1, 9))
            inst = random_instance(rng, d)
            x0 = random_x0(rng, d)
            tr = run(h, inst, x0)
            scale = max(1.0, float(x0 @ x0), float(tr.f[0]))
            worst = min(worst, check_f_certificate(cert, tr) / scale)
        assert worst >= -1e-8

    def test_length_mismatch(self):
        cert = build_f_certificate(obs_f(3).tree)
        tr = run(obs_f(4), quad_instance(1.0), 1.0)
        with pytest.raises(Exception, match="weights"):
            check_f_certificate(cert, tr)

    def test_g_inequality_tight_and_random(self):
        h = one_step_g()
        tr = run(h, huber_instance(0.4), 1.0)
        assert abs(check_g_inequality(tr, h.rate)) < 1e-10
        rng = np.random.default_rng(9)
        for _ in range(100):
            inst = random_instance(rng, 4)
            tr = run(h, inst, rng.standard_normal(4))
            assert check_g_inequality(tr, h.rate) >= -1e-10

    def test_s_inequality_tight_on_quadratic(self):
        h = silver(2)
        tr = run(h, quad_instance(1.0), 1.0)
        assert abs(check_s_inequality(h, tr, h.rate)) < 1e-12

    def test_s_inequality_random_battery(self):
        h = silver(2)
        rng = np.random.default_rng(17)
        for _ in range(200):
            d = int(rng.integers(1, 9))
            inst = random_instance(rng, d)
            tr = run(h, inst, random_x0(rng, d))
            scale = max(1.0, float(tr.x[0] @ tr.x[0]), float(tr.f[0]))
            assert check_s_inequality(h, tr, h.rate) >= -1e-8 * scale

    def test_implied_bounds_tight_cases(self):
        h = silver(3)
        eta = h.rate
        tr = run(h, huber_instance(eta / (2.0 - eta)), 1.0)
        f_slack, _ = check_s_implies_fg(h, tr)
        f_resid, _ = fg_residuals(h, tr)
        assert abs(f_slack) < 1e-12 and abs(f_resid) < 1e-9

        tr = run(h, huber_instance(eta), 1.0)
        _, g_slack = check_s_implies_fg(h, tr)
        _, g_resid = fg_residuals(h, tr)
        assert abs(g_slack) < 1e-12 and abs(g_resid) < 1e-9
        # on that instance the usable budget is the full initial gap
        r = 1.0 / (2.0 / eta - 1.0)
        assert 0.5 * float(tr.g[-1] @ tr.g[-1]) == pytest.approx(r * tr.f[0], rel=1e-12)

    def test_implied_bounds_random(self):
        h = obs_s(7)
        rng = np.random.default_rng(23)
        for _ in range(200):
            d = int(rng.integers(1, 9))
            inst = random_instance(rng, d)
            tr = run(h, inst, random_x0(rng, d))
            scale = max(1.0, float(tr.x[0] @ tr.x[0]), float(tr.f[0]))
            f_slack, g_slack = check_s_implies_fg(h, tr)
            assert f_slack >= -1e-8 * scale
            assert g_slack >= -1e-8 * scale

    def test_class_guards(self):
        h = obs_f(2)
        tr = run(h, quad_instance(1.0), 1.0)
        with pytest.raises(ClassMismatchError):
            check_s_implies_fg(h, tr)


class TestVerifySchedule:
    def test_pass_for_certified_families(self):
        cfg = RunConfig(battery=60)
        for h in (obs_f(10), obs_g(6), obs_s(9), silver(4), dynamic_short(12)):
            report = verify_schedule(h, cfg)
            assert report.passed, report.summary()
            assert report.certified

    def test_conjectured_report(self):
        report = verify_schedule(constant_optimal(CompClass.S, 5), RunConfig(battery=40))
        assert report.conjectured
        assert report.passed
        assert not report.certified
        assert not any("certificate" in c.name for c in report.checks)

    def test_report_serializes(self):
        report = verify_schedule(obs_f(3), RunConfig(battery=20))
        doc = json.loads(report.to_json())
        assert doc["certified"] is True
        assert {c["name"] for c in doc["checks"]} >= {"identity", "interpolation"}

    def test_checks_sorted_by_name(self):
        report = verify_schedule(obs_s(4), RunConfig(battery=20))
        names = [c.name for c in report.checks]
        assert names == sorted(names)

    def test_failed_check_carries_witness(self):
        bad = StepSchedule(np.array([1.9, 1.9, 1.9]), CompClass.F, 1.0 / (1.0 + 2.0 * 5.7))
        report = verify_schedule(bad, RunConfig(battery=20))
        assert not report.passed
        failing = [c for c in report.checks if not c.passed]
        assert failing
        assert all(c.instance for c in failing)

    def test_battery_witness_is_replayable(self):
        import re

        from stepweaver.verify import battery_instance

        # the bogus gradient schedule from the falsifiability family
        b = 1.07
        for _ in range(60):
            b = 1.0 + 1.0 / (4.0 * math.sqrt(11.0 + 2.0 * b))
        bogus = StepSchedule(np.array([5.0, b]), CompClass.G, 1.0 / (1.0 + 2.0 * (5.0 + b)))
        cfg = RunConfig(battery=40)
        report = verify_schedule(bogus, cfg)
        check = next(c for c in report.checks if c.name == "battery/gradient-inequality")
        assert not check.passed
        index = int(re.search(r"instance #(\d+)", check.instance).group(1))
        inst, x0 = battery_instance(cfg, index)
        tr = run(bogus, inst, x0)
        scale = max(1.0, float(x0 @ x0), float(tr.f[0]))
        assert check_g_inequality(tr, bogus.rate) / scale == pytest.approx(check.slack, rel=1e-12)


class TestFalsifiability:
    """Each verification check must reject a crafted negative case."""

    def test_identity_check_rejects_corrupted_rate(self):
        bad = StepSchedule(np.array([1.9, 1.9, 1.9]), CompClass.F, 1.0 / (1.0 + 2.0 * 5.7))
        report = verify_schedule(bad, RunConfig(battery=20))
        assert any(c.name == "identity" and not c.passed for c in report.checks)

    def test_corrupted_rate_with_tree_fires_identity_tightness_and_reversal(self):
        s2 = silver(2)
        bad = StepSchedule(s2.steps, CompClass.S, s2.rate * 1.01, s2.tree)
        report = verify_schedule(bad, RunConfig(battery=20))
        failed = {c.name for c in report.checks if not c.passed}
        assert "identity" in failed
        assert "reversal-duality" in failed
        assert any(name.startswith("tightness/") for name in failed)

    def test_typecheck_rejects_mistyped_tree(self):
        from stepweaver.dsl import DslTypeError, parse, typecheck

        with pytest.raises(DslTypeError):
            typecheck(parse("((e |> e) >< e)"))

    def test_corrupted_certificate_detected_on_quadratic(self):
        h = one_step_f()
        cert = build_f_certificate(h.tree)
        corrupted = cert.weights.copy()
        corrupted[0] *= 0.5
        bad = CertificateV.__new__(CertificateV)
        object.__setattr__(bad, "weights", corrupted)
        object.__setattr__(bad, "eta", cert.eta)
        tr = run(h, quad_instance(1.0), 1.0)
        assert check_f_certificate(bad, tr) < -1e-3

    def test_overclaimed_g_rate_detected(self):
        h = one_step_g()
        claimed = 0.15  # true rate is 1/4
        tr = run(h, huber_instance(2.0 * h.rate / (1.0 + h.rate)), 1.0)
        assert check_g_inequality(tr, claimed) < -1e-3

    def test_overclaimed_s_rate_detected(self):
        h = silver(2)
        tr = run(h, quad_instance(1.0), 1.0)
        assert check_s_inequality(h, tr, h.rate * 0.8) < -1e-6

    def test_tightness_detects_wrong_rate(self):
        wrong = StepSchedule(silver(2).steps, CompClass.S, silver(2).rate, silver(2).tree)
        tr = run(wrong, quad_instance(1.0), 1.0)
        doctored = StepSchedule(
            np.concatenate([silver(2).steps[:-1], [silver(2).steps[-1] * 1.01]]),
            CompClass.S,
            silver(2).rate,
            None,
        )
        tr2 = run(doctored, quad_instance(1.0), 1.0)
        assert abs(defining_slack(doctored, tr2)) > 1e-6
        assert abs(defining_slack(wrong, tr)) < 1e-12

    def test_interpolation_detects_nonconvex_trace(self):
        # two points sampled from -x^2/2: violates the inequality
        X = np.array([[0.0], [1.0]])
        G = np.array([[0.0], [-1.0]])
        F = np.array([0.0, -0.5])
        assert _q_min_raw(X, G, F, include_star=False) < -1e-9

    def test_certificate_weight_sum_guard(self):
        with pytest.raises(IdentityError):
            CertificateV(np.array([1.0, 1.0]), 0.25)
        with pytest.raises(IdentityError):
            CertificateV(np.array([5.0, -1.0]), 0.25)


class TestHDualityBattery:
    @pytest.mark.parametrize("n", [1, 4, 9, 16])
    def test_reverse_passes_gradient_battery(self, n):
        f = obs_f(n)
        g = reverse(f)
        assert g.rate == f.rate
        rng = np.random.default_rng(31)
        for _ in range(100):
            d = int(rng.integers(1, 9))
            inst = random_instance(rng, d)
            tr = run(g, inst, random_x0(rng, d))
            scale = max(1.0, float(tr.x[0] @ tr.x[0]), float(tr.f[0]))
            assert check_g_inequality(tr, g.rate) >= -1e-8 * scale
