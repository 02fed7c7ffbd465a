import math

import numpy as np
import pytest

from stepweaver.builders import silver
from stepweaver.optimizer import (
    AsymptoticConstants,
    P_EXPONENT,
    RateTables,
    asymptotic_constants,
    build_tables,
    c_low,
    enumerate_basic,
    load_or_build,
    load_tables,
    obs_f,
    obs_g,
    obs_s,
    r_constant,
    save_tables,
)
from stepweaver.schedule import (
    CompClass,
    ResourceCapError,
    ScheduleError,
    reverse,
)

SQ2 = math.sqrt(2.0)
PHI = 1.0 + SQ2


@pytest.fixture(scope="module")
def tables():
    return build_tables(512)


class TestBuildTables:
    def test_base_rows(self, tables):
        assert tables.s_rate[1] == 1.0
        assert tables.f_rate[1] == 1.0
        assert tables.s_rate[2] == pytest.approx(SQ2 - 1.0, rel=1e-15)
        assert tables.f_rate[2] == 0.25

    def test_small_f_rows(self, tables):
        assert tables.f_rate[3] == pytest.approx(0.13189, abs=1e-5)
        assert tables.f_rate[4] == pytest.approx(0.08579, abs=1e-5)
        assert tables.f_rate[5] == pytest.approx(0.06234, abs=1e-5)

    def test_strictly_decreasing(self, tables):
        assert np.all(np.diff(tables.s_rate[1:]) < 0.0)
        assert np.all(np.diff(tables.f_rate[1:]) < 0.0)

    def test_silver_rows_exact_powers(self, tables):
        for k in range(0, 10):
            assert tables.s_rate[2**k] * PHI**k == pytest.approx(1.0, rel=1e-12)

    def test_s_split_symmetry_tiebreak_smallest(self, tables):
        # the balanced row has a symmetric optimum; the recorded split is the
        # smallest minimizer, never past the middle
        for n in range(2, 100):
            assert 1 <= tables.s_split[n] <= n // 2

    def test_dominates_published_reconstructions(self, tables):
        # rates of the bnb-matching constructions of lengths 1..10; the DP
        # optimum must be at least as good everywhere (strictly better at
        # lengths 6, 8, 9)
        published = [0.25, 0.13189, 0.08579, 0.06234, 0.04814, 0.04020, 0.03266, 0.02811, 0.02456, 0.02124]
        for n, rate in enumerate(published, start=1):
            assert tables.f_rate[n + 1] <= rate + 1e-4
        for n in (1, 2, 3, 4, 5, 7, 10):
            assert tables.f_rate[n + 1] == pytest.approx(published[n - 1], abs=1e-4)
        for n in (6, 8, 9):
            assert tables.f_rate[n + 1] < published[n - 1] - 1e-4

    def test_doubling_cross_check_flag(self):
        build_tables(64, cross_check_doubling=True)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ScheduleError):
            build_tables(0)
        with pytest.raises(ResourceCapError):
            build_tables(10**6)


class TestReconstruction:
    def test_obs_s_three(self, tables):
        h = obs_s(3, tables)
        assert np.allclose(h.steps, [SQ2, 2.0, SQ2], rtol=1e-15)

    def test_obs_f_three(self, tables):
        h = obs_f(3, tables)
        assert np.allclose(h.steps, [SQ2, 1.0 + SQ2, 1.5], rtol=1e-15)

    def test_obs_g_three(self, tables):
        h = obs_g(3, tables)
        assert np.allclose(h.steps, [1.5, 1.0 + SQ2, SQ2], rtol=1e-15)
        assert h.rate == pytest.approx(1.0 / (6.0 + 4.0 * SQ2), rel=1e-14)

    @pytest.mark.parametrize("n", [0, 1, 2, 5, 17, 64, 200])
    def test_rate_matches_table_exactly(self, tables, n):
        assert obs_s(n, tables).rate == tables.s_rate[n + 1]
        assert obs_f(n, tables).rate == tables.f_rate[n + 1]

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6, 7, 8])
    def test_powers_of_two_reproduce_silver_bitwise(self, tables, k):
        assert np.array_equal(obs_s(2**k - 1, tables).steps, silver(k).steps)

    def test_obs_g_is_reverse_of_obs_f(self, tables):
        for n in (1, 5, 33):
            f = obs_f(n, tables)
            g = obs_g(n, tables)
            assert np.array_equal(g.steps, reverse(f).steps)
            assert g.rate == f.rate

    def test_trees_attached(self, tables):
        assert obs_f(9, tables).tree is not None
        assert obs_f(9, tables).tree.length() == 9

    def test_beyond_table_rejected(self, tables):
        with pytest.raises(ScheduleError):
            obs_s(512, tables)


class TestEnumeration:
    def test_length_one(self):
        for cls in CompClass:
            best, rates = enumerate_basic(1, cls)
            assert len(rates) == 1
            expected = SQ2 - 1.0 if cls is CompClass.S else 0.25
            assert best.rate == pytest.approx(expected, rel=1e-14)

    def test_s_three_steps(self):
        best, rates = enumerate_basic(3, CompClass.S)
        assert len(rates) == 5
        assert rates[0] == pytest.approx(1.0 / (3.0 + 2.0 * SQ2), rel=1e-13)
        assert np.allclose(rates[1:], [0.17489] * 4, atol=1e-5)

    def test_f_three_steps(self):
        best, rates = enumerate_basic(3, CompClass.F)
        assert len(rates) == 5
        assert rates[0] == pytest.approx(1.0 / (6.0 + 4.0 * SQ2), rel=1e-13)
        assert np.allclose(sorted(rates[1:]), [0.08765, 0.08765, 0.08908, 0.09006], atol=1e-5)

    def test_g_counts_mirror_f(self):
        _, rf = enumerate_basic(4, CompClass.F)
        _, rg = enumerate_basic(4, CompClass.G)
        assert len(rf) == len(rg)
        assert np.allclose(sorted(rf), sorted(rg), rtol=1e-15)

    @pytest.mark.parametrize("n", range(0, 9))
    def test_matches_dp_optimum(self, tables, n):
        for cls, tab in ((CompClass.S, tables.s_rate), (CompClass.F, tables.f_rate)):
            best, _ = enumerate_basic(n, cls)
            assert abs(best.rate - tab[n + 1]) <= 1e-14

    def test_cap(self):
        with pytest.raises(ResourceCapError):
            enumerate_basic(13, CompClass.S)


class TestAsymptotics:
    def test_exponent_value(self):
        assert P_EXPONENT == pytest.approx(math.log2(1.0 + SQ2), rel=1e-15)
        assert P_EXPONENT == pytest.approx(1.27155, abs=1e-5)

    def test_r_level_zero_is_one(self, tables):
        assert r_constant(CompClass.S, 0, tables) == 1.0
        assert r_constant(CompClass.F, 0, tables) == 1.0

    def test_r_f_strictly_decreasing(self, tables):
        vals = [r_constant(CompClass.F, k, tables) for k in range(9)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_r_s_converges_upward_to_its_limit(self, tables):
        # the s-side block constants rise from 1 toward ~1.00723
        vals = [r_constant(CompClass.S, k, tables) for k in range(9)]
        assert vals[1] > vals[0]
        assert all(1.0 <= v < 1.0073 for v in vals)
        assert vals[-1] == pytest.approx(1.00723, abs=2e-5)

    def test_r_requires_coverage(self, tables):
        with pytest.raises(ScheduleError):
            r_constant(CompClass.S, 12, tables)
        with pytest.raises(ScheduleError):
            r_constant(CompClass.G, 1, tables)

    def test_c_low_value_and_residual(self):
        c = c_low()
        assert c == pytest.approx(0.4208, abs=2e-4)
        # residual of the defining minimization at the returned point
        from stepweaver.schedule import _fgjoin_rate
        from stepweaver.numerics import golden_min

        lam = np.arange(1e-3, 1.0, 1e-3)
        vals = _fgjoin_rate(lam ** (-P_EXPONENT), c * (1.0 - lam) ** (-P_EXPONENT))
        i = int(np.argmin(vals))
        _, refined = golden_min(
            lambda t: float(
                _fgjoin_rate(t ** (-P_EXPONENT), c * (1.0 - t) ** (-P_EXPONENT))
            ),
            lam[i - 1],
            lam[i + 1],
            tol=1e-12,
        )
        assert abs(c - min(refined, float(vals[i]))) < 1e-10

    def test_inner_objective_sanity_points(self):
        # at lambda = 1/2 with c = 1 the objective is (1+sqrt2) * (1 |> 1)
        from stepweaver.schedule import JoinOp, join_rate

        val = join_rate(JoinOp.FJOIN, 2.0**P_EXPONENT, 2.0**P_EXPONENT)
        assert val == pytest.approx((1.0 + SQ2) / 4.0, rel=1e-14)

    def test_bundle(self, tables):
        consts = asymptotic_constants(4, tables)
        assert isinstance(consts, AsymptoticConstants)
        assert set(consts.r_obs_s) == set(range(5))
        assert consts.c_low == pytest.approx(0.4208, abs=2e-4)

    def test_dyadic_block_bound_on_rates(self, tables):
        # rate[n] <= R_k * (1 + 2^-k)^p / n^p for n >= 2^(k+1)
        for k in (1, 2, 3):
            rk = r_constant(CompClass.S, k, tables)
            ns = np.arange(2 ** (k + 1), 513)
            bound = rk * (1.0 + 0.5**k) ** P_EXPONENT / ns.astype(float) ** P_EXPONENT
            assert np.all(tables.s_rate[ns] <= bound * (1.0 + 1e-12))


class TestDyadicSpotChecks:
    def test_doubling_inequality_s(self, tables):
        rng = np.random.default_rng(7)
        for m in rng.integers(1, 256, size=200):
            assert tables.s_rate[2 * m] <= tables.s_rate[m] / PHI * (1.0 + 1e-12)

    def test_doubling_inequality_f(self, tables):
        rng = np.random.default_rng(8)
        for m in rng.integers(1, 256, size=200):
            assert tables.f_rate[2 * m] <= tables.f_rate[m] / PHI * (1.0 + 1e-12)


class TestCache:
    def test_round_trip(self, tables, tmp_path):
        path = save_tables(tables, str(tmp_path))
        loaded = load_tables(path)
        assert loaded.n_max == tables.n_max
        assert np.array_equal(loaded.s_rate[1:], tables.s_rate[1:])
        assert np.array_equal(loaded.f_split, tables.f_split)

    def test_load_or_build_uses_cache(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STEPWEAVER_CACHE", str(tmp_path))
        t1 = load_or_build(32)
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        t2 = load_or_build(32)
        assert np.array_equal(t1.s_rate[1:], t2.s_rate[1:])

    def test_version_mismatch_rejected(self, tables, tmp_path):
        import json

        path = save_tables(tables, str(tmp_path))
        data = dict(np.load(path, allow_pickle=False))
        meta = json.loads(str(data["meta"]))
        meta["cache_version"] = 999
        data["meta"] = json.dumps(meta)
        np.savez(path, **data)
        with pytest.raises(ScheduleError, match="version"):
            load_tables(path)
