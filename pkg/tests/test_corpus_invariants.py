"""Whole-corpus structural invariants: identities, reversal, tree lengths."""

import numpy as np
import pytest

from corpus import full_corpus, short_table_schedules
from stepweaver.optimizer import build_tables
from stepweaver.schedule import CompClass, closed_form_rates, reverse


@pytest.fixture(scope="module")
def corpus():
    return full_corpus(build_tables(65))


def test_catalog_rates_match():
    for name, sched, rate in short_table_schedules():
        if rate is not None:
            assert sched.rate == pytest.approx(rate, rel=1e-13), name


def test_identity_pair_everywhere(corpus):
    for name, sched in corpus:
        denom, prod = closed_form_rates(sched.steps, sched.comp_class)
        assert abs(sched.rate - denom) <= 1e-10 * sched.rate, name
        assert abs(sched.rate - prod) <= 1e-10 * sched.rate, name


def test_reversal_preserves_rate_everywhere(corpus):
    swap = {CompClass.F: CompClass.G, CompClass.G: CompClass.F, CompClass.S: CompClass.S}
    for name, sched in corpus:
        r = reverse(sched)
        assert r.rate == sched.rate, name
        assert r.comp_class is swap[sched.comp_class], name
        assert np.array_equal(r.steps, sched.steps[::-1]), name


def test_tree_lengths_everywhere(corpus):
    for name, sched in corpus:
        assert sched.tree is not None, name
        assert sched.tree.length() == sched.n, name


def test_steps_all_exceed_one(corpus):
    # every join inserts a middle step above 1, and empties contribute nothing
    for name, sched in corpus:
        assert np.all(sched.steps > 1.0), name
