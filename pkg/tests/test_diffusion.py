import math
from fractions import Fraction

import numpy as np
import pytest

from gapbench.diffusion import (
    IC, LT, CustomForm, EdgeStatus, Kind, ModelSpec, Realization, ThresholdRealization, cascade,
    cascade_batch, gtm_cascade, gtm_cascade_batch, make_model, original_icm_batch,
    original_icm_process, original_ltm_batch, original_ltm_process,
    sample_realizations, sample_threshold_matrix, sample_thresholds,
)
from gapbench.errors import LTWeightExceeded, ValidationError, WrongModelKind
from gapbench.graph import build_graph
from gapbench.instances import gen_random
from gapbench.rng import RngStream
from gapbench.sigma import sigma_mc


def _bernoulli_ok(hits: int, n: int, p: float) -> bool:
    se = math.sqrt(p * (1 - p) / n)
    return abs(hits / n - p) <= 3 * se


# -- model validation ------------------------------------------------------

def test_kind_parse():
    assert Kind.parse("ltm") is Kind.LTM and Kind.parse(Kind.GTM) is Kind.GTM
    with pytest.raises(ValidationError):
        Kind.parse("SIR")


def test_lt_in_weight_sum_enforced():
    g = build_graph(3, None, [(0, 2, 0.6), (1, 2, 0.5)])
    make_model(g, "ICM")
    with pytest.raises(LTWeightExceeded):
        make_model(g, "LTM")
    with pytest.raises(LTWeightExceeded):
        make_model(g, "MIXTURE", labels=[IC, IC, LT])
    make_model(g, "MIXTURE", labels=[LT, LT, IC])


def test_lt_sum_tolerance():
    eps = 5e-13
    g = build_graph(3, None, [(0, 2, 0.5), (1, 2, 0.5 + eps)])
    make_model(g, "LTM")


def test_mixture_needs_labels():
    with pytest.raises(ValidationError):
        make_model(build_graph(2), "MIXTURE")


def test_gtm_rejects_nonzero_empty_and_nonmonotone():
    g = build_graph(2, None, [(0, 1, 0.5)])
    ok = CustomForm((), lambda s: 0.0)
    bad_empty = CustomForm((0,), lambda s: 0.1 + 0.5 * (0 in s))
    with pytest.raises(ValidationError):
        ModelSpec(g, Kind.GTM, local_influence=(ok, bad_empty))
    anti = CustomForm((0,), lambda s: 0.0 if 0 in s else 0.0)
    ModelSpec(g, Kind.GTM, local_influence=(ok, anti))
    g3 = build_graph(3, None, [(0, 2, 0.5), (1, 2, 0.5)])
    nonmono = CustomForm((0, 1), lambda s: 0.6 if s == {0} else (0.3 if s else 0.0))
    with pytest.raises(ValidationError):
        ModelSpec(g3, Kind.GTM, local_influence=(ok, ok, nonmono))


def test_candidates_default_and_validation():
    g = build_graph(3)
    assert make_model(g, "ICM").candidates == (0, 1, 2)
    assert make_model(g, "ICM", candidates=[2, 0]).candidates == (0, 2)
    with pytest.raises(ValidationError):
        make_model(g, "ICM", candidates=[3])


# -- realization sampling --------------------------------------------------

def test_weight_one_edge_always_live():
    m = make_model(build_graph(2, None, [(0, 1, 1)]), "ICM")
    assert sample_realizations(m, 1000, 0).all()


def test_lt_empty_triggering_frequency():
    g = build_graph(3, None, [(0, 2, 0.3), (1, 2, 0.3)])
    m = make_model(g, "LTM")
    live = sample_realizations(m, 100_000, RngStream(7))
    assert not (live[:, 0] & live[:, 1]).any()
    assert _bernoulli_ok(int((~live.any(axis=1)).sum()), 100_000, 0.4)
    assert _bernoulli_ok(int(live[:, 0].sum()), 100_000, 0.3)


def test_ic_bernoulli_frequency():
    m = make_model(build_graph(2, None, [(0, 1, 0.5)]), "ICM")
    live = sample_realizations(m, 100_000, RngStream(8))
    assert _bernoulli_ok(int(live.sum()), 100_000, 0.5)


def test_equal_streams_give_equal_realizations():
    m = gen_random(6, 0.4, "MIXTURE", 3)
    a = sample_realizations(m, 50, RngStream(11, 2))
    b = sample_realizations(m, 50, RngStream(11, 2))
    assert (a == b).all()
    assert not (a == sample_realizations(m, 50, RngStream(11, 3))).all()


# -- cascades --------------------------------------------------------------

def test_cascade_basic_cases(path3):
    m = make_model(path3, "ICM")
    live = Realization((EdgeStatus.LIVE, EdgeStatus.LIVE))
    cut = Realization((EdgeStatus.LIVE, EdgeStatus.BLOCKED))
    assert cascade(m, live, []) == frozenset()
    assert cascade(m, live, [0]) == {0, 1, 2}
    assert cascade(m, cut, [0]) == {0, 1}


def test_cascade_batch_matches_single_runs():
    m = gen_random(7, 0.35, "ICM", 5)
    live = sample_realizations(m, 200, 1)
    batch = cascade_batch(m, live, [0, 3])
    for i in range(200):
        got = frozenset(np.flatnonzero(batch[i]).tolist())
        assert got == cascade(m, Realization.from_live(live[i]), [0, 3])


# -- general threshold model ----------------------------------------------

def _gtm(g, labels):
    return ModelSpec(g, Kind.GTM, tuple(labels))


def test_thresholds_in_half_open_unit_interval():
    m = _gtm(build_graph(1), [IC])
    th = sample_thresholds(m, 0)
    assert len(th.theta) == 1 and 0 < th.theta[0] <= 1
    with pytest.raises(ValidationError):
        ThresholdRealization((0.0,))


def test_threshold_mean():
    m = _gtm(build_graph(1), [IC])
    x = sample_threshold_matrix(m, 100_000, RngStream(3))[:, 0]
    assert abs(x.mean() - 0.5) <= 3 * math.sqrt(1 / 12 / 100_000)


def test_gtm_cascade_cases():
    g = build_graph(2, None, [(0, 1, 0.4)])
    m = _gtm(g, [IC, IC])
    assert gtm_cascade(m, ThresholdRealization((0.9, 0.4)), []) == frozenset()
    assert gtm_cascade(m, ThresholdRealization((0.9, 0.4)), [0]) == {0, 1}
    assert gtm_cascade(m, ThresholdRealization((0.9, 0.41)), [0]) == {0}


def test_gtm_batch_matches_single_runs():
    m = gen_random(6, 0.4, "GTM", 9)
    th = sample_threshold_matrix(m, 100, 2)
    batch = gtm_cascade_batch(m, th, [1])
    for i in range(100):
        want = gtm_cascade(m, ThresholdRealization(tuple(th[i].tolist())), [1])
        assert frozenset(np.flatnonzero(batch[i]).tolist()) == want


def test_gtm_with_lt_forms_matches_ltm():
    base = gen_random(6, 0.45, "LTM", 21)
    gtm = _gtm(base.graph, [LT] * 6)
    a = sigma_mc(base, [0], 100_000, RngStream(1))
    b = sigma_mc(gtm, [0], 100_000, RngStream(2))
    assert a.overlaps(b)


def test_gtm_with_ic_forms_matches_icm():
    base = gen_random(6, 0.45, "ICM", 22)
    gtm = _gtm(base.graph, [IC] * 6)
    assert sigma_mc(base, [0, 2], 50_000, RngStream(1)).overlaps(sigma_mc(gtm, [0, 2], 50_000, RngStream(2)))


# -- round-based processes -------------------------------------------------

def test_original_processes_trivial_cases():
    g = build_graph(3, None, [(0, 1, 1), (1, 2, 1)])
    icm, ltm = make_model(g, "ICM"), make_model(g, "LTM")
    for proc, m in ((original_icm_process, icm), (original_ltm_process, ltm)):
        assert proc(m, [], 0) == frozenset()
        assert proc(m, [0], 0) == {0, 1, 2}
    with pytest.raises(WrongModelKind):
        original_icm_process(ltm, [0], 0)


@pytest.mark.parametrize("kind", ["ICM", "LTM"])
def test_original_process_matches_triggering(kind):
    m = gen_random(5, 0.5, kind, 31)
    a = sigma_mc(m, [0], 100_000, RngStream(4), method="original")
    b = sigma_mc(m, [0], 100_000, RngStream(5), method="triggering")
    assert a.overlaps(b)


def test_original_batch_matches_single_process_distribution():
    m = gen_random(5, 0.5, "ICM", 12)
    batch = original_icm_batch(m, [0], 20_000, 1) @ m.weight_array
    single = [m.weight_of(original_icm_process(m, [0], g)) for g in RngStream(2).generator.spawn(2000)]
    se = math.sqrt(batch.var() / batch.size + np.var(single) / len(single))
    assert abs(batch.mean() - np.mean(single)) <= 4 * se + 1e-12
    ltm = gen_random(5, 0.5, "LTM", 12)
    assert original_ltm_batch(ltm, [0], 10, 0).shape == (10, 5)


def test_exact_weights_are_fractions():
    m = gen_random(5, 0.5, "LTM", 1)
    assert m.exact and all(isinstance(e.weight, Fraction) for e in m.graph.edges)
