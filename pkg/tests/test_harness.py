import csv
import json
import math
from fractions import Fraction

import pytest

from gapbench.errors import ConfigError, ValidationError
from gapbench.harness import (
    SEED_ENV, SUMMARY_COLUMNS, Ratio, build_instance, load_config, measure_gap, parse_config,
    parse_params, run_experiment,
)
from gapbench.instances import gen_icm_tight, gen_random, gen_tree_prescribed, icm_tight_closed_form
from gapbench.io import instance_from_dict, instance_to_dict, load_instance, save_instance
from gapbench.rng import RngStream
from gapbench.sigma import EstimateCI, sigma_exact


# -- measure_gap ---------------------------------------------------------------

def test_edgeless_gap_is_one(edgeless4):
    rep = measure_gap(edgeless4, 2, "both")
    assert rep.nonadaptive_greedy_value == 2
    assert all(r.value == r.low == r.high == 1.0 for r in rep.ratios.values())
    assert set(rep.ratios) == {"full", "myopic"}


def test_icm_tight_exact_gap():
    rep = measure_gap(gen_icm_tight(2, 1600), feedback_kind="both")
    want = float(icm_tight_closed_form(2, 1600)["ratio"])
    for fb in ("full", "myopic"):
        assert rep.ratios[fb].value == pytest.approx(want, rel=1e-12)
        assert 1 - 1 / math.e <= rep.ratios[fb].value <= 1
    assert rep.greedy_seeds == (0, 2, 3)


def test_icm_tight_mc_gap_near_closed_form():
    rep = measure_gap(gen_icm_tight(2, 1600), mode="mc", n=4000, pool=2000, rng=7)
    want = float(icm_tight_closed_form(2, 1600)["ratio"])
    r = rep.ratios["full"]
    assert abs(r.value - want) < 0.02
    assert r.low <= r.value <= r.high


def test_tree_adaptive_value_reaches_root():
    m = gen_tree_prescribed(2, 100)
    rep = measure_gap(m, k=len(m.candidates))
    assert rep.adaptive_greedy_value["full"] == 107
    assert rep.adaptive_greedy_value["full"] >= 100 / 2


def test_records_and_optimal():
    m = gen_random(5, 0.4, "ICM", 3, max_edges=5)
    rep = measure_gap(m, 2, "full", optimal=True)
    pols = [r["policy"] for r in rep.records()]
    assert pols == ["nonadaptive_greedy", "adaptive_greedy", "risk_free", "optimal_nonadaptive",
                    "optimal_adaptive"]
    recs = {r["policy"]: r for r in rep.records()}
    assert recs["optimal_adaptive"]["value"] >= recs["adaptive_greedy"]["value"]
    assert "/" in recs["nonadaptive_greedy"]["value_exact"]


def test_gap_validation(edgeless4):
    with pytest.raises(ValidationError):
        measure_gap(edgeless4)
    with pytest.raises(ValidationError):
        measure_gap(edgeless4, 1, mode="approx")
    with pytest.raises(ValidationError):
        measure_gap(gen_random(3, 0.5, "GTM", 1), 1)


def test_ratio_interval_arithmetic():
    num = EstimateCI(8.0, 1.0, 100)
    den = EstimateCI(10.0, 2.0, 100)
    r = Ratio.of(num, den)
    assert (r.value, r.low, r.high) == (0.8, 7 / 12, 9 / 8)
    assert Ratio.of(Fraction(1, 3), 1).value == pytest.approx(1 / 3)
    assert Ratio.of(0, 0).value == 1.0
    assert Ratio.of(EstimateCI(1.0, 2.0, 10), EstimateCI(1.0, 2.0, 10)).high == math.inf


# -- instance specs --------------------------------------------------------

def test_parse_params():
    assert parse_params("k=2, W=1600,check=false,density=0.5,kind=ICM") == \
        {"k": 2, "W": 1600, "check": False, "density": 0.5, "kind": "ICM"}
    with pytest.raises(ValidationError):
        parse_params("k2")


@pytest.mark.parametrize("gen,params,needle", [
    ("nope", {}, "unknown generator"),
    ("icm_tight", {"k": 2}, "params.W"),
    ("icm_tight", {"k": 2, "W": 1600, "x": 1}, "params.x"),
    ("icm_tight", {"k": "2", "W": 1600}, "expected int"),
    ("random", {"n": 3, "density": True, "kind": "ICM"}, "expected float"),
])
def test_build_instance_errors(gen, params, needle):
    with pytest.raises(ConfigError, match=needle):
        build_instance(gen, params)


# -- config parsing --------------------------------------------------------

def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2) if not isinstance(doc, str) else doc)
    return p


def test_config_reports_line_and_field(tmp_path):
    text = '{\n  "seed": 1,\n  "jobs": [\n    {"instance": {"generator": "icm_tight"},\n     "mode": "fast"}\n  ]\n}'
    with pytest.raises(ConfigError, match=r"line 5: jobs\[0\]\.mode"):
        load_config(_write(tmp_path, text))


def test_config_unknown_field(tmp_path):
    with pytest.raises(ConfigError, match="line 2: colour"):
        load_config(_write(tmp_path, {"colour": 1}))


def test_config_json_syntax_error(tmp_path):
    with pytest.raises(ConfigError, match="line 2 column"):
        load_config(_write(tmp_path, '{\n  "seed": ,\n}'))


def test_config_type_errors():
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": "x"})
    with pytest.raises(ConfigError, match="optimal"):
        parse_config({"jobs": [{"instance": {"generator": "random"}, "optimal": 1}]})
    with pytest.raises(ConfigError, match="sweep.W"):
        parse_config({"jobs": [{"instance": {"generator": "icm_tight"}, "sweep": {"W": []}}]})


def test_seed_env_override(monkeypatch):
    doc = {"seed": 5, "jobs": [{"instance": {"generator": "random"}, "seed": 9}]}
    _, jobs = parse_config(doc)
    assert jobs[0].seed == 9
    monkeypatch.setenv(SEED_ENV, "123")
    meta, jobs = parse_config(doc)
    assert meta["seed"] == 123 and jobs[0].seed == 123
    monkeypatch.setenv(SEED_ENV, "abc")
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_sweep_expands_jobs():
    doc = {"jobs": [{"name": "t", "instance": {"generator": "icm_tight", "params": {"k": 2}},
                     "sweep": {"W": [400, 1600]}, "feedback": "both"}]}
    _, jobs = parse_config(doc)
    assert [j.name for j in jobs] == ["t[W=400]", "t[W=1600]"]
    assert [j.params["W"] for j in jobs] == [400, 1600]
    assert jobs[0].feedback == ("full", "myopic")


# -- experiments -----------------------------------------------------------

def test_empty_experiment(tmp_path):
    run_experiment(_write(tmp_path, {"jobs": []}), tmp_path / "out")
    lines = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert lines == [",".join(SUMMARY_COLUMNS)]
    assert json.loads((tmp_path / "out" / "results.json").read_text())["jobs"] == []


def test_sweep_experiment_is_reproducible(tmp_path):
    doc = {"seed": 3, "jobs": [{"name": "tight", "instance": {"generator": "icm_tight", "params": {"k": 2}},
                                "sweep": {"W": [400, 1600, 6400]}}]}
    cfg = _write(tmp_path, doc)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b", workers=2)
    for name in ("results.json", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader((tmp_path / "a" / "summary.csv").open()))
    assert len(rows) == 3
    ratios = [float(r["ratio"]) for r in rows]
    assert ratios == sorted(ratios, reverse=True)
    timings = json.loads((tmp_path / "a" / "timings.json").read_text())
    assert [t["job"] for t in timings] == [0, 1, 2]


def test_mc_experiment_reproducible(tmp_path):
    doc = {"seed": 11, "samples": 300, "pool": 300,
           "jobs": [{"instance": {"generator": "random", "params": {"n": 5, "density": 0.4, "kind": "LTM"}},
                     "k": 2, "mode": "mc", "feedback": "both"}]}
    cfg = _write(tmp_path, doc)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "results.json").read_bytes() == (tmp_path / "b" / "results.json").read_bytes()


def test_failing_job_is_recorded(tmp_path):
    doc = {"jobs": [{"instance": {"generator": "ltm_tight", "params": {"k": 2, "W": 1600}}},
                    {"instance": {"generator": "random", "params": {"n": 3, "density": 0.0, "kind": "ICM"}}, "k": 1}]}
    res = run_experiment(_write(tmp_path, doc), tmp_path / "out")
    assert res[0]["status"] == "error" and "InequalityCheckFailed" in res[0]["error"]
    assert res[1]["status"] == "ok"
    rows = list(csv.DictReader((tmp_path / "out" / "summary.csv").open()))
    assert [r["status"] for r in rows] == ["error", "ok"]


def test_file_generator_relative_path(tmp_path):
    m = gen_random(4, 0.5, "ICM", 2)
    save_instance(m, tmp_path / "inst.json")
    doc = {"jobs": [{"instance": {"generator": "file", "params": {"path": "inst.json"}}, "k": 1}]}
    res = run_experiment(_write(tmp_path, doc), tmp_path / "out")
    assert res[0]["status"] == "ok"


# -- instance files ----------------------------------------------------------

@pytest.mark.parametrize("kind", ["ICM", "LTM", "MIXTURE"])
def test_io_round_trip(tmp_path, kind):
    m = gen_random(5, 0.5, kind, 4)
    save_instance(m, tmp_path / "m.json")
    back = load_instance(tmp_path / "m.json")
    assert back.graph == m.graph and back.kind == m.kind and back.labels == m.labels
    assert sigma_exact(back, [0, 1]) == sigma_exact(m, [0, 1])


def test_io_keeps_names_and_budget():
    m = gen_icm_tight(2, 1600)
    back = instance_from_dict(json.loads(json.dumps(instance_to_dict(m))))
    assert back.k == 3 and back.graph.label(0) == "s"


def test_io_infers_kind():
    doc = {"n": 2, "edges": [[0, 1, "1/2"]]}
    assert instance_from_dict(doc).kind.name == "ICM"


def test_io_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"n": 2,\n "edges": [}')
    with pytest.raises(ValidationError, match="line 2"):
        load_instance(p)
