from __future__ import annotations

import copy
import json
from pathlib import Path

import pytest

from storval.config import ConfigError, McConfig, load_config, parse_config
from storval.storage import StorageType
from storval.wind_process import Beta, TruncatedNormal, Uniform

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "horizon": 4,
    "process": {"kind": "iid", "marginal": {"family": "uniform"}},
    "prices": {"p": 0.0, "m_alpha": 1.0, "m_beta": 1.0},
}


def doc(**changes):
    d = copy.deepcopy(BASE)
    for key, value in changes.items():
        d[key] = value
    return d


def test_minimal_config_defaults():
    cfg = parse_config(doc())
    assert cfg.horizon == 4 and cfg.process.marginals[0] == Uniform()
    assert cfg.storage == StorageType() and cfg.storage.ideal
    assert cfg.mc == McConfig() and cfg.options == {}


def test_shipped_configs_load():
    iid = load_config(CONFIGS / "iid_uniform.json")
    assert iid.storage == StorageType(0.2, 1.0) and iid.option("c_b") == 8.0
    two = load_config(CONFIGS / "two_regime.json")
    assert two.process.marginals[0] == Beta(2, 5) and two.process.marginals[12] == TruncatedNormal(0.6, 0.2)
    emp = load_config(CONFIGS / "empirical.json")
    assert emp.process.kind == "empirical" and emp.process.traces.shape == (500, 24)


def test_unit_losses_stay_exact_integers():
    cfg = parse_config(doc(storage={"b": 0.1, "r": 0.5, "lambda": 1.0, "eta_in": 0.9}))
    assert cfg.storage.lam == 1 and isinstance(cfg.storage.lam, int)
    assert cfg.storage.eta_in == 0.9 and not cfg.storage.ideal


def test_regimes_expand_to_horizon():
    process = {
        "kind": "nonstationary",
        "regimes": [
            {"periods": 3, "marginal": {"family": "uniform"}},
            {"periods": 1, "marginal": {"family": "beta", "alpha": 2, "beta": 5}},
        ],
    }
    cfg = parse_config(doc(process=process))
    assert cfg.process.marginals == (Uniform(),) * 3 + (Beta(2, 5),)


def test_round_trip_through_to_dict():
    cfg = load_config(CONFIGS / "two_regime.json")
    d = cfg.to_dict()
    assert d["storage"]["lambda"] == 0.95 and d["mc"]["seed"] == 7
    json.dumps(d)


def test_overrides():
    cfg = parse_config(doc()).with_mc(paths=50, seed=9)
    assert (cfg.mc.paths, cfg.mc.seed) == (50, 9)
    with pytest.raises(ConfigError, match="--paths"):
        parse_config(doc()).with_mc(paths=1)
    with pytest.raises(ConfigError, match="--seed"):
        parse_config(doc()).with_mc(seed=-1)


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"prices": {"p": 1.5, "m_alpha": 1.0, "m_beta": 1.0}}, "Assumption 1"),
        ({"prices": {"p": 0.0, "m_alpha": 1.0}}, "prices.m_beta"),
        ({"prices": {"p": "x", "m_alpha": 1.0, "m_beta": 1.0}}, "prices.p"),
        ({"prices": {"p": -0.1, "m_alpha": 1.0, "m_beta": 1.0}}, "prices.p"),
        ({"prices": {"p": 0.0, "m_alpha": 1.0, "m_beta": 0.0}}, "prices:"),
        ({"storage": {"b": -1}}, "storage.b"),
        ({"storage": {"eta_out": 1.2}}, "storage.eta_out"),
        ({"storage": {"cap": 1}}, "storage.cap"),
        ({"mc": {"paths": 1}}, "mc.paths"),
        ({"mc": {"seed": 1.5}}, "mc.seed"),
        ({"mc": {"tol": 0}}, "mc.tol"),
        ({"horizon": 0}, "horizon"),
        ({"horizon": None}, "horizon"),
        ({"process": {"kind": "arma"}}, "process.kind"),
        ({"process": {"kind": "iid"}}, "process:"),
        ({"process": {"kind": "iid", "marginal": {"family": "weibull"}}}, "process.marginal"),
        ({"process": {"kind": "iid", "marginal": {"family": "beta", "alpha": 2}}}, "process.marginal.beta"),
        ({"process": {"kind": "nonstationary", "marginals": [{"family": "uniform"}]}}, "process.marginals"),
        ({"process": {"kind": "iid", "marginals": []}}, "process.marginals"),
        ({"process": {"kind": "empirical", "trace_file": "missing.csv"}}, "process.trace_file"),
        ({"extra": 1}, "extra"),
    ],
)
def test_errors_name_the_field(changes, field):
    d = doc(**changes)
    if d.get("horizon", 0) is None:
        del d["horizon"]
    with pytest.raises(ConfigError) as info:
        parse_config(d, CONFIGS)
    assert field in str(info.value)


def test_regime_periods_must_add_up():
    process = {"kind": "nonstationary", "regimes": [{"periods": 3, "marginal": {"family": "uniform"}}]}
    with pytest.raises(ConfigError, match="process.regimes"):
        parse_config(doc(process=process))
    bad = {"kind": "nonstationary", "regimes": [{"periods": 0, "marginal": {"family": "uniform"}}]}
    with pytest.raises(ConfigError, match=r"process.regimes\[0\].periods"):
        parse_config(doc(process=bad))


def test_trace_file_relative_to_config(tmp_path):
    (tmp_path / "t.csv").write_text("t0,t1,t2\n0.1,0.2,0.3\n0.4,0.5,0.6\n")
    d = {"process": {"kind": "empirical", "trace_file": "t.csv"}, "prices": BASE["prices"]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    assert load_config(path).horizon == 3
    d["horizon"] = 4
    path.write_text(json.dumps(d))
    with pytest.raises(ConfigError, match="horizon"):
        load_config(path)


def test_trace_file_format_error_names_line(tmp_path):
    (tmp_path / "t.csv").write_text("t0,t1\n0.1,0.2\n0.3,oops\n")
    d = {"process": {"kind": "empirical", "trace_file": "t.csv"}, "prices": BASE["prices"]}
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(d, tmp_path)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "horizon": 3,\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(bad)
    with pytest.raises(ConfigError, match="top level"):
        parse_config([1, 2])
