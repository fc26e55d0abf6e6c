import csv
import dataclasses
import json
import xml.etree.ElementTree as ET

import pytest

from qmix import cli
from qmix import experiments as ex
from qmix.limit_resolvent import SolverError

SMALL = {
    "free-qe": {"sizes": [100, 200], "seeds": [0], "eta_ladder": [1.0]},
    "free-mixing": {"sizes": [100], "seeds": [0], "eta_ladder": [0.5], "params": {"audit_size": 100}},
    "freeproduct-K3K3": {"sizes": [90], "seeds": [0], "eta_ladder": [0.2],
                         "intervals": [[-1.0, 1.0]],
                         "params": {"ac_energies": [0.0], "moment_energies": [0.0], "cms_n": [1],
                                    "density_points": 21, "mass_nodes": 40}},
    "racg-superflex-check": {"sizes": [8], "seeds": [0],
                             "params": {"cms_n": [1], "density_points": 21, "mass_nodes": 40}},
    "lift-qe": {"sizes": [30], "seeds": [0], "params": {"cms_n": [1]}},
    "torus-mixing-failure": {"sizes": [12], "seeds": [0], "params": {"showcase_M": 0}},
    "butterfly-tensor": {"sizes": [30], "seeds": [0], "eta_ladder": [0.2]},
    "c4-box": {"sizes": [20], "seeds": [0]},
    "glued-copies": {"sizes": [20], "seeds": [0]},
    "rate-scan": {"sizes": [100], "seeds": [0]},
}


def test_every_scenario_has_a_smoke_config():
    assert set(SMALL) == set(ex.SCENARIOS)


@pytest.mark.parametrize("name", sorted(SMALL))
def test_scenarios_run(name, tmp_path):
    meta = ex.run_config({"scenario": name, **SMALL[name]}, tmp_path)
    assert meta["cms_all_inside"]
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ex.RESULT_FIELDS and len(rows) > 1
    with open(tmp_path / "cms.csv") as fh:
        assert next(csv.reader(fh)) == ex.CMS_FIELDS
    for svg in (tmp_path / "plots").glob("*.svg"):
        assert ET.parse(svg).getroot().tag.endswith("svg")
    m = json.loads((tmp_path / "meta.json").read_text())
    assert m["versions"]["qmix"] and m["config"]["scenario"] == name


def test_runs_are_byte_identical(tmp_path):
    cfg = {"scenario": "free-qe", **SMALL["free-qe"]}
    ex.run_config(cfg, tmp_path / "a")
    ex.run_config(cfg, tmp_path / "b")
    for f in ("results.csv", "cms.csv", "audit.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("cfg, msg", [
    ({"scenario": "nope"}, "unknown scenario"),
    ({"scenario": "c4-box", "extra": 1}, "Additional properties"),
    ({"scenario": "c4-box", "sizes": []}, "sizes"),
    ({"scenario": "c4-box", "intervals": [[1, 0]]}, "empty"),
    ({"scenario": "c4-box", "observable": {"kind": "iid"}}, "not available"),
    ({"scenario": "freeproduct-K3K3", "sizes": [100]}, "multiples of 3"),
    ({"sizes": [10]}, "scenario"),
])
def test_schema_errors(cfg, msg):
    with pytest.raises(ex.ConfigError, match=msg):
        ex.validate_config(cfg)


def test_validate_merges_params():
    cfg = ex.validate_config({"scenario": "free-mixing", "params": {"rank": 3}})
    assert cfg["params"] == {"audit_size": 1000, "rank": 3}
    assert cfg["sizes"] == ex.SCENARIOS["free-mixing"].defaults["sizes"]


def test_sub_seeds_are_stable_and_distinct():
    assert ex.sub_seed(0, 500) == ex.sub_seed(0, 500)
    assert len({ex.sub_seed(s, n) for s in range(5) for n in (500, 1000)}) == 10


def _write(tmp_path, cfg):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_cli_run_and_validate(tmp_path, capsys):
    path = _write(tmp_path, {"scenario": "c4-box", "sizes": [10]})
    assert cli.main(["--out", str(tmp_path / "o"), "--threads", "1", "--seed", "3", "run", path]) == 0
    assert (tmp_path / "o" / "results.csv").exists()
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert meta["seeds"] == [3]
    assert cli.main(["validate", path]) == 0
    assert cli.main(["list-scenarios"]) == 0
    assert "torus-mixing-failure" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert cli.main(["validate", _write(tmp_path, {"scenario": "c4-box", "x": 1})]) == 2
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == 2
    path = _write(tmp_path, {"scenario": "c4-box", "sizes": [10], "budget_seconds": 1e-9})
    assert cli.main(["--out", str(tmp_path / "b"), "run", path]) == 4

    def boom(ctx):
        raise SolverError("no convergence")
    monkeypatch.setitem(ex.SCENARIOS, "c4-box", dataclasses.replace(ex.SCENARIOS["c4-box"], run=boom))
    path = _write(tmp_path, {"scenario": "c4-box", "sizes": [10]})
    assert cli.main(["--out", str(tmp_path / "s"), "run", path]) == 3


def test_cms_violation_is_fatal(tmp_path, monkeypatch):
    real = ex.ap.cms_check

    def liar(*a, **k):
        r = real(*a, **k)
        r["inside"] = False
        return r
    monkeypatch.setattr(ex.ap, "cms_check", liar)
    with pytest.raises(ex.CMSViolation):
        ex.run_config({"scenario": "c4-box", "sizes": [10]}, tmp_path)


def test_svg_chart_handles_log_axes(tmp_path):
    ex.svg_line_chart({"a": ([1, 10, 100], [1e-3, 0, 1e-1])}, tmp_path / "p.svg", logx=True, logy=True,
                      title="a<b")
    root = ET.parse(tmp_path / "p.svg").getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}circle")) == 2
