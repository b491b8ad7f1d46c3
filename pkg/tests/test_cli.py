import csv
import json

import pytest

from heightlab.cli import dumps_report, load_config, main
from heightlab.errors import ConfigError
from heightlab.forms import diagonal_quartic

from oracles import brute_force_points


def write_config(tmp_path, **overrides):
    cfg = {
        "surface": "bundled:diagonal_quartic",
        "bounds": [5, 10],
        "places": ["inf", 2],
        "epsilon_grid": [0.5, 1.0],
        "exclusion": None,
        "output_dir": "out",
        "lines": {"bound": 10, "min_points": 5},
        "verify": {"bound": 8, "brute_bound": 3, "ultrametric_bound": 3, "primes": [2, 3]},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def read_json(path):
    return json.loads(path.read_text())


def test_count_at_height_one_matches_oracle(tmp_path):
    cfg = write_config(tmp_path, bounds=[1])
    assert main(["count", "--config", str(cfg)]) == 0
    rows = list(csv.reader((tmp_path / "out" / "count.csv").open()))
    assert rows == [["B", "count"], ["1", str(len(brute_force_points(diagonal_quartic(), 1)))]]
    report = read_json(tmp_path / "out" / "count_fit.json")
    assert report["spec_hash"] == diagonal_quartic().spec_hash
    assert len(report["config_hash"]) == 64


def test_malformed_form_exits_2(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(
        '{\n "ambient_dim": 1,\n "degree": 2,\n "terms": [\n'
        '  {"exponents": [2, 0], "coefficient": "1"},\n'
        '  {"exponents": [2, 0], "coefficient": "-1"}\n ]\n}\n'
    )
    cfg = write_config(tmp_path, surface="bad.json")
    assert main(["enumerate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "line 6: terms[1].exponents: duplicate exponent vector" in err


@pytest.mark.parametrize(
    "override, fragment",
    [
        ({"bounds": [10, 5]}, "strictly increasing"),
        ({"bounds": []}, "bounds"),
        ({"epsilon_grid": [0.5, -1]}, "positive"),
        ({"places": ["inf", 4]}, "places"),
        ({"surface": "missing.json"}, "file not found"),
        ({"surface": "bundled:nope"}, "unknown bundled form"),
        ({"exclusion": "nolines.json"}, "file not found"),
        ({"deterministic": False}, "deterministic"),
        ({"colour": "blue"}, "unknown key"),
        ({"lines": {"min_points": 2}}, "min_points"),
        ({"sieve_primes": [4]}, "sieve_primes"),
    ],
)
def test_config_validation_exits_2(tmp_path, capsys, override, fragment):
    cfg = write_config(tmp_path, **override)
    assert main(["count", "--config", str(cfg)]) == 2
    assert fragment in capsys.readouterr().err
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_unreadable_config_and_bad_flags(tmp_path):
    assert main(["count", "--config", str(tmp_path / "none.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["count", "--config", str(tmp_path / "broken.json")]) == 2
    assert main(["frobnicate", "--config", "x"]) == 2
    assert main(["count", "--config", str(write_config(tmp_path)), "--threads", "0"]) == 2


def test_verify_passes_on_diagonal_quartic(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["verify", "--config", str(cfg)]) == 0
    report = read_json(tmp_path / "out" / "verify.json")
    assert report["passed"] is True
    assert {c["name"] for c in report["checks"]} >= {
        "product_formula", "local_height_decomposition", "liouville_archimedean", "liouville_finite",
        "ultrametric", "sieve_equals_naive", "partition_independence", "line_detection", "vojta_theorem_bound",
    }


def test_verify_reports_violation_with_exit_1(tmp_path):
    (tmp_path / "cross.json").write_text(json.dumps(
        {"ambient_dim": 3, "degree": 4, "terms": [{"exponents": [1, 1, 1, 1], "coefficient": "1"}]}
    ))
    cfg = write_config(tmp_path, surface="cross.json",
                       verify={"bound": 2, "brute_bound": 2, "ultrametric_bound": 1, "primes": [2]})
    assert main(["verify", "--config", str(cfg)]) == 1
    report = read_json(tmp_path / "out" / "verify.json")
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert failed == {"smooth_at_points"}


def test_lines_file_feeds_exclusion(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["lines", "--config", str(cfg)]) == 0
    lines = read_json(tmp_path / "out" / "lines.json")
    assert len(lines["lines"]) == 8 and all(l["on_surface"] for l in lines["lines"])
    cfg = write_config(tmp_path, exclusion="out/lines.json", output_dir="out2")
    assert main(["count", "--config", str(cfg)]) == 0
    rows = list(csv.reader((tmp_path / "out2" / "count.csv").open()))
    assert rows[0] == ["B", "count", "count_excluded"]
    assert [r[2] for r in rows[1:]] == ["0", "0"]


def test_enumerate_repulsion_vojta_outputs(tmp_path):
    cfg = write_config(tmp_path, bounds=[3, 6])
    for cmd in ("enumerate", "repulsion", "vojta"):
        assert main([cmd, "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert read_json(out / "manifest.json")["total_count"] == sum(1 for _ in (out / "points.jsonl").open())
    for tag in ("inf", "2"):
        summary = read_json(out / f"repulsion_{tag}_summary.json")
        assert summary["place"] == tag
        rows = list(csv.reader((out / f"repulsion_{tag}.csv").open()))
        assert len(rows) - 1 == summary["pairs"]
    for tag in ("0p5", "1p0"):
        rep = read_json(out / f"vojta_eps_{tag}.json")
        assert rep["places"] == ["inf", "2"]


def test_large_scan_needs_flag(tmp_path, capsys):
    cfg = write_config(tmp_path, bounds=[50])
    assert main(["repulsion", "--config", str(cfg)]) == 2
    assert "--allow-large-scan" in capsys.readouterr().err


def test_threads_do_not_change_outputs(tmp_path):
    cfg = write_config(tmp_path, bounds=[4, 8, 12], exclusion="detect")
    outputs = []
    for threads in ("1", "3"):
        for cmd in ("count", "repulsion", "lines"):
            assert main([cmd, "--config", str(cfg), "--threads", threads]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / "out").iterdir())})
    assert outputs[0] == outputs[1]


def test_report_floats_use_17_digits():
    text = dumps_report({"x": 0.1, "y": [1.0, 2], "z": None, "w": float("inf")})
    assert '"x": 0.10000000000000001' in text
    assert json.loads(text)["y"] == [1, 2]
    assert '"w": "inf"' in text
