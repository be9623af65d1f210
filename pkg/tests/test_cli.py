import math
import subprocess
import sys

import numpy as np
import pytest

from threshem import dataio
from threshem.bounds import compute_bounds
from threshem.cli import run_command
from threshem.em import LearnConfig, learn
from threshem.model import PriorSpec
from threshem.oracle import CompareConfig, compare_runs


@pytest.fixture
def files(fixture_dir, tmp_path):
    return dict(net=str(fixture_dir / "ab.net"), data=str(fixture_dir / "d4.csv"), tmp=tmp_path)


def learn_them(files, out, trace=None, seed=7):
    argv = ["learn", "--algo", "them", "--network", files["net"], "--data", files["data"]]
    argv += ["--alpha", "1", "--seed", str(seed), "--out", str(out)]
    if trace:
        argv += ["--trace", str(trace)]
    return run_command(argv)


class TestLearn:
    def test_threshold_on_fixtures(self, files, ab_structure):
        out, trace = files["tmp"] / "params.net", files["tmp"] / "trace.csv"
        assert learn_them(files, out, trace) == 0
        structure, params = dataio.parse_network(out.read_text())
        assert structure == ab_structure
        for t in params.tables:
            np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-12)
        header, rows = dataio.parse_table(trace.read_text())
        assert header == list(dataio.TRACE_HEADER) and len(rows) >= 1

    def test_missing_network_is_usage_error(self, files, capsys):
        code = run_command(["learn", "--algo", "them", "--data", files["data"], "--out", "x.net"])
        assert code == 2
        assert "usage:" in capsys.readouterr().err

    def test_byte_identical_reruns(self, files):
        a, b = files["tmp"] / "a.net", files["tmp"] / "b.net"
        ta, tb = files["tmp"] / "a.csv", files["tmp"] / "b.csv"
        learn_them(files, a, ta)
        learn_them(files, b, tb)
        assert a.read_bytes() == b.read_bytes() and ta.read_bytes() == tb.read_bytes()

    def test_matches_library(self, files, ab_structure, d4):
        out = files["tmp"] / "p.net"
        learn_them(files, out)
        config = LearnConfig(algorithm="threshold-em", seed=7, prior=PriorSpec.uniform(ab_structure))
        assert dataio.parse_network(out.read_text())[1] == learn(ab_structure, d4, config).params

    def test_ml_on_incomplete_data_is_domain_error(self, files, capsys):
        code = run_command(["learn", "--algo", "ml", "--network", files["net"], "--data", files["data"], "--out", "x"])
        assert code == 1
        assert "records [2, 3]" in capsys.readouterr().err

    def test_ml_on_complete_data(self, files, ab_structure):
        data = files["tmp"] / "c.csv"
        data.write_text("A,B\na0,b0\na0,b1\na1,b1\n")
        out = files["tmp"] / "ml.net"
        assert run_command(["learn", "--algo", "ml", "--network", files["net"], "--data", str(data), "--out", str(out)]) == 0
        _, params = dataio.parse_network(out.read_text())
        np.testing.assert_allclose(params[0], [[2 / 3, 1 / 3]], atol=1e-15)

    def test_trace_rejected_for_closed_form(self, files):
        argv = ["learn", "--algo", "map", "--network", files["net"], "--data", files["data"]]
        assert run_command(argv + ["--out", "x", "--trace", "t"]) == 2

    def test_bad_tolerance_is_domain_error(self, files):
        argv = ["learn", "--algo", "em", "--network", files["net"], "--data", files["data"], "--out", "x"]
        assert run_command(argv + ["--tol", "0"]) == 1


class TestOtherCommands:
    def test_bounds_file(self, files, ab_structure, d4):
        out = files["tmp"] / "bounds.txt"
        argv = ["bounds", "--network", files["net"], "--data", files["data"], "--alpha", "1", "--out", str(out)]
        assert run_command(argv) == 0
        text = out.read_text()
        b = dataio.parse_bounds(text, ab_structure)
        assert b.lower[1][0, 0] == pytest.approx(0.4, abs=1e-15)
        assert b.upper[1][0, 0] == pytest.approx(0.75, abs=1e-15)
        assert text == dataio.serialize_bounds(ab_structure, compute_bounds(ab_structure, d4, PriorSpec.uniform(ab_structure)))

    def test_sample_then_mask(self, files, ab_structure, ab_params):
        sampled, masked = files["tmp"] / "s.csv", files["tmp"] / "m.csv"
        assert run_command(["sample", "--network", files["net"], "--n", "50", "--seed", "3", "--out", str(sampled)]) == 0
        data = dataio.parse_dataset(sampled.read_text(), ab_structure)
        assert data == dataio.forward_sample(ab_structure, ab_params, 50, 3)
        assert sampled.read_text().startswith("# forward_sample n=50 seed=3")
        argv = ["mask", "--data", str(sampled), "--network", files["net"], "--rate", "0.4", "--seed", "2"]
        assert run_command(argv + ["--out", str(masked)]) == 0
        assert dataio.parse_dataset(masked.read_text(), ab_structure) == dataio.mask_mcar(data, 0.4, 2)

    def test_mask_rate_out_of_range(self, files):
        argv = ["mask", "--data", files["data"], "--network", files["net"], "--rate", "1.5", "--out", "x"]
        assert run_command(argv) == 1

    def test_loglik(self, files, capsys):
        assert run_command(["loglik", "--network", files["net"], "--data", files["data"]]) == 0
        value = float(capsys.readouterr().out.strip())
        expected = math.log(0.3) + math.log(0.6) + math.log(0.62) + math.log(0.32)
        assert value == pytest.approx(expected, abs=1e-12)

    def test_loglik_needs_cpts(self, files):
        bare = files["tmp"] / "bare.net"
        bare.write_text(dataio.serialize_network(dataio.parse_network(open(files["net"]).read())[0]))
        assert run_command(["loglik", "--network", str(bare), "--data", files["data"]]) == 1

    def test_compare(self, files, ab_structure, ab_params):
        out = files["tmp"] / "summary.csv"
        argv = ["compare", "--network", files["net"], "--records", "60", "--rate", "0.3"]
        assert run_command(argv + ["--trials", "3", "--seed", "4", "--out", str(out)]) == 0
        header, rows = dataio.parse_table(out.read_text())
        assert header == list(dataio.SUMMARY_HEADER) and len(rows) == 3
        summary = compare_runs(ab_structure, ab_params, CompareConfig(records=60, rate=0.3, trials=3, seed=4))
        assert out.read_text() == dataio.serialize_table(dataio.SUMMARY_HEADER, [t.row() for t in summary.trials])

    def test_parse_error_names_file_and_line(self, files, capsys):
        bad = files["tmp"] / "bad.csv"
        bad.write_text("A,B\na0,b9\n")
        assert run_command(["loglik", "--network", files["net"], "--data", str(bad)]) == 1
        err = capsys.readouterr().err
        assert str(bad) in err and "line 2" in err

    def test_missing_file(self, files):
        assert run_command(["loglik", "--network", files["net"], "--data", "/nonexistent.csv"]) == 1

    def test_no_subcommand(self):
        assert run_command([]) == 2


def test_module_entry_point(fixture_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "threshem", "loglik", "--network", str(fixture_dir / "ab.net"), "--data", str(fixture_dir / "d4.csv")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert float(proc.stdout) < 0
