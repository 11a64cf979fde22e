import json
import subprocess
import sys

import numpy as np
import pytest

from qmacfb import __version__
from qmacfb.cli import ParseError, RunConfig, ValidationError, main, parse_config, read_boundary_csv
from qmacfb.regions import no_feedback_adder_region


@pytest.fixture
def mm2(tmp_path):
    p = tmp_path / "mm2.json"
    p.write_text(json.dumps({"space": [["A", 2]], "matrix": [[0.5, 0], [0, 0.5]]}))
    return str(p)


@pytest.fixture
def pure0(tmp_path):
    p = tmp_path / "pure0.json"
    p.write_text(json.dumps([[1, 0], [0, 0]]))
    return str(p)


@pytest.fixture
def pure1(tmp_path):
    p = tmp_path / "pure1.json"
    p.write_text(json.dumps([[0, 0], [0, 1]]))
    return str(p)


def csv_body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


class TestParseConfig:
    def test_defaults(self, tmp_path):
        cfg = parse_config(["region-adder", "--grid", "33", "--out", str(tmp_path / "r.csv")])
        assert cfg.command == "region-adder" and cfg.seed == 0
        assert cfg.options["grid"] == 33 and cfg.options["full_range"] is False
        assert cfg.out.endswith("r.csv") and "out" not in cfg.echo()

    def test_domain_error(self):
        with pytest.raises(ValidationError) as exc:
            parse_config(["region-adder", "--params", "0.7", "0.1", "0.1", "0.1"])
        assert any("alpha0 = 0.7" in r and "[0, 1/2]" in r for _, r in exc.value.problems)
        assert parse_config(["region-adder", "--params", "0.7", "0.1", "0.1", "0.1", "--full-range"])

    def test_domain_error_via_document(self):
        with pytest.raises(ValidationError):
            parse_config(document={"command": "region-adder", "params": [0.7, 0.1, 0.1, 0.1]})

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as exc:
            parse_config(document={"command": "region-adder", "gird": 3})
        assert exc.value.problems[0][0] == "gird"

    def test_type_and_range(self):
        with pytest.raises(ValidationError) as exc:
            parse_config(document={"command": "simulate-qcl", "trials": "many", "delta": 0.0})
        fields = {f for f, _ in exc.value.problems}
        assert fields == {"trials", "delta"}

    def test_parse_errors(self):
        with pytest.raises(ParseError):
            parse_config(["no-such-command"])
        with pytest.raises(ParseError):
            parse_config(document={})
        with pytest.raises(ParseError):
            parse_config(["dh"], document={"command": "compare"})

    def test_required(self):
        with pytest.raises(ValidationError, match="rho: required"):
            parse_config(["dh"])

    @pytest.mark.parametrize("argv", [
        ["region-adder", "--grid", "5", "--refine"],
        ["simulate-qcl", "--rates", "0.1", "0.2", "--trials", "3", "--seed", "9"],
        ["simulate-qcl", "--ratesplit", "--rates", "0", "0.1", "0", "0.1"],
        ["codebook-gen", "--network", "qcl", "--rates", "0.3", "0.3"],
        ["region-general", "--packing-rates", "0", "0.4", "0", "0.4"],
    ])
    def test_echo_round_trip(self, argv):
        cfg = parse_config(argv)
        again = parse_config(document=json.loads(json.dumps(cfg.echo())))
        assert again == RunConfig(cfg.command, cfg.options)

    def test_config_file_and_flag_precedence(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"command": "region-adder", "grid": 7, "seed": 3}))
        cfg = parse_config(["region-adder", "--config", str(p), "--grid", "9"])
        assert cfg.options["grid"] == 9 and cfg.options["seed"] == 3


class TestRun:
    def test_no_args(self, capsys):
        assert main([]) == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            parse_config(["--version"])

    def test_region_adder_csv(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        assert main(["region-adder", "--grid", "9", "--out", str(out)]) == 0
        text = out.read_text()
        assert text.startswith(f"# qmacfb {__version__}\n# seed=0\n# config=")
        assert csv_body(text)[0] == "R1,R2"
        region = read_boundary_csv(out)
        assert region.contains((1.0, 0.5), 1e-6) and region.contains((0.5, 1.0), 1e-6)

    def test_domain_error_exit(self, capsys):
        assert main(["region-adder", "--params", "0.7", "0.1", "0.1", "0.1"]) == 2
        assert "--full-range" in capsys.readouterr().err

    def test_dh_prints_one(self, mm2, capsys):
        assert main(["dh", "--rho", mm2, "--sigma", mm2, "--eps", "0.5"]) == 0
        assert capsys.readouterr().out.strip() == "1.0"

    def test_dh_infinite_exit_one(self, pure0, pure1, capsys):
        assert main(["dh", "--rho", pure0, "--sigma", pure1, "--eps", "0.1"]) == 1
        assert "infinite" in capsys.readouterr().err

    def test_dh_missing_file(self, tmp_path, mm2, capsys):
        assert main(["dh", "--rho", str(tmp_path / "nope.json"), "--sigma", mm2]) == 2

    def test_dh_invalid_state_is_config_error(self, tmp_path, mm2, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([[1.5, 0], [0, -0.5]]))
        assert main(["dh", "--rho", str(bad), "--sigma", mm2]) == 2

    def test_stein_probe(self, mm2, tmp_path, capsys):
        p = tmp_path / "r.json"
        p.write_text(json.dumps([[0.9, 0], [0, 0.1]]))
        assert main(["stein-probe", "--rho", str(p), "--sigma", mm2, "--n-max", "3"]) == 0
        rows = csv_body(capsys.readouterr().out)
        assert rows[0] == "n,value" and len(rows) == 4

    def test_compare_json(self, tmp_path, capsys):
        fb = tmp_path / "fb.csv"
        fb.write_text("R1,R2\n0,1\n1,1\n1,0\n")
        nofb = tmp_path / "nofb.csv"
        nofb.write_text("\n".join(no_feedback_adder_region().to_csv_rows()) + "\n")
        assert main(["compare", "--a", str(fb), "--b", str(nofb)]) == 0
        doc = json.loads(capsys.readouterr().out)
        res = doc["result"]
        assert res["contains"] is True
        assert res["max_gap"] == pytest.approx(0.25 * np.sqrt(2))
        assert res["direction"] == pytest.approx(0.5)
        assert max(r["gap"] for r in res["per_direction"]) == pytest.approx(res["max_gap"])
        assert doc["tool"] == "qmacfb" and doc["seed"] == 0 and doc["config"]["command"] == "compare"

    def test_compare_bad_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        assert main(["compare", "--a", str(bad)]) == 2

    def test_codebook_gen_and_dot(self, tmp_path, capsys):
        dot = tmp_path / "net.dot"
        assert main(["codebook-gen", "--rates", "0.25", "0.5", "--dot", str(dot)]) == 0
        res = json.loads(capsys.readouterr().out)["result"]
        assert res["valid"] and res["codeword_count"] == 1 + 4 + 16
        assert dot.read_text().startswith("digraph")

    def test_region_general_packing(self, capsys):
        assert main(["region-general", "--format", "json", "--packing-rates", "0", "1", "0", "1"]) == 0
        res = json.loads(capsys.readouterr().out)["result"]
        assert min(c["margin"] for c in res["packing"]["conditions"]) == pytest.approx(-0.5)

    def test_region_qcl_ensemble(self, tmp_path, capsys):
        ens = tmp_path / "e.json"
        ens.write_text(json.dumps({"adder": [0.5, 0.5, 0.5, 0.5]}))
        assert main(["region-qcl", "--ensemble", str(ens), "--format", "json"]) == 0
        res = json.loads(capsys.readouterr().out)["result"]
        assert res["bounds"] == pytest.approx([1.0, 1.0, 1.5])

    def test_simulate_zero_rates(self, capsys):
        assert main(["simulate-qcl", "--rates", "0", "0", "--blocklen", "20", "--trials", "3"]) == 0
        res = json.loads(capsys.readouterr().out)["result"]
        assert res["decoder_block_error_rate"] == 0.0 and res["trials"] == 3

    def test_simulate_non_classical(self, capsys):
        assert main(["simulate-qcl", "--instrument", "identity", "--trials", "1", "--blocklen", "10"]) == 2


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["simulate-qcl", "--rates", "0.3", "0.3", "--blocklen", "60", "--trials", "8", "--mode", "ensemble"],
        ["region-adder", "--grid", "5", "--refine", "--directions", "5"],
        ["codebook-gen", "--network", "qcl", "--rates", "0.3", "0.3", "--include-tables"],
    ])
    def test_threads_byte_identical(self, tmp_path, argv, capsys):
        outs = []
        for threads in ("1", "4"):
            p = tmp_path / f"o{threads}"
            assert main(argv + ["--threads", threads, "--out", str(p)]) == 0
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]

    def test_console_entry(self, tmp_path):
        out = tmp_path / "r.csv"
        res = subprocess.run([sys.executable, "-m", "qmacfb.cli", "region-adder", "--grid", "3", "--out", str(out)],
                             capture_output=True, text=True)
        assert res.returncode == 0 and out.read_text().startswith("# qmacfb")
