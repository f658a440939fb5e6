import json

import pytest

from defiers.cli import main
from defiers.model import GroupedData, TypeVector
from defiers.reporting import (
    InputError,
    RunConfig,
    bundled_dataset,
    format_grouped,
    parse_input,
    parse_p_mode,
    run_pipeline,
)
from defiers.simulator import SimConfig, simulate_grouped

CSV = "z,d,count\n1,1,4\n1,0,1\n0,1,2\n0,0,3\n"


class TestParseInput:
    def test_json(self):
        assert parse_input(b'{"g":[86108,113440,72643,122649]}') == GroupedData(86108, 113440, 72643, 122649)

    def test_csv(self):
        assert parse_input(CSV.encode()) == GroupedData(4, 1, 2, 3)

    def test_csv_row_order_free(self):
        text = "count,z,d\n1,0,0\n2,0,1\n3,1,0\n4,1,1\n"
        assert parse_input(text) == GroupedData(4, 3, 2, 1)

    @pytest.mark.parametrize(
        "doc",
        [
            '{"g":[1,2,3]}',
            '{"g":[1,2,3,-4]}',
            '{"g":[0,0,0,0]}',
            '{"g":[1,2,3,true]}',
            '{"g":[1,2,3,4.5]}',
            '{"counts":[1,2,3,4]}',
            '{"g":[1,2,3,4]',
            "",
            "z,d,count\n1,1,4\n1,0,3\n0,1,2\n",
            "z,d,count\n1,1,4\n1,1,3\n0,1,2\n0,0,1\n",
            "z,d,count\n1,1,4\n1,0,3\n0,1,2\n0,2,1\n",
            "z,d,n\n1,1,4\n1,0,3\n0,1,2\n0,0,1\n",
            "z,d,count\n1,1,x\n1,0,3\n0,1,2\n0,0,1\n",
        ],
    )
    def test_rejects(self, doc):
        with pytest.raises(InputError):
            parse_input(doc)

    def test_round_trip_of_simulated_data(self):
        for g in simulate_grouped(SimConfig(TypeVector(30, 5, 12, 8), 0.4, seed=8, replications=20)):
            assert parse_input(format_grouped(g).encode()) == g

    def test_bundled_dataset(self):
        assert bundled_dataset() == GroupedData(86108, 113440, 72643, 122649)


def test_parse_p_mode():
    assert parse_p_mode("fixed=0.3").p == 0.3
    assert parse_p_mode("empirical").mode.value == "empirical"
    for bad in ("fixed=1.0", "fixed=x", "joint"):
        with pytest.raises(ValueError):
            parse_p_mode(bad)


class TestRunConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {},
            {"counts": (1, 1, 1, 1), "input_path": "x.json"},
            {"counts": (1, 1, 1, 1), "estimator": "ols"},
            {"counts": (1, 1, 1, 1), "bootstrap": -1},
            {"counts": (1, 1, 1, 1), "bootstrap": 1},
            {"counts": (1, 1, 1, 1), "format": "yaml"},
            {"counts": (1, 1, 1, 1), "p_mode": "fixed=0"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RunConfig(**kwargs)


class TestPipeline:
    def test_toy_both_estimators(self):
        rep = run_pipeline(RunConfig(counts=(5, 0, 0, 5), estimator="both", p_mode="fixed=0.5"))
        d = rep.to_dict()
        assert [b["estimator"] for b in d["estimators"]] == ["ls", "mle"]
        for block in d["estimators"]:
            assert block["t_hat"] == {"never_taker": 0, "defier": 0, "complier": 10, "always_taker": 0}
            assert block["p_used"] == 0.5
        assert "bootstrap" not in d
        assert d["schema_version"] == "1.0"
        assert d["baseline"]["first_stage"] == 1.0

    def test_shares_rounded_and_sum(self):
        d = run_pipeline(RunConfig(counts=(7, 5, 3, 6), estimator="ls")).to_dict()
        shares = d["estimators"][0]["shares"]
        assert all(round(v, 4) == v for v in shares.values())
        assert sum(shares.values()) == pytest.approx(1.0, abs=5e-4)

    def test_bootstrap_block(self):
        d = run_pipeline(RunConfig(counts=(5, 1, 1, 5), p_mode="fixed=0.5", bootstrap=5, restarts=4)).to_dict()
        assert d["bootstrap"][0]["replications"] == 5
        assert len(d["bootstrap"][0]["se_t"]) == 4

    def test_single_arm_error_has_context(self):
        with pytest.raises(ValueError, match="ls"):
            run_pipeline(RunConfig(counts=(3, 0, 0, 0)))

    def test_text_format(self):
        text = run_pipeline(RunConfig(counts=(5, 0, 0, 5), p_mode="fixed=0.5")).render("text")
        assert "complier" in text and "objective" in text


class TestCli:
    def test_estimate_json(self, tmp_path, capsys):
        path = tmp_path / "g.json"
        path.write_text('{"g": [5, 0, 0, 5]}')
        assert main(["estimate", "--input", str(path), "--p", "fixed=0.5", "--estimator", "both"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["estimators"][1]["t_hat"]["complier"] == 10

    def test_estimate_csv_and_output_file(self, tmp_path):
        src, out = tmp_path / "g.csv", tmp_path / "report.txt"
        src.write_text(CSV)
        assert main(["estimate", "--input", str(src), "--format", "text", "--output", str(out)]) == 0
        assert "ls estimator" in out.read_text()

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"r{k}.json"
            args = ["estimate", "--counts", "9,6,4,11", "--estimator", "both",
                    "--bootstrap", "4", "--restarts", "4", "--seed", "3", "--output", str(out)]
            assert main(args) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_simulate_round_trip(self, capsys):
        assert main(["simulate", "--t", "3,1,2,4", "--p", "0.5", "--reps", "5", "--seed", "7"]) == 0
        lines = capsys.readouterr().out.splitlines()
        parsed = [parse_input(line) for line in lines]
        assert parsed == simulate_grouped(SimConfig(TypeVector(3, 1, 2, 4), 0.5, seed=7, replications=5))

    def test_dataset(self, capsys):
        assert main(["dataset"]) == 0
        assert parse_input(capsys.readouterr().out) == bundled_dataset()

    @pytest.mark.parametrize(
        "args",
        [
            ["estimate", "--counts", "0,0,0,0"],
            ["estimate", "--counts", "3,0,0,0"],
            ["estimate", "--input", "/nonexistent/g.json"],
            ["estimate", "--counts", "1,1,1,1", "--p", "fixed=2"],
            ["simulate", "--t", "1,1,1,1", "--p", "1.5"],
        ],
    )
    def test_errors_exit_nonzero(self, args, capsys):
        assert main(args) != 0
        assert "defiers: error:" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["estimate", "--counts", "1,2,3"])
        assert exc.value.code != 0
