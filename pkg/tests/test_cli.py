import json
import subprocess
import sys

import pytest

from rwre.cli import main


def run_cli(args):
    return main(args)


class TestExitCodes:
    def test_unknown_graph_is_input_error(self, capsys):
        assert run_cli(["percolate", "--graph", "z9", "--radius", "3",
                        "--p", "0.5", "--trials", "2"]) == 3

    def test_missing_radius_is_input_error(self):
        assert run_cli(["percolate", "--graph", "z2", "--p", "0.5",
                        "--trials", "2"]) == 3

    def test_capacity_error_is_4(self):
        assert run_cli(["percolate", "--graph", "z3", "--radius", "10000",
                        "--p", "0.5", "--trials", "1"]) == 4

    def test_nontermination_is_4(self, tmp_path):
        # a single root-sink edge absorbs every walk: no horizon works
        edge_file = tmp_path / "edge.txt"
        edge_file.write_text("0 1\n")
        code = run_cli(["construct-mu", "--graph", f"file:{edge_file}",
                        "--root", "0", "--sink", "1", "--levels", "1",
                        "--p-seq", "0.5", "--trials", "100",
                        "--max-n", "32", "--seed", "3",
                        "--out", str(tmp_path)])
        assert code == 4


class TestResist:
    def test_z1_sweep_values(self, tmp_path, capsys):
        code = run_cli(["resist", "--graph", "z1", "--radii", "2:6",
                        "--dist", '{"kind":"constant","value":1.0}',
                        "--seeds", "1", "--seed", "5",
                        "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "resist.csv").read_text().strip().split("\n")[1:]
        for row in rows:
            n, _, r_eff, energy = row.split(",")
            # two arms of n+1 unit resistors in parallel
            assert float(r_eff) == pytest.approx((int(n) + 1) / 2, rel=1e-10)
            assert float(energy) == pytest.approx(float(r_eff), rel=1e-8)

    def test_report_embeds_config_hash(self, tmp_path):
        run_cli(["resist", "--graph", "z1", "--radii", "2",
                 "--dist", '{"kind":"constant","value":1.0}',
                 "--out", str(tmp_path)])
        report = json.loads((tmp_path / "resist.json").read_text())
        assert "config_hash" in report
        assert report["config"]["seed"] == 1


class TestPercolateWalk:
    def test_percolate_p1(self, tmp_path):
        code = run_cli(["percolate", "--graph", "z2", "--radius", "4",
                        "--p", "1.0", "--trials", "3", "--seed", "2",
                        "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "percolate.json").read_text())
        assert report["open_fraction"] == 1.0
        assert report["touches_sink_fraction"] == 1.0

    def test_percolate_p0(self, tmp_path):
        run_cli(["percolate", "--graph", "z2", "--radius", "4",
                 "--p", "0.0", "--trials", "3", "--skip-resistance",
                 "--out", str(tmp_path)])
        report = json.loads((tmp_path / "percolate.json").read_text())
        assert report["open_fraction"] == 0.0

    def test_walk_report_and_trace(self, tmp_path):
        trace_file = tmp_path / "trace.csv"
        code = run_cli(["walk", "--graph", "z1", "--radius", "4",
                        "--dist", '{"kind":"constant","value":1.0}',
                        "--steps", "20", "--trials", "300", "--seed", "3",
                        "--trace", str(trace_file), "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "walk.json").read_text())
        assert report["isolated"] == 0
        assert 0.0 <= report["estimate"] <= 1.0
        lines = trace_file.read_text().strip().split("\n")
        assert lines[0] == "step,vertex,edge_id"
        assert len(lines) >= 2

    def test_dist_from_file(self, tmp_path):
        dist_file = tmp_path / "dist.json"
        dist_file.write_text('{"kind": "constant", "value": 1.0}')
        for ref in (f"@{dist_file}", str(dist_file)):
            code = run_cli(["walk", "--graph", "z1", "--radius", "3",
                            "--dist", ref, "--steps", "5",
                            "--trials", "100", "--out", str(tmp_path)])
            assert code == 0

    def test_too_few_trials_is_input_error(self):
        assert run_cli(["walk", "--graph", "z1", "--radius", "3",
                        "--dist", '{"kind":"constant","value":1.0}',
                        "--steps", "5", "--trials", "10"]) == 3


class TestConstructAndVerify:
    def test_round_trip(self, tmp_path):
        code = run_cli(["construct-mu", "--graph", "z1", "--radius", "512",
                        "--levels", "2", "--p-seq", "0.5,0.75",
                        "--trials", "800", "--seed", "21",
                        "--out", str(tmp_path)])
        assert code == 0
        mu = json.loads((tmp_path / "mu.json").read_text())
        assert mu["kind"] == "staircase"
        assert mu["gammas"][0] == 1.0
        assert len(mu["construction"]["levels"]) == 2

        code = run_cli(["verify", "--mu", str(tmp_path / "mu.json"),
                        "--level", "1", "--trials", "3000", "--seed", "9",
                        "--out", str(tmp_path)])
        assert code == 0
        result = json.loads((tmp_path / "verify.json").read_text())
        assert result["result"]["passed"] is True

    def test_verify_corrupted_fails_with_2(self, tmp_path, capsys):
        run_cli(["construct-mu", "--graph", "z1", "--radius", "256",
                 "--levels", "1", "--p-seq", "0.5", "--trials", "500",
                 "--seed", "4", "--out", str(tmp_path)])
        mu = json.loads((tmp_path / "mu.json").read_text())
        mu["construction"]["levels"][0]["N"] = 1  # negative control
        (tmp_path / "bad.json").write_text(json.dumps(mu))
        code = run_cli(["verify", "--mu", str(tmp_path / "bad.json"),
                        "--level", "1", "--trials", "3000", "--seed", "9",
                        "--out", str(tmp_path)])
        assert code == 2
        out = capsys.readouterr().out
        assert "FAIL" in out

    def test_file_graph_round_trip(self, tmp_path):
        # a 12-cycle with one vertex as sink keeps walks recurrent enough
        edges = "\n".join(f"{i} {(i + 1) % 12}" for i in range(12))
        (tmp_path / "cycle.txt").write_text(edges + "\n")
        code = run_cli(["construct-mu", "--graph",
                        f"file:{tmp_path / 'cycle.txt'}", "--root", "0",
                        "--sink", "6", "--levels", "1", "--p-seq", "0.5",
                        "--trials", "400", "--seed", "13",
                        "--out", str(tmp_path)])
        assert code == 0
        code = run_cli(["verify", "--mu", str(tmp_path / "mu.json"),
                        "--level", "1", "--trials", "2000", "--seed", "3",
                        "--out", str(tmp_path)])
        assert code == 0

    def test_construct_with_inline_verification(self, tmp_path, capsys):
        code = run_cli(["construct-mu", "--graph", "z1", "--radius", "512",
                        "--levels", "1", "--p-seq", "0.5", "--trials", "600",
                        "--verify-trials", "2000", "--seed", "8",
                        "--out", str(tmp_path)])
        assert code == 0
        assert "PASS" in capsys.readouterr().out


class TestTreeCommands:
    def test_tree_dim_binary(self, tmp_path):
        code = run_cli(["tree-dim", "--spec", "b=2", "--depth", "14",
                        "--tol", "0.02", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "tree_dim.json").read_text())
        assert 1.98 <= report["br"] <= 2.02
        assert abs(report["p_c"] - 0.5) < 0.01

    def test_tree_flow_certificate(self, tmp_path):
        csv_file = tmp_path / "flow.csv"
        code = run_cli(["tree-flow", "--spec", "b=2", "--rho", "0.6",
                        "--depth", "10", "--csv", str(csv_file),
                        "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "tree_flow.json").read_text())
        assert report["certificate"]["certified"] is True
        assert report["certificate"]["C"] == pytest.approx(0.5)
        assert csv_file.exists()

    def test_tree_flow_ray_failure_certificate(self, tmp_path):
        code = run_cli(["tree-flow", "--spec", "b=1", "--rho", "0.9",
                        "--depth", "10", "--out", str(tmp_path)])
        assert code == 0  # a failure certificate is a result, not an error
        report = json.loads((tmp_path / "tree_flow.json").read_text())
        assert report["certificate"]["certified"] is False


class TestReproducibility:
    def test_byte_identical_reports(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli(["percolate", "--graph", "z2", "--radius", "5",
                     "--p", "0.37", "--trials", "50", "--seed", "123",
                     "--out", str(out)])
        assert (a / "percolate.json").read_bytes() == \
            (b / "percolate.json").read_bytes()
        assert (a / "percolate.csv").read_bytes() == \
            (b / "percolate.csv").read_bytes()

    def test_threads_do_not_change_output(self, tmp_path):
        a, b = tmp_path / "t1", tmp_path / "t4"
        for out, threads in ((a, "1"), (b, "4")):
            run_cli(["walk", "--graph", "z2", "--radius", "6",
                     "--dist", '{"kind":"exponential","mean":1.0}',
                     "--steps", "40", "--trials", "2000", "--seed", "11",
                     "--threads", threads, "--out", str(out)])
        assert (a / "walk.json").read_bytes() == (b / "walk.json").read_bytes()

    def test_env_var_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RWRE_TRIALS", "17")
        run_cli(["percolate", "--graph", "z1", "--radius", "3",
                 "--p", "0.5", "--out", str(tmp_path)])
        report = json.loads((tmp_path / "percolate.json").read_text())
        assert report["config"]["trials"] == 17

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "rwre.cli", "tree-dim", "--spec", "b=3",
             "--depth", "10", "--tol", "0.05"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert abs(report["br"] - 3.0) < 0.1
