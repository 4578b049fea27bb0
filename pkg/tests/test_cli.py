import json

import numpy as np
import pytest

from etop import cli
from etop import tops as T


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_state(tmp_path, state, name="state.json"):
    path = tmp_path / name
    path.write_text(json.dumps(T.state_to_dict(state)))
    return str(path)


class TestVerify:
    def test_single_identity_passes(self, capsys):
        code, out, err = run(capsys, "verify", "--suite", "QYBE", "--N", "2", "--samples", "5")
        doc = json.loads(out)
        assert code == 0 and doc["all_passed"]
        assert doc["config"]["seed"] == 0 and doc["version"]
        assert "QYBE" in err

    def test_kernel_suite(self, capsys):
        code, out, _ = run(capsys, "verify", "--suite", "kernel", "--samples", "5", "--tau", "0.2+1.1i")
        doc = json.loads(out)
        assert code == 0
        assert {r["identity"] if "identity" in r else r["id"] for r in doc["identities"]} >= {"FAY", "HEAT"}

    def test_failing_identity_exits_one(self, capsys):
        code, out, _ = run(capsys, "verify", "--suite", "CYBE", "--N", "2", "--M", "2", "--samples", "3")
        assert code == 1
        assert not json.loads(out)["all_passed"]

    def test_ext_expansion_details(self, capsys):
        code, out, _ = run(capsys, "verify", "--suite", "EXT-EXPANSION", "--M", "2", "--samples", "3")
        rec = json.loads(out)["identities"][0]
        assert code == 0
        assert abs(rec["details"]["identity_distance"] - 1.0) < 1e-12

    def test_lax_identity(self, capsys):
        code, _, _ = run(capsys, "verify", "--suite", "LAX-NONREL", "--N", "3", "--samples", "3")
        assert code == 0

    @pytest.mark.parametrize("argv", [
        ["verify", "--samples", "0"],
        ["verify", "--suite", "NOPE"],
        ["verify", "--tau", "-1i"],
        ["verify", "--tol", "-1"],
        ["verify", "--N", "0"],
        ["verify", "--tau", "abc"],
    ])
    def test_config_errors(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            code = cli.main(argv)
            raise SystemExit(code)
        assert exc.value.code == 2

    def test_deterministic(self, capsys):
        first = run(capsys, "verify", "--suite", "AYBE", "--samples", "4", "--seed", "7")[1]
        second = run(capsys, "verify", "--suite", "AYBE", "--samples", "4", "--seed", "7")[1]
        assert first == second
        assert json.loads(first)["config"]["seed"] == 7

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("ETOP_SEED", "42")
        _, out, _ = run(capsys, "verify", "--suite", "SKEW", "--samples", "2")
        assert json.loads(out)["config"]["seed"] == 42
        monkeypatch.setenv("ETOP_SEED", "x")
        code, _, _ = run(capsys, "verify", "--suite", "SKEW", "--samples", "2")
        assert code == 2

    def test_report_file(self, capsys, tmp_path):
        path = tmp_path / "report.json"
        code, out, _ = run(capsys, "verify", "--suite", "SKEW", "--samples", "2", "--out", str(path))
        assert code == 0 and out == ""
        assert json.loads(path.read_text())["all_passed"]


class TestIntegrate:
    def test_autonomous(self, capsys, tmp_path):
        st = T.random_state("nonrel-top", 3, tau=1j, seed=3)
        st = T.with_coords(st, np.asarray(st.coords) * 0.1)
        csv_path = tmp_path / "traj.csv"
        code, out, _ = run(capsys, "integrate", "--state", write_state(tmp_path, st), "--t1", "0.1",
                           "--dt", "0.001", "--out", str(csv_path))
        doc = json.loads(out)
        assert code == 0 and doc["passed"]
        assert doc["steps"] == 100
        lines = csv_path.read_text().strip().split("\n")
        assert len(lines) == 102 and lines[0].startswith("s_or_t")
        back = T.state_from_dict(doc["final_state"])
        assert back.n == 3

    def test_isomonodromic(self, capsys, tmp_path):
        st = T.random_state("pvi", 2, 2, tau=1j, seed=4)
        st = T.with_coords(st, np.asarray(st.coords) * 0.2)
        summary = tmp_path / "summary.json"
        code, out, _ = run(capsys, "integrate", "--state", write_state(tmp_path, st), "--tau0", "1i",
                           "--tau1", "0.1+1.1i", "--ds", "0.05", "--summary", str(summary))
        doc = json.loads(summary.read_text())
        assert code == 0 and out == ""
        assert doc["max_monodromy_residual"] < 1e-10
        assert doc["final_state"]["tau"] == [0.1, 1.1]

    def test_pvi_scalar(self, capsys, tmp_path):
        path = tmp_path / "pvi.json"
        path.write_text(json.dumps({"model": "pvi-scalar", "u0": [0.1, 0.2], "udot0": [0.3, 0.0],
                                    "nu": [[0, 0]] * 4}))
        code, out, _ = run(capsys, "integrate", "--state", str(path), "--tau0", "1i", "--tau1", "0.5+1i",
                           "--ds", "0.1")
        doc = json.loads(out)
        assert code == 0
        assert np.allclose(doc["final"]["u"], [0.25, 0.2])

    def test_bad_z2_state(self, capsys, tmp_path):
        st = T.random_state("nonrel-top", 3, tau=1j, seed=5)
        doc = T.state_to_dict(st)
        doc["flags"]["z2_reduced"] = True
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        code, _, err = run(capsys, "integrate", "--state", str(path))
        assert code == 2 and "ConstraintViolation" in err

    def test_schema_errors(self, capsys, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{not json")
        assert run(capsys, "integrate", "--state", str(path))[0] == 2
        assert run(capsys, "integrate", "--state", str(tmp_path / "missing.json"))[0] == 2

    def test_model_mismatch(self, capsys, tmp_path):
        st = T.random_state("nonrel-top", 2, tau=1j, seed=5)
        code, _, _ = run(capsys, "integrate", "--state", write_state(tmp_path, st), "--model", "gaudin")
        assert code == 2

    def test_tolerance_failure(self, capsys, tmp_path):
        st = T.random_state("nonrel-top", 3, tau=1j, seed=3)
        code, out, _ = run(capsys, "integrate", "--state", write_state(tmp_path, st), "--t1", "0.2",
                           "--dt", "0.1", "--tol", "1e-15")
        assert code == 1 and not json.loads(out)["passed"]


class TestTable:
    def test_grid(self, capsys):
        code, out, _ = run(capsys, "table", "--fn", "wp", "--grid", "0.1:0.9:9")
        lines = out.strip().split("\n")
        assert code == 0 and len(lines) == 82
        assert lines[0] == "x,y,z_re,z_im,value_re,value_im"

    def test_pole_cells(self, capsys):
        code, out, err = run(capsys, "table", "--fn", "E1", "--grid", "0:1:3")
        rows = [l.split(",") for l in out.strip().split("\n")[1:]]
        assert code == 0
        assert rows[0][4:] == ["nan", "nan"]
        assert "pole" in err

    def test_alpha_required(self, capsys):
        assert run(capsys, "table", "--fn", "phi_alpha")[0] == 2
        assert run(capsys, "table", "--fn", "phi_alpha", "--alpha", "1,0", "--hbar", "0.1")[0] == 0

    def test_bad_grid(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["table", "--fn", "wp", "--grid", "1:0:3"])
        assert exc.value.code == 2
