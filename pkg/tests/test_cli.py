import json

import numpy as np
import pytest

from cpeps import cli
from cpeps.io import read_csv

CONFIG = {"schema_version": 1,
          "lattice": {"epsilon": 0.5, "n_x": 2, "n_t": 2},
          "couplings": {"d": 1, "j": {"preset": "constant", "value": [1.0, 0.0]},
                        "r": {"preset": "constant", "value": [0.5, 0.0]}}}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


@pytest.fixture
def state_file(tmp_path, config):
    out = tmp_path / "state.bin"
    assert cli.main(["generate-state", "--config", config, "--out", str(out)]) == 0
    return str(out)


@pytest.mark.parametrize("argv", [
    ["cmps1d"],
    ["dispersion", "--samples", "16"],
    ["flavors", "--sizes", "24,48,96"],
    ["clifford-scan", "--theta-grid", "16"],
    ["action-eval", "--theta", "0.3"],
    ["square-compare", "--alphas", "pi/2,2pi", "--count", "3"],
])
def test_subcommands_succeed(tmp_path, argv):
    out = tmp_path / "out.csv"
    assert cli.main(argv + ["--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# schema_version:")
    assert "# seed: 0" in text


def test_flavors_tolerance_failure(tmp_path):
    # two small rings do not reach the default decoupling tolerance
    out = tmp_path / "f.csv"
    assert cli.main(["flavors", "--sizes", "24,48", "--out", str(out)]) == 1
    assert out.exists()


def test_oracle_check(tmp_path, config):
    out = tmp_path / "oracle.csv"
    assert cli.main(["oracle-check", "--config", config, "--out", str(out)]) == 0
    assert "max_abs_diff" in out.read_text()


def test_dispersion_uses_config(tmp_path, config):
    out = tmp_path / "d.csv"
    assert cli.main(["dispersion", "--config", config, "--out", str(out)]) == 0
    assert "# epsilon: 0.5" in out.read_text()


def test_area_law(tmp_path, state_file):
    out = tmp_path / "area.csv"
    assert cli.main(["area-law", "--state", state_file, "--out", str(out)]) == 0
    assert "temporal_ranks" in out.read_text()


def test_area_law_with_regions(tmp_path, state_file):
    regions = tmp_path / "regions.json"
    regions.write_text(json.dumps({"regions": [{"x0": 0, "width": 1, "t0": 0, "height": 2},
                                               {"sites": [[1, 0]]}]}))
    out = tmp_path / "area.csv"
    assert cli.main(["area-law", "--state", state_file, "--regions", str(regions),
                     "--out", str(out)]) == 0
    _, columns, rows = read_csv(out)
    assert columns[:2] == ["region", "size"]
    assert [r[1] for r in rows] == ["2", "1"]


def test_area_law_needs_state():
    assert cli.main(["area-law"]) == 2


def test_invalid_config_writes_nothing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "lattice": {"epsilon": -1, "n_x": 2, "n_t": 2}}))
    out = tmp_path / "out.csv"
    assert cli.main(["dispersion", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()


def test_budget_exit_code(tmp_path, config):
    out = tmp_path / "s.bin"
    assert cli.main(["generate-state", "--config", config, "--out", str(out),
                     "--budget-mb", "1e-6"]) == 3
    assert not out.exists()


def test_singular_theta(tmp_path):
    assert cli.main(["action-eval", "--theta", str(np.pi / 4),
                     "--out", str(tmp_path / "a.csv")]) == 2


def test_generate_state_needs_out(config):
    assert cli.main(["generate-state", "--config", config]) == 2


@pytest.mark.parametrize("argv", [["action-eval"], ["square-compare", "--count", "2",
                                                    "--alphas", "pi/2"]])
def test_reruns_are_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(argv + ["--seed", "7", "--out", str(a)]) == 0
    assert cli.main(argv + ["--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_state_file_is_deterministic(tmp_path, config):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    cli.main(["generate-state", "--config", config, "--out", str(a)])
    cli.main(["generate-state", "--config", config, "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("text,value", [("pi/2", np.pi / 2), ("3pi/2", 3 * np.pi / 2),
                                        ("2pi", 2 * np.pi), ("-pi", -np.pi), ("0.25", 0.25)])
def test_eval_angle(text, value):
    assert cli.eval_angle(text) == pytest.approx(value)


class TestRegress:
    @pytest.fixture
    def dirs(self, tmp_path):
        golden, cand = tmp_path / "golden", tmp_path / "cand"
        golden.mkdir()
        cand.mkdir()
        for d in (golden, cand):
            assert cli.main(["dispersion", "--samples", "8", "--out", str(d / "disp.csv")]) == 0
            assert cli.main(["clifford-scan", "--theta-grid", "8",
                             "--out", str(d / "cliff.csv")]) == 0
        return golden, cand

    def run(self, dirs, *extra):
        golden, cand = dirs
        return cli.main(["regress", "--golden", str(golden), "--candidate", str(cand),
                         "--out", str(golden.parent / "report.csv"), *extra])

    def test_identical(self, dirs):
        assert self.run(dirs) == 0

    def test_perturbed(self, dirs):
        path = dirs[1] / "disp.csv"
        lines = path.read_text().splitlines()
        kind, p, k = lines[-1].split(",")
        lines[-1] = f"{kind},{p},{float(k) + 1e-3!r}"
        path.write_text("\n".join(lines) + "\n")
        assert self.run(dirs) == 1
        assert "kernel" in (dirs[0].parent / "report.csv").read_text()
        assert self.run(dirs, "--column-tol", "kernel=1e-2") == 0

    def test_missing(self, dirs):
        (dirs[1] / "cliff.csv").unlink()
        assert self.run(dirs) == 1

    def test_garbage(self, dirs):
        (dirs[1] / "cliff.csv").write_bytes(b"\xff\xfe\x00garbage")
        assert self.run(dirs) == 1

    def test_missing_golden_dir(self, tmp_path):
        assert cli.main(["regress", "--golden", str(tmp_path / "nope"),
                         "--candidate", str(tmp_path)]) == 2

    def test_bad_column_tol(self, dirs):
        assert self.run(dirs, "--column-tol", "kernel=abc") == 2
