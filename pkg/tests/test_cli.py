"""End-to-end tests of the command line interface."""

import json

import numpy as np
import pytest

from causalsens.cli import main


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data.csv")
    base = str(root / "baseline.json")
    assert main(["simulate", "--preset", "4", "--n", "20000", "--seed", "0", "--out", data]) == 0
    assert main(["baseline", "--data", data, "--swap-arms", "--out", base]) == 0
    return root, data, base


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _replays(out):
    before = _read(out)
    manifest = _read(out + ".manifest.json")
    assert main(["replay", "--manifest", out + ".manifest.json"]) == 0
    return _read(out) == before and _read(out + ".manifest.json") == manifest


class TestCommands:
    def test_baseline_positive_after_swap(self, work):
        _, _, base = work
        with open(base) as fh:
            b = json.load(fh)
        tau = np.dot(b["qx"], np.subtract(b["mu1"], b["mu0"]))
        assert tau > 0

    def test_worst_case(self, work):
        root, _, base = work
        out = str(root / "wc.json")
        assert main(["worst-case", "--baseline", base, "--space", "cov:x1", "--out", out]) == 0
        report = json.loads(_read(out))
        assert report["space"] == "cov:x1"
        assert 0 <= report["value"] <= 1
        manifest = json.loads(_read(out + ".manifest.json"))
        assert manifest["command"] == "worst-case"
        assert base in manifest["inputs"]

    def test_worst_case_already_reversed(self, work, capsys):
        root, _, base = work
        out = str(root / "rev.json")
        code = main(["worst-case", "--baseline", base, "--space", "cov:x1", "--delta", "0.9", "--out", out])
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "baseline-already-reversed"

    def test_bsv_empty_region(self, tmp_path):
        b = {"grid": {"names": ["x"], "arities": [2]}, "mu0": [0.2, 0.1], "mu1": [0.7, 0.5],
             "e": [0.5, 0.5], "qx": [0.5, 0.5], "counts": [[0, 0], [0, 0]]}
        base = tmp_path / "b.json"
        base.write_text(json.dumps(b))
        out = str(tmp_path / "bsv.json")
        code = main(["bsv", "--baseline", str(base), "--space", "cov:x", "--seed", "1",
                     "--samples", "10", "--max-draws", "10000", "--out", out])
        assert code == 0
        report = json.loads(_read(out))
        assert report["bsv"] == 0.0
        assert report["acceptance_rate"] == 0.0
        assert "no-accepted-samples" in report["flags"]

    def test_missing_seed(self, work, capsys):
        root, _, base = work
        code = main(["bsv", "--baseline", base, "--space", "cov:x1", "--out", str(root / "x.json")])
        assert code == 2

    def test_uniform_on_eps_refused(self, work):
        root, _, base = work
        code = main(["bsv", "--baseline", base, "--space", "eps:x1", "--seed", "0",
                     "--out", str(root / "x.json")])
        assert code == 2

    def test_bad_space(self, work, capsys):
        root, _, base = work
        code = main(["worst-case", "--baseline", base, "--space", "zzz:x1", "--out", str(root / "x.json")])
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "bad-space"

    def test_fit_prior(self, tmp_path):
        rows = np.random.default_rng(0).dirichlet([2.0, 3.0], size=5000)
        path = tmp_path / "rows.csv"
        np.savetxt(path, rows, delimiter=",")
        out = str(tmp_path / "prior.json")
        assert main(["fit-prior", "dirichlet", "--rows", str(path), "--out", out]) == 0
        prior = json.loads(_read(out))
        assert prior["kind"] == "dirichlet"
        assert np.allclose(prior["alpha"], [2.0, 3.0], rtol=0.1)

    def test_rank_both(self, work):
        root, _, base = work
        out = str(root / "rank.csv")
        plot = str(root / "plot.csv")
        code = main(["rank", "--baseline", base, "--spaces", "all-singletons:cov", "--criterion", "both",
                     "--delta", "0.05", "--samples", "200", "--seed", "0", "--plot-out", plot, "--out", out])
        assert code == 0
        lines = _read(out).decode().splitlines()
        assert lines[0] == "space,worst,bsv,rank_worst,rank_bsv"
        assert len(lines) == 1 + 4 + 1
        assert lines[-1].startswith("# spearman,")
        assert _read(plot).decode().splitlines()[0] == "x,series,value"

    def test_rank_degenerate_spearman(self, work):
        root, _, base = work
        out = str(root / "rank0.csv")
        # tau cannot fall below -1, so no space reverses the decision
        code = main(["rank", "--baseline", base, "--spaces", "all-singletons:cov", "--delta", "-1.0",
                     "--samples", "10", "--max-draws", "1000", "--seed", "0", "--out", out])
        assert code == 0
        assert _read(out).decode().splitlines()[-1] == "# spearman,0.0,degenerate"


class TestReplay:
    def test_byte_identical(self, work):
        root, data, base = work
        out = str(root / "bsv_rep.json")
        assert main(["bsv", "--baseline", base, "--space", "out:t=1,x1=0", "--delta", "0.05",
                     "--seed", "3", "--samples", "300", "--k", "2000", "--out", out]) == 0
        assert _replays(out)
        assert _replays(data)

    def test_changed_input(self, tmp_path):
        data = str(tmp_path / "d.csv")
        base = str(tmp_path / "b.json")
        assert main(["simulate", "--preset", "4", "--n", "5000", "--seed", "1", "--out", data]) == 0
        assert main(["baseline", "--data", data, "--out", base]) == 0
        with open(data, "a") as fh:
            fh.write("0,0,0,0,1,1\n")
        assert main(["replay", "--manifest", base + ".manifest.json"]) == 2
