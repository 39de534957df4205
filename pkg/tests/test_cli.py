import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from evalsim import Scale, profile_to_csv, read_profile_csv, validate_profile
from evalsim.cli import main

BETA52 = {"model": "iid", "m": 3, "marginal": {"family": "beta", "alpha": 5, "beta": 2}}
SPATIAL = {"model": "spatial", "d": 2, "voters": {"dist": "uniform"},
           "candidates": [[0.2, 0.3], [0.7, 0.8], [0.9, 0.1], [0.4, 0.6]],
           "link": {"type": "linear", "ell": 1.0}, "K": None}


def write(path, obj):
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


def profile_text(rows, K=None, **kw):
    scale = Scale.discrete(K) if K is not None else None
    return profile_to_csv(validate_profile(np.array(rows), scale), **kw)


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def beta_csv(tmp_path):
    model = write(tmp_path / "m.json", BETA52)
    out = str(tmp_path / "p.csv")
    assert main(["simulate", "--model", model, "--voters", "2000", "--seed", "7", "--out", out]) == 0
    return out


class TestSimulate:
    def test_shape(self, beta_csv):
        p = read_profile_csv(beta_csv)
        assert (p.n, p.m) == (2000, 3)

    def test_rerun_identical(self, tmp_path, beta_csv):
        model = write(tmp_path / "m2.json", BETA52)
        again = str(tmp_path / "again.csv")
        main(["simulate", "--model", model, "--voters", "2000", "--seed", "7", "--out", again])
        assert digest(again) == digest(beta_csv)

    def test_threads_do_not_change_output(self, tmp_path, beta_csv):
        model = write(tmp_path / "m2.json", BETA52)
        again = str(tmp_path / "again.csv")
        main(["simulate", "--model", model, "-n", "2000", "--seed", "7", "--threads", "4",
              "--out", again])
        assert digest(again) == digest(beta_csv)

    def test_csv_round_trip(self, beta_csv):
        text = open(beta_csv, newline="").read()
        assert profile_to_csv(read_profile_csv(beta_csv)) == text

    def test_discrete_round_trip(self, tmp_path):
        model = write(tmp_path / "m.json", {"model": "multinomial", "K": 6, "p": [0.5, 0.3, 0.2]})
        out = tmp_path / "p.csv"
        assert main(["simulate", "--model", model, "-n", "50", "--out", str(out)]) == 0
        assert profile_to_csv(read_profile_csv(str(out))) == out.read_text()

    def test_seed_env(self, tmp_path, monkeypatch):
        model = write(tmp_path / "m.json", BETA52)
        a, b, c = (str(tmp_path / f"{k}.csv") for k in "abc")
        monkeypatch.setenv("EVALSIM_SEED", "5")
        main(["simulate", "--model", model, "-n", "20", "--out", a])
        main(["simulate", "--model", model, "-n", "20", "--seed", "5", "--out", b])
        main(["simulate", "--model", model, "-n", "20", "--seed", "6", "--out", c])
        assert digest(a) == digest(b) != digest(c)

    def test_default_seed_is_zero(self, tmp_path, monkeypatch):
        monkeypatch.delenv("EVALSIM_SEED", raising=False)
        model = write(tmp_path / "m.json", BETA52)
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        main(["simulate", "--model", model, "-n", "20", "--out", a])
        main(["simulate", "--model", model, "-n", "20", "--seed", "0", "--out", b])
        assert digest(a) == digest(b)

    def test_bad_env_seed(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("EVALSIM_SEED", "abc")
        model = write(tmp_path / "m.json", BETA52)
        assert main(["simulate", "--model", model, "-n", "5"]) == 2
        assert "EVALSIM_SEED" in capsys.readouterr().err

    def test_transpose(self, tmp_path, beta_csv):
        model = write(tmp_path / "m.json", BETA52)
        out = str(tmp_path / "t.csv")
        main(["simulate", "--model", model, "-n", "2000", "--seed", "7", "--transpose", "--out", out])
        a = read_profile_csv(beta_csv)
        b = read_profile_csv(out, transpose=True)
        np.testing.assert_array_equal(a.values, b.values)

    def test_bad_probabilities(self, tmp_path, capsys):
        model = write(tmp_path / "m.json", {"model": "multinomial", "K": 6, "p": [0.5, 0.4]})
        assert main(["simulate", "--model", model, "-n", "10"]) == 2
        assert "$.p" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        model = write(tmp_path / "m.json", "{not json")
        assert main(["simulate", "--model", model, "-n", "10"]) == 2

    def test_missing_model_file(self, tmp_path):
        assert main(["simulate", "--model", str(tmp_path / "nope.json"), "-n", "10"]) == 2

    def test_spatial_positions(self, tmp_path):
        model = write(tmp_path / "s.json", SPATIAL)
        prof, pos = str(tmp_path / "p.csv"), str(tmp_path / "pos.csv")
        assert main(["simulate", "--model", model, "-n", "30", "--out", prof, "--positions", pos]) == 0
        lines = open(pos).read().splitlines()
        assert len(lines) == 1 + 30 + 4

    def test_positions_rejected_for_non_spatial(self, tmp_path):
        model = write(tmp_path / "m.json", BETA52)
        assert main(["simulate", "--model", model, "-n", "5",
                     "--positions", str(tmp_path / "x.csv")]) == 2

    def test_missing_required_flag(self, capsys):
        assert main(["simulate", "-n", "5"]) == 2


class TestFit:
    def test_selects_beta(self, tmp_path, beta_csv):
        out = tmp_path / "r.json"
        assert main(["fit", beta_csv, "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert [c["best"] for c in rep["candidates"]] == ["beta"] * 3
        assert rep["selected_class"] == "IID"

    def test_rerun_identical(self, tmp_path, beta_csv):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        main(["fit", beta_csv, "--dependence", "checkerboard", "--out", a])
        main(["fit", beta_csv, "--dependence", "checkerboard", "--out", b])
        assert digest(a) == digest(b)

    def test_paper_estimator(self, tmp_path):
        model = write(tmp_path / "m.json", {"model": "iid", "m": 2,
                                              "marginal": {"family": "binomial", "K": 6, "p": 0.7}})
        prof = str(tmp_path / "p.csv")
        main(["simulate", "--model", model, "-n", "500", "--out", prof])

        def p_hat(extra):
            out = tmp_path / "r.json"
            assert main(["fit", prof, "--families", "binomial", "--out", str(out), *extra]) == 0
            fit = json.loads(out.read_text())["candidates"][0]["fits"][0]
            return fit["params"]["p"]

        mean = read_profile_csv(prof).values[:, 0].mean()
        assert p_hat([]) == pytest.approx(mean / 6, rel=1e-12)
        assert p_hat(["--paper-estimator"]) == pytest.approx(mean / 7, rel=1e-12)

    def test_hist(self, tmp_path, beta_csv):
        hist = tmp_path / "h.tsv"
        assert main(["fit", beta_csv, "--hist", "10", "--hist-out", str(hist),
                     "--out", str(tmp_path / "r.json")]) == 0
        lines = hist.read_text().splitlines()
        assert lines[0] == "candidate\tlower\tupper\tcount\tdensity"
        assert len(lines) == 1 + 3 * 10
        counts = [int(l.split("\t")[3]) for l in lines[1:11]]
        assert sum(counts) == 2000

    def test_empty_csv(self, tmp_path):
        empty = write(tmp_path / "e.csv", "")
        assert main(["fit", empty]) == 2

    def test_malformed_cell(self, tmp_path, capsys):
        bad = write(tmp_path / "b.csv", "voter,cand_1,cand_2\n1,0.1,0.2\n2,0.3,abc\n")
        assert main(["fit", bad]) == 2
        err = capsys.readouterr().err
        assert "row" in err and "column" in err

    def test_unfittable_is_numerical_failure(self, tmp_path):
        const = write(tmp_path / "c.csv", profile_text([[0.5, 0.5]] * 10))
        assert main(["fit", const, "--families", "beta"]) == 3

    def test_jitter(self, tmp_path):
        rng = np.random.default_rng(0)
        prof = write(tmp_path / "s.csv", profile_text(rng.integers(0, 101, (200, 2)), K=100))
        out = tmp_path / "r.json"
        assert main(["fit", prof, "--jitter", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["scale"] == {"kind": "continuous"}


class TestEmbed:
    @pytest.fixture
    def spatial_csv(self, tmp_path):
        model = write(tmp_path / "s.json", SPATIAL)
        out = str(tmp_path / "p.csv")
        main(["simulate", "--model", model, "-n", "40", "--seed", "3", "--out", out])
        return out

    def _report(self, tmp_path, csv, *extra):
        rep = tmp_path / "rep.json"
        code = main(["embed", csv, "--link", "linear:1", "--out", str(tmp_path / "pos.csv"),
                     "--report", str(rep), *extra])
        assert code == 0
        return json.loads(rep.read_text())

    def test_true_dimension_fits(self, tmp_path, spatial_csv):
        rep = self._report(tmp_path, spatial_csv, "--d", "2")
        assert rep["normalized_stress"] < 0.05
        assert set(rep) >= {"n", "m", "link", "d", "stress", "stress_trace", "iterations"}

    def test_nested_dimensions(self, tmp_path, spatial_csv):
        stress = [self._report(tmp_path, spatial_csv, "--d", str(d))["stress"] for d in (1, 2, 3)]
        assert stress[0] >= stress[1] >= stress[2]

    def test_positions_file(self, tmp_path, spatial_csv):
        self._report(tmp_path, spatial_csv, "--d", "3")
        lines = (tmp_path / "pos.csv").read_text().splitlines()
        assert lines[0] == "point,kind,x_1,x_2,x_3"
        assert len(lines) == 1 + 40 + 4
        assert lines[-1].startswith("cand_4,candidate,")

    def test_refit_gaussian(self, tmp_path, spatial_csv):
        refit = self._report(tmp_path, spatial_csv, "--refit", "gaussian")["refit"]
        assert refit["dist"] == "gaussian"
        assert len(refit["mean"]) == 2
        assert np.array(refit["covariance"]).shape == (2, 2)

    def test_refit_mixture(self, tmp_path, spatial_csv):
        refit = self._report(tmp_path, spatial_csv, "--refit", "mixture:2")["refit"]
        assert "warnings" in refit

    def test_rerun_identical(self, tmp_path, spatial_csv):
        a = self._report(tmp_path, spatial_csv, "--init", "random", "--seed", "4")
        b = self._report(tmp_path, spatial_csv, "--init", "random", "--seed", "4")
        assert a == b

    @pytest.mark.parametrize("flags", [["--d", "0"], ["--link", "cubic:2"], ["--refit", "mixture:x"]])
    def test_bad_flags(self, tmp_path, spatial_csv, flags):
        assert main(["embed", spatial_csv, "--out", str(tmp_path / "x.csv"), *flags]) == 2


class TestElect:
    def run(self, tmp_path, capsys, text, *args):
        prof = write(tmp_path / "p.csv", text)
        code = main(["elect", prof, *args])
        out = capsys.readouterr().out
        return code, (json.loads(out) if code == 0 else None)

    def test_range_example(self, tmp_path, capsys):
        code, res = self.run(tmp_path, capsys, profile_text([[0.2, 0.8], [0.4, 0.6]]), "--rule", "range")
        assert code == 0
        assert res["winner"] == "cand_2"
        assert res["scores"] == pytest.approx([0.3, 0.7])

    @pytest.mark.parametrize("rule", ["range", "mj"])
    def test_all_equal(self, tmp_path, capsys, rule):
        code, res = self.run(tmp_path, capsys, profile_text([[0.5, 0.5], [0.5, 0.5]]), "--rule", rule)
        assert res["winner"] == "cand_1"
        assert res["tie_trace"]

    def test_approval(self, tmp_path, capsys):
        _, res = self.run(tmp_path, capsys, profile_text([[0.2, 0.8], [0.4, 0.6]]), "--rule", "approval:0.5")
        assert res["scores"] == [0, 2]

    @pytest.mark.parametrize("rule", ["borda", "approval:2"])
    def test_bad_rule(self, tmp_path, capsys, rule):
        code, _ = self.run(tmp_path, capsys, profile_text([[0.2, 0.8]]), "--rule", rule)
        assert code == 2

    def test_transposed_input(self, tmp_path, capsys):
        code, res = self.run(tmp_path, capsys, profile_text([[0.2, 0.8], [0.4, 0.6]], transpose=True), "--rule", "range",
                             "--transpose")
        assert code == 0
        assert res["winner"] == "cand_2"


def test_summary(tmp_path, capsys):
    prof = write(tmp_path / "p.csv", profile_text([[1, 2], [3, 2], [5, 6]], K=6))
    assert main(["summary", prof, "--K", "6"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["voters_with_ties"] == 0
    a = rep["candidates"][0]
    assert (a["mean"], a["sd"], a["lower_median"], a["min"], a["max"]) == (3, 2, 3, 1, 5)


def test_module_entry_point(tmp_path):
    prof = write(tmp_path / "p.csv", profile_text([[0.2, 0.8], [0.4, 0.6]]))
    done = subprocess.run([sys.executable, "-m", "evalsim.cli", "elect", prof, "--rule", "mj"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert json.loads(done.stdout)["rule"] == "mj"
