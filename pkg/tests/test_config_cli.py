"""Configuration parsing, pipeline artifacts, and the command-line surface."""

import csv
import json

import numpy as np
import pytest
import yaml

from zneboundary.cli import main
from zneboundary.config import load_config, parse_config
from zneboundary.errors import ConfigError
from zneboundary.pipeline import (
    build_report,
    crossings_from_sweep,
    read_crossings_csv,
    read_delta_csv,
    run_sweep,
    write_crossings_csv,
    write_delta_csv,
)

DLB_EXACT = {
    "model": {"type": "deterministic_limit_binary", "kappa": 1.0},
    "rule": {"scales": [1, 3], "alloc": "uniform"},
    "grid": {"mode": "auto", "span": [0.1, 10.0], "points_per_decade": 40},
    "budgets": {"lo": 1.0e4, "hi": 1.0e7, "per_decade": 3},
    "windows": {"variance": [1.0e-4, 1.0e-3], "bias": [1.0e-4, 1.0e-3]},
    "output": {"prefix": "dlb"},
}

DLB_MC = {
    "model": {"type": "deterministic_limit_binary", "kappa": 1.0},
    "rule": {"scales": [1, 3], "alloc": "uniform"},
    "grid": {"mode": "auto", "span": [0.2, 5.0], "points_per_decade": 10},
    "budgets": {"values": [2000, 8000, 32000, 128000]},
    "engine": {"kind": "monte_carlo", "replicates": 40},
    "windows": {"variance": [2.0e-3, 5.0e-2], "bias": [2.0e-3, 5.0e-2]},
    "bootstrap": {"statistics": ["s_obs", "c_fit", "eps_star"],
                  "n_replicates": 120, "level": 0.95, "seed": 21},
    "seed": 424242,
    "output": {"prefix": "mc"},
}


def write_cfg(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


class TestConfig:
    def test_round_trip_and_hash_stability(self, tmp_path):
        path = write_cfg(tmp_path, DLB_EXACT)
        a = load_config(path)
        b = load_config(path)
        assert a.hash() == b.hash()
        assert a.budgets[0] == pytest.approx(1e4)
        assert len(a.budgets) == 10

    def test_set_override_changes_hash(self, tmp_path):
        path = write_cfg(tmp_path, DLB_EXACT)
        base = load_config(path)
        tweaked = load_config(path, overrides=["model.kappa=2.0"])
        assert tweaked.model_spec["kappa"] == 2.0
        assert tweaked.hash() != base.hash()

    def test_mc_requires_seed(self, tmp_path):
        raw = {k: v for k, v in DLB_MC.items() if k != "seed"}
        with pytest.raises(ConfigError, match="seed is mandatory"):
            parse_config(raw)

    def test_mc_requires_integer_budgets(self):
        raw = dict(DLB_MC, budgets={"values": [1000.5]})
        with pytest.raises(ConfigError, match="integers"):
            parse_config(raw)

    def test_bootstrap_requires_monte_carlo(self):
        raw = dict(DLB_EXACT)
        raw["bootstrap"] = {"statistics": ["s_obs"], "seed": 3}
        with pytest.raises(ConfigError, match="monte_carlo"):
            parse_config(raw)

    def test_monomial_cannot_sample(self):
        raw = {
            "model": {"type": "monomial_balance", "p": 1, "q": 0, "d_p": 1.0, "k_q": 1.0},
            "budgets": [1000],
            "engine": {"kind": "monte_carlo", "replicates": 10},
            "seed": 1,
        }
        with pytest.raises(ConfigError, match="no sampler"):
            parse_config(raw)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown configuration sections"):
            parse_config(dict(DLB_EXACT, extra={}))

    def test_ruleless_sweep_needs_explicit_grid(self):
        raw = {
            "model": {"type": "deterministic_limit_binary", "kappa": 1.0},
            "rule": None,
            "budgets": [1000],
        }
        with pytest.raises(ConfigError, match="explicit grid"):
            parse_config(raw)

    def test_optimal_alloc_realloc_flag(self):
        raw = dict(DLB_EXACT, rule={"scales": [1, 3], "alloc": "optimal"})
        cfg = parse_config(raw)
        assert cfg.realloc == "optimal"
        assert cfg.rule().alloc == (0.5, 0.5)  # uniform base fractions


class TestPipelineArtifacts:
    def test_delta_csv_round_trip(self, tmp_path):
        cfg = parse_config(dict(DLB_EXACT, budgets={"values": [1e4, 1e5, 1e6]}))
        sweep = run_sweep(cfg)
        path = tmp_path / "delta.csv"
        write_delta_csv(path, sweep)
        back = read_delta_csv(path)
        assert back.budgets == sweep.budgets
        assert np.array_equal(back.delta, sweep.delta)  # repr round-trips floats
        assert back.eps_grids == sweep.eps_grids
        assert back.std_err is None

    def test_crossings_csv_round_trip(self, tmp_path):
        cfg = parse_config(dict(DLB_EXACT, budgets={"values": [1e4, 1e5, 1e6]}))
        crossings = crossings_from_sweep(run_sweep(cfg))
        path = tmp_path / "cross.csv"
        write_crossings_csv(path, crossings)
        assert read_crossings_csv(path) == crossings

    def test_exact_report_contents(self, tmp_path):
        cfg = parse_config(DLB_EXACT)
        sweep = run_sweep(cfg)
        crossings = crossings_from_sweep(sweep)
        report = build_report(cfg, crossings, None)
        assert report["config_hash"] == cfg.hash()
        assert report["pre_registered"]["declared_before_fit"] is True
        assert report["regime"]["c_pq"] == pytest.approx(10.0)
        assert -1.02 <= report["boundary_fit"]["slope"] <= -0.98
        assert 0.98 <= report["variance_fit"]["q_hat"] <= 1.0
        assert report["bias_fit"]["alpha_hat"] == pytest.approx(-1.0, abs=1e-6)
        assert report["constant_check"]["rel_error"] <= 0.10
        assert report["predicted_slope"] == pytest.approx(-1.0, abs=0.01)

    def test_monomial_report_skips_curve_fits(self):
        raw = {
            "model": {"type": "monomial_balance", "p": 2, "q": 1, "d_p": 2.0, "k_q": 3.0},
            "budgets": {"lo": 1.0e3, "hi": 1.0e6, "per_decade": 3},
            "windows": {"variance": [1e-4, 1e-3]},
        }
        cfg = parse_config(raw)
        sweep = run_sweep(cfg)
        report = build_report(cfg, crossings_from_sweep(sweep), None)
        assert report["regime"]["regime"] == "subcritical"
        assert report["boundary_fit"]["slope"] == pytest.approx(-1 / 3, abs=0.01)
        assert "variance_fit" not in report  # no exact curve to fit
        assert "constant_check" not in report

    def test_monte_carlo_optimal_allocation_varies_shots(self):
        raw = dict(DLB_MC, rule={"scales": [1, 3], "alloc": "optimal"},
                   budgets={"values": [2000, 8000, 32000]})
        cfg = parse_config(raw)
        sweep = run_sweep(cfg)
        table = sweep.counts
        # stored rule spec carries explicit base fractions, not the keyword
        assert table.rule_spec["alloc"] == [0.5, 0.5]
        # optimal split weights the base level more than the amplified one
        level_shots = table.shots[0, 0, 1:, 0]
        assert level_shots[0] > level_shots[1]
        assert level_shots.sum() == 2000
        report = build_report(cfg, crossings_from_sweep(sweep), table)
        assert report["regime"]["k_q"] == pytest.approx(
            2.0 * ((1.5 + 0.5 * np.sqrt(3.0)) ** 2 - 1.0)
        )

    def test_monte_carlo_report_with_bootstrap(self, tmp_path):
        cfg = parse_config(DLB_MC)
        sweep = run_sweep(cfg)
        crossings = crossings_from_sweep(sweep)
        report = build_report(cfg, crossings, sweep.counts)
        names = {entry["statistic"] for entry in report["bootstrap"]}
        assert {"s_obs", "c_fit"} <= names
        assert any(name.startswith("eps_star[") for name in names)
        s_obs = next(e for e in report["bootstrap"] if e["statistic"] == "s_obs")
        assert s_obs["ci_lo"] <= s_obs["point"] <= s_obs["ci_hi"]
        assert report["count_estimates"]["q_hat"] == pytest.approx(1.0, abs=0.2)
        # byte-identical on JSON re-serialization
        assert json.dumps(report, sort_keys=True) == json.dumps(
            build_report(cfg, crossings, sweep.counts), sort_keys=True
        )


class TestCli:
    def test_rule_command_penalties(self, capsys):
        assert main(["rule", "--scales", "1,3", "--q", "1", "--nu", "2"]) == 0
        out = capsys.readouterr().out
        assert "K_fixed = 10" in out
        assert "[1.5, -0.5]" in out

    def test_rule_command_two_point(self, capsys):
        assert main(["rule", "--scales", "1,2"]) == 0
        out = capsys.readouterr().out
        assert "[2.0, -1.0]" in out

    def test_rule_command_three_point_residuals(self, capsys):
        assert main(["rule", "--scales", "1,3,5"]) == 0
        out = capsys.readouterr().out
        assert "identity residuals" in out
        for token in out.split("residuals (m = 0..2): ")[1].splitlines()[0].split(", "):
            assert float(token) <= 1e-12

    def test_rule_command_rejects_bad_scales(self, capsys):
        assert main(["rule", "--scales", "2,3"]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_sweep_boundary_fit_flow(self, tmp_path, capsys):
        raw = dict(DLB_EXACT, output={"dir": str(tmp_path), "prefix": "dlb"},
                   budgets={"lo": 1.0e4, "hi": 1.0e7, "per_decade": 2})
        cfg_path = write_cfg(tmp_path, raw)
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        assert main(["boundary", "--config", str(cfg_path)]) == 0
        assert main(["fit", "--config", str(cfg_path)]) == 0
        report = json.loads((tmp_path / "dlb_report.json").read_text())
        assert -1.02 <= report["boundary_fit"]["slope"] <= -0.98
        with open(tmp_path / "dlb_crossings.csv", newline="") as fh:
            first_line = fh.readline()
            assert first_line.startswith("# zneboundary-schema=")  # version + flags
            assert "pre_registered=true" in first_line
            rows = list(csv.DictReader(fh))
        first = next(r for r in rows if float(r["B"]) == 1.0e4)
        assert float(first["eps_star"]) == pytest.approx(10.0 / 10008.0, rel=2e-3)
        assert (tmp_path / "dlb_variance.csv").exists()

    def test_fit_without_boundary_is_config_error(self, tmp_path, capsys):
        cfg_path = write_cfg(
            tmp_path, dict(DLB_EXACT, output={"dir": str(tmp_path), "prefix": "x"})
        )
        assert main(["fit", "--config", str(cfg_path)]) == 2
        assert "run `zneboundary boundary` first" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        raw = dict(DLB_MC, budgets={"values": [2000, 8000, 32000]},
                   output={"dir": str(tmp_path), "prefix": "mc"})
        cfg_path = write_cfg(tmp_path, raw)
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        first = {
            name: (tmp_path / name).read_bytes()
            for name in ("mc_delta.csv", "mc_counts.csv", "mc_counts.json")
        }
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        for name, blob in first.items():
            assert (tmp_path / name).read_bytes() == blob

    def test_ruleless_single_point_sweep_is_zero(self, tmp_path):
        raw = {
            "model": {"type": "deterministic_limit_binary", "kappa": 1.0},
            "rule": None,
            "grid": {"mode": "explicit", "eps": [0.01]},
            "budgets": [1000],
            "output": {"dir": str(tmp_path), "prefix": "none"},
        }
        cfg_path = write_cfg(tmp_path, raw)
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        with open(tmp_path / "none_delta.csv", newline="") as fh:
            rows = list(csv.DictReader(l for l in fh if not l.startswith("#")))
        assert [float(r["delta"]) for r in rows] == [0.0]

    def test_domain_error_exit_code(self, tmp_path, capsys):
        raw = {
            "model": {"type": "deterministic_limit_binary", "kappa": 1.0},
            "rule": {"scales": [1, 3], "alloc": "uniform"},
            "grid": {"mode": "explicit", "eps": [0.5, 0.7, 1.0]},  # 3 eps > eps_max
            "budgets": [1000],
            "output": {"dir": str(tmp_path), "prefix": "bad"},
        }
        cfg_path = write_cfg(tmp_path, raw)
        assert main(["sweep", "--config", str(cfg_path)]) == 3
        err = capsys.readouterr().err
        assert "domain error" in err
        assert "lambda=3" in err  # names the offending (eps, scale) pair

    def test_validate_single_check(self, tmp_path, capsys):
        out_json = tmp_path / "val.json"
        code = main(["validate", "--only", "rule_identities", "--json", str(out_json)])
        assert code == 0
        assert "PASS  rule_identities" in capsys.readouterr().out
        payload = json.loads(out_json.read_text())
        assert payload[0]["name"] == "rule_identities"
        assert payload[0]["passed"] is True

    def test_plan_subcritical_example(self, capsys):
        code = main([
            "plan", "--q", "0", "--alpha", "1", "--nu", "0.75",
            "--scales", "1,3", "--budget", "1e4",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "C = 1.73205" in out
        assert "eps* ~ 0.0173205" in out

    def test_plan_critical_verdict(self, capsys):
        code = main(["plan", "--q", "2", "--d-p", "1", "--k-q", "20000", "--budget", "1e5"])
        assert code == 0
        out = capsys.readouterr().out
        assert "budget threshold B* = 20000" in out
        assert "helps" in out

    def test_plan_supercritical_verdict(self, capsys):
        code = main(["plan", "--q", "3", "--p", "1", "--d-p", "1", "--k-q", "1"])
        assert code == 0
        assert "no leading-order shrinking lower boundary" in capsys.readouterr().out

    def test_plan_bracket_output(self, capsys):
        code = main([
            "plan", "--q", "0", "--d-p", "1", "--k-q", "1", "--budget", "1e6",
            "--rho", "0.5", "--l-b", "1", "--l-v", "1", "--delta-b", "1",
            "--delta-v", "1", "--eps0", "1",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "B0(0.5) = 324" in out
        assert "certified" in out

    def test_plan_help_harm_verdict_at_eps(self, capsys):
        main([
            "plan", "--q", "1", "--kappa", "1", "--nu", "2", "--scales", "1,3",
            "--budget", "1e4", "--eps", "0.01",
        ])
        out = capsys.readouterr().out
        assert "ZNE helps" in out  # eps* ~ 1e-3 at B = 1e4, so 0.01 is above
