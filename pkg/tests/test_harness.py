import re
import csv
import io
import json

import numpy as np
import pytest

from avgpred.errors import ConfigError
from avgpred.harness import (bundled_names, compare_controllers, load_scenario, parse_scenario,
                             run_scenario, sweep, sweep_csv)
from avgpred.harness.cli import main
from avgpred.harness.runner import SWEEP_HEADER, scale_plant


def base_raw(**over):
    raw = json.loads(_bundled("example1").read_text())
    raw.update(horizon=5.0, n_per_delay=100)
    raw.update(over)
    return raw


def _bundled(name):
    from avgpred.harness import bundled_path
    return bundled_path(name)


def write(tmp_path, raw, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


class TestScenarioParsing:
    def test_bundled(self):
        assert {"example1", "example2", "example2_mode1", "example2_mode2"} <= set(bundled_names())
        sc = load_scenario("example1")
        assert sc.plant.delay == 1.0 and sc.dwell_time == 0.3 and sc.n_per_delay == 1000
        np.testing.assert_allclose(sc.avg.K[0], [-13.1005, -8.01], atol=1e-3)
        assert sc.signal().horizon == pytest.approx(sc.horizon + sc.plant.delay)

    def test_json_syntax_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "delay": 1.0,\n  "modes": [\n}')
        with pytest.raises(ConfigError, match="line 4"):
            load_scenario(p)

    @pytest.mark.parametrize("mutate, field", [
        (lambda r: r.pop("modes"), "modes"),
        (lambda r: r["modes"][1].update(A=[[1, 2, 3]]), "modes[1].A"),
        (lambda r: r["modes"][0].update(B=[[0], [1], [2]]), "modes[0].B"),
        (lambda r: r.update(delay=-1), "delay"),
        (lambda r: r.update(gain={"poles": [-1]}), "gain.poles"),
        (lambda r: r.update(gain={"poles": [-1, "x"]}), "gain"),
        (lambda r: r.update(controller="magic"), "controller"),
        (lambda r: r.update(controller="single_mode:7"), "controller"),
        (lambda r: r.update(x0=[1, 2, 3]), "x0"),
        (lambda r: r.update(signal={"generator": "fractal"}), "signal.generator"),
        (lambda r: r.update(signal={"switch_times": [0.1], "modes": [0, 1]}), "signal"),
        (lambda r: r.update(u_init="ones"), "u_init"),
    ])
    def test_field_errors(self, mutate, field):
        raw = base_raw()
        mutate(raw)
        with pytest.raises(ConfigError, match=re.escape(field)):
            parse_scenario(raw)

    def test_explicit_signal_and_gain(self):
        raw = base_raw(signal={"switch_times": [0.5, 2.0], "modes": [0, 1, 0]},
                       gain={"K": [[-13.1, -8.0]]}, u_init={"values": [0.0, 1.0]})
        sc = parse_scenario(raw)
        assert sc.signal().switch_times == (0.5, 2.0)
        assert sc.u_init_fn()(-0.5) == pytest.approx(0.5)

    def test_h_option(self):
        raw = base_raw(h=0.3)
        raw.pop("n_per_delay")
        assert parse_scenario(raw).n_per_delay == 4


class TestRun:
    def test_outputs(self, tmp_path):
        sc = parse_scenario(base_raw())
        res = run_scenario(sc, tmp_path)
        rows = list(csv.reader(io.StringIO(res["paths"]["trajectory"].read_text())))
        assert rows[0] == ["t", "x1", "x2", "u", "mode", "V", "W_abs", "W_bound"]
        assert len(rows) == 501 + 1
        summ = json.loads(res["paths"]["summary"].read_text())
        for key in ("epsilon", "epsilon_star", "stable", "xi_hat", "rho_hat", "max_bound_ratio",
                    "final_norm", "norm_label", "Q_used"):
            assert key in summ
        assert summ["norm_label"] == "spectral"
        assert summ["Q_used"] == [[1.0, 0.0], [0.0, 1.0]]
        cert = json.loads(res["paths"]["certificate"].read_text())
        assert cert["epsilon"] == summ["epsilon"]

    def test_deterministic(self, tmp_path):
        sc = parse_scenario(base_raw())
        a = run_scenario(sc, tmp_path / "a")["paths"]
        b = run_scenario(parse_scenario(base_raw()), tmp_path / "b")["paths"]
        for k in a:
            assert a[k].read_bytes() == b[k].read_bytes()

    def test_infeasible_v_is_omitted(self, tmp_path):
        raw = json.loads(_bundled("example2").read_text())
        raw.update(horizon=5.0, n_per_delay=100)
        res = run_scenario(parse_scenario(raw), tmp_path)
        header = res["paths"]["trajectory"].read_text().splitlines()[0]
        assert header == "t,x1,x2,u,mode,W_abs,W_bound"
        assert any("V column omitted" in n for n in res["summary"]["notes"])

    def test_diagnostics_off(self, tmp_path):
        sc = parse_scenario(base_raw(diagnostics={"V": False, "W": False, "bound": False}))
        res = run_scenario(sc, tmp_path)
        assert res["paths"]["trajectory"].read_text().splitlines()[0] == "t,x1,x2,u,mode"

    def test_uncontrolled_hurwitz_mode(self):
        a = [[-1.0, 0.0], [0.0, -3.0]]
        raw = base_raw(modes=[{"A": a, "B": [[1], [1]]}], controller="none", horizon=8.0)
        from avgpred.harness import run
        res = run(parse_scenario(raw))
        assert res["summary"]["xi_hat"] == pytest.approx(1.0, rel=0.05)


class TestCompare:
    def test_flat_plant_average_equals_oracle(self):
        raw = base_raw()
        a_bar = (np.array(raw["modes"][0]["A"]) + np.array(raw["modes"][1]["A"])) / 2
        raw["modes"] = [{"A": a_bar.tolist(), "B": [[0], [1]]}] * 2
        sc = parse_scenario(raw)
        from avgpred.harness.runner import simulate_scenario
        a, _ = simulate_scenario(sc, "average")
        b, _ = simulate_scenario(sc, "exact_oracle")
        np.testing.assert_allclose(a.states, b.states, atol=1e-10)
        res = compare_controllers(sc, ["average", "exact_oracle"])
        assert res["controllers"]["average"]["final_norm"] == pytest.approx(
            res["controllers"]["exact_oracle"]["final_norm"], abs=1e-10)

    def test_empty(self):
        res = compare_controllers(parse_scenario(base_raw()), [])
        assert res["controllers"] == {} and res["ranking"] == []

    def test_errors_do_not_abort(self):
        res = compare_controllers(parse_scenario(base_raw()), ["single_mode:9", "average"])
        assert res["controllers"]["single_mode:9"]["status"] == "error"
        assert res["ranking"] == ["average"]
        arm = res["controllers"]["average"]
        assert {"final_norm", "xi_hat", "peak_u", "peak_norm"} <= set(arm)

    def test_paired_signal(self):
        res = compare_controllers(parse_scenario(base_raw()), ["average", "single_mode:0"], seed=5)
        sc = parse_scenario(base_raw())
        assert res["switch_times"] == list(sc.signal(5).switch_times)

    def test_single_mode_worse_on_bundled_seed(self, tmp_path):
        mode1 = run_scenario(load_scenario("example2_mode1"), tmp_path)["summary"]
        avg = run_scenario(load_scenario("example2"), tmp_path)["summary"]
        assert mode1["seed"] == avg["seed"]
        assert mode1["final_norm"] > avg["final_norm"]


class TestSweep:
    def test_epsilon_scale_zero(self):
        rows = sweep(parse_scenario(base_raw()), "epsilon_scale", [0.0, 1.0], simulate_runs=False)
        assert rows[0]["epsilon"] == 0.0 and rows[0]["stable"] is True
        assert rows[1]["epsilon"] == pytest.approx(0.0071, abs=1e-4)

    def test_scale_is_linear(self, ex2):
        from avgpred.certificates import epsilon
        plant, avg = ex2
        for f in (0.25, 0.5, 2.0):
            assert epsilon(scale_plant(plant, avg, f), avg) == pytest.approx(f * epsilon(plant, avg))

    def test_monotone_in_delay(self):
        rows = sweep(parse_scenario(base_raw()), "D", np.linspace(0.2, 2.0, 10), simulate_runs=False)
        es = [r["epsilon_star"] for r in rows]
        assert all(a >= b for a, b in zip(es, es[1:]))

    def test_monotone_in_dwell(self):
        rows = sweep(parse_scenario(base_raw()), "tau_d", np.linspace(0.1, 2.0, 10), simulate_runs=False)
        es = [r["epsilon_star"] for r in rows]
        assert all(a <= b for a, b in zip(es, es[1:]))

    def test_csv(self):
        rows = sweep(parse_scenario(base_raw()), "epsilon_scale", [0.0], seeds=2)
        text = sweep_csv(rows)
        lines = text.splitlines()
        assert lines[0] == ",".join(SWEEP_HEADER)
        assert len(lines) == 3
        assert lines[1].split(",")[4] == "true"
        assert float(lines[1].split(",")[5]) > 0

    def test_bad_axis_and_values(self):
        sc = parse_scenario(base_raw())
        with pytest.raises(ConfigError):
            sweep(sc, "gain", [1.0])
        with pytest.raises(ConfigError):
            sweep(sc, "D", [-1.0])


class TestCli:
    def test_run_and_certify(self, tmp_path, capsys):
        p = write(tmp_path, base_raw())
        assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "example1.summary.json").exists()
        assert main(["certify", str(p)]) == 0
        out = capsys.readouterr().out
        assert '"norm_label": "spectral"' in out

    def test_parse_error_exit_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{ not json")
        assert main(["run", str(p)]) == 2
        assert "line 1" in capsys.readouterr().err
        raw = base_raw()
        raw["modes"][0]["A"] = [[1]]
        assert main(["certify", str(write(tmp_path, raw))]) == 2

    def test_precondition_exit_3(self, tmp_path, capsys):
        p = write(tmp_path, base_raw(gain={"K": [[0.0, 0.0]]}))
        assert main(["run", str(p), "--out", str(tmp_path)]) == 3
        assert "Hurwitz" in capsys.readouterr().err

    def test_runtime_exit_4(self, tmp_path):
        raw = base_raw(signal={"switch_times": [], "modes": [0], "horizon": 2.0})
        assert main(["run", str(write(tmp_path, raw)), "--out", str(tmp_path)]) == 4

    def test_compare_and_sweep(self, tmp_path, capsys):
        p = write(tmp_path, base_raw())
        assert main(["compare", str(p), "--controllers", ""]) == 0
        assert json.loads(capsys.readouterr().out)["controllers"] == {}
        assert main(["compare", str(p), "--controllers", "average,single_mode:1",
                     "--out", str(tmp_path)]) == 0
        assert (tmp_path / "example1.comparison.json").exists()
        capsys.readouterr()
        assert main(["sweep", str(p), "--axis", "tau_d", "--values", "0.3,0.6", "--no-sim"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == ",".join(SWEEP_HEADER)

    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert "example1" in capsys.readouterr().out
