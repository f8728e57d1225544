import json

import numpy as np
import pytest

from gaugelab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, build_scenario, evaluate_term, main
from gaugelab.forward import Scenario
from gaugelab.grid import Field, Grid2D
from gaugelab.reconstruct import DNDataset, ReconstructionResult

QUADRATIC = {
    "grid": 17,
    "nonlinearity": {"kind": "polynomial", "coefficients": [0, [1, {"bump": {"center": [0.5, 0.5], "radius": 0.3, "amplitude": 1}}]]},
    "source": "5*sin(pi*x)*sin(pi*y)",
    "f0": 0.1,
}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def recipe(tmp_path):
    return write(tmp_path / "quad.json", QUADRATIC)


def test_terms(g17):
    assert np.allclose(evaluate_term(2.5, g17).values, 2.5)
    f = evaluate_term("x + 2*y", g17)
    assert f.values[-1, -1] == pytest.approx(3.0)
    b = evaluate_term({"bump": {"center": [0.5, 0.5], "radius": 0.3, "amplitude": 2}}, g17)
    assert b.values[8, 8] == pytest.approx(2.0)
    assert np.allclose(evaluate_term([1, "x"], g17).values, 1 + g17.x[:, None])


@pytest.mark.parametrize("bad", ["__import__('os')", "open('f')", "x +", {"spline": 1}])
def test_terms_reject_unsafe_or_malformed(g17, bad):
    from gaugelab.cli import ConfigError

    with pytest.raises(ConfigError):
        evaluate_term(bad, g17)


def test_scenario_round_trip(tmp_path, recipe):
    assert main(["scenario", "--scenario", recipe, "--out", str(tmp_path / "s")]) == EXIT_OK
    doc = json.loads((tmp_path / "s" / "scenario.json").read_text())
    s, truth = build_scenario(doc)
    ref, _ = build_scenario(QUADRATIC)
    assert truth is None and s.F.allclose(ref.F) and s.a.coefficient(2).allclose(ref.a.coefficient(2))
    # nodal files feed every other command
    assert main(["forward", "--scenario", str(tmp_path / "s" / "scenario.json"), "--out", str(tmp_path / "f")]) == EXIT_OK


def test_forward_laplace_constant(tmp_path, capsys):
    path = write(tmp_path / "lap.json", {"grid": 17, "nonlinearity": {"kind": "polynomial", "coefficients": [0]}, "source": 0, "f0": 1})
    assert main(["forward", "--scenario", path, "--out", str(tmp_path / "o")]) == EXIT_OK
    u = Field.from_dict(json.loads((tmp_path / "o" / "solution.json").read_text()))
    assert np.allclose(u.values, 1.0, atol=1e-12)
    dn = json.loads((tmp_path / "o" / "dn.json").read_text())
    assert np.max(np.abs(dn["values"])) < 1e-10


def test_forward_manufactured(tmp_path, capsys):
    doc = {
        "grid": 33,
        "nonlinearity": {"kind": "polynomial", "coefficients": [1, 0, 1]},
        "manufactured": "sin(pi*x)*y + x*x",
    }
    assert main(["forward", "--scenario", write(tmp_path / "m.json", doc), "--out", str(tmp_path / "o")]) == EXIT_OK
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["max_error"] <= 1e-10
    assert "max-norm error" in capsys.readouterr().out


def test_config_errors(tmp_path, capsys):
    assert main(["forward", "--scenario", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert "--scenario" in capsys.readouterr().err
    (tmp_path / "bad.json").write_text("{\n  'x': 1\n}")
    assert main(["forward", "--scenario", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    doc = dict(QUADRATIC, nonlinearity={"kind": "cosine", "q": 1})
    assert main(["forward", "--scenario", write(tmp_path / "k.json", doc)]) == EXIT_CONFIG
    assert "nonlinearity.kind" in capsys.readouterr().err
    assert main(["forward", "--bogus"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_solver_error_exit(tmp_path):
    g = Grid2D.square(17)
    lam = (8 / g.h**2) * np.sin(np.pi * g.h / 2) ** 2
    doc = {"grid": 17, "nonlinearity": {"kind": "polynomial", "coefficients": [lam]}, "source": 1}
    assert main(["forward", "--scenario", write(tmp_path / "s.json", doc), "--out", str(tmp_path / "o")]) == EXIT_SOLVER


def test_dataset_linear_is_harmonic(tmp_path):
    doc = {"grid": 17, "nonlinearity": {"kind": "polynomial", "coefficients": [0]}, "source": 0}
    path = write(tmp_path / "s.json", doc)
    assert main(["dataset", "--scenario", path, "--family", "fourier:4", "--out", str(tmp_path / "d")]) == EXIT_OK
    d = DNDataset.load(tmp_path / "d" / "dataset.json")
    from gaugelab.forward import harmonic_extension
    from gaugelab.grid import normal_derivative

    for f, dn in zip(d.inputs, d.first):
        assert dn.allclose(normal_derivative(harmonic_extension(d.grid, f)), atol=1e-10)


def test_dataset_deterministic(tmp_path, recipe):
    args = ["dataset", "--scenario", recipe, "--family", "fourier:8", "--order", "2", "--noise", "0.01", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "dataset.json").read_bytes() == (tmp_path / "b" / "dataset.json").read_bytes()
    assert main(args[:-2] + ["--seed", "8", "--out", str(tmp_path / "c")]) == EXIT_OK
    assert (tmp_path / "a" / "dataset.json").read_bytes() != (tmp_path / "c" / "dataset.json").read_bytes()


def test_dataset_richardson(tmp_path, recipe):
    args = ["dataset", "--scenario", recipe, "--family", "fourier:4", "--order", "2", "--method", "divided", "--eps", "0.1"]
    assert main(args + ["--out", str(tmp_path / "d")]) == EXIT_OK
    summary = json.loads((tmp_path / "d" / "summary.json").read_text())
    assert summary["richardson"]["ratio"] == pytest.approx(4.0, rel=0.1)
    assert main(args[:-2] + ["--eps", "-1", "--out", str(tmp_path / "e")]) == EXIT_CONFIG


def test_reconstruct_pipeline(tmp_path, recipe, capsys):
    assert main(["dataset", "--scenario", recipe, "--order", "2", "--out", str(tmp_path / "d")]) == EXIT_OK
    ds = str(tmp_path / "d" / "dataset.json")
    args = ["reconstruct", "--dataset", ds, "--order", "2", "--truth", recipe, "--out", str(tmp_path / "r")]
    assert main(args + ["--break", "polynomial", "--known", "0"]) == EXIT_OK
    res = ReconstructionResult.from_dict(json.loads((tmp_path / "r" / "result.json").read_text()))
    assert {"Q", "T2", "u0", "F"} <= set(res.fields)
    d = DNDataset.load(ds)
    s, _ = build_scenario(QUADRATIC)
    from gaugelab.forward import solve
    from gaugelab.reconstruct import recover_potential

    u0 = solve(s)[0]
    ref = recover_potential(d, truth=Field(d.grid, s.a.derivative(1, u0.values)))
    assert res["Q"].allclose(ref["Q"], atol=1e-12)
    assert res.errors["Q"] == pytest.approx(ref.errors["Q"]) and res.errors["T2"] < 0.15
    assert (tmp_path / "r" / "errors.csv").read_text().startswith("field,relative_error")
    assert main(["report", str(tmp_path / "d"), str(tmp_path / "r"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    assert len((tmp_path / "rep" / "report.csv").read_text().strip().splitlines()) == 3


def test_reconstruct_missing_block(tmp_path, recipe, capsys):
    assert main(["dataset", "--scenario", recipe, "--family", "fourier:8", "--out", str(tmp_path / "d")]) == EXIT_OK
    ds = str(tmp_path / "d" / "dataset.json")
    assert main(["reconstruct", "--dataset", ds, "--order", "2", "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert "second-order" in capsys.readouterr().err
    assert main(["reconstruct", "--dataset", ds, "--break", "polynomial", "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_reconstruct_sine_gordon(tmp_path):
    doc = {
        "grid": 17,
        "nonlinearity": {"kind": "sine_gordon", "q": [1, {"bump": {"center": [0.5, 0.5], "radius": 0.3, "amplitude": 1}}]},
        "source": "5*sin(pi*x)*sin(pi*y)",
        "f0": 0.5,
    }
    path = write(tmp_path / "sg.json", doc)
    assert main(["dataset", "--scenario", path, "--order", "2", "--out", str(tmp_path / "d")]) == EXIT_OK
    args = ["reconstruct", "--dataset", str(tmp_path / "d" / "dataset.json"), "--order", "2", "--break", "sine_gordon"]
    assert main(args + ["--truth", path, "--out", str(tmp_path / "r")]) == EXIT_OK
    errors = json.loads((tmp_path / "r" / "summary.json").read_text())["errors"]
    assert {"q", "u0", "F"} <= set(errors)


def test_gauge_command(tmp_path, recipe):
    base = ["gauge", "--scenario", recipe, "--refine", "33,65,129", "--family", "fourier:4"]
    assert main(base + ["--out", str(tmp_path / "ok")]) == EXIT_OK
    rows = (tmp_path / "ok" / "gauge.csv").read_text().strip().splitlines()
    assert len(rows) == 4
    assert main(base + ["--bump", "0.5,0.5,0.3,0", "--out", str(tmp_path / "zero")]) == EXIT_OK
    summary = json.loads((tmp_path / "zero" / "summary.json").read_text())
    assert max(summary["discrepancies"]) <= 1e-10
    assert main(base + ["--perturb", "0.5", "--out", str(tmp_path / "bad")]) == EXIT_CHECK
    assert main(["gauge", "--scenario", recipe, "--refine", "65,33"]) == EXIT_CONFIG


def test_gauge_rejects_sine_gordon(tmp_path):
    doc = {"grid": 17, "nonlinearity": {"kind": "sine_gordon", "q": 1}, "source": 0}
    assert main(["gauge", "--scenario", write(tmp_path / "s.json", doc), "--refine", "17,33"]) == EXIT_CONFIG


def test_nodal_scenario_cannot_be_regridded(tmp_path, recipe):
    main(["scenario", "--scenario", recipe, "--out", str(tmp_path / "s")])
    nodal = str(tmp_path / "s" / "scenario.json")
    assert main(["forward", "--scenario", nodal, "--grid", "33", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert isinstance(build_scenario(json.loads(open(nodal).read()))[0], Scenario)
