import json
import math
import os

import numpy as np
import pytest

import driftbie


def test_fundamental_solution_laplace():
    k = driftbie.Coefficients.laplace()
    v = driftbie.fundamental_solution(k, [1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    assert v == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-14)
    with pytest.raises(driftbie.PoleError):
        driftbie.fundamental_solution(k, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def test_non_spd_rejected():
    with pytest.raises(driftbie.InputError):
        driftbie.Coefficients(np.diag([1.0, -1.0, 1.0]), [0.0, 0.0, 0.0])


def test_mesh_and_single_layer():
    mesh = driftbie.build_mesh("sphere", level=2)
    assert mesh.num_panels == 320
    assert mesh.nodes.shape == (320, 3)
    assert mesh.total_area == pytest.approx(4.0 * math.pi, rel=0.05)
    k = driftbie.Coefficients.laplace()
    S = driftbie.single_layer_matrix(mesh, k)
    assert S.shape == (320, 320)
    s1 = S @ np.ones(320)
    assert np.max(np.abs(s1 - 1.0)) < 5e-2


def test_regularity_solve_reproduces_linear_data():
    mesh = driftbie.build_mesh("sphere", level=2)
    k = driftbie.Coefficients.laplace()
    sol = driftbie.solve_regularity(mesh, k, "coordinate", [2])
    x = np.array([[0.0, 0.0, 0.3], [0.2, -0.1, 0.0]])
    assert np.max(np.abs(sol.evaluate(x) - x[:, 2])) < 1e-2


def test_harmonic_measure_centre_mass():
    mesh = driftbie.build_mesh("sphere", level=1)
    k = driftbie.Coefficients.laplace()
    est = driftbie.estimate_measure(mesh, k, [0.0, 0.0, 0.0], 2000, 7)
    p = np.asarray(est["probabilities"])
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    again = driftbie.estimate_measure(mesh, k, [0.0, 0.0, 0.0], 2000, 7)
    assert np.array_equal(p, np.asarray(again["probabilities"]))


def test_symmetrize_constant_drift():
    C0 = np.zeros((3, 3))
    C1 = np.zeros((3, 3))
    C1[0, 1], C1[1, 0] = 0.05, -0.05
    r = driftbie.symmetrize(np.eye(3), [0.0, 0.0, 0.0], [C0, C1, C0])
    assert np.allclose(r["b_tilde"], [0.05, 0.0, 0.0], atol=1e-14)
    assert r["weak_form_residual"] < 1e-8


def test_run_config_writes_summary(tmp_path):
    cfg = {
        "command": "solve-regularity",
        "domain": {"kind": "sphere", "level": 2},
        "data": {"family": "coordinate", "params": [0]},
    }
    code, message, files = driftbie.run_config(json.dumps(cfg), str(tmp_path))
    assert code == 0, message
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema"] == 1
    assert "summary.json" in files


def test_bad_config():
    with pytest.raises(driftbie.InputError):
        driftbie.run_config("{\"command\": \"nope\"}")
