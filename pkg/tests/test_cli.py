import json

import numpy as np
import pytest

from so3denoise.cli import main
from so3denoise.geom import is_rotation, proper_svd
from so3denoise.estimators import read_sweep_csv
from so3denoise.trajectory import load_trajectory, save_trajectory, synth_trajectory


@pytest.fixture(scope="module")
def traj_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.xyz"
    save_trajectory(synth_trajectory(8, 6, 0.1, seed=21), path)
    return str(path)


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_align_outputs_rotation_and_metrics(capsys, traj_path):
    code, payload = run_json(capsys, ["align", traj_path, "--frame-a", "0", "--frame-b", "1"])
    assert code == 0
    r = np.array(payload["rotation"])
    assert is_rotation(r, tol=1e-10)
    assert payload["aligned_rmsd"] <= payload["rmsd"] + 1e-12
    assert payload["degenerate"] is False


def test_moment_orders_and_oracle_errors(capsys, traj_path):
    code, payload = run_json(
        capsys, ["moment", "--input", traj_path, "--frame", "0", "--sigma", "0.1", "--order", "1"]
    )
    assert code == 0
    assert np.array(payload["moment"]).shape == (3, 3)

    code, payload = run_json(
        capsys,
        ["moment", "--input", traj_path, "--frame", "0", "--sigma", "0.1", "--order", "oracle"],
    )
    assert code == 0
    errs = payload["per_order_max_abs_error"]
    assert errs["order2"] <= errs["order1"] <= errs["order0"]


def test_moment_uniform_posterior_limits(capsys, traj_path):
    # extremely diffuse posterior: entries vanish at the tolerance scale
    tol = 1e-6
    code, payload = run_json(
        capsys,
        ["moment", "--input", traj_path, "--sigma", "1e4", "--order", "oracle", "--tol", str(tol)],
    )
    assert code == 0
    assert np.max(np.abs(payload["moment"])) < tol * 10
    # at sigma = 10*scale the posterior is diffuse but the mean is only
    # O(s1 / (3 sigma^2)); assert that derivable linear-response bound
    traj = load_trajectory(traj_path)
    x = traj.frames[0]
    s1 = proper_svd(x.T @ x).s[0]
    code, payload = run_json(
        capsys, ["moment", "--input", traj_path, "--sigma", "10", "--order", "oracle"]
    )
    assert code == 0
    assert np.max(np.abs(payload["moment"])) < s1 / (2 * 100.0)


def test_sweep_byte_identical_and_parseable(capsys, tmp_path, traj_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["sweep", "--input", traj_path, "--frame", "0", "--sigmas", "0.05,0.1",
            "--n-noise", "4", "--seed", "9"]
    code, payload = run_json(capsys, argv + ["--out", str(out_a)])
    assert code == 0 and payload["records"] == 8
    code, _ = run_json(capsys, argv + ["--out", str(out_b)])
    assert code == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    assert len(read_sweep_csv(out_a)) == 8


def test_train_and_sample_round_trip(capsys, tmp_path, traj_path):
    metrics = tmp_path / "metrics.csv"
    model = tmp_path / "model.bin"
    code, payload = run_json(
        capsys,
        ["train", "--input", traj_path, "--sigma", "0.5", "--estimator", "order0",
         "--steps", "20", "--mode", "single-frame", "--seed", "2",
         "--out-metrics", str(metrics), "--out-model", str(model)],
    )
    assert code == 0
    assert payload["status"] == "completed"
    assert metrics.read_text().splitlines()[0] == "step,loss,rmsd,aligned_rmsd,n_excluded"

    sample_out = tmp_path / "sample.xyz"
    code, payload = run_json(
        capsys,
        ["sample", "--model", str(model), "--schedule", "1.0,0.5,0.25,0.1,0",
         "--seed", "4", "--out", str(sample_out)],
    )
    assert code == 0
    sampled = load_trajectory(sample_out)
    assert sampled.n_points == 8
    assert sampled.n_frames == 1


def test_unknown_flag_exits_2(traj_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["align", traj_path, "--frame-a", "0", "--frame-b", "1", "--bogus"])
    assert excinfo.value.code == 2


def test_runtime_error_exits_1(capsys):
    code = main(["align", "/nonexistent/file.xyz", "--frame-a", "0", "--frame-b", "1"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_selftest_fast_passes(capsys):
    assert main(["selftest", "--fast"]) == 0
    out = capsys.readouterr().out
    assert "ok   grid-moments" in out
    assert "FAIL" not in out
