import json

import pandas as pd
import pytest

from app.cli import EXIT_CONFIG, EXIT_OK, build_parser, main


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture
def experiment_config(tmp_path):
    return _write(tmp_path / "experiment.json", {
        "oracle": {"family": "linear", "group_sizes": [2, 3], "coeffs": "random"},
        "grid": {"n_high": [10], "n_low": [30]},
        "methods": ["c2fa", "lime"],
        "seeds": [0],
        "n_samples": 1,
    })


@pytest.fixture
def scaling_config(tmp_path):
    def factory(values):
        return _write(tmp_path / "scaling.json", {
            "oracle": {"family": "linear", "group_sizes": [3, 3], "coeffs": "uniform"},
            "values": values,
            "n_high": 10,
            "repeats": 1,
        })
    return factory


def test_parser_accepts_seeds():
    args = build_parser().parse_args(["run", "config.json", "--seeds", "0", "1", "--quiet"])
    assert args.seeds == [0, 1]
    assert args.quiet


def test_run(experiment_config, tmp_path):
    out = tmp_path / "out"
    assert main(["--quiet", "run", str(experiment_config), "--out-dir", str(out)]) == EXIT_OK
    assert (out / "results.csv").exists()
    assert (out / "aggregate.json").exists()


def test_seed_override(experiment_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(experiment_config), "--out-dir", str(out), "--seeds", "4", "5", "--quiet"]) == EXIT_OK
    frame = pd.read_csv(out / "results.csv")
    assert sorted(frame["seed"].unique()) == [4, 5]


def test_invalid_config_exit_code(tmp_path):
    bad = _write(tmp_path / "bad.json", {"grid": {"n_low": [-5]}})
    assert main(["--quiet", "run", str(bad), "--out-dir", str(tmp_path / "out")]) == EXIT_CONFIG
    assert not (tmp_path / "out" / "results.csv").exists()


def test_missing_config_exit_code(tmp_path):
    assert main(["--quiet", "scale", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_scale_single_point(scaling_config, tmp_path):
    out = tmp_path / "scaling"
    assert main(["--quiet", "scale", str(scaling_config([40])), "--out-dir", str(out)]) == EXIT_OK
    frame = pd.read_csv(out / "scaling.csv")
    assert len(frame) == 1
    assert frame.loc[0, "oracle_calls"] == 10 + 40
    fit = json.loads((out / "scaling_fit.json").read_text())
    assert fit["c2fa"] is None and fit["lime"] is None


def test_scale_sweep_fits_a_line(scaling_config, tmp_path):
    out = tmp_path / "scaling"
    assert main(["--quiet", "scale", str(scaling_config([20, 40, 80])), "--out-dir", str(out)]) == EXIT_OK
    frame = pd.read_csv(out / "scaling.csv")
    assert list(frame["n_low"]) == [20, 40, 80]
    assert list(frame["oracle_calls"]) == [30, 50, 90]
    fit = json.loads((out / "scaling_fit.json").read_text())
    assert set(fit["c2fa"]) == {"slope", "intercept", "r2"}


def test_oracle_that_cannot_be_built_is_a_config_error(tmp_path):
    bad = _write(tmp_path / "bad.json", {
        "oracle": {"family": "linear", "group_sizes": [2, 2], "coeffs": [0.9, 0.9, 0.9]},
    })
    assert main(["--quiet", "run", str(bad), "--out-dir", str(tmp_path / "out")]) == EXIT_CONFIG
    assert not (tmp_path / "out" / "results.csv").exists()
