import subprocess
import sys

import pytest

from skycat import io as sio
from skycat.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_IO, EXIT_OK, main


@pytest.fixture
def synth_file(tmp_path):
    obs, truth = tmp_path / "obs.txt", tmp_path / "truth.txt"
    args = ["synth", "--clusters", "20", "--members", "10", "--radius", "0.02", "--seed", "4"]
    assert main(args + ["--output", str(obs), "--truth", str(truth)]) == EXIT_OK
    return obs, truth


def _cluster(tmp_path, obs, *extra):
    cat, asg = tmp_path / "cat.txt", tmp_path / "asg.txt"
    code = main(["cluster", "--input", str(obs), "--catalog", str(cat), "--assignments", str(asg), *extra])
    return code, cat, asg


def test_cluster_quality_crossmatch(tmp_path, synth_file, capsys):
    obs, truth = synth_file
    code, cat, asg = _cluster(tmp_path, obs, "--report", str(tmp_path / "r.json"))
    assert code == EXIT_OK
    # a far Gaussian tail member may form its own cluster
    assert 20 <= len(sio.read_catalog(cat)) <= 22
    assert len(sio.read_assignments(asg)) == len(sio.read_observations(obs))
    capsys.readouterr()
    assert main(["quality", "--input", str(obs), "--catalog", str(cat), "--assignments", str(asg), "--truth", str(truth)]) == 0
    out = capsys.readouterr().out
    assert "mean_member_distance_arcsec=" in out and "truth_matched=20" in out
    hist = tmp_path / "h.csv"
    assert main(["crossmatch", str(truth), str(cat), "--histogram", str(hist)]) == 0
    assert hist.read_text().startswith("0.000")


def test_invariance_subcommand(tmp_path, synth_file, capsys):
    obs, _ = synth_file
    assert main(["invariance", "--input", str(obs), "--task-k-a", "10", "--task-k-b", "14"]) == 0
    assert "identical=" in capsys.readouterr().out


def test_bad_config_exit_2_no_files(tmp_path, synth_file):
    obs, _ = synth_file
    ini = tmp_path / "bad.ini"
    ini.write_text("[parallelOptions]\nbigPixelNsideExp = 20\noverlapPixelNsideExp = 18\n")
    code, cat, asg = _cluster(tmp_path, obs, "--config", str(ini))
    assert code == EXIT_CONFIG
    assert not cat.exists() and not asg.exists()


def test_bad_threads_exit_2(tmp_path, synth_file):
    code, _, _ = _cluster(tmp_path, synth_file[0], "--threads", "0")
    assert code == EXIT_CONFIG


def test_bad_input_exit_3(tmp_path):
    src = tmp_path / "obs.txt"
    src.write_text("10,95,1,1\n")
    code, cat, _ = _cluster(tmp_path, src)
    assert code == EXIT_INPUT and not cat.exists()


def test_missing_input_exit_4(tmp_path):
    code, _, _ = _cluster(tmp_path, tmp_path / "nope.txt")
    assert code == EXIT_IO


def test_unwritable_output_exit_4(tmp_path, synth_file):
    obs, _ = synth_file
    code = main(["cluster", "--input", str(obs), "--catalog", str(tmp_path / "no" / "c.txt"), "--assignments", str(tmp_path / "a.txt")])
    assert code == EXIT_IO


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "skycat", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "cluster" in proc.stdout
