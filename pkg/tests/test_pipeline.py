import io
import os

import numpy as np
import pytest

from skycat import io as sio
from skycat.config import EngineConfig
from skycat.errors import TaskFailed
from skycat.pipeline import PHASES, RunReport, measure_peak_memory, parallel_map_tasks, run_in_memory, run_pipeline
from skycat.quality import generate_synthetic


@pytest.fixture(scope="module")
def synth():
    obs, truth = generate_synthetic(200, 30, 0.25, 5.0, (45.0, 30.0), 0.1, seed=3, fixed_members=True)
    return obs, truth


def _write_obs(tmp_path, obs):
    path = tmp_path / "obs.txt"
    sio.write_observations(obs, path)
    return path


def test_empty_input(tmp_path):
    src = tmp_path / "obs.txt"
    src.write_text("")
    cat, asg = tmp_path / "cat.txt", tmp_path / "asg.txt"
    rep = run_pipeline(EngineConfig(), src, cat, asg, log_stream=io.StringIO())
    assert cat.read_text() == "" and asg.read_text() == ""
    assert rep.clusters == 0 and rep.observations == 0


@pytest.mark.parametrize("strategy", ["incremental", "kmeans"])
def test_members_conserved(synth, strategy):
    obs, _ = synth
    cat, asg, rep = run_in_memory(obs, EngineConfig(strategy=strategy), seed=1)
    assert len(asg) == len(obs)
    keys = sorted((r.image_id, r.star_no) for r in asg.records())
    assert keys == sorted((int(i), int(s)) for i, s in zip(obs.image_id, obs.star_no))
    assert rep.clusters == len(cat) > 0


@pytest.mark.parametrize("strategy", ["incremental", "kmeans"])
def test_worker_count_does_not_change_output(tmp_path, synth, strategy):
    obs, _ = synth
    src = _write_obs(tmp_path, obs)
    outputs = []
    for threads in (1, 8):
        cat, asg = tmp_path / f"cat{threads}.txt", tmp_path / f"asg{threads}.txt"
        run_pipeline(EngineConfig(strategy=strategy, threads=threads), src, cat, asg, workers=threads, log_stream=io.StringIO())
        outputs.append((cat.read_bytes(), asg.read_bytes()))
    assert outputs[0] == outputs[1]


def test_seed_changes_nothing_for_incremental(synth):
    obs, _ = synth
    a = run_in_memory(obs, EngineConfig(), seed=0)[0]
    b = run_in_memory(obs, EngineConfig(), seed=99)[0]
    np.testing.assert_array_equal(a.catalog_id, b.catalog_id)


def test_report_lines_and_json(tmp_path, synth):
    obs, _ = synth
    src = _write_obs(tmp_path, obs)
    log = io.StringIO()
    rep = run_pipeline(
        EngineConfig(), src, tmp_path / "c.txt", tmp_path / "a.txt", report_path=tmp_path / "r.json", measure_memory=True, log_stream=log
    )
    text = log.getvalue()
    for p in PHASES:
        assert f"phase={p} seconds=" in text
    assert f"clusters={rep.clusters}" in text
    assert rep.peak_memory_bytes > 0
    assert '"clusters"' in (tmp_path / "r.json").read_text()
    assert 0.0 <= rep.cluster_share <= 1.0


def test_run_report_defaults():
    rep = RunReport()
    assert rep.total_seconds == 0.0 and rep.cluster_share == 0.0
    assert rep.lines()[0] == "phase=read seconds=0.000000"


def test_input_error_leaves_no_output(tmp_path):
    src = tmp_path / "obs.txt"
    src.write_text("1.0,2.0,1,1\nnot a row\n")
    cat, asg = tmp_path / "cat.txt", tmp_path / "asg.txt"
    with pytest.raises(sio.InputError):
        run_pipeline(EngineConfig(), src, cat, asg, log_stream=io.StringIO())
    assert not cat.exists() and not asg.exists()


def test_parallel_map_single_worker():
    assert parallel_map_tasks([3, 1, 2], 1, lambda t: t * 10) == [10, 20, 30]


def test_parallel_map_ordered_across_workers():
    tasks = list(range(100))[::-1]
    out = parallel_map_tasks(tasks, 8, lambda t: (t, os.getpid()))
    assert [t for t, _ in out] == list(range(100))


def test_parallel_map_failure_names_task():
    def f(t):
        if t == 37:
            raise ZeroDivisionError("boom")
        return t

    with pytest.raises(TaskFailed) as exc:
        parallel_map_tasks(range(100), 4, f)
    assert exc.value.pixel == 37
    assert "boom" in str(exc.value)


def test_parallel_map_rejects_zero_workers():
    with pytest.raises(ValueError):
        parallel_map_tasks([1], 0, lambda t: t)


def test_measure_peak_memory():
    result, peak = measure_peak_memory(np.zeros, 1 << 20)
    assert len(result) == 1 << 20
    assert peak >= 8 << 20
