import math
import random

import numpy as np
import pytest

from bmmp.bench import (
    ExperimentConfig,
    GridPoint,
    MetricsSummary,
    TrialRecord,
    aggregate,
    emit_plot_data,
    make_grid,
    preset,
    read_records,
    read_summaries,
    run_experiment,
    skipped_cells,
    trial_seed,
    wilson_half_width,
    write_records,
    write_summaries,
)


def rec(solver="bmmp", k=10, ok=True, err=0.0, trial=0, snr=math.inf):
    return TrialRecord("phase_transition", solver, 32, 64, k, snr, trial, 1000 + trial, ok, err, 1.0, 3, 0.01)


def test_aggregate_rate():
    rs = [rec(ok=i < 7, err=float(i), trial=i) for i in range(10)]
    (s,) = aggregate(rs)
    assert s.recovery_rate == 0.7 and s.successes == 7 and s.trial_count == 10
    assert s.mse == pytest.approx(4.5)
    assert s.median_squared_error == pytest.approx(4.5)


def test_wilson_single_trial():
    (s,) = aggregate([rec(ok=True)])
    z = 1.959963984540054
    # Wilson half-width at p = 1, n = 1
    expect = (z / (1 + z * z)) * math.sqrt(z * z / 4)
    assert s.recovery_rate == 1.0
    assert s.recovery_rate_ci95 == pytest.approx(expect)
    assert wilson_half_width(0, 1) == pytest.approx(expect)
    assert math.isnan(wilson_half_width(0, 0))


def test_wilson_against_formula():
    z = 1.959963984540054
    for succ, n in [(7, 10), (50, 100), (99, 100)]:
        p = succ / n
        expect = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        assert wilson_half_width(succ, n) == pytest.approx(expect, rel=1e-14)


def test_aggregate_order_independent():
    rs = [rec(solver=s, k=k, ok=(t + k) % 3 == 0, err=t * 0.1, trial=t) for s in ("omp", "bmmp") for k in (8, 12) for t in range(5)]
    shuffled = rs[:]
    random.Random(0).shuffle(shuffled)
    assert aggregate(rs) == aggregate(shuffled)
    assert aggregate([]) == []
    assert [(s.solver, s.k) for s in aggregate(rs)] == [("bmmp", 8), ("bmmp", 12), ("omp", 8), ("omp", 12)]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_roundtrip(tmp_path, fmt):
    rs = [rec(ok=i % 2 == 0, err=1 / 3 + i, trial=i, snr=25.0 if i else math.inf) for i in range(4)]
    path = tmp_path / f"r.{fmt}"
    write_records(path, rs, fmt, timing=True)
    assert read_records(path) == rs
    ss = aggregate(rs)
    spath = tmp_path / f"s.{fmt}"
    write_summaries(spath, ss, fmt, timing=True)
    assert read_summaries(spath) == ss


def test_csv_without_timing(tmp_path):
    path = tmp_path / "r.csv"
    write_records(path, [rec()])
    header = path.read_text().splitlines()[0]
    assert "wall_time" not in header
    back = read_records(path)[0]
    assert back.wall_time == 0.0 and back.exact_support_recovery is True
    assert "inf" in path.read_text().splitlines()[1]


def test_empty_writes_header(tmp_path):
    path = tmp_path / "r.csv"
    write_records(path, [])
    assert path.read_text().count("\n") == 1
    assert read_records(path) == []


def test_overwrite_guard(tmp_path):
    path = tmp_path / "r.csv"
    write_records(path, [rec()])
    with pytest.raises(FileExistsError):
        write_records(path, [rec()])
    write_records(path, [rec(), rec(trial=1)], overwrite=True)
    assert len(read_records(path)) == 2


def _summary(solver, k, rate):
    return MetricsSummary(solver, 32, 64, k, math.inf, 10, int(rate * 10), rate, 0.1, 0.0, 0.0)


def test_plot_data_shape():
    ss = [_summary(s, k, 0.5) for s in ("a", "b") for k in (4, 8, 12)]
    text = emit_plot_data(ss, "k")
    lines = text.splitlines()
    assert lines[0] == "# k a b"
    assert len(lines) == 4
    assert all(len(line.split()) == 3 for line in lines[1:])


def test_plot_data_skipped_is_nan():
    ss = [_summary("a", k, 1.0) for k in (4, 8)] + [_summary("b", 4, 0.5)]
    text = emit_plot_data(ss, "k", solvers=["a", "b"], skipped={("b", 8.0)})
    assert text.splitlines()[2].split() == ["8", "1.0", "nan"]


def test_plot_data_missing_points():
    ss = [_summary("a", k, 1.0) for k in (4, 8)] + [_summary("b", 4, 0.5)]
    with pytest.raises(ValueError, match="b@k=8"):
        emit_plot_data(ss, "k")


def test_plot_data_file(tmp_path):
    ss = [_summary("a", 4, 1.0)]
    path = tmp_path / "p.dat"
    emit_plot_data(ss, "k", path=path)
    with pytest.raises(FileExistsError):
        emit_plot_data(ss, "k", path=path)


def test_trial_seed_distinct():
    p = GridPoint(32, 64, 10)
    seeds = {trial_seed(0, p, t) for t in range(100)}
    assert len(seeds) == 100
    assert trial_seed(0, p, 3) == trial_seed(0, p, 3)
    assert trial_seed(0, p, 3) != trial_seed(1, p, 3)
    assert trial_seed(0, p, 3) != trial_seed(0, GridPoint(32, 64, 10, 25.0), 3)


def small_config(**kw):
    base = dict(experiment="phase_transition", grid=make_grid([24], [4, 8]), trials=3, solvers=("bmmp", "omp", "cosamp"), seed_base=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_single_record():
    run = run_experiment(small_config(grid=(GridPoint(24, 48, 4),), trials=1, solvers=("omp",)))
    assert len(run.records) == 1 and not run.skipped


def test_run_deterministic_and_skips():
    cfg = small_config()
    a, b = run_experiment(cfg), run_experiment(cfg)
    strip = lambda rs: [(r.solver, r.k, r.trial, r.seed, r.exact_support_recovery, r.squared_error) for r in rs]
    assert strip(a.records) == strip(b.records)
    # cosamp needs 3k <= m, so at m = 20 only k = 8 is skipped
    run = run_experiment(small_config(grid=make_grid([20], [4, 8])))
    assert {(s.solver, s.k) for s in run.skipped} == {("cosamp", 8)}
    assert skipped_cells(run, "k") == {("cosamp", 8.0)}
    text = emit_plot_data(aggregate(run.records), "k", solvers=["bmmp", "omp", "cosamp"], skipped=skipped_cells(run, "k"))
    assert text.splitlines()[-1].endswith("nan")


def test_run_parallel_matches_serial():
    cfg = small_config(trials=2)
    strip = lambda rs: [(r.solver, r.k, r.trial, r.squared_error) for r in rs]
    assert strip(run_experiment(cfg, jobs=2).records) == strip(run_experiment(cfg).records)


def test_same_instance_across_solvers():
    run = run_experiment(small_config(trials=2))
    by_trial = {}
    for r in run.records:
        by_trial.setdefault((r.k, r.trial), set()).add((r.seed, r.signal_energy))
    assert all(len(v) == 1 for v in by_trial.values())


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(experiment="nope")
    with pytest.raises(ValueError):
        small_config(trials=0)
    with pytest.raises(ValueError):
        small_config(grid=())


def test_presets():
    cfg = preset("fig3", scale=0.5, trials=100)
    assert [(p.m, p.n, p.k) for p in cfg.grid] == [(m, 2 * m, int(m / 1.8)) for m in (16, 32, 48, 64, 80, 96, 112, 128)]
    assert cfg.x_axis == "m"
    full = preset("fig2a")
    assert {p.m for p in full.grid} == {128} and [p.k for p in full.grid] == list(range(36, 65, 4))
    c = preset("fig2c", scale=1.0)
    assert [p.snr_db for p in c.grid] == [20.0, 25.0, 30.0, 35.0, 40.0]
    assert c.prior.a == 0.1 and c.metric == "mse"
    assert preset("fig2d").solvers == ("bmmp", "bmmp-u", "bmmp-um", "bmmp-ume")
    with pytest.raises(ValueError):
        preset("fig9")
    assert np.all([p.k < p.m for p in preset("fig2a", scale=0.25).grid])


def test_bookkeeping_and_exact_recovery_consistency():
    cfg = small_config(grid=make_grid([20], [4, 6, 8]), trials=4)
    run = run_experiment(cfg)
    assert len(run.records) + len(run.skipped) == 4 * 3 * 3
    for r in run.records:
        assert r.exact_support_recovery == (math.sqrt(r.squared_error) <= 1e-6 * math.sqrt(r.signal_energy))
