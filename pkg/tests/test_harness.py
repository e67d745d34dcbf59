import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from localadam.harness import (
    AppendixDParams,
    ConfigError,
    compare,
    parse_config,
    run_appendix_d,
    run_experiment,
    run_lemma_suite,
    serialize_config,
)
from localadam.harness import cli
from localadam.harness.suites import SKIP, clipped_bias_checks

BASE = """
[experiment]
name = t
seeds = {seeds}
families = {families}
metric = {metric}
jobs = {jobs}
threads = {threads}

[objective]
kind = quadratic
a = 0.1, 0.55, 1.0
x0 = 1.0

[noise]
kind = {noise}
sigma = 1.0

[optimizer]
eta = {eta}
beta1 = 0.9

[clip]
rho = {rho}

[topology]
M = {M}
K = {K}
R = {R}
"""


def make(**kw):
    opts = dict(seeds="0, 1", families="LocalSGDM", metric="f_gap", jobs=1, threads=0,
                noise="gaussian", eta="0.1", rho="inf", M=2, K=3, R=2)
    opts.update(kw)
    return BASE.format(**opts)


def test_empty_seed_list_is_config_error(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text(make(seeds=""))
    assert cli.main(["run", str(path)]) == 2
    assert "experiment.seeds" in capsys.readouterr().err


@pytest.mark.parametrize("bad, field", [
    (dict(eta="-0.1"), "optimizer.eta"),
    (dict(M=0), "topology.M"),
    (dict(families="LocalLion"), "experiment.families"),
    (dict(metric="loss"), "experiment.metric"),
    (dict(seeds="1, 1"), "experiment.seeds"),
    (dict(noise="cauchy"), "noise"),
])
def test_field_level_validation(bad, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(make(**bad))
    assert exc.value.field.startswith(field)


def test_minimal_run_writes_one_file_with_one_row(tmp_path):
    cfg = parse_config(make(seeds="0", M=1, K=1, R=1))
    report = run_experiment(cfg, output_dir=tmp_path)
    files = list((tmp_path / "t" / "trajectories").iterdir())
    assert len(files) == 1
    lines = files[0].read_text().splitlines()
    assert lines[0] == "seed,family,r,k,f_gap,consensus_err,moreau_grad_nsq,grad_nsq"
    assert len(lines) == 2
    assert len(report.rows) == 1
    assert (tmp_path / "t" / "summary.csv").exists()


def test_comparison_rows_have_equal_budget(tmp_path):
    cfg = parse_config(make(families="LocalSGDM, MinibatchSGDM", eta="0.05, 0.2", metric="xhat_gap"))
    rep = compare(cfg, output_dir=tmp_path)
    rows = rep.summary.rows
    assert {(r.grad_calls, r.rounds) for r in rows} == {(2 * 3 * 2, 2)}
    assert rep.rows[0].grad_calls == 12 and rep.rows[0].seeds == 2
    assert (tmp_path / "t" / "comparison.csv").exists()


def test_compare_requires_pair():
    with pytest.raises(ConfigError):
        compare(parse_config(make(families="LocalSGDM, MinibatchAdam")), write=False)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_outputs_identical_across_thread_counts(tmp_path):
    outs = []
    for jobs, threads in ((1, 0), (3, 2), (2, 1)):
        text = make(families="LocalAdam, MinibatchAdam", eta="0.05, 0.2", rho="2.0",
                    noise="student_t", jobs=jobs, threads=threads)
        cfg = parse_config(text)
        # threading options are part of the config file; compare only result files
        run_experiment(cfg, output_dir=tmp_path / f"{jobs}_{threads}")
        tree = _tree(tmp_path / f"{jobs}_{threads}")
        tree.pop("t/config.ini")
        outs.append(tree)
    assert outs[0] == outs[1] == outs[2]
    again = tmp_path / "again"
    run_experiment(parse_config(make(families="LocalAdam, MinibatchAdam", eta="0.05, 0.2",
                                     rho="2.0", noise="student_t")), output_dir=again)
    assert _tree(again) == _tree(tmp_path / "1_0")


def test_diverged_grid_point_is_marked(tmp_path):
    cfg = parse_config(make(eta="0.1, 1e200", families="LocalSGDM"))
    rep = run_experiment(cfg, output_dir=tmp_path)
    bad = [r for r in rep.rows if r.point["eta"] == 1e200][0]
    assert bad.diverged == 2 and math.isinf(bad.median)
    good = [r for r in rep.rows if r.point["eta"] == 0.1][0]
    assert good.selected and not bad.selected


def test_round_trip_examples():
    for text in (make(), make(families="LocalAdam, PlainSGD", eta="0.1, 0.3", rho="inf, 2.5"),
                 make(seeds="3, 9, 4", M="2, 4", K="1, 8")):
        cfg = parse_config(text)
        assert parse_config(serialize_config(cfg)) == cfg
    gm = parse_config(make().replace("a = 0.1, 0.55, 1.0", "").replace("quadratic", "geman_mcclure\nc = 0.5\nd = 3"))
    assert gm.objective.c == (0.5, 0.5, 0.5)
    assert parse_config(serialize_config(gm)) == gm


floats = st.floats(1e-6, 10.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(floats, min_size=1, max_size=4), st.lists(st.integers(0, 10_000), min_size=1,
                                                           max_size=5, unique=True),
       st.integers(1, 8), st.sampled_from(["coordinate", "global", "off"]), floats)
def test_round_trip_property(etas, seeds, M, mode, x0):
    text = make(eta=", ".join(repr(e) for e in etas), seeds=", ".join(map(str, seeds)), M=M)
    text = text.replace("[clip]", f"[clip]\nmode = {mode}").replace("x0 = 1.0", f"x0 = {x0!r}")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_output_dir_env_override(tmp_path, monkeypatch):
    path = tmp_path / "c.ini"
    path.write_text(make(seeds="0", M=1, K=1, R=1))
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "elsewhere"))
    assert cli.main(["run", str(path)]) == 0
    assert (tmp_path / "elsewhere" / "t" / "summary.csv").exists()


def test_internal_error_exit_code(tmp_path, monkeypatch):
    path = tmp_path / "c.ini"
    path.write_text(make(seeds="0"))

    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", str(path)]) == 3


def test_mc_suite_gates_and_zero_noise():
    rows = clipped_bias_checks(0, 100_000)
    skipped = [r for r in rows if r.verdict == SKIP]
    assert len(skipped) == 1 and "rho=2" in skipped[0].params
    zero = [r for r in rows if "s=0 " in r.params]
    assert zero and all(r.estimate == 0.0 for r in zero)
    with pytest.raises(ValueError):
        run_lemma_suite(0, 1000)


def test_mc_suite_passes_at_defaults():
    rep = run_lemma_suite(seed=1, n_draws=100_000)
    assert rep.passed, rep.table()


def test_spike_experiment_zero_noise_and_report():
    rep = run_appendix_d(AppendixDParams(sigma=0.0, n_trials=1000))
    assert rep.unclipped == 0.0 and rep.clipped == 0.0
    rep = run_appendix_d(AppendixDParams(n_trials=20_000, x0=10.0))
    assert rep.T == 4 and rep.spike == 2.0 and rep.analytic == 1 / 16
    assert "clipped failure" in rep.text()


def test_spike_cli_rejects_large_step(capsys):
    assert cli.main(["appendix-d", "--eta", "1.5"]) == 2
    assert cli.main(["appendix-d", "--trials", "2000"]) == 0
    assert "unclipped failure" in capsys.readouterr().out
