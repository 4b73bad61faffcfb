import math

import numpy as np
import pytest

from flowup.errors import InvalidArgumentError
from flowup.io import read_xyz
from flowup.toy import (DEMOS, SNAPSHOT_TIMES, ToyConfig, dispersion, run_config, run_toy, steps_to_match,
                        training_pairs)


def quick(**kw):
    base = dict(n_points=32, pool=3, iterations=4, batch=2, eval_draws=1, steps=(1, 5), ddpm_train_steps=10)
    return ToyConfig(**(base | kw))


def test_steps_to_match():
    row = {1: 0.9, 5: 0.4, 10: 0.2}
    assert steps_to_match(row, 0.5) == 5
    assert steps_to_match(row, 0.2) == 10
    assert steps_to_match(row, 0.1) == math.inf


def test_dispersion_zero_on_target(rng):
    pts = rng.normal(size=(30, 3))
    assert dispersion(pts, pts) == 0.0


def test_variant_configs():
    tc = quick()
    assert run_config(tc, "aligned").transport.align
    assert not run_config(tc, "unaligned").transport.align
    ddpm = run_config(tc, "ddpm")
    assert ddpm.run.method == "ddpm" and ddpm.densify.gamma == 1 and ddpm.densify.eta == 0
    with pytest.raises(InvalidArgumentError):
        run_config(tc, "gan")


@pytest.mark.parametrize("kw", [dict(demo="cube"), dict(snapshot_steps=10), dict(n_points=4)])
def test_bad_toy_config(kw):
    with pytest.raises(InvalidArgumentError):
        quick(**kw)


def test_aligned_pairs_lower_cost():
    tc = quick()
    cost = lambda pairs: sum(np.linalg.norm(a - b, axis=1).sum() for a, b in pairs)
    aligned, raw = training_pairs(tc, True), training_pairs(tc, False)
    for (a0, _), (b0, _) in zip(aligned, raw):
        np.testing.assert_array_equal(a0, b0)
    assert cost(aligned) < cost(raw)


@pytest.mark.parametrize("demo", sorted(DEMOS))
def test_run_toy_outputs(tmp_path, demo):
    report = run_toy(quick(demo=demo), out_dir=tmp_path)
    assert set(report.table) == {"aligned", "unaligned", "ddpm"}
    assert all(set(row) == {1, 5} for row in report.table.values())
    assert len(report.loss_curves["aligned"]) == 4
    assert [t for t, _, _ in report.trajectory["aligned"]] == pytest.approx(list(SNAPSHOT_TIMES))
    for t in SNAPSHOT_TIMES:
        assert read_xyz(tmp_path / f"{demo}_aligned_t{t:.2f}.xyz").shape == (32, 3)
    tsv = (tmp_path / f"{demo}_convergence.tsv").read_text().splitlines()
    assert tsv[0] == "method\t1\t5" and len(tsv) == 4
    assert "ddpm_steps_to_match" in (tmp_path / f"{demo}_report.txt").read_text()


def test_trajectory_starts_at_source():
    report = run_toy(quick(), variants=("aligned",))
    t0_cd = report.trajectory["aligned"][0][1]
    assert report.trajectory["aligned"][0][0] == 0.0 and t0_cd > 0


def test_run_toy_is_deterministic():
    a = run_toy(quick(), variants=("aligned", "ddpm"))
    b = run_toy(quick(), variants=("aligned", "ddpm"))
    assert a.table == b.table and a.final_loss == b.final_loss
