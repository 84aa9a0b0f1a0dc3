import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wasserstein_distance

from pivegan import evaluation as ev
from pivegan.autodiff import MlpNet
from pivegan.exceptions import CoordMismatch, DegenerateInput, EmptyEnsemble, EmptySample, ZeroReference
from pivegan.randproc import GpSpec, PathMatrix
from pivegan.refsolver import Grid1D, mc_reference
from pivegan.config import preset

samples = st.lists(st.floats(-100, 100), min_size=1, max_size=30)


def test_w1_cases():
    assert ev.w1_1d([0, 1], [1, 2]) == 1.0
    rng = np.random.default_rng(0)
    a = rng.standard_normal(50)
    assert ev.w1_1d(a, a + 0.7) == pytest.approx(0.7, abs=1e-14)
    assert ev.w1_1d(a, a[::-1]) == 0.0
    with pytest.raises(EmptySample):
        ev.w1_1d([], [1.0])


@settings(max_examples=60, deadline=None)
@given(samples, samples, samples)
def test_w1_metric_axioms(a, b, c):
    ab = ev.w1_1d(a, b)
    assert ab == pytest.approx(ev.w1_1d(b, a), abs=1e-9)
    assert ab >= 0
    assert ab <= ev.w1_1d(a, c) + ev.w1_1d(c, b) + 1e-9


@settings(max_examples=60, deadline=None)
@given(samples, samples)
def test_w1_matches_scipy(a, b):
    assert ev.w1_1d(a, b) == pytest.approx(wasserstein_distance(a, b), rel=1e-9, abs=1e-9)


def test_w1_large_unequal_sizes_fall_back():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(997), rng.standard_normal(1009)
    assert ev.w1_1d(a, b) == pytest.approx(wasserstein_distance(a, b), rel=1e-12)


def test_path_w1():
    x = np.linspace(-1, 1, 4)
    rng = np.random.default_rng(2)
    ref = PathMatrix(x, rng.standard_normal((20, 4)))
    assert ev.path_w1(ref, ref) == 0.0
    assert ev.path_w1(PathMatrix(x, ref.values + 0.5), ref) == pytest.approx(0.5, abs=1e-14)
    # hand case: coordinate distances 1 and 0
    g = PathMatrix([0.0, 1.0], np.array([[1.0, 0.0], [2.0, 1.0]]))
    r = PathMatrix([0.0, 1.0], np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert ev.path_w1(g, r) == 0.5
    with pytest.raises(CoordMismatch):
        ev.path_w1(PathMatrix(x + 0.1, ref.values), ref)


def test_pca_cases():
    assert np.all(ev.pca_eigs(np.zeros((5, 3))) == 0)
    assert ev.eig_row(ev.pca_eigs([[1.0, 0.0], [-1.0, 0.0]]), 2).tolist() == [2.0, 0.0]
    with pytest.raises(DegenerateInput):
        ev.pca_eigs(np.ones((1, 3)))


def test_pca_trace_and_permutation():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 6)) @ rng.standard_normal((6, 6))
    e = ev.pca_eigs(X)
    assert e.sum() == pytest.approx(np.trace(np.cov(X.T)), rel=1e-12)
    assert np.all(np.diff(e) <= 0)
    assert np.allclose(ev.pca_eigs(X[rng.permutation(40)]), e, rtol=1e-12)


def test_eig_row_pads():
    r = ev.eig_row([3.0, 1.0])
    assert r.shape == (ev.N_EIGS,) and r[:2].tolist() == [3.0, 1.0] and np.all(r[2:] == 0)


def test_relative_l2():
    ref = np.array([3.0, 4.0])
    assert ev.relative_l2(ref, ref) == 0.0
    assert ev.relative_l2(1.1 * ref, ref) == pytest.approx(0.1, abs=1e-15)
    assert ev.relative_l2([0.0, 1.0], [1.0, 0.0]) == pytest.approx(np.sqrt(2), abs=1e-15)
    assert ev.relative_l2(8 * np.array([1.0, 2.0]), 8 * np.array([2.0, 2.0])) == ev.relative_l2([1.0, 2.0], [2.0, 2.0])
    with pytest.raises(ZeroReference):
        ev.relative_l2([1.0], [0.0])


def _const(c):
    return lambda proc, coords, z: np.full((len(z), len(coords)), c)


def _first_latent(proc, coords, z):
    return np.repeat(z[:, :1], len(coords), axis=1)


def test_ensemble_constant_and_duplicates():
    x = np.linspace(-1, 1, 5)
    s = ev.ensemble_stats([_const(2.5)], x, 10, 3, np.random.default_rng(0))
    assert np.all(s.mean == 2.5) and np.all(s.std == 0)
    net = MlpNet((4, 3, 1))
    net.biases[-1][...] = 1.25
    ck = {"u": net}
    one = ev.ensemble_stats([ck], x, 7, 3, np.random.default_rng(1))
    two = ev.ensemble_stats([ck, ck], x, 7, 3, np.random.default_rng(1))
    assert np.array_equal(one.mean, two.mean) and np.array_equal(one.mean, np.full(5, 1.25))
    with pytest.raises(EmptyEnsemble):
        ev.ensemble_stats([], x, 5, 2, np.random.default_rng(0))


def test_ensemble_latent_passthrough():
    s = ev.ensemble_stats([_first_latent], [0.0, 0.5], 1000, 2, np.random.default_rng(4))
    assert np.all(np.abs(s.mean) <= 4 / np.sqrt(1000))
    assert np.allclose(s.std, 1.0, rtol=0.05)


def _small_reference():
    cfg = preset("forward")
    return mc_reference(cfg.k_process, cfg.f_proc, Grid1D(m=11), 30, np.random.default_rng(0))


def test_replay_oracle_scores_zero():
    ref = _small_reference()

    def replay(proc, coords, z):
        return {"u": ref.paths, "k": ref.k_paths}[proc].values[: len(z)]

    rep = ev.evaluate_run([replay, replay], ref, "forward", 4, np.random.default_rng(0), n_noise=30)
    assert rep.w1_mean == 0.0
    assert rep.rel_err_mean_u == pytest.approx(0.0, abs=1e-14)
    assert rep.rel_err_std_k == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(rep.eigenvalues, ev.eig_row(ev.pca_eigs(ref.paths)), rtol=1e-12)


def test_zero_generator_error_is_one():
    ref = _small_reference()
    rep = ev.evaluate_run([_const(0.0)], ref, "forward", 4, np.random.default_rng(0), n_noise=5)
    assert rep.rel_err_mean_u == 1.0 and rep.rel_err_std_u == 1.0


def test_process_mode_report():
    x = np.linspace(-1, 1, 6)
    ref = GpSpec().sample(x, 50, np.random.default_rng(0))
    rep = ev.evaluate_run([_const(0.0)], ref, "process", 2, np.random.default_rng(0), n_noise=50)
    assert rep.rel_err_mean_u is None
    assert rep.w1_mean == pytest.approx(np.mean([ev.w1_1d(np.zeros(50), ref.values[:, i]) for i in range(6)]))


def test_aggregate_and_round_trip(tmp_path):
    ref = _small_reference()
    rep = ev.evaluate_run([_const(0.1)], ref, "forward", 4, np.random.default_rng(0), n_noise=5, meta={"seed": 1})
    agg = ev.aggregate([rep])
    assert agg["w1_mean"]["std"] == 0.0 and agg["n_seeds"] == 1
    with pytest.raises(EmptyEnsemble):
        ev.aggregate([])
    (tmp_path / "r.json").write_text(rep.to_json())
    assert ev.read_report(tmp_path / "r.json") == ev.EvalReport.from_dict(json.loads(rep.to_json()))
    assert ev.read_report(tmp_path / "r.json").w1_mean == rep.w1_mean


def test_eig_csv_has_ten_columns(tmp_path):
    ev.write_eig_csv([[1.0, 0.5], np.arange(12.0)[::-1]], tmp_path / "e.csv")
    rows = [line.split(",") for line in (tmp_path / "e.csv").read_text().splitlines()]
    assert all(len(r) == 10 for r in rows) and len(rows) == 3


def test_field_csv(tmp_path):
    ref = _small_reference()
    rep = ev.evaluate_run([_const(0.0)], ref, "forward", 4, np.random.default_rng(0), n_noise=5)
    ev.write_field_csv(rep, ref, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "x" and len(lines) == 12
