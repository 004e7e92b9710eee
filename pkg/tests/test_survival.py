import numpy as np
import pytest

from covperm.contrasts import dunnett, tukey
from covperm.exceptions import InvalidInput, VarianceUndefined
from covperm.survival import (RMSTEstimator, SurvivalSample, kaplan_meier, rmst, rmst_theta, rmst_variance)


def test_kaplan_meier_examples():
    S = kaplan_meier([1, 2, 3], [1, 1, 1])
    assert np.allclose(S([0.5, 1, 1.5, 2, 2.9, 3, 10]), [1, 2 / 3, 2 / 3, 1 / 3, 1 / 3, 0, 0])
    assert np.allclose(kaplan_meier([1, 2, 3], [0, 0, 0])([0, 5]), 1)
    S = kaplan_meier([1, 2, 3], [1, 0, 1])
    assert np.allclose(S([1, 2.5, 3]), [2 / 3, 2 / 3, 0])
    with pytest.raises(InvalidInput):
        kaplan_meier([], [])


def test_kaplan_meier_uncensored_is_one_minus_ecdf(rng):
    t = rng.exponential(size=40)
    S = kaplan_meier(t, np.ones(40))
    grid = np.linspace(0, t.max() + 1, 200)
    ecdf = np.array([(t <= x).mean() for x in grid])
    assert np.allclose(S(grid), 1 - ecdf)


def test_events_before_censorings_at_ties():
    # at t=1 one event and one censoring out of 3 at risk: factor 2/3, censored still counted at risk
    S = kaplan_meier([1, 1, 2], [1, 0, 1])
    assert np.allclose(S([1, 2]), [2 / 3, 0])


def test_rmst_examples():
    assert rmst(kaplan_meier([5.0], [0]), 2.5) == pytest.approx(2.5)
    assert rmst(kaplan_meier([1, 2, 3], [1, 1, 1]), 2.5) == pytest.approx(11 / 6)
    assert rmst(kaplan_meier([3, 4], [1, 1]), 2.0) == pytest.approx(2.0)


def _step_integral_oracle(times, status, tau, grid=200_001):
    u = np.linspace(0, tau, grid)
    mid = (u[:-1] + u[1:]) / 2
    return np.sum(kaplan_meier(times, status)(mid)) * (tau / (grid - 1))


def test_rmst_matches_fine_grid_integral(rng):
    t = rng.exponential(size=30)
    s = (rng.uniform(size=30) < 0.7).astype(int)
    assert rmst(kaplan_meier(t, s), 1.3) == pytest.approx(_step_integral_oracle(t, s, 1.3), abs=1e-4)
    assert 0 <= rmst(kaplan_meier(t, s), 1.3) <= 1.3


def test_rmst_variance_zero_without_events_before_tau():
    assert rmst_variance([2, 3], [1, 1], 1.0) == 0
    assert rmst_variance([0.5, 3], [0, 0], 1.0) == 0


def _greenwood_oracle(times, status, tau):
    times, status = np.asarray(times, float), np.asarray(status)
    ev = np.unique(times[(status == 1) & (times <= tau)])
    total = 0.0
    for t in ev:
        d = np.sum((times == t) & (status == 1))
        Y = np.sum(times >= t)
        A = _step_integral_oracle(times, status, tau, 20_001) - _step_integral_oracle(times, status, t, 20_001) \
            if t > 0 else _step_integral_oracle(times, status, tau, 20_001)
        total += A ** 2 * d / (Y * (Y - d) if Y > d else Y * Y)
    return total


def test_rmst_variance_definition_oracle(rng):
    t = np.round(rng.exponential(size=25), 2)
    s = (rng.uniform(size=25) < 0.8).astype(int)
    assert rmst_variance(t, s, 1.0) == pytest.approx(_greenwood_oracle(t, s, 1.0), rel=1e-3)


def test_rmst_variance_vs_bootstrap():
    rng = np.random.default_rng(7)
    n = 2000
    t = rng.exponential(size=n)
    s = np.ones(n, dtype=int)
    boot = np.empty(2000)
    for b in range(boot.size):
        idx = rng.integers(0, n, n)
        boot[b] = rmst(kaplan_meier(t[idx], s[idx]), 1.0)
    assert rmst_variance(t, s, 1.0) == pytest.approx(boot.var(ddof=1), rel=0.15)


def test_late_censoring_only_enlarges_risk_sets(rng):
    # an extra observation censored after tau adds 1 to every at-risk count at times <= tau
    t = rng.exponential(size=15)
    s = np.ones(15, dtype=int)
    tau = 0.8
    late = max(t.max(), tau) + 1
    got = rmst_variance(np.append(t, late), np.append(s, 0), tau)
    ev = np.sort(t[t <= tau])
    S = kaplan_meier(np.append(t, late), np.append(s, 0))
    expected = 0.0
    for x in ev:
        A = rmst(S, tau) - rmst(S, x)
        Y = np.sum(t >= x) + 1
        expected += A ** 2 / (Y * (Y - 1))
    assert got == pytest.approx(expected)


def test_status_after_tau_does_not_matter(rng):
    t = rng.exponential(size=40)
    s = (rng.uniform(size=40) < 0.7).astype(int)
    tau = 0.9
    flipped = np.where(t > tau, 1 - s, s)
    assert rmst_variance(t, flipped, tau) == pytest.approx(rmst_variance(t, s, tau), rel=1e-12)
    assert rmst(kaplan_meier(t, flipped), tau) == pytest.approx(rmst(kaplan_meier(t, s), tau), rel=1e-12)


def test_rmst_theta():
    g = (np.array([0.5, 1.0, 2.0]), np.array([1, 1, 0]))
    sample = SurvivalSample((g, g), tau=1.5)
    theta, gamma = rmst_theta(dunnett(2), sample)
    assert np.allclose(theta, 0)
    var = rmst_variance(*g, 1.5)
    assert np.allclose(gamma, np.diag([6 * var, 6 * var]))
    with pytest.raises(VarianceUndefined):
        rmst_theta(dunnett(2), SurvivalSample((g, (np.array([2.0, 3.0]), np.array([1, 1]))), tau=1.5))


def test_rmst_theta_difference():
    # group 1 RMST 1.0 (event at 1 for everyone), group 2 RMST 1.5
    s = SurvivalSample(((np.array([1.0, 1.0]), np.array([1, 1])), (np.array([1.5, 1.5]), np.array([1, 1]))), tau=2)
    theta, _ = rmst_theta(dunnett(2), s)
    assert np.allclose(theta, [0.5])


def test_batched_estimator_matches_direct(rng):
    groups = tuple((np.round(rng.exponential(size=n), 1), (rng.uniform(size=n) < 0.7).astype(int))
                   for n in (8, 10, 7))
    sample = SurvivalSample(groups, tau=1.2)
    est = RMSTEstimator(sample)
    perms = np.stack([np.arange(sample.n)] + [rng.permutation(sample.n) for _ in range(5)])
    mu, gamma = est.permuted(perms)
    for b, perm in enumerate(perms):
        p = SurvivalSample.from_pooled(sample.pooled[perm], sample.sizes, sample.tau)
        for i, (t, s) in enumerate(p.groups):
            assert mu[b, i] == pytest.approx(rmst(kaplan_meier(t, s), 1.2))
            assert gamma[b, i, i] == pytest.approx(sample.n * rmst_variance(t, s, 1.2))
    theta, _ = rmst_theta(tukey(3), sample)
    assert np.allclose(tukey(3).H @ est.observed()[0], theta)


def test_sample_validation(tmp_path):
    with pytest.raises(InvalidInput):
        SurvivalSample((([1.0], [2]), ([1.0], [1])), tau=1)
    with pytest.raises(InvalidInput):
        SurvivalSample((([1.0], [1]), ([1.0], [1])), tau=0)
    path = tmp_path / "s.csv"
    path.write_text("group,time,status\n1,0.5,1\n1,1.0,0\n2,0.7,1\n2,2.0,1\n")
    s = SurvivalSample.from_csv(path, tau=1)
    assert s.k == 2 and list(s.sizes) == [2, 2]
    path.write_text("group,time\n1,0.5\n")
    with pytest.raises(InvalidInput):
        SurvivalSample.from_csv(path, tau=1)
