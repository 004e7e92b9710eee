import math

import numpy as np
import pytest

from covperm.exceptions import InvalidInput, NotPSD
from covperm.sim import (MetricResult, Scenario, autoregressive_cov, bundled_scenarios, equicorrelation_cov,
                         generate_anova, generate_manova, generate_survival, load_scenario, parse_scenario,
                         run_scenario, summarize)
from covperm.survival import kaplan_meier, rmst


def test_anova_generator_centering():
    sc = Scenario("x", k=2, sizes=(10_000, 10_000), distribution="normal")
    s = generate_anova(sc, np.random.default_rng(0))
    assert all(abs(g.mean()) < 4 / math.sqrt(10_000) for g in s.groups)


@pytest.mark.parametrize("dist", ["lognormal", "chisq3", "t3"])
def test_anova_generators_have_target_mean(dist):
    sc = Scenario("x", k=2, sizes=(200_000, 10), distribution=dist, mu=(1.0, 0.0))
    g = generate_anova(sc, np.random.default_rng(1)).groups[0][:, 0]
    assert abs(g.mean() - 1.0) < 0.05


def test_lognormal_centering_constant():
    from covperm.sim import ANOVA_DISTRIBUTIONS
    assert ANOVA_DISTRIBUTIONS["lognormal"][1] == pytest.approx(1.6487, abs=1e-4)


def test_chisq3_variance():
    sc = Scenario("x", k=2, sizes=(100_000, 10), distribution="chisq3", scales=(1.5, 1.0))
    g = generate_anova(sc, np.random.default_rng(2)).groups[0][:, 0]
    assert g.var() == pytest.approx(6 * 1.5 ** 2, rel=0.05)


def test_manova_covariances():
    G1 = equicorrelation_cov(4)
    assert G1[0, 0] == 3 and G1[0, 1] == 1 and np.allclose(np.diag(G1), [3, 4, 5, 6])
    assert autoregressive_cov(4)[0, 1] == pytest.approx(0.65 * math.sqrt(6), abs=1e-4)
    assert autoregressive_cov(4)[0, 1] == pytest.approx(1.5922, abs=1e-4)


@pytest.mark.parametrize("dist", ["exp", "normal", "t9"])
def test_manova_generator_covariance(dist):
    sc = Scenario("x", application="manova", k=4, d=4, sizes=(10_000,) * 4, distribution=dist)
    s = generate_manova(sc, np.random.default_rng(3))
    targets = [equicorrelation_cov(4)] * 2 + [autoregressive_cov(4)] * 2
    for g, G in zip(s.groups, targets):
        assert np.linalg.norm(np.cov(g.T) - G) / np.linalg.norm(G) < 0.1


def test_standardised_t9_has_unit_variance():
    from covperm.sim import MANOVA_DISTRIBUTIONS
    z = MANOVA_DISTRIBUTIONS["t9"](np.random.default_rng(4), 400_000)
    assert z.var() == pytest.approx(1.0, rel=0.02)


def test_manova_rejects_indefinite_covariance():
    sc = Scenario("x", application="manova", k=2, d=2, sizes=(5, 5))
    with pytest.raises(NotPSD):
        generate_manova(sc, np.random.default_rng(0), [np.diag([1.0, -1.0])] * 2)


def test_survival_generator():
    sc = Scenario("x", application="rmst", k=2, sizes=(50, 5000), rates=(1.0, 1.0), censoring=(0.0, 0.0), tau=1)
    s = generate_survival(sc, np.random.default_rng(5))
    assert all(np.all(st == 1) for _, st in s.groups)
    t, st = s.groups[1]
    assert rmst(kaplan_meier(t, st), 1.0) == pytest.approx(1 - math.exp(-1), rel=0.02)
    assert sc.mean_vector()[0] == pytest.approx(1 - math.exp(-1))


def test_truth_from_scenario():
    sc = Scenario("x", k=6, sizes=(14,) * 6, mu=(0, 0, 0, 0, 0, 1.5), contrast="centering")
    assert sc.false_hypotheses().all()
    assert np.allclose(sc.spec.H @ sc.mean_vector(), np.array([-1, -1, -1, -1, -1, 5]) / 4)
    sc = Scenario("x", k=3, sizes=(5, 5, 5), mu=(0, 0, 1), contrast="tukey")
    assert sc.false_hypotheses().tolist() == [False, True, True]


def test_summarize_conventions():
    rej = np.array([[True, False], [False, False], [True, True]])
    res = summarize("s", "m", rej, np.array([False, False]))
    assert res.fwer == pytest.approx(2 / 3) and res.fw_power is None and "not applicable" in res.notes
    res = summarize("s", "m", rej, np.array([True, True]))
    assert res.fwer is None and res.fw_power == pytest.approx(1 / 3) and res.global_power == pytest.approx(2 / 3)
    assert res.global_power >= res.fw_power
    assert res.as_row()[4] == "NA"


def test_scenario_validation():
    with pytest.raises(InvalidInput):
        Scenario("x", k=3, sizes=(5, 5))
    with pytest.raises(InvalidInput):
        Scenario("x", distribution="cauchy")
    with pytest.raises(InvalidInput):
        Scenario("x", n_sim=10)
    with pytest.raises(InvalidInput):
        Scenario("x", methods=("magic",))
    with pytest.raises(InvalidInput):
        Scenario("x", application="rmst")


def test_parse_scenario():
    sc = parse_scenario("""
        # comment
        application = anova
        k = 3
        sizes = 5, 6, 7   # trailing comment
        mu = 0, 0, 1
        methods = case3, bonferroni
        n_sim = 100
        B = 99
    """, "demo")
    assert sc.sizes == (5, 6, 7) and sc.methods == ("case3", "bonferroni") and sc.B == 99
    with pytest.raises(InvalidInput):
        parse_scenario("k 3")
    with pytest.raises(InvalidInput):
        parse_scenario("colour = red")
    with pytest.raises(InvalidInput):
        parse_scenario("k = three")


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert "anova_null_balanced_normal" in names and "manova_wts_case2_large_normal" in names
    for name in names:
        assert load_scenario(name).name == name
    with pytest.raises(InvalidInput):
        load_scenario("does_not_exist")


def test_run_scenario_reproducible_and_null_fwer():
    sc = Scenario("small", k=3, sizes=(8, 8, 8), contrast="dunnett", methods=("auto", "case3", "bonferroni"),
                  n_sim=300, B=99, seed=3)
    a = run_scenario(sc)
    b = run_scenario(sc, workers=3)
    assert [r.as_row() for r in a] == [r.as_row() for r in b]
    for res in a:
        assert isinstance(res, MetricResult) and res.fw_power is None
        # exchangeable null: corrected methods stay within 3 standard errors of alpha
        assert res.fwer <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 300)


@pytest.mark.filterwarnings("ignore:case 2 assumes distinct eigenvalues")
def test_run_scenario_alternative_powers():
    sc = Scenario("alt", k=3, sizes=(10, 10, 10), mu=(0, 0, 2), contrast="tukey",
                  methods=("case2", "asymptotic", "asymptotic-bonferroni"), n_sim=100, B=99)
    for res in run_scenario(sc):
        assert res.n_false == 2
        assert res.global_power >= res.fw_power
        assert res.fwer is not None


def test_rmst_scenario_runs():
    sc = Scenario("rmst", application="rmst", k=3, sizes=(20, 20, 20), rates=(1, 1, 1), censoring=(0.3, 0.3, 0.3),
                  contrast="dunnett", methods=("case3",), n_sim=100, B=99)
    res = run_scenario(sc)[0]
    assert 0 <= res.fwer <= 1
