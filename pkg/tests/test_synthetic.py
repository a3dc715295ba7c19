import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from ipc_uplift.data_model import validate
from ipc_uplift.synthetic import (CampaignConfig, GroundTruth, control_rate,
                                  generate_campaign, load_truth_csv,
                                  oracle_scores, solve_intercept,
                                  write_truth_csv)

SMALL = CampaignConfig(n=20_000)


@pytest.fixture(scope="module")
def default_campaign():
    return generate_campaign(CampaignConfig())


def test_intercept_matches_numerical_integral():
    cfg = CampaignConfig()
    b0 = solve_intercept(cfg)
    # independent check: adaptive quadrature over the N(b0, 8) predictor
    sd = np.sqrt(8.0)
    rate, _ = integrate.quad(lambda z: expit(b0 + sd * z) * stats.norm.pdf(z), -12, 12)
    assert rate == pytest.approx(0.03, abs=1e-8)
    assert control_rate(b0, cfg) == pytest.approx(0.03, abs=1e-10)


def test_unreachable_rate_raises():
    with pytest.raises(RuntimeError):
        solve_intercept(CampaignConfig(control_conversion_rate=1 - 1e-15))


def test_deterministic():
    a, ta = generate_campaign(SMALL)
    b, tb = generate_campaign(SMALL)
    assert a.equals(b)
    assert np.array_equal(ta.ipc, tb.ipc)
    assert not a.equals(generate_campaign(SMALL, seed=1)[0])


def test_layout_and_validity():
    d, truth = generate_campaign(SMALL)
    assert d.feature_count == 13
    assert validate(d) == []
    assert np.all(d.profit[d.conversion == 0] == 0.0)
    assert len(truth) == len(d)


def test_treated_profit_is_discounted():
    cfg = SMALL.replace(noise_std_ratio=0.0)
    d, _ = generate_campaign(cfg)
    conv = d.conversion == 1
    revenue = np.exp(d.features[:, 0] + d.features[:, 3])
    expected = np.where(d.treatment == 1, 0.9 * revenue, revenue)
    assert np.allclose(d.profit[conv], expected[conv], rtol=1e-12)


def test_revenue_positive_and_right_skewed(default_campaign):
    d, _ = default_campaign
    rev = d.profit[d.conversion == 1]
    assert np.all(rev > 0)
    assert stats.skew(rev) > 0


def test_treated_converts_more(default_campaign):
    d, _ = default_campaign
    t = d.treatment == 1
    p1, p0 = d.conversion[t].mean(), d.conversion[~t].mean()
    pooled = d.conversion.mean()
    se = np.sqrt(pooled * (1 - pooled) * (1 / t.sum() + 1 / (~t).sum()))
    assert (p1 - p0) / se > 3


def test_truth_consistent_by_ipc_decile(default_campaign):
    """Per decile of true IPC and per arm, realized mean profit sits within
    four standard errors of the mean the ground truth implies."""
    d, truth = default_campaign
    edges = np.quantile(truth.ipc, np.linspace(0, 1, 11))[1:-1]
    bucket = np.searchsorted(edges, truth.ipc, side="right")
    for arm in (0, 1):
        p = truth.conversion_treated if arm else truth.conversion_control
        keep = 1 - truth.discount if arm else 1.0
        expected = p * keep * truth.expected_revenue
        for k in range(10):
            m = (bucket == k) & (d.treatment == arm)
            se = d.profit[m].std(ddof=1) / np.sqrt(m.sum())
            z = (d.profit[m].mean() - expected[m].mean()) / se
            assert abs(z) < 4, (arm, k, z)


def test_no_uplift_no_discount_oracle_is_zero():
    _, truth = generate_campaign(SMALL.replace(uplift_strength=0.0, discount=0.0))
    assert np.allclose(oracle_scores(truth, "profit_cate"), 0.0)
    assert np.allclose(truth.cate_conversion, 0.0)


def test_ipc_is_cate_over_conversion():
    _, truth = generate_campaign(SMALL)
    assert np.allclose(oracle_scores(truth, "ipc"),
                       oracle_scores(truth, "profit_cate") / truth.conversion)


def test_single_context_constant_oracle():
    t = GroundTruth(np.full(5, 0.1), np.full(5, 0.2), np.full(5, 3.0),
                    np.full(5, 0.5), 0.1)
    assert np.ptp(oracle_scores(t)) == 0


def test_oracle_kind_checked():
    _, truth = generate_campaign(CampaignConfig(n=10))
    with pytest.raises(ValueError):
        oracle_scores(truth, "bogus")


def test_truth_csv_round_trip(tmp_path):
    d, truth = generate_campaign(CampaignConfig(n=500))
    path = tmp_path / "truth.csv"
    write_truth_csv(truth, path)
    again = load_truth_csv(path, d.propensity, 0.1)
    assert np.array_equal(again.ipc, truth.ipc)


def test_empty_campaign():
    d, truth = generate_campaign(CampaignConfig(n=0))
    assert len(d) == 0 and len(truth) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        CampaignConfig(propensity=1.0)
    with pytest.raises(ValueError, match="revenue"):
        CampaignConfig(revenue_feature_indices=(12,))
