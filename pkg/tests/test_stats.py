import csv
import math

import numpy as np
import pytest
from scipy import integrate

from motiondb import stats
from motiondb.errors import InsufficientSample
from motiondb.geometry import Arena, BunimovichStadium, Obstacle, Rectangle, place_obstacles


def test_collision_rate_and_cap():
    assert stats.collision_rate(0.05, 1.0, 1.0) == pytest.approx(0.1)
    assert stats.t_max(0.1, 1) == pytest.approx(1000.0)
    assert stats.t_max(0.1, 8) == pytest.approx(200 * (math.log(8) + 5))


def test_fit_accepts_exponential_and_rejects_uniform():
    rng = np.random.default_rng(0)
    good = stats.fit_exponential(rng.exponential(10.0, 5000))
    assert good.passed
    assert good.lambda_hat == pytest.approx(0.1, rel=0.05)
    bad = stats.fit_exponential(rng.uniform(0, 20, 5000))
    assert not bad.passed
    assert bad.ks_statistic > bad.ks_critical


def test_fit_needs_enough_samples():
    with pytest.raises(InsufficientSample):
        stats.fit_exponential(np.ones(999))
    with pytest.raises(InsufficientSample):
        stats.sample_first_collision(Arena.build(Rectangle(), [Obstacle(0, (0.5, 0.5), 0.05)]), 10,
                                     np.random.default_rng(0))


def test_ks_exponential_exact_small_case():
    # ECDF of {1} jumps from 0 to 1 at t=1, where 1 - e^-t = 0.632
    assert stats.ks_exponential([1.0], 1.0) == pytest.approx(1 - math.exp(-1.0))


def test_all_collide_cdf_examples():
    assert stats.all_collide_cdf(0.1, 1, 10.0) == pytest.approx(1 - math.exp(-1.0))
    assert stats.all_collide_cdf(0.1, 2, 10.0) == pytest.approx((1 - math.exp(-1.0)) ** 2)
    assert stats.all_collide_cdf(1.0, 5, 0.0) == 0.0
    with pytest.raises(ValueError):
        stats.all_collide_cdf(0.0, 1, 1.0)
    with pytest.raises(ValueError):
        stats.all_collide_cdf(1.0, 1, -1.0)


@pytest.mark.parametrize("n", [1, 2, 8, 32])
def test_all_collide_cdf_monotone_and_density_consistent(n):
    t = np.linspace(0, 100, 400)
    f = stats.all_collide_cdf(0.1, n, t)
    assert np.all(np.diff(f) >= 0)
    assert np.all(stats.all_collide_cdf(0.1, n + 1, t) <= f + 1e-15)
    for upper in (5.0, 30.0, 80.0):
        val, _ = integrate.quad(lambda s: stats.all_collide_pdf(0.1, n, s), 0, upper)
        assert val == pytest.approx(stats.all_collide_cdf(0.1, n, upper), abs=1e-6)
    mean, _ = integrate.quad(lambda s: 1 - stats.all_collide_cdf(0.1, n, s), 0, np.inf)
    assert mean == pytest.approx(stats.expected_max_time(0.1, n), rel=1e-6)


def test_stadium_first_collision_scaling():
    arena = place_obstacles(BunimovichStadium(), 1, 0.05, np.random.default_rng(1))
    base = stats.sample_first_collision(arena, 4000, np.random.default_rng(2))
    fast = stats.sample_first_collision(arena, 4000, np.random.default_rng(3), speed=2.0)
    assert base.censored_fraction <= 0.01
    assert base.completed.mean() == pytest.approx(1 / base.lambda_predicted, rel=0.10)
    assert fast.completed.mean() == pytest.approx(base.completed.mean() / 2, rel=0.10)
    wide = place_obstacles(BunimovichStadium(2.0, 0.5), 1, 0.05, np.random.default_rng(1))
    far = stats.sample_first_collision(wide, 4000, np.random.default_rng(4))
    ratio = far.completed.mean() / base.completed.mean()
    assert ratio == pytest.approx(wide.area / arena.area, rel=0.12)


def test_no_target_censors_everything(tmp_path):
    arena = Arena.build(BunimovichStadium())
    sample = stats.sample_first_collision(arena, 1000, np.random.default_rng(5), target=None,
                                          radius=0.05, t_cap=5.0, seed=5)
    assert sample.censored.all()
    assert sample.censored_fraction == 1.0
    path = tmp_path / "s.csv"
    sample.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["seed", "trial", "config", "first_collision_time", "censored"]
    assert len(rows) == 1001 and rows[1][0] == "5" and rows[1][4] == "1"


def test_all_collide_sample_small():
    arena = place_obstacles(BunimovichStadium(), 3, 0.05, np.random.default_rng(6))
    s = stats.sample_all_collide(arena, 1500, np.random.default_rng(7))
    assert s.n == 3 and s.max_times.shape == (1500,)
    assert s.sup_gap() < 0.06


def test_first_success_frequency():
    k = stats.first_success_steps(0.01, 100_000, np.random.default_rng(8), 100_000)
    assert (k == 1).mean() == pytest.approx(0.01, abs=0.0015)
    assert (k == 0).sum() == 0


def test_geometric_check_small_p_passes():
    rep = stats.geometric_limit_check(0.01, 10_000, 20_000, np.random.default_rng(9))
    assert rep.geometric_passed
    assert rep.censored == 0
    assert set(rep.to_dict()) >= {"chi2_pvalue", "ks_statistic"}


def test_geometric_check_large_p_fails_limit():
    rep = stats.geometric_limit_check(0.5, 1000, 20_000, np.random.default_rng(10))
    assert rep.geometric_passed
    assert not rep.exponential_passed
    with pytest.raises(ValueError):
        stats.geometric_limit_check(1.5)
