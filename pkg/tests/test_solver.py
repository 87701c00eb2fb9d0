import json
import math

import numpy as np
import pytest

from _helpers import mu_max, random_problem
from sqrtista import (
    IterateState,
    PenaltySpec,
    Problem,
    SolverConfig,
    Status,
    Trace,
    ZeroResidualPolicy,
    ista_step,
    make_figure1,
    solve_group_sqrt_ista,
    solve_ista,
    solve_sqrt_ista,
    sqrt_ista_step,
)
from sqrtista.objective import cost, lasso_cost
from sqrtista.prox import kkt_distance
from sqrtista.solver import fixed_point_residual, resolve_tau

FIG1 = make_figure1()


def group_identity_oracle(g, groups, mu):
    """Minimiser of ||f - g|| + mu sum ||f_j|| for A = I.

    Each group shrinks radially by mu*sigma, so sigma solves
    sigma = sqrt(sum_j min(||g_j||, mu sigma)^2); found by bisection.
    """
    norms = np.array([np.linalg.norm(g[j]) for j in groups])

    def h(s):
        return np.sqrt(np.sum(np.minimum(norms, mu * s) ** 2)) - s

    lo, hi = 1e-12, np.linalg.norm(g)
    assert h(lo) > 0 > h(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if h(mid) > 0 else (lo, mid)
    s = 0.5 * (lo + hi)
    f = np.zeros_like(g)
    for j, n in zip(groups, norms):
        f[j] = g[j] * max(0.0, 1 - mu * s / n)
    return f, s


class TestSteps:
    def test_first_step_figure1(self):
        st = sqrt_ista_step(IterateState.start(FIG1), FIG1, 0.2)
        np.testing.assert_allclose(st.f, [0.4, 0.0], atol=1e-15)
        assert st.sigma == pytest.approx(1.2)
        assert st.k == 1

    def test_landweber_when_mu_zero(self):
        rng = np.random.default_rng(0)
        a, g = rng.standard_normal((4, 3)), rng.standard_normal(4)
        p = Problem(a, g, 0.0)
        f = rng.standard_normal(3)
        st = sqrt_ista_step(IterateState(f, np.linalg.norm(a @ f - g)), p, 0.1)
        np.testing.assert_allclose(st.f, f + 0.1 * a.T @ (g - a @ f), atol=1e-14)

    def test_zero_sigma_is_fixed(self):
        st = IterateState(np.array([1.0, 0.0]), 0.0, 5)
        nxt = sqrt_ista_step(st, FIG1, 0.2)
        assert nxt.f is st.f and nxt.sigma == 0.0 and nxt.k == 6

    def test_ista_step_figure1(self):
        np.testing.assert_allclose(ista_step([0.0, 0.0], FIG1, 2.0, 0.2), [0.6, 0.2], atol=1e-15)

    def test_ista_step_landweber(self):
        f = np.array([0.3, -0.1])
        np.testing.assert_allclose(ista_step(f, FIG1, 0.0, 0.2), f + 0.2 * FIG1.op.matrix.T @ (FIG1.g - FIG1.op.matrix @ f))

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            sqrt_ista_step(IterateState.start(FIG1), FIG1, 0.0)


class TestSolveSqrtIsta:
    def test_figure1(self):
        rep = solve_sqrt_ista(FIG1, SolverConfig(tau=0.2))
        assert rep.status in (Status.CONVERGED_MINIMISER, Status.CONVERGED_ZERO_RESIDUAL)
        if rep.status is Status.CONVERGED_ZERO_RESIDUAL:
            assert abs(2 * rep.f[0] + rep.f[1] - 2) <= 1e-8
        else:
            assert cost(FIG1, rep.f) <= 1 + 1e-6

    def test_figure1_first_rows(self):
        tr = solve_sqrt_ista(FIG1, SolverConfig(tau=0.2)).trace
        k, c, s, step, kkt = tr.rows()[1]
        assert (k, c, s, step) == pytest.approx((1, 1.6, 1.2, 0.4))
        assert math.isnan(tr.step_norm[0])

    def test_zero_data(self):
        p = Problem(np.ones((3, 2)), np.zeros(3), 0.5)
        rep = solve_sqrt_ista(p)
        assert rep.status is Status.CONVERGED_ZERO_RESIDUAL
        assert rep.final.k == 0
        np.testing.assert_array_equal(rep.f, 0.0)

    def test_large_mu_gives_zero(self):
        rng = np.random.default_rng(1)
        a, g = rng.standard_normal((20, 50)) / np.sqrt(20), rng.standard_normal(20)
        p = Problem(a, g, mu_max(a, g) * 1.01)
        rep = solve_sqrt_ista(p)
        assert rep.status is Status.CONVERGED_MINIMISER
        np.testing.assert_array_equal(rep.f, 0.0)
        assert kkt_distance(rep.f, p, rep.sigma) == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_minimiser_is_kkt_point(self, seed):
        p = random_problem(seed, overdetermined=True, max_dim=30)
        rep = solve_sqrt_ista(p, SolverConfig(max_iter=100_000))
        assert rep.status is Status.CONVERGED_MINIMISER
        assert kkt_distance(rep.f, p, rep.sigma) <= 1e-8
        assert rep.fixed_point_residual <= 10 * 1e-10 * max(1, np.linalg.norm(rep.f))
        assert fixed_point_residual(p, rep.f, rep.tau) == pytest.approx(rep.fixed_point_residual, abs=1e-14)

    def test_beats_random_points(self):
        p = random_problem(11, m=15, d=8)
        rep = solve_sqrt_ista(p, SolverConfig(max_iter=100_000))
        rng = np.random.default_rng(0)
        best = cost(p, rep.f)
        for _ in range(200):
            assert cost(p, rep.f + 0.05 * rng.standard_normal(8)) >= best - 1e-12

    def test_max_iter(self):
        p = random_problem(3, m=30, d=40)
        rep = solve_sqrt_ista(p, SolverConfig(max_iter=5))
        assert rep.status is Status.MAX_ITER_REACHED
        assert len(rep.trace) == 6 and not rep.converged

    def test_rejects_group_penalty(self):
        with pytest.raises(ValueError, match="group"):
            solve_sqrt_ista(FIG1.with_penalty(PenaltySpec.group([[0, 1]], 2)))

    def test_tau_validation(self):
        with pytest.raises(ValueError):
            solve_sqrt_ista(FIG1, SolverConfig(tau=0.4))  # 2/||A||^2 = 0.4
        with pytest.raises(ValueError):
            SolverConfig(tau=-1.0)
        tau, norm = resolve_tau(FIG1, SolverConfig())
        assert tau == pytest.approx(0.98 / 5) and norm == pytest.approx(np.sqrt(5))

    def test_weighted_matches_rescaled_plain(self):
        # weights w: substitute f = h / w, i.e. columns of A divided by w
        rng = np.random.default_rng(5)
        a, g = rng.standard_normal((12, 6)), rng.standard_normal(12)
        w = rng.uniform(0.5, 2.0, 6)
        pw = Problem(a, g, 0.3, PenaltySpec.weighted(w))
        pp = Problem(a / w, g, 0.3)
        cfg = SolverConfig(max_iter=200_000, kkt_tol=1e-10)
        fw = solve_sqrt_ista(pw, cfg).f
        fp = solve_sqrt_ista(pp, cfg).f / w
        np.testing.assert_allclose(fw, fp, atol=1e-7)

    def test_restart_policy(self):
        cfg = SolverConfig(tau=0.2, zero_residual_policy=ZeroResidualPolicy.restart(0.1, 2), seed=3)
        rep = solve_sqrt_ista(FIG1, cfg)
        assert rep.restarts <= 2
        if rep.restarts:
            assert rep.status_label.startswith(f"restarted({rep.restarts}):")
            assert rep.init is not None and np.any(rep.init != 0)
        again = solve_sqrt_ista(FIG1, cfg)
        assert again.trace == rep.trace

    def test_init(self):
        p = random_problem(4, m=10, d=5)
        rep = solve_sqrt_ista(p, SolverConfig(init=np.ones(5), max_iter=3))
        assert rep.trace.cost[0] == pytest.approx(cost(p, np.ones(5)))
        with pytest.raises(ValueError):
            solve_sqrt_ista(p, SolverConfig(init=np.ones(4)))


class TestIsta:
    def test_figure1_lasso(self):
        rep = solve_ista(FIG1, 2.0, SolverConfig(tau=0.2))
        assert rep.status is Status.CONVERGED_MINIMISER
        np.testing.assert_allclose(rep.f, [0.75, 0.0], atol=1e-8)
        assert lasso_cost(FIG1, rep.f, 2.0) == pytest.approx(1.75, abs=1e-8)

    def test_negative_tilde_mu(self):
        with pytest.raises(ValueError):
            solve_ista(FIG1, -1.0)

    def test_monotone_lasso_cost(self):
        rep = solve_ista(random_problem(7), 0.3)
        assert np.all(np.diff(rep.trace.cost) <= 1e-12 * rep.trace.cost[0])


class TestGroup:
    def test_identity_oracle(self):
        g = np.array([3.0, 4.0, 0.3, 0.4])
        groups = [[0, 1], [2, 3]]
        f_star, s_star = group_identity_oracle(g, groups, 0.8)
        assert s_star == pytest.approx(np.sqrt(0.25 / (1 - 0.8**2)), rel=1e-12)  # second group zeroed
        p = Problem(np.eye(4), g, 0.8, PenaltySpec.group(groups, 4))
        rep = solve_group_sqrt_ista(p, SolverConfig(max_iter=100_000))
        assert rep.status is Status.CONVERGED_MINIMISER
        np.testing.assert_allclose(rep.f, f_star, atol=1e-6)
        assert rep.sigma == pytest.approx(s_star, abs=1e-6)

    def test_single_group_small_mu_interpolates(self):
        # one group, A = I, mu < 1: the minimum sits at f = g (zero residual)
        g = np.array([3.0, 4.0])
        p = Problem(np.eye(2), g, 0.2, PenaltySpec.group([[0, 1]], 2))
        rep = solve_group_sqrt_ista(p)
        assert rep.status is Status.CONVERGED_ZERO_RESIDUAL
        np.testing.assert_allclose(rep.f, g, atol=1e-12)

    def test_single_group_large_mu_zero(self):
        rng = np.random.default_rng(2)
        a, g = rng.standard_normal((8, 5)), rng.standard_normal(8)
        mu = np.linalg.norm(a.T @ g) / np.linalg.norm(g) * 1.01
        p = Problem(a, g, mu, PenaltySpec.group([list(range(5))], 5))
        rep = solve_group_sqrt_ista(p)
        assert rep.status is Status.CONVERGED_MINIMISER
        np.testing.assert_array_equal(rep.f, 0.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_singletons_bitwise(self, seed):
        p = random_problem(seed, max_dim=25)
        a = solve_sqrt_ista(p, SolverConfig(max_iter=3000))
        b = solve_group_sqrt_ista(p.with_penalty(PenaltySpec.group([[i] for i in range(p.dim)], p.dim)),
                                  SolverConfig(max_iter=3000))
        assert a.trace == b.trace
        assert np.array_equal(a.f, b.f)

    def test_requires_group_penalty(self):
        with pytest.raises(ValueError):
            solve_group_sqrt_ista(FIG1)


class TestTraceAndReport:
    def test_csv_roundtrip(self, tmp_path):
        tr = solve_sqrt_ista(FIG1, SolverConfig(tau=0.2)).trace
        tr.to_csv(tmp_path / "t.csv")
        back = Trace.from_csv(tmp_path / "t.csv", tau=0.2, mu=1.0, sigma_floor=tr.sigma_floor)
        assert back == tr

    def test_csv_header_checked(self, tmp_path):
        (tmp_path / "t.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            Trace.from_csv(tmp_path / "t.csv")

    def test_rows_must_be_consecutive(self):
        tr = Trace()
        tr.append(0, 1.0, 1.0, math.nan, 0.0)
        with pytest.raises(ValueError):
            tr.append(2, 1.0, 1.0, 0.0, 0.0)

    def test_dict_roundtrip(self):
        tr = solve_ista(FIG1, 2.0, SolverConfig(tau=0.2)).trace
        assert Trace.from_dict(json.loads(json.dumps(tr.to_dict()))) == tr

    def test_report_json(self, tmp_path):
        rep = solve_sqrt_ista(FIG1, SolverConfig(tau=0.2))
        text = rep.to_json(tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        assert text == (tmp_path / "r.json").read_text()
        assert d["status"] == "converged_zero_residual"
        assert d["tau"] == 0.2 and d["config"]["tau"] == 0.2
        assert len(d["trace"]["columns"]["cost"]) == len(rep.trace)

    def test_deterministic(self):
        p = random_problem(9)
        assert solve_sqrt_ista(p).to_json() == solve_sqrt_ista(p).to_json()
