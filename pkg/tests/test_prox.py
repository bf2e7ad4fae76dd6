"""Per-cell prox: case analysis, Newton solve, oracle agreement, properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jkoflow.grid import GridSpec
from jkoflow.mobility import Mobility
from jkoflow.prox import (
    NEWTON_TOL,
    InitialPlan,
    ProxCellInput,
    ProxStats,
    L_eval,
    _newton_solve,
    default_offset,
    plan_initial,
    prox_cell,
    prox_field,
)
from prox_oracle import brute_force_rho, random_inputs, reduced_objective

KINDS = [
    Mobility.linear(),
    Mobility.power(0.5),
    Mobility.concave_quadratic(0.0, 1.0),
    Mobility.concave_quadratic(-1.0, 1.0),
    Mobility.concave_power(-1.0, 1.0, 0.5),
]
KIND_IDS = [f"{m.kind}-a{m.alpha}" for m in KINDS]


def cell(rho_hat, m_hat, D_rho=1.0, D_m=1.0, zeta=1.0):
    m_hat = np.atleast_1d(np.asarray(m_hat, dtype=float))
    return ProxCellInput(
        rho_hat=rho_hat,
        m_hat=m_hat,
        D_rho=D_rho,
        D_m=np.full_like(m_hat, D_m),
        zeta=zeta,
    )


class TestLEval:
    def test_zero_momentum_is_affine(self):
        inp = cell(0.3, [0.0], D_rho=2.5)
        for rho in (0.1, 0.5, 0.9):
            L, Lp = L_eval(rho, inp, Mobility.linear())
            assert L == pytest.approx(2.5 * (rho - 0.3))
            assert Lp == pytest.approx(2.5)

    def test_linear_mobility_at_zero_matches_C1_threshold(self):
        # L(0) = -D_rho * rho_hat + D_rho * C1 with C1 = -S / (2 zeta D_rho)
        inp = cell(-0.4, [1.5], D_rho=2.0, D_m=3.0, zeta=0.7)
        L, _ = L_eval(0.0, inp, Mobility.linear())
        S = float(np.sum((np.asarray(inp.D_m) * inp.m_hat) ** 2))
        C1 = -S / (2.0 * inp.zeta * inp.D_rho)
        assert L == pytest.approx(inp.D_rho * (-inp.rho_hat + C1), rel=1e-12)

    @pytest.mark.parametrize("mob", KINDS, ids=KIND_IDS)
    def test_L_strictly_increasing_interior(self, mob, rng):
        lo, hi = mob.bounds()
        hi_eff = hi if np.isfinite(hi) else 5.0
        for _ in range(200):
            inp = cell(
                rng.uniform(-2, 2),
                rng.uniform(-2, 2, 2),
                D_rho=rng.uniform(0.1, 5),
                D_m=rng.uniform(0.1, 5),
                zeta=rng.uniform(0.1, 5),
            )
            rho = rng.uniform(lo + 0.02 * (hi_eff - lo), hi_eff - 0.02 * (hi_eff - lo))
            _, Lp = L_eval(rho, inp, mob)
            assert Lp > 0.0

    def test_L_matches_reduced_objective_derivative(self, rng):
        # L is the derivative of the m-eliminated objective
        mob = Mobility.concave_quadratic(0.0, 1.0)
        inp = cell(0.3, [0.8, -0.4], D_rho=1.7, D_m=2.0, zeta=0.9)
        for rho in rng.uniform(0.1, 0.9, 10):
            L, _ = L_eval(rho, inp, mob)
            h = 1e-7
            fd = (
                reduced_objective(rho + h, inp, mob)
                - reduced_objective(rho - h, inp, mob)
            ) / (2.0 * h)
            assert L == pytest.approx(float(fd), rel=1e-6, abs=1e-8)

    def test_domain_error_outside_admissible(self):
        inp = cell(0.5, [1.0])
        with pytest.raises(ValueError):
            L_eval(1.5, inp, Mobility.concave_quadratic(0.0, 1.0))


class TestPlanInitial:
    def test_quadratic_clamp_high(self):
        plan = plan_initial(cell(1.5, [0.0]), Mobility.concave_quadratic(0.0, 1.0))
        assert plan.direct and plan.value == 1.0

    def test_quadratic_midpoint(self):
        plan = plan_initial(cell(0.0, [0.7]), Mobility.concave_quadratic(-1.0, 1.0))
        assert plan.direct and plan.value == 0.0

    def test_linear_clamp(self):
        inp = cell(-5.0, [0.1])
        plan = plan_initial(inp, Mobility.linear())
        assert plan.C1 >= -5.0 and plan.direct and plan.value == 0.0

    def test_linear_interior_starts_at_zero(self):
        plan = plan_initial(cell(0.5, [1.0]), Mobility.linear())
        assert not plan.direct and plan.value == 0.0

    def test_quadratic_newton_sides(self):
        mob = Mobility.concave_quadratic(-1.0, 1.0)
        below = plan_initial(cell(-0.3, [0.5]), mob)
        above = plan_initial(cell(0.3, [0.5]), mob)
        assert not below.direct and below.value == -1.0
        assert not above.direct and above.value == 1.0

    def test_concave_power_offset_starts(self):
        mob = Mobility.concave_power(-1.0, 1.0, 0.5)
        off = default_offset(mob)
        below = plan_initial(cell(-0.3, [0.5]), mob)
        above = plan_initial(cell(0.3, [0.5]), mob)
        assert below.value == pytest.approx(-1.0 + off)
        assert above.value == pytest.approx(1.0 - off)

    def test_constants_signs(self, rng):
        for mob in KINDS:
            for _ in range(20):
                inp = cell(rng.uniform(-2, 2), rng.uniform(-2, 2, 2),
                           D_rho=rng.uniform(0.1, 5), zeta=rng.uniform(0.1, 5))
                plan = plan_initial(inp, mob)
                assert plan.C1 <= 0.0
                if mob.bounded:
                    assert plan.C2 >= 0.0
                    if plan.direct:
                        assert mob.alpha <= plan.value <= mob.beta


class TestProxCell:
    def test_zero_momentum_identity(self):
        rho, m = prox_cell(cell(0.5, [0.0, 0.0]), Mobility.concave_quadratic(0.0, 1.0))
        assert rho == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(m, 0.0)

    def test_linear_reference_root(self):
        # rho* solves rho - 0.5 = 0.5 / (1 + rho)^2; m* = rho*/(rho* + 1)
        rho, m = prox_cell(cell(0.5, [1.0]), Mobility.linear())
        resid = rho - 0.5 - 0.5 / (1.0 + rho) ** 2
        assert abs(resid) <= 1e-10
        assert m[0] == pytest.approx(rho / (rho + 1.0), rel=1e-10)

    def test_degenerate_clamp_kills_momentum(self):
        mob = Mobility.concave_quadratic(-1.0, 1.0)
        inp = cell(3.0, [0.5])
        plan = plan_initial(inp, mob)
        assert plan.direct
        rho, m = prox_cell(inp, mob)
        assert rho == 1.0
        np.testing.assert_array_equal(m, 0.0)

    @pytest.mark.parametrize("mob", KINDS, ids=KIND_IDS)
    def test_matches_brute_force_oracle(self, mob, rng):
        for inp in random_inputs(mob, 60, d=2, rng=rng):
            rho, _ = prox_cell(inp, mob)
            ref = brute_force_rho(inp, mob)
            assert abs(rho - ref) <= 1e-6
            assert reduced_objective(rho, inp, mob) <= (
                reduced_objective(ref, inp, mob) + 1e-10
            )

    @pytest.mark.parametrize("mob", KINDS, ids=KIND_IDS)
    def test_bounds_and_residual(self, mob, rng):
        lo, hi = mob.bounds()
        for inp in random_inputs(mob, 60, d=1, rng=rng):
            rho, m = prox_cell(inp, mob)
            assert np.isfinite(rho)
            assert lo <= rho <= hi
            if mob.eval(rho) > 0.0:
                L, Lp = L_eval(rho, inp, mob)
                # near a degenerate endpoint L' blows up and one ulp of rho
                # moves L by more than the tolerance; the achievable floor is
                # |L'| times the local float spacing
                floor = 2.0 * abs(Lp) * np.spacing(max(1.0, abs(rho)))
                assert abs(L) <= max(NEWTON_TOL * max(1.0, inp.D_rho), floor)

    def test_momentum_recovery_formula(self, rng):
        mob = Mobility.linear()
        inp = cell(0.8, [1.2, -0.7], D_m=2.0, zeta=0.6)
        rho, m = prox_cell(inp, mob)
        M = mob.eval(rho)
        expect = M * np.asarray(inp.D_m) * inp.m_hat / (np.asarray(inp.D_m) * M + inp.zeta)
        np.testing.assert_allclose(m, expect, rtol=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            ProxCellInput(rho_hat=0.0, m_hat=np.array([0.0]), D_rho=0.0,
                          D_m=np.array([1.0]), zeta=1.0)
        with pytest.raises(ValueError):
            ProxCellInput(rho_hat=0.0, m_hat=np.array([0.0]), D_rho=1.0,
                          D_m=np.array([1.0]), zeta=-1.0)


class TestNewtonBehaviour:
    def test_monotone_residual_decrease(self, rng):
        # |L| decreases after the first Newton step and iterates stay inside
        mob = Mobility.concave_quadratic(-1.0, 1.0)
        trace = []
        rho_hat = np.array([0.35])
        Dm_mhat = np.array([[1.4]])
        _newton_solve(
            rho_hat, Dm_mhat, np.array([1.0]), np.array([[1.0]]), 0.8, mob,
            NEWTON_TOL, default_offset(mob), trace=trace,
        )
        residuals = [t[1][0] for t in trace]
        iterates = [t[0][0] for t in trace]
        assert all(b <= a + 1e-15 for a, b in zip(residuals[1:], residuals[2:]))
        assert all(-1.0 <= r <= 1.0 for r in iterates)

    @pytest.mark.parametrize("mob", KINDS, ids=KIND_IDS)
    def test_no_bisection_fallbacks(self, mob, rng):
        inputs = random_inputs(mob, 100, d=1, rng=rng)
        rho_hat = np.array([i.rho_hat for i in inputs])
        Dm_mhat = np.array([np.asarray(i.D_m) * i.m_hat for i in inputs])
        D_rho = np.array([i.D_rho for i in inputs])
        D_m = np.array([np.asarray(i.D_m) for i in inputs])
        _, iters, fallbacks = _newton_solve(
            rho_hat, Dm_mhat, D_rho, D_m, 1.0, mob, NEWTON_TOL, default_offset(mob)
        )
        assert fallbacks == 0
        assert iters <= 100


class TestProxField:
    def test_identity_on_zero_momentum(self, rng):
        g = GridSpec(n=(6,), lo=(0.0,), hi=(1.0,))
        mob = Mobility.concave_quadratic(0.0, 1.0)
        rho_hat = rng.uniform(0.1, 0.9, g.N)
        m_hat = np.zeros((g.N, 1))
        D = np.ones(g.N)
        rho, m = prox_field(rho_hat, m_hat, D, np.ones((g.N, 1)), 0.5, 0.1, mob, g)
        np.testing.assert_allclose(rho, rho_hat, atol=1e-12)
        np.testing.assert_array_equal(m, 0.0)

    @pytest.mark.parametrize("mob", KINDS, ids=KIND_IDS)
    def test_matches_per_cell_solves(self, mob, rng):
        g = GridSpec(n=(4,), lo=(0.0,), hi=(2.0,))
        lam, tau = 0.5, 0.1
        zeta = lam * g.dV / tau
        rho_hat = rng.uniform(-1.5, 1.5, g.N)
        m_hat = rng.uniform(-1.0, 1.0, (g.N, 1))
        D_rho = rng.uniform(0.5, 2.0, g.N)
        D_m = rng.uniform(0.5, 2.0, (g.N, 1))
        rho, m = prox_field(rho_hat, m_hat, D_rho, D_m, lam, tau, mob, g)
        for i in range(g.N):
            inp = ProxCellInput(rho_hat=float(rho_hat[i]), m_hat=m_hat[i],
                                D_rho=float(D_rho[i]), D_m=D_m[i], zeta=zeta)
            r_i, m_i = prox_cell(inp, mob)
            assert rho[i] == pytest.approx(r_i, abs=1e-9)
            np.testing.assert_allclose(m[i], m_i, atol=1e-9)

    def test_bound_preservation_far_out_inputs(self, rng):
        g = GridSpec(n=(50,), lo=(0.0,), hi=(1.0,))
        mob = Mobility.concave_quadratic(-1.0, 1.0)
        rho_hat = rng.uniform(-50.0, 50.0, g.N)
        m_hat = rng.uniform(-10.0, 10.0, (g.N, 1))
        rho, _ = prox_field(rho_hat, m_hat, np.ones(g.N), np.ones((g.N, 1)),
                            0.5, 0.1, mob, g)
        assert np.all(rho >= -1.0) and np.all(rho <= 1.0)
        assert not np.any(np.isnan(rho))

    def test_stats_accumulate(self, rng):
        g = GridSpec(n=(8,), lo=(0.0,), hi=(1.0,))
        stats = ProxStats()
        prox_field(rng.uniform(0, 1, g.N), rng.uniform(-1, 1, (g.N, 1)),
                   np.ones(g.N), np.ones((g.N, 1)), 0.5, 0.1,
                   Mobility.linear(), g, stats=stats)
        assert stats.calls == 1
        assert stats.max_newton_iters >= 1
        assert stats.bisection_fallbacks == 0


@settings(max_examples=80, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    mob_i=st.integers(0, len(KINDS) - 1),
)
def test_firm_nonexpansiveness_weighted_norm(seed, mob_i):
    # prox is nonexpansive in the I_u-weighted norm
    mob = KINDS[mob_i]
    rng = np.random.default_rng(seed)
    g = GridSpec(n=(5,), lo=(0.0,), hi=(1.0,))
    D_rho = rng.uniform(0.2, 5.0, g.N)
    D_m = rng.uniform(0.2, 5.0, (g.N, 1))
    lam, tau = 0.7, 0.2

    def apply(rho_hat, m_hat):
        return prox_field(rho_hat, m_hat, D_rho, D_m, lam, tau, mob, g)

    x_rho, x_m = rng.uniform(-2, 2, g.N), rng.uniform(-2, 2, (g.N, 1))
    y_rho, y_m = rng.uniform(-2, 2, g.N), rng.uniform(-2, 2, (g.N, 1))
    px_rho, px_m = apply(x_rho, x_m)
    py_rho, py_m = apply(y_rho, y_m)

    def wnorm(dr, dm):
        return float(np.sum(D_rho * dr**2) + np.sum(D_m * dm**2))

    lhs = wnorm(px_rho - py_rho, px_m - py_m)
    rhs = wnorm(x_rho - y_rho, x_m - y_m)
    assert lhs <= rhs * (1.0 + 1e-9) + 1e-12
