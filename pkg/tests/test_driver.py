"""Flow driver: presets, scaling, sequential JKO stepping, strict mode."""

import numpy as np
import pytest
from dataclasses import replace

from jkoflow.driver import (
    PRESET_NAMES,
    FlowConfig,
    NonConvergenceError,
    keller_segel_amplitude,
    preset,
    run_flow,
    scaled,
)
from jkoflow.energy import ENTROPY, EnergyModel, InternalPotential
from jkoflow.grid import GridSpec, mass, pack, unpack
from jkoflow.mobility import Mobility
from jkoflow.solver import SolverParams, solve_jko_step


def small_flow(steps=3, seed=0) -> FlowConfig:
    def rho0(g, rng):
        x = g.cell_centers()[:, 0]
        r = 1.2 + 0.5 * np.sin(2.0 * np.pi * x) + 0.05 * rng.standard_normal(g.N)
        return r / mass(r, g)

    return FlowConfig(
        name="test_flow",
        grid=GridSpec(n=(12,), lo=(0.0,), hi=(1.0,)),
        mobility=Mobility.linear(),
        tau=0.01,
        steps=steps,
        solver_params=SolverParams(lambda0=0.3),
        seed=seed,
        build_energy=lambda g: EnergyModel(internal=InternalPotential(ENTROPY)),
        initial_rho=rho0,
    )


class TestPresets:
    def test_names(self):
        assert PRESET_NAMES == (
            "saturation1d",
            "keller_segel_1d",
            "cahn_hilliard_2d",
            "aggregation_drift_2d",
            "wetting_3d",
            "fracture_3d",
        )

    def test_all_presets_build(self):
        for name in PRESET_NAMES:
            cfg = preset(name)
            assert cfg.name == name
            assert cfg.tau > 0 and cfg.steps > 0

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="saturation1d"):
            preset("nope")

    def test_saturation_parameters(self):
        cfg = preset("saturation1d")
        assert cfg.grid.n == (400,)
        assert cfg.grid.lo == (-4.0,) and cfg.grid.hi == (4.0,)
        assert cfg.tau == pytest.approx(0.01)
        assert cfg.steps == 1500
        assert cfg.mobility.bounds() == (0.0, 1.0)
        assert cfg.solver_params.lambda0 == pytest.approx(0.05)
        assert mass(cfg.rho0(), cfg.grid) == pytest.approx(3.32, rel=1e-12)

    def test_keller_segel_parameters(self):
        cfg = preset("keller_segel_1d")
        assert cfg.grid.n == (800,)
        assert cfg.grid.lo == (-15.0,)
        assert cfg.tau == pytest.approx(0.01)
        # two bumps of amplitude C/sqrt(pi), each of mass C/2
        assert mass(cfg.rho0(), cfg.grid) == pytest.approx(1.0, rel=1e-3)

    def test_cahn_hilliard_parameters(self):
        cfg = preset("cahn_hilliard_2d")
        assert cfg.grid.n == (128, 128)
        assert cfg.tau == pytest.approx(0.001)
        assert cfg.mobility.bounds() == (-1.0, 1.0)
        r = cfg.rho0()
        assert np.all(np.abs(r + 0.4) <= 0.1 + 1e-12)

    def test_wetting_parameters(self):
        cfg = preset("wetting_3d")
        assert cfg.grid.n == (64, 64, 40)
        assert cfg.solver_params.kappa2 == pytest.approx(0.3)
        model = cfg.energy_model()
        assert model.wall is not None
        assert model.wall.axis == 2 and model.wall.side == 0

    def test_fracture_tolerances(self):
        cfg = preset("fracture_3d")
        assert cfg.solver_params.tol == pytest.approx(1e-6)
        assert cfg.solver_params.TOL == pytest.approx(1e-6)

    def test_amplitude_variant(self):
        base = preset("keller_segel_1d")
        big = keller_segel_amplitude(base, 15.0)
        assert mass(big.rho0(), big.grid) == pytest.approx(15.0, rel=1e-3)
        assert big.rho0().max() == pytest.approx(15.0 * base.rho0().max(), rel=1e-6)


class TestScaled:
    def test_coarsens_grid_and_steps(self):
        cfg = scaled(preset("cahn_hilliard_2d"), 4)
        assert cfg.grid.n == (32, 32)
        assert cfg.steps == 2500
        assert cfg.tau == pytest.approx(0.001)  # time step untouched
        assert cfg.grid.lo == (0.0, 0.0) and cfg.grid.hi == (1.0, 1.0)

    def test_wetting_scaling(self):
        cfg = scaled(preset("wetting_3d"), 4)
        assert cfg.grid.n == (16, 16, 10)

    def test_identity_factor(self):
        cfg = preset("saturation1d")
        assert scaled(cfg, 1) is cfg

    def test_degenerate_grid_rejected(self):
        with pytest.raises(ValueError):
            scaled(preset("saturation1d"), 128)
        with pytest.raises(ValueError):
            scaled(preset("saturation1d"), 0)

    def test_energy_resampled_on_coarse_grid(self):
        cfg = scaled(preset("keller_segel_1d"), 8)
        model = cfg.energy_model()
        assert model.interaction.shape == (2 * cfg.grid.n[0] - 1,)


class TestRunFlow:
    def test_single_step_matches_solve_jko_step(self):
        cfg = small_flow(steps=1)
        traj = run_flow(cfg)
        g = cfg.grid
        u = pack(cfg.rho0(), np.zeros((g.N, 1)))
        u_ref, _, _ = solve_jko_step(
            u, np.zeros(g.N), cfg.mobility, cfg.energy_model(),
            cfg.solver_params, g, cfg.tau,
        )
        rho_ref, _ = unpack(u_ref, g)
        cfg_dump = replace(cfg, dump_steps=(1,))
        traj = run_flow(cfg_dump)
        np.testing.assert_allclose(traj.snapshots[1], rho_ref, atol=1e-14)

    def test_record_invariants(self):
        cfg = small_flow(steps=3)
        traj = run_flow(cfg)
        assert len(traj.records) == 4
        m0 = traj.records[0].mass
        for k, rec in enumerate(traj.records):
            assert rec.time == pytest.approx(k * cfg.tau)
            assert abs(rec.mass - m0) <= cfg.solver_params.tol * cfg.grid.volume
            assert rec.converged
        energies = [r.energy for r in traj.records]
        slack = 2.0 * cfg.solver_params.TOL * (1.0 + max(abs(e) for e in energies))
        assert all(b <= a + slack for a, b in zip(energies, energies[1:]))
        assert traj.total_iterations == sum(r.iterations for r in traj.records)

    def test_uniform_density_is_stationary(self):
        cfg = small_flow(steps=2)
        cfg = replace(cfg, initial_rho=lambda g, rng: np.full(g.N, 1.0))
        traj = run_flow(replace(cfg, dump_steps=(0, 2)))
        np.testing.assert_allclose(traj.snapshots[2], traj.snapshots[0], atol=1e-8)

    def test_seed_reproducibility(self):
        a = run_flow(replace(small_flow(steps=1, seed=7), dump_steps=(1,)))
        b = run_flow(replace(small_flow(steps=1, seed=7), dump_steps=(1,)))
        c = run_flow(replace(small_flow(steps=1, seed=8), dump_steps=(1,)))
        np.testing.assert_array_equal(a.snapshots[1], b.snapshots[1])
        assert not np.array_equal(a.snapshots[1], c.snapshots[1])

    def test_unknown_solver(self):
        with pytest.raises(ValueError, match="vptpd"):
            run_flow(small_flow(), solver="gradient_descent")

    def test_adaptive_solver_runs(self):
        traj = run_flow(small_flow(steps=2), solver="vptpd_s")
        assert all(r.converged for r in traj.records)

    def test_baseline_solver_runs(self):
        traj = run_flow(small_flow(steps=1), solver="prepdjko")
        assert traj.records[-1].converged

    def test_strict_nonconvergence_raises(self):
        cfg = small_flow(steps=1)
        cfg = replace(cfg, solver_params=SolverParams(lambda0=0.3, iter_max=2))
        with pytest.raises(NonConvergenceError) as exc:
            run_flow(cfg, strict=True)
        assert exc.value.step == 1

    def test_non_strict_continues(self):
        cfg = small_flow(steps=2)
        cfg = replace(cfg, solver_params=SolverParams(lambda0=0.3, iter_max=2))
        traj = run_flow(cfg, strict=False)
        assert len(traj.records) == 3
        assert not traj.records[1].converged
