import json

import numpy as np
import pytest

from oldroyd import checkpoint, cli, experiments, lp
from oldroyd.config import from_dict
from oldroyd.dynamics import zero_state

SIM = {
    "grid": {"n": 2, "size": 32},
    "model": {"variant": "GeneralizedNoDamping", "alpha": 1.5},
    "stepper": {"dt": 0.05, "t_end": 0.5, "output_every": 2},
    "initial": {"amplitude": 0.01, "seed": 3},
}


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


class TestInitialData:
    def test_normalized_and_valid(self):
        cfg = from_dict(SIM)
        s = experiments.initial_state(cfg)
        s.check()
        assert lp.sobolev_norm(s.u, 6) == pytest.approx(0.01, rel=1e-12)
        assert lp.sobolev_norm(s.tau, 6) == pytest.approx(0.01, rel=1e-12)

    def test_same_physical_data_on_finer_grid(self):
        cfg = from_dict(SIM)
        a = experiments.initial_state(cfg).u.physical().data
        fine = cfg.replace(grid=cfg.grid.__class__(2, 64))
        b = experiments.initial_state(fine).u.physical().data
        assert np.max(np.abs(b[:, ::2, ::2] - a)) <= 1e-12 * np.max(np.abs(a))


class TestSimulate:
    def test_outputs(self, tmp_path):
        res = experiments.run_simulate(from_dict(SIM), tmp_path)
        for name in ("config.json", "energy.csv", "trajectory.csv", "final.oldb", "final.oldb.json", "summary.json"):
            assert (tmp_path / name).exists()
        header = (tmp_path / "energy.csv").read_text().splitlines()[0]
        assert header == "t,E1,E2_u_int,E2_phi_low_int,E2_phi_high_int,cancellation_residual"
        assert res.status == "ok"
        u, tau = checkpoint.load_fields(tmp_path / "final.oldb")
        assert np.array_equal(u.data, res.trajectory.final.u.data)

    def test_zero_data_gives_zero_ledgers(self, tmp_path):
        cfg = from_dict(SIM)
        res = experiments.run_simulate(cfg, tmp_path, state0=zero_state(cfg.make_grid()))
        for r in res.ledger.rows:
            assert all(r[c] == 0.0 for c in r if c != "t")

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = from_dict(SIM)
        experiments.run_simulate(cfg, tmp_path / "a")
        experiments.run_simulate(cfg, tmp_path / "b")
        for name in ("energy.csv", "trajectory.csv", "final.oldb", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_periodic_checkpoints(self, tmp_path):
        raw = dict(SIM, output={"checkpoint_every": 2})
        res = experiments.run_simulate(from_dict(raw), tmp_path)
        assert res.summary["checkpoints"] == ["checkpoint_00000000.oldb", "checkpoint_00000004.oldb", "checkpoint_00000008.oldb"]


class TestEnergyAudit:
    def test_small_data_not_flagged(self, tmp_path):
        res = experiments.run_energy_audit(from_dict(SIM), tmp_path)
        assert res.summary["flag"] is False
        assert res.summary["c_fit"] > 0

    def test_zero_data(self):
        cfg = from_dict(SIM)
        res = experiments.run_energy_audit(cfg, False, state0=zero_state(cfg.make_grid()))
        assert res.summary["flag"] is False and res.summary["c_fit"] == 0.0

    def test_requires_generalized_variant(self):
        from oldroyd.errors import ConfigError

        raw = dict(SIM, model={"variant": "ViscousDiffusive"})
        with pytest.raises(ConfigError):
            experiments.run_energy_audit(from_dict(raw), False)


class TestSweep:
    RAW = {
        "kind": "nu-sweep",
        "grid": {"n": 2, "size": 32},
        "model": {"variant": "ViscousDiffusive"},
        "stepper": {"dt": 0.02, "t_end": 0.2, "output_every": 2},
        "nu_list": [0.1, 0.01, 0.001],
        "initial": {"amplitude": 10.0},
    }

    def test_shared_data_and_outputs(self, tmp_path):
        rep = experiments.run_nu_sweep(from_dict(self.RAW), tmp_path)
        for nu in rep.nu:
            assert rep.g_t[nu][0] == 0.0
        assert len(rep.max_g) == 3 and all(rep.valid)
        assert np.isfinite(rep.slope)
        assert (tmp_path / "rates.csv").read_text().startswith("nu,max_G,max_G_half_dt,dt_rel_error,valid")
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["nu0_label"].startswith("empirical")

    def test_zero_viscosity_member_matches_reference(self):
        cfg = from_dict(self.RAW)
        state0 = experiments.initial_state(cfg)
        ref = experiments._evolve((state0, cfg.make_params("InviscidDiffusive", 0.0), cfg.stepper))[0]
        mem = experiments._evolve((state0, cfg.make_params("ViscousDiffusive", 0.0), cfg.stepper))[0]
        assert np.all(experiments._g_series(mem, ref, 1.0) == 0.0)

    def test_growth_constant_fit(self):
        t = np.linspace(0, 1, 1001)
        g = 0.01 * np.exp(2 * t)  # dG/dt = 2 G with M = 1
        c1, c2 = experiments.fit_growth_constants([(0.0, t, g, np.ones_like(t), np.zeros_like(t))])
        assert c1 == pytest.approx(2.0, rel=1e-2)

    def test_nu0_formula(self):
        t = np.linspace(0, 1, 101)
        # constant ||u|| = 1, M = 0: nu0 = 1 / (8 C2 T)
        assert experiments.nu0_formula(t, np.ones_like(t), np.zeros_like(t), 1.0, 0.5) == pytest.approx(0.25)
        assert experiments.nu0_formula(t, np.ones_like(t), np.zeros_like(t), 1.0, 0.0) is None


class TestCli:
    def test_simulate_and_besov(self, tmp_path, capsys):
        p = write(tmp_path, SIM)
        assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
        rc = cli.main(["besov-norm", "--config", str(p), "--out", str(tmp_path / "b"), "--field", str(tmp_path / "o" / "final.oldb"), "--s", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[1] == "j,weighted_block_norm" and lines[-1].startswith("total,")

    def test_config_error_exit_code(self, tmp_path):
        p = write(tmp_path, dict(SIM, bogus=1))
        assert cli.main(["simulate", "--config", str(p)]) == cli.EXIT_CONFIG

    def test_missing_checkpoint(self, tmp_path):
        p = write(tmp_path, SIM)
        assert cli.main(["besov-norm", "--config", str(p), "--field", str(tmp_path / "none.oldb")]) == cli.EXIT_CONFIG

    def test_cfl_failure_is_config_error(self, tmp_path):
        raw = dict(SIM, initial={"amplitude": 1e4}, stepper={"dt": 0.1, "t_end": 0.2})
        assert cli.main(["simulate", "--config", str(write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_blowup_exit_code(self, tmp_path, monkeypatch):
        from oldroyd.errors import BlowUpError
        from oldroyd.integrator import Trajectory

        def boom(state0, params, config, observers=(), **kw):
            for obs in observers:
                obs(0.0, state0)
            traj = Trajectory(snapshots=[(0.0, state0)], integral=[0.0])
            raise BlowUpError(0.0, traj)

        monkeypatch.setattr(experiments, "integrate", boom)
        p = write(tmp_path, SIM)
        assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_BLOWUP
        assert json.loads((tmp_path / "o" / "summary.json").read_text())["status"] == "blowup"

    def test_seed_flag(self, tmp_path):
        p = write(tmp_path, SIM)
        cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "a"), "--seed", "11"])
        echoed = json.loads((tmp_path / "a" / "config.json").read_text())
        assert echoed["initial"]["seed"] == 11

    def test_commutator_test(self, tmp_path):
        raw = {
            "kind": "commutator-test",
            "grid": {"n": 2, "size": 32},
            "model": {"variant": "GeneralizedNoDamping"},
            "ensemble": {"samples": 2, "s_values": [0.0, 1.0], "refine_size": 64},
        }
        p = write(tmp_path, raw)
        assert cli.main(["commutator-test", "--config", str(p), "--out", str(tmp_path / "c")]) == 0
        assert (tmp_path / "c" / "report.csv").exists()
