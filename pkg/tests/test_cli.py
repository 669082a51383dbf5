import csv
import json

import numpy as np
import pytest

from equilearn.commands import run_dynamics as run_dynamics_command
from equilearn.config import settings
from equilearn.main import main
from equilearn.models.game_file import GameFile, MixtureFile, dump_game, dump_mixture, load_game, load_mixture
from equilearn.exceptions import DistributionError, GameValidationError
from equilearn.services.bayes_game import BayesianGame, BehaviorStrategy, MixedStrategy, default_sample_count, random_game
from equilearn.services.equilibrium_check import appendix_a_game
from equilearn.services.multiscale_dynamics import PlayerLearner
from equilearn.dependencies import make_rng


class StubbornLearner(PlayerLearner):
    """Ignores its rewards and always plays the last action."""

    def thread_tables(self) -> np.ndarray:
        tables = np.zeros((self.params.L, self.num_types, self.num_actions))
        tables[..., -1] = 1.0
        return tables

    def mixture(self) -> MixedStrategy:
        return MixedStrategy.uniform_mixture([BehaviorStrategy(q) for q in self.thread_tables()])


def dominant_action_game() -> BayesianGame:
    """Action 0 pays 1 and action 1 pays 0 for both players."""
    u = np.zeros((1, 1, 2, 2))
    u0, u1 = u.copy(), u.copy()
    u0[0, 0, 0, :] = 1.0
    u1[0, 0, :, 0] = 1.0
    return BayesianGame((1, 1), (2, 2), np.ones((1, 1)), (u0, u1))


@pytest.fixture
def files(tmp_path, matching_game, matching_bne):
    paths = {
        "game": tmp_path / "game.json",
        "bne": tmp_path / "bne.json",
        "anti": tmp_path / "anti.json",
        "dominant": tmp_path / "dominant.json",
        "uniform": tmp_path / "uniform.json",
    }
    paths["game"].write_text(dump_game(matching_game))
    paths["dominant"].write_text(dump_game(dominant_action_game()))
    paths["bne"].write_text(dump_mixture(MixtureFile(components=[[t.tolist() for t in matching_bne]])))
    flip = [[0.0, 1.0], [1.0, 0.0]]
    paths["anti"].write_text(dump_mixture(MixtureFile(components=[[flip, flip]])))
    half = [[0.5, 0.5], [0.5, 0.5]]
    paths["uniform"].write_text(dump_mixture(MixtureFile(components=[[half, half]])))
    return paths


def read_rows(path):
    with path.open(newline="") as f:
        return list(csv.reader(f))


class TestRunDynamics:
    def test_writes_outputs(self, files, tmp_path):
        out = tmp_path / "run"
        assert main(["run-dynamics", "--game", str(files["game"]), "--eps", "0.4", "--out", str(out)]) == 0
        trace = read_rows(out / "trace.csv")
        assert trace[0] == ["day", "player", "thread", "type", "action", "probability"]
        # T = 5^3 days, 2 players, 3 threads, 2 types, 2 actions
        assert len(trace) == 1 + 125 * 2 * 3 * 2 * 2
        assert b"\r\n" in (out / "trace.csv").read_bytes()
        regret = read_rows(out / "regret.csv")
        assert regret[0] == ["kind", "player", "type", "thread", "restart", "regret", "bound"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["T"] == 125 and summary["L"] == 3
        assert summary["bound_violations"] == 0
        assert summary["equilibrium"]["satisfied"]

    @pytest.mark.parametrize("mode", ["exact", "sampled:50"])
    def test_thread_count_does_not_change_output(self, files, tmp_path, threads, mode):
        outputs = []
        for count in (1, 4):
            threads(count)
            out = tmp_path / f"run{count}"
            argv = ["run-dynamics", "--game", str(files["game"]), "--eps", "0.55", "--seed", "42",
                    "--reward-mode", mode, "--out", str(out)]
            assert main(argv) == 0
            outputs.append({name: (out / name).read_bytes() for name in ("trace.csv", "regret.csv", "summary.json")})
        assert outputs[0] == outputs[1]

    def test_different_seeds_differ_when_sampled(self, files, tmp_path):
        texts = []
        for seed in ("1", "2"):
            out = tmp_path / seed
            argv = ["run-dynamics", "--game", str(files["game"]), "--eps", "0.55", "--seed", seed,
                    "--reward-mode", "sampled:5", "--out", str(out)]
            assert main(argv) == 0
            texts.append((out / "trace.csv").read_text())
        assert texts[0] != texts[1]

    def test_assert_bounds_passes_for_mwu(self, files, tmp_path):
        argv = ["run-dynamics", "--game", str(files["dominant"]), "--eps", "0.55", "--H", "4",
                "--assert-bounds", "--out", str(tmp_path)]
        assert main(argv) == 0

    def test_assert_bounds_catches_broken_learner(self, files, tmp_path, monkeypatch):
        monkeypatch.setattr(run_dynamics_command, "learner_factory", StubbornLearner)
        argv = ["run-dynamics", "--game", str(files["dominant"]), "--eps", "0.55", "--H", "4",
                "--assert-bounds", "--out", str(tmp_path)]
        assert main(argv) == 2
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["bound_violations"] > 0
        assert not summary["ok"]

    def test_broken_learner_without_assert(self, files, tmp_path, monkeypatch):
        monkeypatch.setattr(run_dynamics_command, "learner_factory", StubbornLearner)
        argv = ["run-dynamics", "--game", str(files["dominant"]), "--eps", "0.55", "--H", "4", "--out", str(tmp_path)]
        assert main(argv) == 0

    def test_h_below_minimum(self, files, tmp_path):
        argv = ["run-dynamics", "--game", str(files["game"]), "--eps", "0.5", "--H", "2", "--out", str(tmp_path)]
        assert main(argv) == 1

    @pytest.mark.parametrize("mode", ["sampled:0", "sampled:x", "noisy:3"])
    def test_bad_reward_mode(self, files, tmp_path, mode):
        argv = ["run-dynamics", "--game", str(files["game"]), "--reward-mode", mode, "--out", str(tmp_path)]
        assert main(argv) == 1

    def test_bare_sampled_uses_default_count(self, files, tmp_path, matching_game):
        argv = ["run-dynamics", "--game", str(files["game"]), "--eps", "0.55", "--reward-mode", "sampled",
                "--out", str(tmp_path)]
        assert main(argv) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["reward_mode"] == f"sampled:{default_sample_count(matching_game, 0.55)}"

    def test_many_types_past_pure_strategy_cap(self, tmp_path):
        # 2^13 pure strategies for player 0, above the default enumeration cap
        game = tmp_path / "g.json"
        game.write_text(dump_game(random_game((13, 1), (2, 2), make_rng(5))))
        out = tmp_path / "run"
        argv = ["run-dynamics", "--game", str(game), "--eps", "0.9", "--H", "2", "--L", "2", "--out", str(out)]
        assert main(argv) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["skipped_swap_cells"] == []
        assert summary["equilibrium"]["satisfied"]
        swaps = [row for row in read_rows(out / "regret.csv") if row[0] == "type_swap"]
        assert len(swaps) == 14

    def test_cells_over_decomposition_cap_are_skipped(self, tmp_path, monkeypatch):
        game = tmp_path / "g.json"
        game.write_text(dump_game(random_game((3, 1), (2, 2), make_rng(6))))
        monkeypatch.setattr(settings, "decomposition_cap", 4)
        argv = ["run-dynamics", "--game", str(game), "--eps", "0.9", "--H", "2", "--L", "2", "--out", str(tmp_path)]
        assert main(argv) == 0
        assert (tmp_path / "trace.csv").exists() and (tmp_path / "regret.csv").exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert [(c["player"], c["type_index"]) for c in summary["skipped_swap_cells"]] == [(0, 0), (0, 1), (0, 2)]
        assert summary["equilibrium"] is None
        assert "decomposition cap" in summary["equilibrium_skipped"]
        assert not summary["ok"]
        assert main(argv + ["--assert-bounds"]) == 3

    def test_threshold_scales_with_payoff_range(self, tmp_path):
        unit = random_game((2, 2), (2, 2), make_rng(7))
        scaled = BayesianGame(
            unit.type_counts, unit.action_counts, unit.prior, tuple(10.0 * u for u in unit.utilities),
            payoff_bounds=(0.0, 10.0),
        )
        reports = []
        for name, g in (("unit", unit), ("scaled", scaled)):
            path = tmp_path / f"{name}.json"
            path.write_text(dump_game(g))
            out = tmp_path / name
            assert main(["run-dynamics", "--game", str(path), "--eps", "0.55", "--seed", "3", "--out", str(out)]) == 0
            reports.append(json.loads((out / "summary.json").read_text())["equilibrium"])
        assert reports[1]["epsilon"] == pytest.approx(10 * reports[0]["epsilon"])
        assert reports[0]["epsilon"] == pytest.approx(3 * 0.55)
        assert reports[1]["worst_gain"] == pytest.approx(10 * reports[0]["worst_gain"], rel=1e-6)
        assert reports[0]["satisfied"] == reports[1]["satisfied"]

    def test_malformed_game(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run-dynamics", "--game", str(bad), "--out", str(tmp_path)]) == 1

    def test_missing_game(self, tmp_path):
        assert main(["run-dynamics", "--game", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


class TestCheckEq:
    @pytest.mark.parametrize("notion", ["bne", "bne-ex-ante", "every-type", "ex-ante"])
    def test_planted_bne_at_zero(self, files, capsys, notion):
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(files["bne"]), "--eps", "0", "--notion", notion]
        assert main(argv) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["satisfied"]

    def test_non_bne_reports_witness(self, files, capsys):
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(files["anti"]), "--eps", "0.5", "--notion", "bne"]
        assert main(argv) == 1
        report = json.loads(capsys.readouterr().out)
        assert report["witness"]["gain"] == pytest.approx(0.6)

    def test_behaviorized_example_fails(self, tmp_path, capsys):
        assert main(["appendix-a", "--n", "4", "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        argv = ["check-eq", "--game", str(tmp_path / "game.json"), "--mu", str(tmp_path / "mu_behaviorized.json"),
                "--eps", "0.3"]
        assert main(argv) == 1
        report = json.loads(capsys.readouterr().out)
        assert report["witness"]["player"] == 0
        assert report["witness"]["deviation"]["swap"]

    def test_rank_two_example_passes(self, tmp_path):
        assert main(["appendix-a", "--n", "4", "--out", str(tmp_path)]) == 0
        argv = ["check-eq", "--game", str(tmp_path / "game.json"), "--mu", str(tmp_path / "mu.json"), "--eps", "1e-9"]
        assert main(argv) == 0

    def test_scale_cap(self, files, monkeypatch):
        monkeypatch.setattr(settings, "decomposition_cap", 2)
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(files["uniform"]), "--eps", "0.1"]
        assert main(argv) == 3
        # pure profiles put mass on a single strategy
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(files["bne"]), "--eps", "0.1"]
        assert main(argv) == 0

    def test_malformed_mixture(self, files, tmp_path):
        bad = tmp_path / "mu.json"
        bad.write_text(json.dumps({"components": [[[[1.0, 0.0]], [[1.0, 0.0]]]]}))
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(bad)]
        assert main(argv) == 1

    def test_needs_mixture(self, files):
        assert main(["check-eq", "--game", str(files["game"])]) == 1

    def test_bne_needs_single_component(self, files, tmp_path, matching_bne):
        mu = tmp_path / "mu.json"
        flip = [[0.0, 1.0], [1.0, 0.0]]
        mu.write_text(dump_mixture(MixtureFile(components=[[t.tolist() for t in matching_bne], [flip, flip]])))
        argv = ["check-eq", "--game", str(files["game"]), "--mu", str(mu), "--notion", "bne"]
        assert main(argv) == 1


class TestReduction:
    def test_planted_bne(self, files, tmp_path):
        argv = ["reduction", "--game", str(files["game"]), "--mu", str(files["bne"]), "--eps", "0.01",
                "--H", "4", "--out", str(tmp_path)]
        assert main(argv) == 0
        report = json.loads((tmp_path / "reduction.json").read_text())
        assert report["ok"]
        assert report["bne"]["strategies"] == [np.eye(2).tolist(), np.eye(2).tolist()]
        assert report["bne"]["mixtures"] == [{"weights": [1.0], "tables": [np.eye(2).tolist()]}] * 2
        assert len(report["kibitzer_deviation"]["mean"]) == 3

    def test_zero_budget(self, files, tmp_path):
        argv = ["reduction", "--game", str(files["game"]), "--mu", str(files["bne"]), "--eps", "0.01",
                "--H", "4", "--budget", "0", "--rollouts", "5", "--out", str(tmp_path)]
        assert main(argv) == 4
        report = json.loads((tmp_path / "reduction.json").read_text())
        assert not report["ok"]
        assert report["gadgets_visited"] == 0
        assert report["kibitzer_deviation"]["rollouts"] == 5

    def test_profile_from_dynamics(self, files, tmp_path):
        argv = ["reduction", "--game", str(files["game"]), "--eps", "0.5", "--T-rank", "4", "--rollouts", "20",
                "--out", str(tmp_path)]
        assert main(argv) == 0
        report = json.loads((tmp_path / "reduction.json").read_text())
        assert report["rank"] == 4
        # ceil(ln(4) / 0.5^2)
        assert report["H"] == 6

    def test_horizon_needs_positive_eps(self, files, tmp_path):
        argv = ["reduction", "--game", str(files["game"]), "--mu", str(files["bne"]), "--eps", "0", "--out", str(tmp_path)]
        assert main(argv) == 1

    def test_dynamics_too_long(self, files, tmp_path):
        argv = ["reduction", "--game", str(files["game"]), "--eps", "0.05", "--out", str(tmp_path)]
        assert main(argv) == 3


class TestBehaviorizationExample:
    def test_reports_gains(self, tmp_path, capsys):
        assert main(["appendix-a", "--n", "100", "--out", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ce_gain"] <= 1e-9
        assert report["behaviorized_gain"] >= 0.9
        # 2^100 behaviorized strategies: no example files
        assert not (tmp_path / "mu.json").exists()


class TestBench:
    def test_writes_results(self, tmp_path):
        assert main(["bench", "--out", str(tmp_path)]) == 0
        results = json.loads((tmp_path / "bench.json").read_text())
        assert set(results) == {"mwu", "vovk", "dynamics"}
        assert results["mwu"]["max_regret_over_bound"] <= 1.0
        assert results["dynamics"]["max_swap_regret_over_bound"] <= 1.0


class TestGameFiles:
    def test_round_trip(self, tmp_path):
        g = random_game((2, 3), (3, 2), make_rng(50))
        path = tmp_path / "g.json"
        path.write_text(dump_game(g))
        loaded = load_game(path)
        assert loaded.type_counts == g.type_counts and loaded.action_counts == g.action_counts
        assert np.array_equal(loaded.prior, g.prior)
        for a, b in zip(loaded.utilities, g.utilities):
            assert np.array_equal(a, b)

    def test_payoff_bounds_survive(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(dump_game(appendix_a_game(3)))
        assert load_game(path).payoff_bounds == (-2.0, 1.0)

    def test_wrong_table_size(self, tmp_path):
        data = GameFile.from_game(dominant_action_game()).model_dump()
        data["utilities"][1] = data["utilities"][1][:-1]
        path = tmp_path / "g.json"
        path.write_text(json.dumps(data))
        with pytest.raises(GameValidationError, match="Utility table 1"):
            load_game(path)

    def test_kibitzer_count_must_match(self, tmp_path):
        path = tmp_path / "mu.json"
        path.write_text(json.dumps({"components": [[[[1.0]], [[1.0]]]], "kibitzer": []}))
        with pytest.raises(DistributionError):
            load_mixture(path)
