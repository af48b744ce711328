import numpy as np
import pytest

from intentraj.core import GoalRegion, Position, Trajectory, region_contains
from intentraj.motion import (
    LinearMotionModel,
    PredictionRequest,
    ilm_predict,
    predict_with_intention,
    sample_goal_position,
    time_to_go,
)


class TestPredictionRequest:
    def test_accepts_goal_inside_region(self):
        region = GoalRegion(0, Position(1.0, 1.0), half_width=0.5)
        req = PredictionRequest(Trajectory([[0, 0], [0.1, 0]]), region, Position(1.2, 0.9), 5)
        assert req.steps == 5

    def test_rejects_goal_outside_region(self):
        region = GoalRegion(0, Position(1.0, 1.0), half_width=0.5)
        with pytest.raises(ValueError):
            PredictionRequest(Trajectory([[0, 0], [0.1, 0]]), region, Position(2.0, 2.0), 5)

    def test_rejects_non_positive_steps(self):
        region = GoalRegion(0, Position(0.0, 0.0), half_width=0.5)
        with pytest.raises(ValueError):
            PredictionRequest(Trajectory([[0, 0], [0.1, 0]]), region, Position(0.0, 0.0), 0)


class TestSampleGoalPosition:
    def test_degenerate_region_returns_center(self):
        region = GoalRegion(0, Position(2.0, -1.0), half_width=1e-12)
        g = sample_goal_position(region, np.random.default_rng(0))
        assert g.x == pytest.approx(2.0, abs=1e-11)
        assert g.y == pytest.approx(-1.0, abs=1e-11)

    def test_samples_inside_and_uniform(self):
        region = GoalRegion(0, Position(1.0, 1.0), half_width=0.75)
        rng = np.random.default_rng(1)
        samples = np.array(
            [sample_goal_position(region, rng).as_array() for _ in range(10_000)]
        )
        for s in samples:
            assert region_contains(region, Position(s[0], s[1]))
        # empirical mean within 3 sigma of the center per axis
        sigma = (2 * 0.75) / np.sqrt(12) / np.sqrt(10_000)
        assert abs(samples[:, 0].mean() - 1.0) < 3 * sigma
        assert abs(samples[:, 1].mean() - 1.0) < 3 * sigma


class TestTimeToGo:
    def test_closed_form(self):
        # average step 0.5, distance 2.0 -> ceil(4.0) = 4
        history = Trajectory([[0, 0], [0.5, 0]])
        assert time_to_go(history, Position(2.5, 0.0)) == 4

    def test_stationary_clamps_to_t_max(self):
        history = Trajectory([[0, 0], [0, 0], [0, 0]])
        assert time_to_go(history, Position(1.0, 0.0)) == 1000

    def test_goal_at_current_position(self):
        history = Trajectory([[0, 0], [1, 0]])
        assert time_to_go(history, Position(1.0, 0.0)) == 1

    def test_monotone_in_distance(self):
        history = Trajectory([[0, 0], [0.3, 0]])
        prev = 0
        for d in np.linspace(0.1, 20, 50):
            steps = time_to_go(history, Position(0.3 + d, 0.0))
            assert steps >= prev
            prev = steps

    def test_too_short_history(self):
        with pytest.raises(ValueError):
            time_to_go(Trajectory([[0, 0]]), Position(1, 0))


class TestIlmPredict:
    def test_midpoint_construction(self):
        history = Trajectory([[0, 0], [0, 0]])
        pred = ilm_predict(history, Position(1.0, 0.0), 2)
        np.testing.assert_allclose(pred.points, [[0.5, 0.0], [1.0, 0.0]])

    def test_single_step_is_goal(self):
        pred = ilm_predict(Trajectory([[3, 4], [3, 4]]), Position(-1.0, 2.0), 1)
        np.testing.assert_array_equal(pred.points, [[-1.0, 2.0]])

    def test_equal_displacements_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            x_t = rng.normal(0, 5, size=2)
            g = rng.normal(0, 5, size=2)
            history = Trajectory([x_t - [0.1, 0.0], x_t])
            pred = ilm_predict(history, Position(g[0], g[1]), 7)
            disp = np.diff(np.vstack([x_t, pred.points]), axis=0)
            np.testing.assert_allclose(disp, np.tile((g - x_t) / 7, (7, 1)), atol=1e-12)

    def test_endpoint_exact(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            x_t = rng.normal(0, 10, size=2)
            g = rng.normal(0, 10, size=2)
            steps = int(rng.integers(1, 50))
            pred = ilm_predict(Trajectory([x_t, x_t]), Position(g[0], g[1]), steps)
            np.testing.assert_allclose(pred.points[-1], g, atol=1e-9)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(31)
        history = Trajectory(rng.normal(0, 2, size=(4, 2)))
        goal = Position(3.0, -2.0)
        v = np.array([10.0, -7.0])
        base = ilm_predict(history, goal, 9)
        moved = ilm_predict(history.translated(v), Position(goal.x + v[0], goal.y + v[1]), 9)
        np.testing.assert_allclose(moved.points, base.points + v, atol=1e-9)


class TestPredictWithIntention:
    def test_output_length_matches_drawn_goal(self):
        region = GoalRegion(0, Position(5.0, 0.0), half_width=0.75)
        history = Trajectory([[0, 0], [0.1, 0.0]])
        rng = np.random.default_rng(43)
        pred = predict_with_intention(LinearMotionModel(), history, region, rng)
        # replay the same draws to recover the goal and horizon
        rng2 = np.random.default_rng(43)
        goal = sample_goal_position(region, rng2)
        steps = time_to_go(history, goal)
        assert len(pred) == steps
        np.testing.assert_allclose(pred.points[-1], goal.as_array(), atol=1e-9)

    def test_reproducible_given_seed(self):
        region = GoalRegion(0, Position(-3.0, 2.0), half_width=0.5)
        history = Trajectory([[0, 0], [0.05, 0.05]])
        a = predict_with_intention(LinearMotionModel(), history, region, np.random.default_rng(9))
        b = predict_with_intention(LinearMotionModel(), history, region, np.random.default_rng(9))
        np.testing.assert_array_equal(a.points, b.points)

    def test_straight_history_ends_inside_region(self):
        region = GoalRegion(0, Position(4.0, 0.0), half_width=0.75)
        history = Trajectory(np.column_stack([np.linspace(0, 1, 11), np.zeros(11)]))
        pred = predict_with_intention(LinearMotionModel(), history, region, np.random.default_rng(4))
        assert region_contains(region, Position(*pred.points[-1]))


class TestBatchPath:
    def test_batch_matches_sequential_ilm(self):
        rng = np.random.default_rng(5)
        history = Trajectory(rng.normal(0, 1, size=(5, 2)))
        goals = rng.normal(0, 4, size=(6, 2))
        steps = rng.integers(1, 12, size=6)
        grid = LinearMotionModel().predict_batch(history, goals, steps)
        for i in range(6):
            seq = ilm_predict(history, Position(*goals[i]), int(steps[i]))
            np.testing.assert_allclose(grid[i, : steps[i]], seq.points, atol=1e-12)
            # padding holds the endpoint
            np.testing.assert_allclose(
                grid[i, steps[i]:], np.tile(goals[i], (grid.shape[1] - steps[i], 1)), atol=1e-12
            )
