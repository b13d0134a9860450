"""Tests for the GD / SGD / FedAvg trajectory engine."""

from __future__ import annotations

import numpy as np
import pytest


class TestCheckpoints:
    """Test default checkpoint selection and Trajectory validation."""

    def test_powers_of_two_and_final(self):
        """Step 0, powers of two and the horizon are recorded."""
        from localsgd_lab.engine import default_checkpoints

        assert default_checkpoints(10) == [0, 1, 2, 4, 8, 10]

    def test_round_boundaries_added(self):
        """Multiples of the round length are recorded as well."""
        from localsgd_lab.engine import default_checkpoints

        assert default_checkpoints(10, 5) == [0, 1, 2, 4, 5, 8, 10]

    def test_trajectory_must_start_at_zero(self):
        """A trajectory without step 0 is rejected."""
        from localsgd_lab.engine import Trajectory
        from localsgd_lab.errors import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            Trajectory(np.array([1, 2]), np.array([0.0, 0.0]))

    def test_trajectory_steps_strictly_increase(self):
        """Repeated steps are rejected."""
        from localsgd_lab.engine import Trajectory
        from localsgd_lab.errors import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            Trajectory(np.array([0, 2, 2]), np.zeros(3))

    def test_trajectory_lookup(self):
        """at() reads a checkpoint and rejects unrecorded steps."""
        from localsgd_lab.engine import Trajectory

        traj = Trajectory(np.array([0, 4]), np.array([1.0, 0.5]))
        assert traj.at(4) == 0.5
        assert traj.final == 0.5
        with pytest.raises(KeyError):
            traj.at(3)


class TestGradientDescent:
    """Test noiseless GD."""

    def test_contracts_on_quadratic(self):
        """GD on (L/2) x^2 gives x_k = (1 - eta L)^k x0."""
        from localsgd_lab.engine import run_gd
        from localsgd_lab.objectives import make_quadratic

        traj = run_gd(make_quadratic(1.0, 0.0), 1.0, 0.1, 3)
        assert traj.final == pytest.approx(0.729)
        assert len(traj.checkpoints) == 4

    def test_divergence_reports_step(self):
        """eta = 3 doubles |x| each step and trips the guard at step 40."""
        from localsgd_lab.engine import run_gd
        from localsgd_lab.errors import DivergedError
        from localsgd_lab.objectives import make_quadratic

        with pytest.raises(DivergedError) as info:
            run_gd(make_quadratic(1.0, 0.0), 1.0, 3.0, 100)
        assert info.value.step == 40


class TestSgd:
    """Test keyed SGD."""

    def test_same_key_reproduces_trajectory(self):
        """Identical keys give bit-identical runs."""
        from localsgd_lab.engine import run_sgd
        from localsgd_lab.objectives import make_piecewise_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_piecewise_quadratic(1.0, 0.5, 1.0)
        key = RngKey(5, "sgd", replica=17)
        first = run_sgd(obj, 0.0, 0.05, 32, key, full_trace=True)
        second = run_sgd(obj, 0.0, 0.05, 32, key, full_trace=True)
        assert np.array_equal(first.values, second.values)

    def test_block_matches_single_replicas(self):
        """A vectorized block equals the replicas run one by one."""
        from localsgd_lab.engine import run_sgd, simulate_sgd
        from localsgd_lab.objectives import make_piecewise_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_piecewise_quadratic(2.0, 0.2, 1.0)
        key = RngKey(9, "block")
        block = simulate_sgd(obj, 0.0, 0.1, 8, key, 5, [8])[0]
        singles = [run_sgd(obj, 0.0, 0.1, 8, key.at(replica=j)).final for j in range(5)]
        assert np.array_equal(block, np.array(singles))

    def test_antithetic_pair_cancels_on_quadratic(self):
        """On a quadratic the antithetic average equals the noiseless iterate."""
        from localsgd_lab.engine import run_sgd
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_quadratic(1.0, 1.0)
        key = RngKey(1, "anti")
        plus = run_sgd(obj, 1.0, 0.1, 10, key, antithetic_sign=1).final
        minus = run_sgd(obj, 1.0, 0.1, 10, key, antithetic_sign=-1).final
        assert (plus + minus) / 2 == pytest.approx(0.9**10, abs=1e-12)

    def test_invalid_sign_rejected(self):
        """antithetic_sign must be +1 or -1."""
        from localsgd_lab.engine import run_sgd
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        with pytest.raises(InvalidParameterError):
            run_sgd(make_quadratic(1.0, 1.0), 0.0, 0.1, 2, RngKey(0), antithetic_sign=0)

    def test_checkpoint_beyond_horizon_rejected(self):
        """Recording a step past k is an error."""
        from localsgd_lab.engine import simulate_sgd
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        with pytest.raises(InvalidParameterError):
            simulate_sgd(make_quadratic(1.0, 1.0), 0.0, 0.1, 4, RngKey(0), 2, [5])


class TestFedAvgConfig:
    """Test FedAvgConfig validation."""

    @pytest.mark.parametrize("field", ["K", "R", "M", "replicas"])
    def test_counts_must_be_positive(self, field):
        """K, R, M and replicas must be at least 1."""
        from localsgd_lab.engine import FedAvgConfig
        from localsgd_lab.errors import InvalidParameterError

        kwargs = {"eta": 0.1, "K": 2, "R": 2, "M": 2, field: 0}
        with pytest.raises(InvalidParameterError):
            FedAvgConfig(**kwargs)

    def test_eta_must_be_positive(self):
        """eta must be positive."""
        from localsgd_lab.engine import FedAvgConfig
        from localsgd_lab.errors import InvalidParameterError

        with pytest.raises(InvalidParameterError):
            FedAvgConfig(eta=0.0, K=1, R=1, M=1)


class TestFedAvg:
    """Test the FedAvg kernel against known reductions."""

    def test_single_client_equals_sgd(self):
        """M = 1 FedAvg is SGD sampled at round boundaries, bit for bit."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_fedavg, simulate_sgd
        from localsgd_lab.objectives import make_piecewise_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_piecewise_quadratic(1.0, 0.5, 1.0)
        cfg = FedAvgConfig(eta=0.05, K=4, R=6, M=1)
        key = RngKey(21, "fedavg")
        run = run_fedavg(homogeneous_clients(obj, 1), cfg, key)
        sgd = simulate_sgd(obj, 0.0, 0.05, 24, key, 1, list(range(0, 25, 4)))[:, 0]
        assert np.array_equal(run.round_starts.values, sgd)

    def test_hetero_pair_follows_round_map(self):
        """Deterministic heterogeneous clients follow the closed-form round map."""
        from localsgd_lab.engine import FedAvgConfig, run_fedavg
        from localsgd_lab.objectives import make_hetero_pair
        from localsgd_lab.oracles import hetero_round_starts
        from localsgd_lab.rng import RngKey

        cfg = FedAvgConfig(eta=0.1, K=5, R=10, M=2)
        run = run_fedavg(make_hetero_pair(1.0, 1.0), cfg, RngKey(0))
        expected = hetero_round_starts(1.0, 0.1, 5, 10, 1.0)
        assert np.max(np.abs(run.round_starts.values - expected)) <= 1e-12

    def test_client_order_does_not_matter(self):
        """Permuting the client list leaves every round start unchanged."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, simulate_fedavg
        from localsgd_lab.objectives import make_hetero_pair, make_logcosh_instance
        from localsgd_lab.rng import RngKey

        clients = homogeneous_clients(make_logcosh_instance(1.0, 0.5, 1.0), 4)
        cfg = FedAvgConfig(eta=0.05, K=3, R=4, M=4, x0=0.5)
        key = RngKey(31, "permute")
        forward = simulate_fedavg(clients, cfg, key, 64)
        shuffled = simulate_fedavg([clients[i] for i in (2, 0, 3, 1)], cfg, key, 64)
        assert np.array_equal(forward.round_starts, shuffled.round_starts)

        pair = make_hetero_pair(1.0, 1.0)
        cfg = FedAvgConfig(eta=0.1, K=5, R=6, M=2)
        assert np.array_equal(
            simulate_fedavg(pair, cfg, key, 2).round_starts, simulate_fedavg(pair[::-1], cfg, key, 2).round_starts
        )

    def test_local_traces_per_client(self):
        """Local traces are kept for every client tag."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_fedavg
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        cfg = FedAvgConfig(eta=0.1, K=2, R=3, M=3)
        run = run_fedavg(homogeneous_clients(make_quadratic(1.0, 1.0), 3), cfg, RngKey(2), full_trace=True)
        assert sorted(run.local) == [0, 1, 2]
        assert list(run.local[1].steps) == list(range(7))

    def test_duplicate_client_tags_rejected(self):
        """Clients must have distinct tags."""
        from localsgd_lab.engine import FedAvgConfig, run_fedavg
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.objectives import ClientObjective, make_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_quadratic(1.0, 1.0)
        clients = [ClientObjective.of(obj, 0), ClientObjective.of(obj, 0)]
        with pytest.raises(InvalidParameterError):
            run_fedavg(clients, FedAvgConfig(eta=0.1, K=1, R=1, M=2), RngKey(0))

    def test_client_count_must_match(self):
        """The client list must have M entries."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_fedavg
        from localsgd_lab.errors import InvalidParameterError
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        with pytest.raises(InvalidParameterError):
            run_fedavg(homogeneous_clients(make_quadratic(1.0, 1.0), 2), FedAvgConfig(0.1, 1, 1, 3), RngKey(0))

    def test_composite_shape(self):
        """The composite kernel returns (dim, R + 1, n) round starts."""
        from localsgd_lab.engine import FedAvgConfig, simulate_fedavg_composite
        from localsgd_lab.objectives import make_lowerbound_composite
        from localsgd_lab.rng import RngKey

        comp = make_lowerbound_composite(1.0, 0.25, 1.0, 1.0, 2.0)
        out = simulate_fedavg_composite(comp, FedAvgConfig(0.1, 2, 3, 2), RngKey(4), 6)
        assert out.shape == (3, 4, 6)
        assert np.all(out[1, 0] == 1.0)


class TestBaselines:
    """Test minibatch and single-machine baselines."""

    def test_minibatch_with_one_gradient_is_sgd(self):
        """M = K = 1 minibatch SGD equals plain SGD."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_minibatch_sgd, simulate_sgd
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        obj = make_quadratic(1.0, 1.0)
        key = RngKey(8, "mb")
        traj = run_minibatch_sgd(homogeneous_clients(obj, 1), FedAvgConfig(0.1, 1, 5, 1, x0=1.0), key)
        sgd = simulate_sgd(obj, 1.0, 0.1, 5, key, 1, list(range(6)))[:, 0]
        assert np.array_equal(traj.values, sgd)

    def test_single_machine_samples_round_boundaries(self):
        """The single-machine baseline has one value per round start."""
        from localsgd_lab.engine import FedAvgConfig, homogeneous_clients, run_single_machine_sgd
        from localsgd_lab.objectives import make_quadratic
        from localsgd_lab.rng import RngKey

        traj = run_single_machine_sgd(
            homogeneous_clients(make_quadratic(1.0, 1.0), 2), FedAvgConfig(0.1, 3, 4, 2), RngKey(0)
        )
        assert list(traj.steps) == [0, 1, 2, 3, 4]

    def test_population_optimum_of_hetero_pair(self):
        """The heterogeneous pair shares the optimum 0."""
        from localsgd_lab.engine import population_gap, population_optimum
        from localsgd_lab.objectives import make_hetero_pair

        clients = make_hetero_pair(1.0, 1.0)
        assert population_optimum(clients) == 0.0
        assert float(population_gap(clients, np.array(2.0))) == pytest.approx(0.375 * 4.0)
