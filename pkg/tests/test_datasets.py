import numpy as np
import pytest

from pathbench.datasets import (
    CANONICAL_NAMES,
    Dataset,
    DatasetFormatError,
    ImitationSample,
    canonical_trajectories,
    generate_expert_dataset,
    load_dataset,
    save_dataset,
    split,
    to_matrices,
)
from pathbench.dynamics import ControlCommand
from pathbench.paths import ErrorState


@pytest.fixture(scope="module")
def expert_ds(params):
    # short rollouts keep the suite quick; the acceptance pipeline uses the
    # full duration
    return generate_expert_dataset(params, seed=7, duration_per_path=20.0)


class TestCanonicalTrajectories:
    def test_exactly_seven(self, params):
        paths = canonical_trajectories(params)
        assert len(paths) == 7
        assert set(paths) == set(CANONICAL_NAMES)

    def test_radius_two_circle_length(self, params):
        paths = canonical_trajectories(params)
        assert paths["circle_cw_2"].length == pytest.approx(4 * np.pi, rel=1e-3)

    def test_line_zero_curvature(self, params):
        paths = canonical_trajectories(params)
        assert np.all(paths["line_30"].kappa == 0.0)
        assert paths["line_30"].length == pytest.approx(30.0)

    def test_all_at_reference_speed(self, params):
        for path in canonical_trajectories(params).values():
            assert np.all(path.v == 1.0)


class TestGenerateExpertDataset:
    def test_sample_count_arithmetic(self, expert_ds):
        assert len(expert_ds) == 7 * round(20.0 / 0.1)

    def test_commands_inside_box(self, expert_ds):
        for s in expert_ds.samples:
            assert 0.0 <= s.u.alpha <= 1.0
            assert -1.0 <= s.u.beta <= 1.0

    def test_covers_both_steering_signs(self, expert_ds):
        betas = [s.u.beta for s in expert_ds.samples]
        assert min(betas) < -0.05
        assert max(betas) > 0.05

    def test_line_competence_gentle(self, params):
        # tracking quality on the straight is judged without the deliberate
        # perturbation bursts
        ds = generate_expert_dataset(params, seed=3, duration_per_path=60.0,
                                     excitation="gentle")
        e2 = [abs(s.e.e2) for s in ds.samples if s.trajectory_id == "line_30"]
        assert np.mean(e2) <= 0.1

    def test_deterministic_per_seed(self, params, tmp_path):
        a = generate_expert_dataset(params, seed=5, duration_per_path=10.0)
        b = generate_expert_dataset(params, seed=5, duration_per_path=10.0)
        fa, fb = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        save_dataset(a, fa)
        save_dataset(b, fb)
        assert open(fa, "rb").read() == open(fb, "rb").read()

    def test_different_seed_differs(self, params):
        a = generate_expert_dataset(params, seed=1, duration_per_path=10.0)
        b = generate_expert_dataset(params, seed=2, duration_per_path=10.0)
        ua = [s.u.beta for s in a.samples]
        ub = [s.u.beta for s in b.samples]
        assert ua != ub

    def test_metadata(self, expert_ds, params):
        md = expert_ds.metadata
        assert md["params_hash"] == params.digest()
        assert md["dt"] == 0.1
        assert md["seed"] == 7
        assert md["excitation"] == "bursts"

    def test_fitted_gains_steer_toward_path(self, expert_ds, params):
        # gains fit on expert data must steer toward the reference: positive
        # cross-track error (reference to the left) maps to positive steering
        from pathbench.controllers import fit_pid
        from pathbench.dynamics import alpha_hold

        E, U = to_matrices(expert_ds)
        U_fb = U.copy()
        U_fb[0] -= alpha_hold(1.0, params)
        gains = fit_pid(E, U_fb)
        assert gains.K[1, 1] > 0.1  # steering response to e2
        assert gains.K[1, 2] > 0.1  # steering response to e3
        beta_left = gains.K[1] @ np.array([0.5, 1.0, 0.0, 0.0])
        beta_right = gains.K[1] @ np.array([0.5, -1.0, 0.0, 0.0])
        assert beta_left > 0.0 > beta_right

    def test_duration_validation(self, params):
        with pytest.raises(ValueError):
            generate_expert_dataset(params, seed=0, duration_per_path=5.0)

    def test_excitation_validation(self, params):
        with pytest.raises(ValueError):
            generate_expert_dataset(params, seed=0, duration_per_path=20.0,
                                    excitation="chaotic")


class TestCsvRoundTrip:
    def test_round_trip_identity(self, expert_ds, tmp_path):
        f = str(tmp_path / "ds.csv")
        save_dataset(expert_ds, f)
        loaded = load_dataset(f)
        assert len(loaded) == len(expert_ds)
        for a, b in zip(expert_ds.samples, loaded.samples):
            assert a == b  # exact float round trip via repr
        assert loaded.metadata == expert_ds.metadata

    def test_empty_file_errors(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text("t,e1,e2,e3,e4,alpha,beta,source,trajectory_id\n")
        with pytest.raises(DatasetFormatError, match="empty"):
            load_dataset(str(f))

    def test_bad_header(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DatasetFormatError, match=":1:"):
            load_dataset(str(f))

    def test_malformed_row_names_line(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("t,e1,e2,e3,e4,alpha,beta,source,trajectory_id\n"
                     "0.0,0,0,0,0,0.1,0.0,mpc-expert,line_30\n"
                     "0.1,0,zero,0,0,0.1,0.0,mpc-expert,line_30\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            load_dataset(str(f))

    def test_mixed_sources_preserved(self, tmp_path):
        samples = [
            ImitationSample(0.0, ErrorState(0, 0, 0, 0), ControlCommand(0.1, 0.0),
                            "mpc-expert", "line_30"),
            ImitationSample(0.1, ErrorState(0, 0.1, 0, 0), ControlCommand(0.2, 0.1),
                            "human-driver", "circle_cw_5"),
        ]
        f = str(tmp_path / "mixed.csv")
        save_dataset(Dataset(samples, {"dt": 0.1}), f)
        loaded = load_dataset(f)
        assert [s.source for s in loaded.samples] == ["mpc-expert", "human-driver"]

    def test_loaded_rows_validate(self, expert_ds, tmp_path):
        f = str(tmp_path / "ds.csv")
        save_dataset(expert_ds, f)
        for s in load_dataset(f).samples:
            assert np.isfinite([s.e.e1, s.e.e2, s.e.e3, s.e.e4]).all()
            assert 0.0 <= s.u.alpha <= 1.0


class TestSplit:
    def test_sizes(self, expert_ds):
        train, val = split(expert_ds, 0.1, seed=0)
        n = len(expert_ds)
        assert len(val) == round(n * 0.1)
        assert len(train) + len(val) == n

    def test_disjoint_union(self, expert_ds):
        train, val = split(expert_ds, 0.25, seed=3)
        key = lambda s: (s.t, s.trajectory_id, s.e.e1, s.e.e2)
        all_keys = sorted(map(key, expert_ds.samples))
        merged = sorted(map(key, train.samples + val.samples))
        assert merged == all_keys

    def test_seed_reproducible(self, expert_ds):
        a = split(expert_ds, 0.1, seed=4)
        b = split(expert_ds, 0.1, seed=4)
        assert [s.t for s in a[1].samples] == [s.t for s in b[1].samples]

    def test_different_seeds_differ(self, expert_ds):
        a = split(expert_ds, 0.1, seed=4)
        b = split(expert_ds, 0.1, seed=5)
        assert [s.t for s in a[1].samples] != [s.t for s in b[1].samples]

    def test_fraction_validated(self, expert_ds):
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                split(expert_ds, bad, seed=0)


class TestToMatrices:
    def test_shapes(self, expert_ds):
        E, U = to_matrices(expert_ds)
        assert E.shape == (4, len(expert_ds))
        assert U.shape == (2, len(expert_ds))

    def test_sample_invariants(self):
        with pytest.raises(ValueError):
            ImitationSample(0.0, ErrorState(0, 0, 0, 0), ControlCommand(0, 0),
                            "martian", "line_30")
