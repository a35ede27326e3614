"""Synthetic fields, the cantilever forward model and the validation studies."""

import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stiffid import (
    BeamSpec,
    Deflection,
    GroundTruth,
    InvalidPattern,
    LinearizationWarning,
    MeshPattern,
    NotCanonical,
    Wrench,
    apply_rigid_transform,
    beam_compliance_oracle,
    beam_load_cases,
    beam_tip_field,
    centroid,
    estimate_lin,
    generate_pattern,
    rotation_xyz,
    run_amplitude_study,
    run_noise_study,
    run_zero_detection_study,
)
from stiffid.synthetic import DEFAULT_LOADS, STUDY_METHODS, _normal_samples


class TestPatterns:
    @pytest.mark.parametrize("edge,step,count", [(10.0, 1.0, 1331),
                                                 (10.0, 2.0, 216),
                                                 (2.0, 1.0, 27)])
    def test_cubic_node_count(self, edge, step, count):
        field = generate_pattern(MeshPattern.cubic(edge, step))
        assert field.n == count
        assert field.centered
        assert np.all(field.displacements == 0.0)
        assert_allclose(centroid(field), np.zeros(3), atol=1e-12)

    def test_square_node_count_and_plane(self):
        field = generate_pattern(MeshPattern.square(10.0, 1.0, "x"))
        assert field.n == 121
        assert_allclose(field.positions[:, 0], 0.0, atol=0)
        for axis in (1, 2):
            assert field.positions[:, axis].min() == -5.0
            assert field.positions[:, axis].max() == 5.0

    @pytest.mark.parametrize("axis,zero_col", [("x", 0), ("y", 1), ("z", 2)])
    def test_square_axis_selects_plane(self, axis, zero_col):
        field = generate_pattern(MeshPattern.square(4.0, 2.0, axis))
        assert np.all(field.positions[:, zero_col] == 0.0)

    def test_reference_point_offsets_positions(self):
        # nodes laid out around x = 995 but reported relative to x = 1000
        field = generate_pattern(MeshPattern.cubic(10.0, 5.0),
                                 center=(995.0, 0.0, 0.0),
                                 reference_point=(1000.0, 0.0, 0.0))
        assert_allclose(centroid(field), [-5.0, 0.0, 0.0], atol=1e-12)
        assert_allclose(field.reference_point, [1000.0, 0.0, 0.0])

    def test_custom_pattern(self):
        nodes = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]
        field = generate_pattern(MeshPattern.custom(nodes))
        assert_array_equal(field.positions, nodes)

    def test_step_must_divide_edge(self):
        with pytest.raises(InvalidPattern):
            MeshPattern.cubic(10.0, 0.3)

    def test_positive_dimensions_required(self):
        with pytest.raises(InvalidPattern):
            MeshPattern.cubic(0.0, 1.0)
        with pytest.raises(InvalidPattern):
            MeshPattern.square(10.0, -1.0)

    def test_custom_nodes_shape_checked(self):
        with pytest.raises(InvalidPattern):
            MeshPattern.custom(np.zeros((4, 2)))


class TestRigidTransform:
    def test_pure_translation(self):
        base = generate_pattern(MeshPattern.cubic(4.0, 1.0))
        truth = GroundTruth(Deflection([0.1, -0.2, 0.3], np.zeros(3)))
        moved = apply_rigid_transform(base, truth)
        assert_allclose(moved.displacements,
                        np.tile([0.1, -0.2, 0.3], (base.n, 1)), atol=0)

    def test_first_order_transform_formula(self):
        base = generate_pattern(MeshPattern.cubic(4.0, 1.0))
        rotation = np.array([1e-4, -2e-4, 3e-4])
        truth = GroundTruth(Deflection([0.5, 0.0, -0.5], rotation))
        moved = apply_rigid_transform(base, truth)
        expected = np.cross(rotation, base.positions) + [0.5, 0.0, -0.5]
        assert_allclose(moved.displacements, expected, atol=1e-15)

    def test_exact_rotation_formula(self):
        base = generate_pattern(MeshPattern.cubic(4.0, 1.0))
        angles = np.deg2rad([0.1, 0.1, 0.1])
        truth = GroundTruth(Deflection(np.zeros(3), angles))
        moved = apply_rigid_transform(base, truth, exact_rotation=True)
        R = rotation_xyz(angles)
        expected = base.positions @ (R - np.eye(3)).T
        assert_allclose(moved.displacements, expected, atol=1e-15)

    def test_exact_and_first_order_differ_at_second_order(self):
        base = generate_pattern(MeshPattern.cubic(10.0, 1.0))
        angles = np.deg2rad([0.1, 0.1, 0.1])
        truth = GroundTruth(Deflection(np.zeros(3), angles))
        diff = (apply_rigid_transform(base, truth, exact_rotation=True).displacements
                - apply_rigid_transform(base, truth).displacements)
        worst = np.max(np.abs(diff))
        assert 1e-8 < worst < 1e-4

    def test_noise_is_seeded(self):
        base = generate_pattern(MeshPattern.cubic(4.0, 1.0))
        truth = GroundTruth(Deflection([0.1, 0.0, 0.0], np.zeros(3)),
                            sigma=1e-4, seed=7)
        a = apply_rigid_transform(base, truth)
        b = apply_rigid_transform(base, truth)
        assert_array_equal(a.displacements, b.displacements)
        other = GroundTruth(Deflection([0.1, 0.0, 0.0], np.zeros(3)),
                            sigma=1e-4, seed=8)
        c = apply_rigid_transform(base, other)
        assert np.max(np.abs(c.displacements - a.displacements)) > 0.0

    def test_noise_level_matches_sigma(self):
        base = generate_pattern(MeshPattern.cubic(10.0, 1.0))
        truth = GroundTruth(Deflection(np.zeros(3), np.zeros(3)),
                            sigma=1.0, seed=0)
        noise = apply_rigid_transform(base, truth).displacements
        assert abs(noise.std() - 1.0) < 0.05   # 3993 samples
        assert abs(noise.mean()) < 0.05

    def test_gaussian_sampler_moments(self):
        rng = np.random.default_rng(0)
        samples = _normal_samples(rng, 200001)  # odd count exercises the trim
        assert samples.size == 200001
        assert abs(samples.mean()) < 0.01
        assert abs(samples.std() - 1.0) < 0.01
        # roughly symmetric tails
        assert 0.9 < -samples.min() / samples.max() < 1.1

    def test_requires_centered_field(self):
        base = generate_pattern(MeshPattern.cubic(2.0, 1.0))
        from stiffid import DisplacementField, uncenter_field
        raw = uncenter_field(base)
        assert isinstance(raw, DisplacementField)
        with pytest.raises(ValueError):
            apply_rigid_transform(raw, GroundTruth(Deflection([1, 0, 0], np.zeros(3))))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            GroundTruth(Deflection(np.zeros(3), np.zeros(3)), sigma=-1.0)


class TestBeamModel:
    def test_section_properties(self):
        spec = BeamSpec()
        assert spec.area == 100.0
        assert_allclose(spec.bending_inertia, 10000.0 / 12.0, rtol=1e-14)
        assert_allclose(spec.shear_modulus, 2.0e5 / 2.532, rtol=1e-12)
        assert_allclose(spec.torsion_constant, 1406.0, rtol=1e-12)

    def test_invalid_dimensions_rejected(self):
        with pytest.raises(ValueError):
            BeamSpec(length=0.0)
        with pytest.raises(ValueError):
            BeamSpec(poisson=0.5)

    def test_oracle_matrix_values(self):
        k = beam_compliance_oracle().k
        assert_allclose(k[0, 0], 5.0e-5, rtol=1e-12)
        assert_allclose(k[1, 1], 2.0, rtol=1e-12)
        assert_allclose(k[2, 2], 2.0, rtol=1e-12)
        assert_allclose(k[3, 3], 9.0043e-6, rtol=1e-4)
        assert_allclose(k[4, 4], 6.0e-6, rtol=1e-12)
        assert_allclose(k[5, 5], 6.0e-6, rtol=1e-12)
        assert_allclose(k[1, 5], 3.0e-3, rtol=1e-12)
        assert_allclose(k[2, 4], -3.0e-3, rtol=1e-12)

    def test_oracle_zero_pattern(self):
        k = beam_compliance_oracle().k
        assert np.count_nonzero(k) == 10
        assert np.count_nonzero(k == 0.0) == 26
        assert_array_equal(k, k.T)
        assert np.all(np.linalg.eigvalsh(k) > 0.0)

    def test_oracle_length_scaling(self):
        k1 = beam_compliance_oracle(BeamSpec(length=1000.0)).k
        k2 = beam_compliance_oracle(BeamSpec(length=2000.0)).k
        assert_allclose(k2[0, 0] / k1[0, 0], 2.0, rtol=1e-12)   # axial ~ L
        assert_allclose(k2[1, 1] / k1[1, 1], 8.0, rtol=1e-12)   # bending ~ L^3
        assert_allclose(k2[1, 5] / k1[1, 5], 4.0, rtol=1e-12)   # coupling ~ L^2
        assert_allclose(k2[5, 5] / k1[5, 5], 2.0, rtol=1e-12)   # rotation ~ L

    def test_axial_experiment_is_pure_translation(self):
        field = beam_tip_field(BeamSpec(), Wrench([1000.0, 0, 0], [0, 0, 0]),
                               MeshPattern.cubic(10.0, 1.0))
        assert_allclose(field.displacements,
                        np.tile([5.0e-2, 0.0, 0.0], (1331, 1)), atol=1e-15)

    def test_moment_experiment_recovered_by_estimator(self):
        wrench = Wrench([0, 0, 0], [0.0, 1000.0, 0.0])
        field = beam_tip_field(BeamSpec(), wrench, MeshPattern.cubic(10.0, 1.0))
        fit = estimate_lin(field)
        expected = beam_compliance_oracle().k @ wrench.as_vector()
        assert_allclose(fit.deflection.as_vector(), expected, atol=1e-12)

    def test_combined_wrench_rejected(self):
        with pytest.raises(NotCanonical):
            beam_tip_field(BeamSpec(), Wrench([1.0, 1.0, 0.0], [0, 0, 0]),
                           MeshPattern.cubic(10.0, 1.0))

    def test_load_cases_layout(self):
        cases = beam_load_cases()
        assert [c.source for c in cases] == ["fx", "fy", "fz", "mx", "my", "mz"]
        for j, case in enumerate(cases):
            index, value = case.wrench.single_component()
            assert index == j
            assert value == DEFAULT_LOADS[j]
            assert case.field.n == 1331

    def test_load_cases_deterministic(self):
        a = beam_load_cases(sigma=5e-5, seed=12)
        b = beam_load_cases(sigma=5e-5, seed=12)
        for ca, cb in zip(a, b):
            assert_array_equal(ca.field.displacements, cb.field.displacements)


class TestAmplitudeStudy:
    def test_noise_free_rotation_sweep(self):
        study = run_amplitude_study([0.1, 1.0])
        assert set(study.max_errors) == set(STUDY_METHODS)
        lin = study.max_errors["lin"]
        avg = study.max_errors["svd-avg"]
        plus = study.max_errors["svd-plus"]
        # quadratic growth of the linearization error
        assert 50.0 < lin[1] / lin[0] < 200.0
        # isotropic pattern: both averaged estimators coincide
        assert_allclose(avg, lin, atol=1e-12)
        # entry averaging beats single-sided extraction
        assert avg[0] <= plus[0] and avg[1] <= plus[1]

    def test_translation_sweep_is_exact(self):
        study = run_amplitude_study([0.01, 0.1, 1.0, 10.0], kind="translation")
        assert set(study.max_errors) == {"lin", "svd-avg"}
        for errors in study.max_errors.values():
            assert np.max(errors) <= 1e-13

    def test_noisy_sweep_locates_preferred_band(self):
        study = run_amplitude_study([0.01, 0.1, 1.0], trials=2, seed=3,
                                    sigma=5e-5)
        assert study.best_amplitude == 0.1
        assert 0.1 in study.band
        assert study.trials == 2

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            run_amplitude_study([0.1], kind="spiral")

    def test_csv_and_json_outputs(self, tmp_path):
        study = run_amplitude_study([0.1, 1.0])
        path = tmp_path / "study.csv"
        study.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + len(STUDY_METHODS)
        assert lines[0].startswith("method,0.1,1.0")
        data = study.to_json_dict()
        assert data["kind"] == "rotation"
        assert data["amplitudes"] == [0.1, 1.0]
        assert set(data["max_errors"]) == set(STUDY_METHODS)


class TestNoiseStudy:
    def test_noise_free_errors_vanish(self):
        study = run_noise_study(sigma=0.0, trials=3)
        assert study.max_translation_error <= 1e-12
        assert study.max_rotation_error <= 1e-12

    def test_spread_matches_analytic_stds(self):
        study = run_noise_study(sigma=5e-5, trials=100, seed=1)
        emp = np.array(study.empirical_translation_std
                       + study.empirical_rotation_std)
        ana = np.array(study.analytic_translation_std
                       + study.analytic_rotation_std)
        assert_allclose(emp, ana, rtol=0.20)
        mean = np.abs(np.array(study.mean_error))
        assert np.all(mean <= 5.0 * ana / math.sqrt(100.0))

    def test_deterministic_for_fixed_seed(self):
        a = run_noise_study(sigma=1e-4, trials=5, seed=9)
        b = run_noise_study(sigma=1e-4, trials=5, seed=9)
        assert a == b

    def test_json_dict_keys(self):
        study = run_noise_study(sigma=0.0, trials=2)
        data = study.to_json_dict()
        for key in ("sigma", "trials", "empirical_rotation_std",
                    "analytic_rotation_std", "mean_error"):
            assert key in data


class TestZeroDetectionStudy:
    def test_small_run_is_perfect(self):
        study = run_zero_detection_study(seeds=6)
        assert study.perfect_seeds == 6
        assert study.pass_fraction == 1.0
        assert all(m == 0 for m in study.zeros_missed)
        assert all(l == 0 for l in study.nonzeros_lost)
        assert all(s >= 100.0 for s in study.min_safety)

    def test_json_dict_round_numbers(self):
        study = run_zero_detection_study(seeds=2)
        data = study.to_json_dict()
        assert data["seeds"] == 2
        assert data["pass_fraction"] == 1.0
        assert len(data["min_safety"]) == 2

    def test_impossible_threshold_counts_failures(self):
        study = run_zero_detection_study(seeds=2, safety_threshold=1e12)
        assert study.perfect_seeds == 0
        assert study.pass_fraction == 0.0


def test_linearization_warning_suppressed_inside_studies():
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinearizationWarning)
        run_amplitude_study([5.0])  # 5 deg is far outside the linear regime
