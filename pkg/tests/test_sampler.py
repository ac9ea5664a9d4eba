import numpy as np
import pytest

from dynview.errors import ConfigError
from dynview.geometry import Camera, CameraIntrinsics, CameraPose
from dynview.sampler import (
    TargetSpec,
    iteration_passes,
    select_inputs,
    validate_target_spec,
)


def cam():
    return Camera(CameraIntrinsics(32, 32, 15.5, 15.5, 32, 32),
                  CameraPose(R=np.eye(3), t=np.array([0.0, 0.0, 4.0])))


class TestSelectInputs:
    def test_interior_symmetric(self):
        sel = select_inputs(t_i=10, d=3, V=5, T=81)
        assert sel.indices == [4, 7, 10, 13, 16]
        assert sel.center_position == 2
        assert not sel.center_clamped

    def test_clamps_at_start(self):
        sel = select_inputs(t_i=1, d=2, V=5, T=81)
        assert sel.indices == [1, 1, 1, 3, 5]
        assert not sel.center_clamped

    def test_clamps_at_end(self):
        sel = select_inputs(t_i=81, d=4, V=3, T=81)
        assert sel.indices == [77, 81, 81]

    def test_center_clamped_flag(self):
        # the center itself can never leave [1, T] because t_i is validated,
        # so the flag only trips when callers feed a raw out-of-range center
        sel = select_inputs(t_i=1, d=1, V=3, T=5)
        assert not sel.center_clamped
        assert sel.indices[sel.center_position] == 1

    def test_arity_always_v(self):
        for t_i in (1, 2, 40, 81):
            for d in (1, 5, 40):
                sel = select_inputs(t_i, d, 7, 81)
                assert len(sel.indices) == 7
                assert all(1 <= i <= 81 for i in sel.indices)
                assert sel.indices == sorted(sel.indices)

    def test_invalid_args(self):
        with pytest.raises(ConfigError):
            select_inputs(1, 1, 4, 81)     # even V
        with pytest.raises(ConfigError):
            select_inputs(1, 0, 3, 81)     # zero dilation
        with pytest.raises(ConfigError):
            select_inputs(0, 1, 3, 81)     # target time out of range
        with pytest.raises(ConfigError):
            select_inputs(82, 1, 3, 81)


class TestTargetSpec:
    def test_json_round_trip(self, tmp_path):
        spec = TargetSpec(entries=[(1, cam()), (2, cam()), (2, cam())],
                          dilations=[5, 1])
        path = tmp_path / "spec.json"
        spec.save(path)
        back = TargetSpec.load(path)
        assert back.times() == [1, 2, 2]
        assert back.dilations == [5, 1]
        assert np.allclose(back.entries[0][1].pose.t, [0, 0, 4])

    def test_dilations_must_strictly_decrease(self):
        with pytest.raises(ConfigError):
            TargetSpec(entries=[(1, cam())], dilations=[3, 3])
        with pytest.raises(ConfigError):
            TargetSpec(entries=[(1, cam())], dilations=[1, 5])

    def test_sync_spec_valid(self):
        spec = TargetSpec(entries=[(i, cam()) for i in range(1, 10)])
        assert validate_target_spec(spec, T=9) is None

    def test_bullet_spec_valid(self):
        spec = TargetSpec(entries=[(5, cam()) for _ in range(8)])
        assert validate_target_spec(spec, T=9) is None

    def test_unit_step_violation_located(self):
        spec = TargetSpec(entries=[(1, cam()), (2, cam()), (4, cam())])
        assert validate_target_spec(spec, T=9) == 2

    def test_out_of_range_time_located(self):
        spec = TargetSpec(entries=[(1, cam()), (0, cam())])
        assert validate_target_spec(spec, T=9) == 1

    def test_empty_spec_raises(self):
        with pytest.raises(ConfigError):
            validate_target_spec(TargetSpec(entries=[]), T=9)


class TestIterationPasses:
    def test_order_and_indices(self):
        spec = TargetSpec(entries=[(1, cam())], dilations=[9, 5, 1])
        assert iteration_passes(spec) == [(9, 0), (5, 1), (1, 2)]

    def test_empty_dilations(self):
        spec = TargetSpec(entries=[(1, cam())])
        spec.dilations = []
        with pytest.raises(ConfigError):
            iteration_passes(spec)
