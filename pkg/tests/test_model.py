import numpy as np
import pytest

from dynview.arraycore import Tensor, ops
from dynview.errors import ConfigError, ShapeError
from dynview.geometry import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    make_depth_schedule,
)
from dynview.model import (
    LatentState,
    ModelConfig,
    forward_step,
    init_params,
    model_flops,
    param_count,
    patchify,
    reproject_state,
    unet_layout,
    unpatchify,
)
from dynview.psv import PlaneSweepVolume, build_dynamic_psv

TINY = ModelConfig(C=4, D=4, F=2, V=3, seed=0)


def cam(tx=0.0, res=16):
    k = CameraIntrinsics(fx=res, fy=res, cx=(res - 1) / 2, cy=(res - 1) / 2,
                         width=res, height=res)
    return Camera(k, CameraPose(R=np.eye(3), t=np.array([tx, 0.0, 2.0])))


def tiny_inputs(res=16, seed=0):
    rng = np.random.default_rng(seed)
    frames = [rng.random((3, res, res)).astype(np.float32) for _ in range(TINY.V)]
    cams = [cam(0.1 * i, res) for i in range(TINY.V)]
    sched = make_depth_schedule(1.0, 6.0, TINY.D)
    return frames, cams, cam(0.05, res), sched


class TestModelConfig:
    def test_validates(self):
        with pytest.raises(ConfigError):
            ModelConfig(F=3)
        with pytest.raises(ConfigError):
            ModelConfig(C=5)
        with pytest.raises(ConfigError):
            ModelConfig(V=2)
        with pytest.raises(ConfigError):
            ModelConfig(depth_group=2, D=7)

    def test_json_round_trip(self):
        mc = ModelConfig(C=8, D=4, F=1, V=5, seed=3)
        assert ModelConfig.from_json(mc.to_json()) == mc


class TestLayoutAndInit:
    def test_layout_collapses_depth(self):
        # walking the layout strides must reduce the depth axis to exactly 1
        for mc in (TINY, ModelConfig(C=4, D=8, F=2, V=3),
                   ModelConfig(C=4, D=32, F=2, V=3),
                   ModelConfig(C=4, D=8, F=2, V=3, depth_group=2)):
            depth = mc.D // mc.depth_group
            for entry in unet_layout(mc):
                stride = entry[3]
                depth = (depth - 1) // stride[0] + 1 if stride[0] == 2 else depth
            assert depth == 1

    def test_channel_chain_consistent(self):
        layout = unet_layout(TINY)
        assert layout[0][1] == 2 * TINY.C      # PSV latent + reprojected state
        assert layout[-1][2] == TINY.C

    def test_init_deterministic(self):
        a = init_params(TINY)
        b = init_params(TINY)
        assert set(a) == set(b)
        for n in a:
            assert np.array_equal(a[n].data, b[n].data)

    def test_param_count_positive(self):
        params = init_params(TINY)
        assert param_count(params) == sum(p.size for p in params.values())


class TestPatchify:
    def test_shape(self):
        frames, cams, tgt, sched = tiny_inputs()
        psv = build_dynamic_psv(frames, cams, tgt, sched)
        params = init_params(TINY)
        y = patchify(psv, params, TINY)
        assert y.shape == (TINY.D, TINY.C, 8, 8)

    def test_indivisible_resolution_raises(self):
        params = init_params(TINY)
        data = np.zeros((TINY.D, TINY.V, 3, 15, 15), np.float32)
        psv = PlaneSweepVolume(data=data, schedule=make_depth_schedule(1, 5, TINY.D),
                               target_camera=cam())
        with pytest.raises(ShapeError):
            patchify(psv, params, TINY)

    def test_view_major_fold(self):
        # the conv input channel v*3+c must be view v, color c
        frames, cams, tgt, sched = tiny_inputs()
        psv = build_dynamic_psv(frames, cams, tgt, sched)
        params = init_params(TINY)
        w = np.zeros((TINY.C, 3 * TINY.V, TINY.F, TINY.F), np.float32)
        w[0, 1 * 3 + 2, 0, 0] = 1.0      # picks view 1, blue, top-left of patch
        params["patchify.w"] = Tensor(w)
        y = patchify(psv, params, TINY).numpy()
        data = psv.data if not isinstance(psv.data, Tensor) else psv.data.numpy()
        assert np.allclose(y[:, 0], data[:, 1, 2, ::2, ::2], atol=1e-6)


class TestReprojectState:
    def test_initial_state_zeros(self):
        sched = make_depth_schedule(1, 6, TINY.D)
        z = reproject_state(LatentState.initial(), cam(), sched, TINY,
                            latent_hw=(8, 8))
        assert z.shape == (TINY.D, TINY.C, 8, 8)
        assert np.all(z.numpy() == 0)

    def test_same_camera_replicates_state(self):
        rng = np.random.default_rng(1)
        z0 = Tensor(rng.random((1, TINY.C, 8, 8)).astype(np.float32))
        state = LatentState(z=z0, camera=cam(), valid=True)
        sched = make_depth_schedule(1, 6, TINY.D)
        out = reproject_state(state, cam(), sched, TINY).numpy()
        for k in range(TINY.D):
            assert np.allclose(out[k], z0.numpy()[0], atol=1e-6)

    def test_initial_state_needs_size(self):
        sched = make_depth_schedule(1, 6, TINY.D)
        with pytest.raises(ShapeError):
            reproject_state(LatentState.initial(), cam(), sched, TINY)


class TestUnpatchify:
    def test_blocks_channel_major(self):
        # channel group (c*F*F + fy*F + fx) must land at pixel (y*F+fy, x*F+fx)
        params = init_params(TINY)
        f = TINY.F
        w = np.zeros((3 * f * f, TINY.C, 1, 1), np.float32)
        params["unpatchify.w"] = Tensor(w)
        b = np.arange(3 * f * f, dtype=np.float32)
        params["unpatchify.b"] = Tensor(b)
        z = Tensor(np.zeros((1, TINY.C, 4, 4), np.float32))
        out = unpatchify(z, params, TINY).numpy()
        assert out.shape == (1, 3, 8, 8)
        for c in range(3):
            for fy in range(f):
                for fx in range(f):
                    v = b[c * f * f + fy * f + fx]
                    assert np.all(out[0, c, fy::f, fx::f] == v)

    def test_f1_identity_layout(self):
        mc = ModelConfig(C=4, D=4, F=1, V=3)
        params = init_params(mc)
        z = Tensor(np.random.default_rng(2).random((1, 4, 8, 8)).astype(np.float32))
        out = unpatchify(z, params, mc)
        assert out.shape == (1, 3, 8, 8)


class TestForwardStep:
    def test_shapes_and_state(self):
        frames, cams, tgt, sched = tiny_inputs()
        params = init_params(TINY)
        pred, state = forward_step(frames, cams, tgt, LatentState.initial(),
                                   TINY, params, sched)
        assert pred.shape == (1, 3, 16, 16)
        assert state.valid and state.camera is tgt
        assert state.z.shape == (1, TINY.C, 8, 8)

    def test_wrong_arity_raises(self):
        frames, cams, tgt, sched = tiny_inputs()
        params = init_params(TINY)
        with pytest.raises(ShapeError):
            forward_step(frames[:2], cams[:2], tgt, LatentState.initial(),
                         TINY, params, sched)

    def test_deterministic(self):
        frames, cams, tgt, sched = tiny_inputs()
        params = init_params(TINY)
        p1, _ = forward_step(frames, cams, tgt, LatentState.initial(), TINY,
                             params, sched)
        p2, _ = forward_step(frames, cams, tgt, LatentState.initial(), TINY,
                             params, sched)
        assert np.array_equal(p1.numpy(), p2.numpy())

    def test_state_feeds_back(self):
        frames, cams, tgt, sched = tiny_inputs()
        params = init_params(TINY)
        pred1, state = forward_step(frames, cams, tgt, LatentState.initial(),
                                    TINY, params, sched)
        pred2, _ = forward_step(frames, cams, tgt, state.detach(), TINY,
                                params, sched)
        assert not np.array_equal(pred1.numpy(), pred2.numpy())

    def test_gradients_reach_all_params(self):
        frames, cams, tgt, sched = tiny_inputs()
        params = init_params(TINY)
        pred, _ = forward_step(frames, cams, tgt, LatentState.initial(), TINY,
                               params, sched)
        loss = ops.l1_loss(pred, Tensor(np.zeros(pred.shape, np.float32)))
        loss.backward()
        for n, p in params.items():
            assert p.grad is not None, n
            if not n.endswith((".beta",)):
                assert np.abs(p.grad).sum() > 0, n


class TestFlops:
    def test_f_scaling(self):
        base = ModelConfig(C=8, D=8, F=2, V=3)
        f1 = model_flops(ModelConfig(C=8, D=8, F=1, V=3), 64, 64)
        f2 = model_flops(base, 64, 64)
        assert 3.0 < f1 / f2 < 5.0      # latent area quadruples

    def test_positive_and_monotone_in_c(self):
        small = model_flops(ModelConfig(C=8, D=8, F=2, V=3), 64, 64)
        big = model_flops(ModelConfig(C=16, D=8, F=2, V=3), 64, 64)
        assert 0 < small < big
