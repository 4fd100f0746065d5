"""Renderer and perturbation oracles."""

import math

import numpy as np
import pytest

from conftest import square_camera
from pde import depthio, geom, metrics, robust
from pde.depthio import CameraModel, Mask, ModelEntry, PerturbationKind, ValueKind
from pde.geom import Box, Plane, Sphere, SceneSpec
from pde.metrics import EvalConfig


def _mask_extent(mask):
    cols = np.where(mask.bits.any(axis=0))[0]
    rows = np.where(mask.bits.any(axis=1))[0]
    return cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1


class TestRenderer:
    def test_fronto_parallel_plane_constant_depth(self):
        spec = SceneSpec(
            primitives=(Plane((0.0, 0.0, 1.0), 5.0, geom.OBJECT),),
            camera=square_camera(32, f=40.0),
            width=32,
            height=32,
        )
        gt, obj, bg = geom.render_depth(spec)
        assert np.all(gt.values == 5.0)
        assert obj.bits.all() and bg.count() == 0

    def test_sphere_principal_ray_depth(self):
        # odd width puts a pixel center exactly on the principal point
        cam = CameraModel(fx=97.0, fy=97.0, cx=48.5, cy=48.5)
        spec = SceneSpec(
            primitives=(Sphere((0.0, 0.0, 5.0), 1.0, geom.OBJECT),),
            camera=cam, width=97, height=97,
        )
        gt, obj, bg = geom.render_depth(spec)
        assert gt.values[48, 48] == 4.0
        assert obj.bits[48, 48]
        assert bg.bits[0, 0] and not gt.valid[0, 0]

    def test_determinism(self, scene):
        a = geom.render_depth(scene)
        b = geom.render_depth(scene)
        for left, right in zip(a, b):
            arr_l = getattr(left, "values", getattr(left, "bits", None))
            arr_r = getattr(right, "values", getattr(right, "bits", None))
            assert np.array_equal(arr_l, arr_r, equal_nan=True)

    def test_box_depth(self):
        spec = SceneSpec(
            primitives=(Box((-1.0, -1.0, 3.0), (1.0, 1.0, 4.0), geom.OBJECT),),
            camera=square_camera(64),
            width=64, height=64,
        )
        gt, obj, _ = geom.render_depth(spec)
        assert gt.values[32, 32] == 3.0

    def test_camera_inside_primitive_rejected(self):
        with pytest.raises(ValueError, match="inside"):
            SceneSpec(
                primitives=(Sphere((0.0, 0.0, 0.0), 1.0, geom.OBJECT),),
                camera=square_camera(16), width=16, height=16,
            )

    def test_needs_object_primitive(self):
        with pytest.raises(ValueError, match="object"):
            SceneSpec(
                primitives=(Plane((0.0, 0.0, 1.0), 5.0, geom.BACKGROUND),),
                camera=square_camera(16), width=16, height=16,
            )


class TestRoll:
    def test_zero_angle_unchanged(self, scene):
        spec = geom.perturb_roll(scene, 0.0)
        assert np.array_equal(spec.camera.rotation, scene.camera.rotation)
        assert np.array_equal(spec.camera.translation, scene.camera.translation)

    def test_quarter_turn_is_exact_grid_rotation(self, scene):
        base_gt, base_obj, _ = geom.render_depth(scene)
        variant_gt, variant_obj, _ = geom.render_depth(geom.perturb_roll(scene, math.pi / 2))
        assert np.array_equal(variant_gt.values, np.rot90(base_gt.values, k=-1))
        assert np.array_equal(variant_obj.bits, np.rot90(base_obj.bits, k=-1))

    def test_generic_angle_compensates_back(self, scene):
        angle = 0.4
        base_gt, base_obj, _ = geom.render_depth(scene)
        variant_gt, variant_obj, _ = geom.render_depth(geom.perturb_roll(scene, angle))
        warped, wmask = robust.compensate_roll(variant_gt, variant_obj, angle, (48.0, 48.0))
        joint = Mask(wmask.bits & base_obj.bits)
        assert joint.count() > 100
        assert metrics.abs_rel(warped, base_gt, joint) < 0.2

    def test_roll_then_unroll_bit_identical(self, scene):
        back = geom.perturb_roll(geom.perturb_roll(scene, 0.37), -0.37)
        base_gt, _, _ = geom.render_depth(scene)
        again_gt, _, _ = geom.render_depth(back)
        assert np.array_equal(base_gt.values, again_gt.values, equal_nan=True)

    def test_angle_bound(self, scene):
        with pytest.raises(ValueError):
            geom.perturb_roll(scene, math.pi)


class TestPanTilt:
    def test_identity(self, scene):
        spec = geom.perturb_pan_tilt(scene, 0.0, 0.0)
        base, _, _ = geom.render_depth(scene)
        same, _, _ = geom.render_depth(spec)
        assert np.array_equal(base.values, same.values, equal_nan=True)

    def test_axial_point_depth_under_pan(self, scene):
        pan = 0.15
        variant = geom.perturb_pan_tilt(scene, pan, 0.0)
        point = np.array([0.0, 0.0, 5.0])
        cam = variant.camera
        z = (cam.rotation @ point + cam.translation)[2]
        assert z == pytest.approx(5.0 * math.cos(pan), rel=1e-12)

    def test_homography_matches_direct_projection(self, scene):
        pan, tilt = 0.08, -0.05
        variant = geom.perturb_pan_tilt(scene, pan, tilt)
        base_gt, base_obj, _ = geom.render_depth(scene)
        origin, dirs = geom._ray_grid(scene)
        pts = origin + base_gt.values[..., None] * dirs
        sel = base_obj.bits & base_gt.valid
        pts = pts[sel]

        k = np.array([[96.0, 0, 48.0], [0, 96.0, 48.0], [0, 0, 1.0]])
        r_rel = variant.camera.rotation @ scene.camera.rotation.T
        h = k @ r_rel @ np.linalg.inv(k)

        jj, ii = np.meshgrid(np.arange(96, dtype=float), np.arange(96, dtype=float))
        base_px = np.stack([jj + 0.5, ii + 0.5, np.ones_like(jj)], axis=-1)[sel]
        mapped = base_px @ h.T
        mapped = mapped[:, :2] / mapped[:, 2:3]

        cam = variant.camera
        in_cam = pts @ cam.rotation.T + cam.translation
        direct_u = cam.fx * in_cam[:, 0] / in_cam[:, 2] + cam.cx
        direct_v = cam.fy * in_cam[:, 1] / in_cam[:, 2] + cam.cy
        assert np.max(np.abs(mapped[:, 0] - direct_u)) < 1e-9
        assert np.max(np.abs(mapped[:, 1] - direct_v)) < 1e-9
        # camera-frame depth transforms by the relative rotation's last row
        base_cam = pts @ scene.camera.rotation.T + scene.camera.translation
        assert np.max(np.abs(in_cam[:, 2] - base_cam @ r_rel[2])) < 1e-9

    def test_reprojection_lands_on_variant_surface(self, scene):
        pan = 0.06
        variant = geom.perturb_pan_tilt(scene, pan, 0.0)
        base_gt, base_obj, _ = geom.render_depth(scene)
        variant_gt, variant_obj, _ = geom.render_depth(variant)
        origin, dirs = geom._ray_grid(scene)
        pts = (origin + base_gt.values[..., None] * dirs)[base_obj.bits & base_gt.valid]
        cam = variant.camera
        in_cam = pts @ cam.rotation.T + cam.translation
        u = cam.fx * in_cam[:, 0] / in_cam[:, 2] + cam.cx
        v = cam.fy * in_cam[:, 1] / in_cam[:, 2] + cam.cy
        jj = np.clip(np.round(u - 0.5).astype(int), 0, 95)
        ii = np.clip(np.round(v - 0.5).astype(int), 0, 95)
        near_object = variant_obj.bits[ii, jj]
        assert near_object.mean() > 0.98  # boundary pixels may round off by one
        interior = near_object & variant_gt.valid[ii, jj]
        sampled = variant_gt.values[ii[interior], jj[interior]]
        predicted = in_cam[interior, 2]
        # nearest-pixel lookup, so allow half-pixel surface slope
        assert np.median(np.abs(sampled - predicted)) < 0.05

    def test_frustum_rejection(self, scene):
        with pytest.raises(geom.PerturbationRejected):
            geom.perturb_pan_tilt(scene, 0.6, 0.0)


def _dolly_scene():
    # small angular size keeps the tangent-cone silhouette shift well
    # below a pixel; a unit sphere at 4m would shift by ~1.2px under 2x
    return SceneSpec(
        primitives=(
            Sphere((0.0, 0.0, 4.0), 0.5, geom.OBJECT),
            Plane((0.0, -1.0, 0.0), -1.8, geom.BACKGROUND),
        ),
        camera=square_camera(96), width=96, height=96,
    )


class TestDollyZoom:
    def test_ratio_one_identity(self, scene):
        spec = geom.perturb_dolly_zoom(scene, 1.0)
        base, _, _ = geom.render_depth(scene)
        same, _, _ = geom.render_depth(spec)
        assert np.array_equal(base.values, same.values, equal_nan=True)

    @pytest.mark.parametrize("ratio", [2.0, 0.5])
    def test_anchor_depth_scales_exactly(self, scene, ratio):
        variant = geom.perturb_dolly_zoom(scene, ratio)
        assert geom.anchor_depth(variant) == ratio * geom.anchor_depth(scene)
        assert variant.camera.fx == ratio * scene.camera.fx

    @pytest.mark.parametrize("ratio", [2.0, 0.5])
    def test_extent_preserved_within_one_pixel(self, ratio):
        scene = _dolly_scene()
        _, base_obj, _ = geom.render_depth(scene)
        _, variant_obj, _ = geom.render_depth(geom.perturb_dolly_zoom(scene, ratio))
        bw, bh = _mask_extent(base_obj)
        vw, vh = _mask_extent(variant_obj)
        assert abs(bw - vw) <= 1 and abs(bh - vh) <= 1

    def test_camera_collision_rejected(self, scene):
        # ratio 0.1 advances the camera 3.6m toward a sphere 3m away
        with pytest.raises(geom.PerturbationRejected):
            geom.perturb_dolly_zoom(scene, 0.1)


class TestResizeObject:
    def test_scale_one_identity(self, scene):
        base, _, _ = geom.render_depth(scene)
        same, _, _ = geom.render_depth(geom.perturb_resize_object(scene, 1.0))
        assert np.array_equal(base.values, same.values, equal_nan=True)

    def test_mask_identical_and_depth_scaled(self, scene):
        base_gt, base_obj, _ = geom.render_depth(scene)
        variant_gt, variant_obj, _ = geom.render_depth(geom.perturb_resize_object(scene, 1.5))
        assert np.array_equal(variant_obj.bits, base_obj.bits)
        sel = base_obj.bits & base_gt.valid
        np.testing.assert_allclose(
            variant_gt.values[sel], 1.5 * base_gt.values[sel], rtol=1e-12
        )

    def test_camera_collision_rejected(self):
        spec = SceneSpec(
            primitives=(
                Sphere((0.0, 0.0, 4.0), 1.0, geom.OBJECT),
                Box((-1.0, -1.0, -5.0), (1.0, 1.0, -3.0), geom.BACKGROUND),
            ),
            camera=square_camera(32), width=32, height=32,
        )
        with pytest.raises(geom.PerturbationRejected):
            geom.perturb_resize_object(spec, 2.0)  # camera retreats into the box


class TestContentPerturbations:
    def test_translation_moves_object_only(self, scene):
        base_gt, base_obj, _ = geom.render_depth(scene)
        spec, meta = geom.apply_perturbation(
            scene, PerturbationKind.OBJ_TRANSLATION, {"offset": [0.3, 0.0, 0.0]}
        )
        gt, obj, _ = geom.render_depth(spec)
        assert meta.gt_object_depth_changed
        assert not np.array_equal(obj.bits, base_obj.bits)
        off_object = ~base_obj.bits & ~obj.bits & base_gt.valid & gt.valid
        assert np.array_equal(gt.values[off_object], base_gt.values[off_object])

    def test_occlusion_shrinks_object_mask(self, scene):
        _, base_obj, _ = geom.render_depth(scene)
        spec, _ = geom.apply_perturbation(
            scene, PerturbationKind.OBJ_OCCLUSION, {"count": 3, "thickness": 0.05}
        )
        _, obj, _ = geom.render_depth(spec)
        assert obj.count() < base_obj.count()
        assert not np.any(obj.bits & ~base_obj.bits)

    def test_material_swap_leaves_ground_truth(self, scene):
        spec, meta = geom.apply_perturbation(scene, PerturbationKind.OBJ_MATERIAL_SWAP, {})
        base, _, _ = geom.render_depth(scene)
        same, _, _ = geom.render_depth(spec)
        assert np.array_equal(base.values, same.values, equal_nan=True)
        assert meta.self_consistency_eligible

    def test_background_swap_keeps_object(self, scene):
        base_gt, base_obj, _ = geom.render_depth(scene)
        spec, meta = geom.apply_perturbation(
            scene, PerturbationKind.OOD_BACKGROUND_SWAP, {"shift": -0.5}
        )
        gt, obj, _ = geom.render_depth(spec)
        assert np.array_equal(obj.bits, base_obj.bits)
        assert np.array_equal(gt.values[obj.bits], base_gt.values[obj.bits])
        assert not meta.self_consistency_eligible

    def test_deform_changes_object_depth(self, scene):
        spec, meta = geom.apply_perturbation(
            scene, PerturbationKind.NONRIGID_DEFORM, {"radius_scale": 1.15}
        )
        base_gt, base_obj, _ = geom.render_depth(scene)
        gt, obj, _ = geom.render_depth(spec)
        assert obj.count() > base_obj.count()
        assert meta.gt_object_depth_changed


class TestFixtureGroup:
    def test_roll_plan_metadata(self, scene, tmp_path):
        group, fragment = geom.make_fixture_group(
            scene, [(PerturbationKind.CAM_ROLL, {"angle": math.radians(15)})], tmp_path
        )
        assert len(group.variants) == 1
        meta = group.variants[0].perturbation
        assert meta.self_consistency_eligible and meta.se2_compensation_required
        assert fragment["variants"][0]["perturbation"]["type"] == "cam_roll"

    def test_exact_pseudo_prediction_runs_clean(self, scene, tmp_path):
        model = ModelEntry("exact", ValueKind.METRIC_DEPTH)
        group, _ = geom.make_fixture_group(
            scene, [(PerturbationKind.LIGHTING, {})], tmp_path,
            models=[(model, geom.PseudoPrediction())],
        )
        rows = robust.evaluate_group(group, model, EvalConfig())
        assert all(r.mu in (0.0, 100.0) and r.sigma == 0.0 for r in rows)

    def test_affine_pseudo_prediction_removed_by_alignment(self, scene, tmp_path):
        model = ModelEntry("affine", ValueKind.AFFINE_DEPTH)
        group, _ = geom.make_fixture_group(
            scene, [(PerturbationKind.LIGHTING, {})], tmp_path,
            models=[(model, geom.PseudoPrediction(scale=1.3, shift=0.2))],
        )
        rows = {r.metric: r for r in robust.evaluate_group(group, model, EvalConfig())}
        assert rows["absrel"].mu < 1e-3  # float32 storage noise only

    def test_noise_is_seeded(self, scene, tmp_path):
        model = ModelEntry("noisy", ValueKind.METRIC_DEPTH)
        pseudo = geom.PseudoPrediction(noise=0.05)
        g1, _ = geom.make_fixture_group(
            scene, [(PerturbationKind.LIGHTING, {})], tmp_path / "a",
            models=[(model, pseudo)],
        )
        g2, _ = geom.make_fixture_group(
            scene, [(PerturbationKind.LIGHTING, {})], tmp_path / "b",
            models=[(model, pseudo)],
        )
        a = depthio.read_depth_raster(g1.base.predictions["noisy"])
        b = depthio.read_depth_raster(g2.base.predictions["noisy"])
        assert np.array_equal(a.values, b.values, equal_nan=True)
