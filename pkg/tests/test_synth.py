import math

import numpy as np
import pytest

from posetraj.scenes import JOINT_INDEX, PoseFrame, AgentTrack, Scene, SceneCategory
from posetraj.synth import (
    CameraConfig,
    GaitModel,
    WorldConfig,
    _lead_headings,
    generate_corpus,
    generate_crossing_corpus,
    project_to_2d,
    shoulder_yaw,
    simulate_paths,
    synthesize_pose_track,
)

J = 17


def _small_world(**kwargs):
    defaults = dict(n_agents=(1, 2), turn_prob=0.3, seed=11)
    defaults.update(kwargs)
    return WorldConfig(**defaults)


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# determinism


def test_same_seed_gives_bit_identical_corpora():
    world, gait = _small_world(), GaitModel()
    a = generate_corpus(world, gait, 5)
    b = generate_corpus(world, gait, 5)
    assert a == b


def test_different_seed_changes_content():
    gait = GaitModel()
    a = generate_corpus(_small_world(seed=1), gait, 3)
    b = generate_corpus(_small_world(seed=2), gait, 3)
    assert a != b


def test_scene_streams_are_prefix_stable():
    """Scene i is keyed by (seed, i), so a longer run extends a shorter one."""
    world, gait = _small_world(), GaitModel()
    short = generate_corpus(world, gait, 3)
    long = generate_corpus(world, gait, 6)
    assert long[:3] == short


# ---------------------------------------------------------------------------
# structure of generated scenes


def test_generated_scene_shapes_and_masks():
    scenes = generate_corpus(_small_world(), GaitModel(), 4, t_obs=9, t_pred=12)
    for scene in scenes:
        assert scene.t_obs == 9 and scene.t_pred == 12
        assert scene.pose_dims == 3 and scene.n_joints == J
        for track in scene.agents:
            assert len(track) == 21
            assert track.mask_array().all()
            # pelvis-relative storage: pelvis row is exactly zero
            assert np.array_equal(track.pose_array()[:, 0, :], np.zeros((21, 3)))


def test_ankles_below_pelvis_and_head_above():
    scene = generate_corpus(_small_world(seed=3), GaitModel(), 1)[0]
    pose = scene.primary.pose_array()
    assert (pose[:, JOINT_INDEX["left_ankle"], 2] < -0.5).all()
    assert (pose[:, JOINT_INDEX["head"], 2] > 0.5).all()


def test_straight_world_yields_linear_scenes():
    world = _small_world(n_agents=(1, 1), turn_prob=0.0, seed=5)
    scenes = generate_corpus(world, GaitModel(), 10)
    assert all(s.category in (SceneCategory.LINEAR, SceneCategory.STATIC)
               for s in scenes)
    assert any(s.category is SceneCategory.LINEAR for s in scenes)


def test_infeasible_world_config_rejected():
    with pytest.raises(ValueError):
        WorldConfig(speed=(1.5, 0.9))
    with pytest.raises(ValueError):
        WorldConfig(n_agents=(3, 1))
    with pytest.raises(ValueError):
        GaitModel(limb_phase_offsets={"left_ankle": 0.0, "right_ankle": 1.0,
                                      "left_knee": 0.0, "right_knee": 1.0,
                                      "left_wrist": 1.0, "right_wrist": 0.0,
                                      "left_elbow": 1.0, "right_elbow": 0.0})


# ---------------------------------------------------------------------------
# gait oscillator


def test_left_right_ankles_move_in_antiphase():
    n = 50
    positions = np.zeros((n, 2))
    positions[:, 0] = np.arange(n) * 0.48
    headings = np.zeros(n)
    joints = synthesize_pose_track(positions, headings, headings, 1.2,
                                   GaitModel(), 2.5)
    left = joints[:, JOINT_INDEX["left_ankle"], 0]
    right = joints[:, JOINT_INDEX["right_ankle"], 0]
    # pure antiphase sinusoids: left(t) == -right(t) in the forward direction
    assert np.abs(left + right).max() < 1e-9
    assert left.std() > 0.05


def test_arms_swing_opposite_their_leg():
    n = 80
    positions = np.zeros((n, 2))
    headings = np.zeros(n)
    joints = synthesize_pose_track(positions, headings, headings, 1.2,
                                   GaitModel(), 5.0)
    left_ankle = joints[:, JOINT_INDEX["left_ankle"], 0]
    left_wrist = joints[:, JOINT_INDEX["left_wrist"], 0] - 0.02
    corr = np.corrcoef(left_ankle, left_wrist)[0, 1]
    assert corr < -0.99


def test_stride_amplitude_scales_with_speed():
    n = 40
    positions = np.zeros((n, 2))
    headings = np.zeros(n)
    slow = synthesize_pose_track(positions, headings, headings, 0.7,
                                 GaitModel(), 2.5)
    fast = synthesize_pose_track(positions, headings, headings, 1.5,
                                 GaitModel(), 2.5)
    amp = lambda j: np.ptp(j[:, JOINT_INDEX["left_ankle"], 0])
    assert amp(fast) > amp(slow) * 1.5


# ---------------------------------------------------------------------------
# anticipatory upper body


def test_shoulders_preview_a_scripted_turn():
    """With lead_time 0.8 s, a 90-degree turn centered at t=5 s shows at
    least half of the final yaw change in the shoulder line by t=4.2 s."""
    world = WorldConfig(n_agents=(1, 1), turn_prob=0.0, frame_rate=5.0,
                        bounds=(-60, -60, 60, 60), seed=0)
    gait = GaitModel(lead_time=0.8)
    rng = np.random.default_rng(0)
    positions, headings, _ = simulate_paths(
        rng, world, 1, 40, scripted_turns={0: [(5.0, math.pi / 2)]},
        starts=[np.array([-15.0, 0.0])], headings=[0.0], speeds=[1.2])
    lead = _lead_headings(headings[0], 5.0, gait.lead_time)
    joints = synthesize_pose_track(positions[0], headings[0], lead, 1.2, gait, 5.0)

    final_change = headings[0, -1] - headings[0, 0]
    assert final_change == pytest.approx(math.pi / 2)
    t42 = 21  # frame index of t=4.2 s at 5 fps
    assert shoulder_yaw(joints[t42]) >= final_change / 2 - 1e-9
    # well before the cue window the shoulders are square to the path
    assert abs(shoulder_yaw(joints[10])) < 1e-9


def test_lower_body_tracks_current_heading_during_turn():
    world = WorldConfig(n_agents=(1, 1), turn_prob=0.0, frame_rate=5.0,
                        bounds=(-60, -60, 60, 60), seed=0)
    rng = np.random.default_rng(0)
    positions, headings, _ = simulate_paths(
        rng, world, 1, 40, scripted_turns={0: [(5.0, math.pi / 2)]},
        starts=[np.array([-15.0, 0.0])], headings=[0.0], speeds=[1.2])
    lead = _lead_headings(headings[0], 5.0, 0.8)
    joints = synthesize_pose_track(positions[0], headings[0], lead, 1.2,
                                   GaitModel(), 5.0)
    # hip line yaw equals the instantaneous heading, not the previewed one
    t42 = 21
    hips = joints[t42, JOINT_INDEX["left_hip"], :2] - joints[t42, JOINT_INDEX["right_hip"], :2]
    hip_yaw = math.atan2(hips[1], hips[0]) - math.pi / 2
    assert hip_yaw == pytest.approx(headings[0, t42], abs=1e-9)


def test_shoulder_offset_sign_predicts_future_heading_change():
    """Linear probe: on turning scenes the sign of the shoulder-line yaw
    offset at the last observed frame matches the sign of the upcoming
    heading change at least 90% of the time."""
    world = WorldConfig(n_agents=(1, 1), turn_prob=0.5, seed=21)
    scenes = generate_corpus(world, GaitModel(), 250)
    hits = total = 0
    for scene in scenes:
        track = scene.primary
        p = track.positions
        now = math.atan2(*(p[8] - p[7])[::-1])
        future = math.atan2(*(p[10] - p[9])[::-1])
        change = _wrap(future - now)
        if abs(change) < 0.05:
            continue
        offset = _wrap(shoulder_yaw(track.poses[8].joints) - now)
        total += 1
        hits += (offset > 0) == (change > 0)
    assert total >= 30
    assert hits / total >= 0.9


# ---------------------------------------------------------------------------
# crossing-traffic suite


def test_crossing_scenes_put_ego_anchor_at_origin_line():
    scenes = generate_crossing_corpus(4, seed=2)
    for scene in scenes:
        anchor = scene.primary.positions[scene.t_obs - 1]
        assert abs(anchor[1]) < 1e-9  # ego reaches y=0 at the last observed frame
        assert len(scene.agents) >= 3


def test_crossers_traverse_the_corridor_during_replay():
    scenes = generate_crossing_corpus(6, seed=4)
    for scene in scenes:
        ego_x = scene.primary.positions[scene.t_obs - 1, 0]
        for crosser in scene.neighbours():
            x = crosser.positions[:, 0] - ego_x
            assert x[scene.t_obs - 1] * x[-1] < 0  # sign change: crossed the line


def test_crossing_corpus_is_deterministic():
    assert generate_crossing_corpus(3, seed=7) == generate_crossing_corpus(3, seed=7)


# ---------------------------------------------------------------------------
# camera projection


def _static_scene(rel_pose, xy, n_frames=3, heading=math.pi / 2):
    poses = [PoseFrame(rel_pose.copy(), np.ones(J, dtype=bool))
             for _ in range(n_frames)]
    positions = np.tile(np.asarray(xy, dtype=float), (n_frames, 1))
    track = AgentTrack("a", positions, poses, 2.5)
    return Scene(0, [track], 2, n_frames - 2, SceneCategory.STATIC)


def test_overhead_projection_matches_world_offsets():
    """Looking straight down from high above, image offsets equal world-plane
    offsets divided by the (shared) depth."""
    rel = np.zeros((J, 3))
    rel[1] = [0.3, -0.2, 0.0]
    rel[2] = [-0.5, 0.7, 0.0]  # same height as the pelvis: identical depth
    scene = _static_scene(rel, xy=(2.0, 3.0))
    cam = CameraConfig(position=(0.0, 0.0, 100.0), look_at=(0.0, 0.0, 0.0))
    flat = project_to_2d(scene, cam)
    depth = 100.0 - cam.pelvis_height
    got = flat.primary.poses[0].joints
    assert got[1] == pytest.approx([0.3 / depth, -0.2 / depth], abs=1e-12)
    assert got[2] == pytest.approx([-0.5 / depth, 0.7 / depth], abs=1e-12)
    assert np.array_equal(flat.primary.positions, scene.primary.positions)


def test_apparent_size_shrinks_linearly_with_depth():
    rel = np.zeros((J, 3))
    ls, rs = JOINT_INDEX["left_shoulder"], JOINT_INDEX["right_shoulder"]
    rel[ls] = [-0.21, 0.0, 0.50]
    rel[rs] = [0.21, 0.0, 0.50]
    cam = CameraConfig(position=(0.0, 0.0, 1.4), look_at=(0.0, 10.0, 1.4))
    near = project_to_2d(_static_scene(rel, xy=(0.0, 5.0)), cam)
    far = project_to_2d(_static_scene(rel, xy=(0.0, 15.0)), cam)
    width = lambda s: abs(s.primary.poses[0].joints[ls, 0]
                          - s.primary.poses[0].joints[rs, 0])
    assert width(near) / width(far) == pytest.approx(3.0, abs=1e-12)


def test_joints_behind_camera_get_masked():
    rel = np.zeros((J, 3))
    rel[5] = [0.0, -3.0, 0.0]  # behind the camera plane
    cam = CameraConfig(position=(0.0, 4.0, 1.0), look_at=(0.0, 10.0, 1.0))
    flat = project_to_2d(_static_scene(rel, xy=(0.0, 6.0)), cam)
    frame = flat.primary.poses[0]
    assert not frame.mask[5]
    assert np.array_equal(frame.joints[5], np.zeros(2))
    assert frame.mask[0]


def test_pelvis_behind_camera_masks_whole_frame():
    rel = np.zeros((J, 3))
    cam = CameraConfig(position=(0.0, 10.0, 1.0), look_at=(0.0, 20.0, 1.0))
    flat = project_to_2d(_static_scene(rel, xy=(0.0, 6.0)), cam)
    assert not flat.primary.poses[0].mask.any()


def test_existing_masks_survive_projection():
    scene = generate_corpus(_small_world(seed=9), GaitModel(), 1)[0]
    # knock out one joint in one frame
    scene.primary.poses[4].mask[7] = False
    scene.primary.poses[4].joints[7] = 0.0
    flat = project_to_2d(scene, CameraConfig())
    assert not flat.primary.poses[4].mask[7]
    assert flat.pose_dims == 2


def test_projection_requires_3d_input():
    scene = generate_corpus(_small_world(seed=9), GaitModel(), 1)[0]
    flat = project_to_2d(scene, CameraConfig())
    with pytest.raises(ValueError):
        project_to_2d(flat, CameraConfig())
