import numpy as np
import pytest

from posetraj.errors import DataError
from posetraj.scenes import (
    JOINT_NAMES,
    AgentTrack,
    CategorizerConfig,
    PoseFrame,
    Scene,
    SceneCategory,
    categorize,
    read_scenes,
    slice_scenes,
    to_local_pose,
    write_scenes,
)

J = len(JOINT_NAMES)


def _pose(rng=None, dims=3, mask=None):
    joints = np.zeros((J, dims)) if rng is None else rng.normal(size=(J, dims))
    joints[0] = 0.0
    if mask is None:
        mask = np.ones(J, dtype=bool)
    return PoseFrame(joints, mask)


def _track(agent_id, positions, gap_frames=(), frame_rate=2.5, rng=None):
    positions = np.asarray(positions, dtype=float)
    poses = []
    for t in range(len(positions)):
        if t in gap_frames:
            poses.append(_pose(dims=3, mask=np.zeros(J, dtype=bool)))
        else:
            poses.append(_pose(rng=rng))
    return AgentTrack(agent_id, positions, poses, frame_rate)


def _straight(n, speed=1.0, start=(0.0, 0.0), direction=(1.0, 0.0)):
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return np.asarray(start) + np.arange(n)[:, None] * speed * 0.4 * direction


def _scene(primary_positions, neighbour_positions=None, t_obs=9, t_pred=12):
    agents = [_track("p", primary_positions)]
    if neighbour_positions is not None:
        agents.append(_track("n", neighbour_positions))
    return Scene(primary_index=0, agents=agents, t_obs=t_obs, t_pred=t_pred,
                 category=SceneCategory.OTHER)


# ---------------------------------------------------------------------------
# PoseFrame / AgentTrack invariants


def test_masked_joints_forced_to_zero():
    joints = np.ones((J, 3))
    mask = np.ones(J, dtype=bool)
    mask[3] = False
    frame = PoseFrame(joints, mask)
    assert np.array_equal(frame.joints[3], np.zeros(3))
    assert np.array_equal(frame.joints[4], np.ones(3))


def test_pose_frame_rejects_bad_shapes():
    with pytest.raises(ValueError):
        PoseFrame(np.zeros((J, 4)), np.ones(J, dtype=bool))
    with pytest.raises(ValueError):
        PoseFrame(np.zeros((J, 3)), np.ones(J - 1, dtype=bool))


def test_track_rejects_nonfinite_positions():
    positions = _straight(5)
    positions[2, 0] = np.nan
    with pytest.raises(ValueError):
        _track("a", positions)


def test_frame_observed_flags_all_masked_frames():
    track = _track("a", _straight(6), gap_frames=(2, 4))
    assert track.frame_observed().tolist() == [True, True, False, True, False, True]


# ---------------------------------------------------------------------------
# slice_scenes


def test_single_track_thirty_frames_stride_ten_gives_one_scene():
    """30 frames with a 21-frame window and stride 10 admit only start=0."""
    scenes = slice_scenes([_track("a", _straight(30))], t_obs=9, t_pred=12, stride=10)
    assert len(scenes) == 1
    assert scenes[0].primary.agent_id == "a"
    assert len(scenes[0].primary) == 21


def test_gap_in_one_track_drops_it_as_primary_only():
    """Three synchronized agents, one with a mid-window pose gap.

    The window covers frames 0..20; agent b is unobserved at frame 10, so
    only a and c are eligible primaries.  b still appears as a neighbour.
    """
    tracks = [
        _track("a", _straight(21)),
        _track("b", _straight(21, start=(0, 2)), gap_frames=(10,)),
        _track("c", _straight(21, start=(0, 4))),
    ]
    scenes = slice_scenes(tracks, t_obs=9, t_pred=12, stride=1)
    assert [s.primary.agent_id for s in scenes] == ["a", "c"]
    for scene in scenes:
        assert len(scene.agents) == 3
        assert {t.agent_id for t in scene.neighbours()} >= {"b"}


def test_stride_one_enumerates_every_window():
    scenes = slice_scenes([_track("a", _straight(24))], t_obs=9, t_pred=12, stride=1)
    assert len(scenes) == 4  # starts 0..3
    starts = [s.primary.positions[0, 0] for s in scenes]
    assert starts == pytest.approx([0.0, 0.4, 0.8, 1.2])


def test_slice_rejects_mismatched_and_short_tracks():
    with pytest.raises(ValueError):
        slice_scenes([_track("a", _straight(21)), _track("b", _straight(20))])
    with pytest.raises(ValueError):
        slice_scenes([_track("a", _straight(20))], t_obs=9, t_pred=12)
    assert slice_scenes([]) == []


# ---------------------------------------------------------------------------
# categorization


def test_stationary_primary_is_static():
    positions = np.tile([3.0, -1.0], (21, 1))
    assert categorize(_scene(positions)) is SceneCategory.STATIC


def test_constant_velocity_primary_is_linear():
    assert categorize(_scene(_straight(21, speed=1.2))) is SceneCategory.LINEAR


def test_turning_primary_with_close_neighbour_is_interaction():
    """A 90-degree turn breaks linearity; a neighbour 1 m away forces interaction."""
    leg1 = _straight(11, speed=1.2)
    leg2 = leg1[-1] + _straight(11, speed=1.2, direction=(0, 1))[1:]
    positions = np.concatenate([leg1, leg2])
    neighbour = positions + np.array([0.0, 1.0])
    scene = _scene(positions, neighbour_positions=neighbour)
    assert categorize(scene) is SceneCategory.INTERACTION
    # same turn alone: not linear, no neighbour, so Other
    assert categorize(_scene(positions)) is SceneCategory.OTHER


def test_linear_wins_over_interaction_by_order():
    positions = _straight(21, speed=1.2)
    neighbour = positions + np.array([0.0, 1.0])
    scene = _scene(positions, neighbour_positions=neighbour)
    assert categorize(scene) is SceneCategory.LINEAR


def test_categorizer_thresholds_are_respected():
    drift = _straight(21, speed=0.05)  # net displacement 0.4 m
    assert categorize(_scene(drift)) is SceneCategory.STATIC
    tight = CategorizerConfig(static_eps=0.1)
    assert categorize(_scene(drift), tight) is not SceneCategory.STATIC


# ---------------------------------------------------------------------------
# pelvis-relative conversion


def test_to_local_pose_zeroes_pelvis_row_exactly():
    rng = np.random.default_rng(0)
    world = rng.normal(size=(J, 3)) + 100.0
    local = to_local_pose(world)
    assert np.array_equal(local[0], np.zeros(3))


def test_to_local_pose_preserves_pairwise_distances():
    rng = np.random.default_rng(1)
    for _ in range(20):
        world = rng.normal(scale=3.0, size=(J, 3))
        local = to_local_pose(world)
        d_world = np.linalg.norm(world[:, None] - world[None, :], axis=-1)
        d_local = np.linalg.norm(local[:, None] - local[None, :], axis=-1)
        assert np.abs(d_world - d_local).max() < 1e-12


def test_to_local_pose_masked_joints_stay_zero():
    rng = np.random.default_rng(2)
    world = rng.normal(size=(J, 3))
    mask = np.ones(J, dtype=bool)
    mask[5] = False
    local = to_local_pose(world, mask=mask)
    assert np.array_equal(local[5], np.zeros(3))


def test_to_local_pose_rejects_masked_pelvis():
    mask = np.ones(J, dtype=bool)
    mask[0] = False
    with pytest.raises(ValueError):
        to_local_pose(np.zeros((J, 3)), mask=mask)


# ---------------------------------------------------------------------------
# persistence


def _corpus(seed=0, n=3, dims=3):
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(n):
        agents = []
        for a in range(1 + i % 2):
            positions = rng.normal(scale=4.0, size=(21, 2))
            mask = rng.random(J) > 0.2
            mask_frames = [(t * 7 + a) % 21 for t in range(2)]
            poses = []
            for t in range(21):
                m = np.zeros(J, dtype=bool) if t in mask_frames and a > 0 else mask
                poses.append(PoseFrame(rng.normal(size=(J, dims)), m))
            agents.append(AgentTrack(f"a{a}", positions, poses, 2.5))
        scenes.append(Scene(0, agents, 9, 12, SceneCategory.OTHER))
    return scenes


def test_jsonl_round_trip_is_identity(tmp_path):
    scenes = _corpus(seed=3, n=4)
    path = tmp_path / "corpus.jsonl"
    write_scenes(scenes, path)
    assert read_scenes(path) == scenes


def test_round_trip_preserves_awkward_floats(tmp_path):
    """Shortest-repr JSON floats must reload bit-for-bit."""
    positions = np.full((21, 2), 0.1) * np.arange(1, 22)[:, None]
    positions[3, 0] = 1e-17
    positions[4, 1] = 12345.678901234567
    scene = _scene(positions)
    path = tmp_path / "one.jsonl"
    write_scenes([scene], path)
    loaded = read_scenes(path)[0]
    assert np.array_equal(loaded.primary.positions, positions)


def test_two_dimensional_poses_round_trip(tmp_path):
    scenes = _corpus(seed=5, n=2, dims=2)
    path = tmp_path / "corpus2d.jsonl"
    write_scenes(scenes, path)
    loaded = read_scenes(path)
    assert loaded == scenes
    assert loaded[0].pose_dims == 2


def test_empty_corpus_round_trips(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_scenes([], path)
    assert read_scenes(path) == []


def test_malformed_line_reports_line_number(tmp_path):
    scenes = _corpus(seed=7, n=2)
    path = tmp_path / "bad.jsonl"
    write_scenes(scenes, path)
    lines = path.read_text().splitlines()
    lines[1] = '{"version": 1, "nope": true}'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="line 2"):
        read_scenes(path)


def test_version_mismatch_raises(tmp_path):
    scenes = _corpus(seed=9, n=1)
    path = tmp_path / "future.jsonl"
    write_scenes(scenes, path)
    text = path.read_text().replace('"version": 1', '"version": 99')
    path.write_text(text)
    with pytest.raises(DataError, match="version"):
        read_scenes(path)
