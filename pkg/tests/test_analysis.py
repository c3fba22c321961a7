import numpy as np
import pytest

from posetraj.analysis import (
    OCCLUSION_SCHEMES,
    Perturbation,
    apply_noise,
    joint_attention,
    occlude,
    restrict_joints,
    select_top_joints,
    strip_pose,
)
from posetraj.backbones import ModelConfig, build_model
from posetraj.scenes import JOINT_INDEX, JOINT_NAMES, limb_joint_indices
from posetraj.synth import GaitModel, WorldConfig, generate_corpus

J = len(JOINT_NAMES)


@pytest.fixture(scope="module")
def corpus():
    world = WorldConfig(n_agents=(1, 2), turn_prob=0.3, seed=55)
    return generate_corpus(world, GaitModel(), 6)


# ---------------------------------------------------------------------------
# noise


def test_noise_leaves_trajectories_and_future_poses_alone(corpus):
    scene = corpus[0]
    noisy = apply_noise(scene, 0.2, np.random.default_rng(0))
    for a, b in zip(scene.agents, noisy.agents):
        assert np.array_equal(a.positions, b.positions)
        for t in range(scene.t_obs, len(a.poses)):
            assert a.poses[t] == b.poses[t]
    # observed poses did change
    assert noisy.primary.poses[0] != scene.primary.poses[0]


def test_noise_respects_masks(corpus):
    scene = occlude(corpus[0], "structured_right_leg", np.random.default_rng(0))
    noisy = apply_noise(scene, 0.3, np.random.default_rng(1))
    leg = limb_joint_indices("right_leg")
    for t in range(scene.t_obs):
        assert np.array_equal(noisy.primary.poses[t].joints[leg], np.zeros((3, 3)))


def test_noise_touches_the_pelvis_row(corpus):
    """Detector jitter hits the root joint too; relative zeros are not sacred."""
    noisy = apply_noise(corpus[0], 0.2, np.random.default_rng(2))
    assert np.abs(noisy.primary.poses[0].joints[0]).sum() > 0


def test_zero_std_noise_is_identity(corpus):
    same = apply_noise(corpus[0], 0.0, np.random.default_rng(3))
    assert same == corpus[0]


def test_noise_magnitude_tracks_std(corpus):
    rng = np.random.default_rng(4)
    noisy = apply_noise(corpus[0], 0.5, rng)
    diffs = noisy.primary.pose_array()[:9] - corpus[0].primary.pose_array()[:9]
    assert 0.3 < diffs.std() < 0.7


# ---------------------------------------------------------------------------
# occlusion


def test_limb_occlusion_hits_about_half_the_scenes(corpus):
    hit = 0
    for i in range(200):
        out = occlude(corpus[0], "random_limb_50", np.random.default_rng(i))
        if not out.primary.poses[0].mask.all():
            hit += 1
    assert 70 <= hit <= 130


def test_limb_occlusion_masks_one_whole_limb(corpus):
    # find a seed that occludes, then check exactly 3 joints gone everywhere
    for i in range(20):
        out = occlude(corpus[0], "random_limb_50", np.random.default_rng(i))
        masked = ~out.primary.poses[0].mask
        if masked.any():
            assert masked.sum() == 3
            hit = set(np.flatnonzero(masked))
            assert any(set(limb_joint_indices(l)) == hit
                       for l in ("left_leg", "right_leg", "left_arm", "right_arm"))
            for track in out.agents:
                for t in range(out.t_obs):
                    assert np.array_equal(~track.poses[t].mask, masked)
                for t in range(out.t_obs, len(track.poses)):
                    assert track.poses[t].mask.all()
            return
    pytest.fail("no occluded draw in 20 seeds")


def test_right_leg_occlusion_is_deterministic(corpus):
    a = occlude(corpus[0], "structured_right_leg", np.random.default_rng(0))
    b = occlude(corpus[0], "structured_right_leg", np.random.default_rng(99))
    assert a == b
    leg = limb_joint_indices("right_leg")
    for t in range(a.t_obs):
        assert not a.primary.poses[t].mask[leg].any()
        assert a.primary.poses[t].mask[JOINT_INDEX["left_hip"]]


def test_frame_occlusion_shares_frames_across_agents(corpus):
    scene = next(s for s in corpus if len(s.agents) > 1)
    out = occlude(scene, "complete_frame_50", np.random.default_rng(7))
    flags = [track.frame_observed()[: scene.t_obs] for track in out.agents]
    for other in flags[1:]:
        assert np.array_equal(flags[0], other)
    assert not np.concatenate(flags).all()  # something was dropped
    for track in out.agents:
        assert track.frame_observed()[scene.t_obs :].all()


def test_unknown_scheme_rejected(corpus):
    with pytest.raises(ValueError):
        occlude(corpus[0], "left_leg_only", np.random.default_rng(0))
    assert len(OCCLUSION_SCHEMES) == 3


# ---------------------------------------------------------------------------
# strip / restrict


def test_strip_pose_blanks_all_observed_frames(corpus):
    out = strip_pose(corpus[0])
    for track in out.agents:
        for t in range(out.t_obs):
            assert not track.poses[t].mask.any()
            assert np.array_equal(track.poses[t].joints, np.zeros((J, 3)))
        for t in range(out.t_obs, len(track.poses)):
            assert track.poses[t].mask.all()
    assert np.array_equal(out.primary.positions, corpus[0].primary.positions)


def test_restrict_joints_keeps_exactly_the_requested_set(corpus):
    keep = [0, 3, 11]
    out = restrict_joints(corpus[0], keep)
    for t in range(out.t_obs):
        mask = out.primary.poses[t].mask
        assert np.flatnonzero(mask).tolist() == keep
    with pytest.raises(ValueError):
        restrict_joints(corpus[0], [99])


# ---------------------------------------------------------------------------
# declarative perturbations


def test_perturbation_streams_are_seeded_per_scene(corpus):
    p = Perturbation(kind="noise", std=0.2, seed=5)
    assert p.apply(corpus) == p.apply(corpus)
    assert p.apply(corpus) != Perturbation(kind="noise", std=0.2, seed=6).apply(corpus)
    # prefix stability: corpus length does not change earlier scenes
    assert p.apply(corpus[:3]) == p.apply(corpus)[:3]


def test_perturbation_validates_kind():
    with pytest.raises(ValueError):
        Perturbation(kind="blur")
    with pytest.raises(ValueError):
        Perturbation(kind="occlusion", scheme="everything")


# ---------------------------------------------------------------------------
# joint attribution


def test_joint_attention_is_a_distribution(corpus):
    model = build_model(ModelConfig(
        family="recurrent", embed_dim=16, hidden_dim=32,
        pose_dim=16, pose_layers=2, pose_heads=2, seed=1,
    ))
    scores = joint_attention(model, corpus)
    assert scores.shape == (J,)
    assert (scores >= 0).all()
    assert scores.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(scores, joint_attention(model, corpus))


def test_joint_attention_requires_joint_tokens(corpus):
    model = build_model(ModelConfig(
        embed_dim=16, hidden_dim=32, pose_dim=16, pose_layers=1, pose_heads=2,
        pose_tokenization="per-frame",
    ))
    with pytest.raises(ValueError):
        joint_attention(model, corpus)


def test_select_top_joints_breaks_ties_toward_lower_index():
    scores = np.array([0.2, 0.3, 0.3, 0.2])
    assert select_top_joints(scores, 2) == [1, 2]
    assert select_top_joints(scores, 3) == [1, 2, 0]
    with pytest.raises(ValueError):
        select_top_joints(scores, 0)
    with pytest.raises(ValueError):
        select_top_joints(scores, 5)
