import math

import numpy as np
import pytest

from deltarobot.geometry import is_rotation, rot_x, rot_z, zxz_from_angles
from deltarobot.robot_model import (
    PROTOTYPE_FRAME_RADIUS,
    PROTOTYPE_MASS,
    ROLLING_ANGLE,
    JointLimitError,
    LinkSpec,
    ModeError,
    ModelError,
    RobotModel,
    cog_in_base,
    composite_link,
    contact_point,
    default_model,
    forward_kinematics,
    inertia_at_cog,
    inertia_at_contact_point,
    model_from_dict,
    model_to_dict,
    rod_inertia,
)

from conftest import TRIANGLE, random_rotation

L = 0.55


def _parts(frame_offset=0.0, rotor_at=0.75):
    """Rod + rotor point + frame point, as (mass, position, inertia) in the link frame."""
    return [
        (0.7, np.array([L / 2, 0.0, 0.0]), rod_inertia(0.7, L, 0.012)),
        (0.45, np.array([rotor_at * L, 0.0, 0.0]), np.zeros((3, 3))),
        (0.2, np.array([L / 2, -frame_offset, 0.0]), np.zeros((3, 3))),
    ]


def _model_from_parts(parts, masses_scale=(1.0, 1.0, 1.0)):
    links = []
    for s in masses_scale:
        mass, com, inertia = composite_link([(m * s, c, i * s) for m, c, i in parts])
        links.append(LinkSpec(L, mass, com, inertia, np.array([0.75 * L, 0, 0])))
    return RobotModel(links=tuple(links))


def _homogeneous(R, p):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


def _link_transforms(q, lengths):
    """Base-frame transforms of the three link frames, composed independently."""
    trans = lambda x: _homogeneous(np.eye(3), [x, 0, 0])  # noqa: E731
    rz = lambda a: _homogeneous(rot_z(a), np.zeros(3))  # noqa: E731
    T2 = np.eye(4)
    T3 = T2 @ trans(lengths[1]) @ rz(q[1])
    T1 = T2 @ rz(-q[0]) @ trans(-lengths[0])
    return T1, T2, T3


def _point_samples(model_parts, q, n=100):
    """Each link as ``n`` point masses along the rod plus its lumped points."""
    pts, ms = [], []
    for T in _link_transforms(q, (L, L, L)):
        for m, c, inertia in model_parts:
            if np.any(inertia):
                xs = (np.arange(n) + 0.5) / n * L
                local = np.stack([xs, np.zeros(n), np.zeros(n)], axis=1)
                ms.extend([m / n] * n)
            else:
                local = c[None, :]
                ms.append(m)
            pts.extend((T @ np.c_[local, np.ones(len(local))].T).T[:, :3])
    return np.array(pts), np.array(ms)


def _inertia_about(pts, ms, point):
    d = pts - point
    return sum(m * (v @ v * np.eye(3) - np.outer(v, v)) for m, v in zip(ms, d))


def test_straight_chain_is_collinear():
    model = _model_from_parts(_parts())
    fr = forward_kinematics(model, (0.0, 0.0))
    for R in fr.R_cog_L:
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(fr.link_origin_cog[:, 1:], 0.0, atol=1e-15)
    assert abs(fr.p[1][1]) < 1e-15 and abs(fr.p[1][2]) < 1e-15


def test_triangle_closes_and_cog_is_equidistant(model):
    fr = forward_kinematics(model, TRIANGLE)
    ends = fr.link_origin_cog + np.array([R @ [L, 0, 0] for R in fr.R_cog_L])
    np.testing.assert_allclose(ends[2], fr.link_origin_cog[0], atol=1e-12)
    mids = fr.link_origin_cog + 0.5 * (ends - fr.link_origin_cog)
    dist = np.linalg.norm(mids, axis=1)
    np.testing.assert_allclose(dist, dist[0], rtol=1e-12)


def test_cog_matches_transform_composition(rng):
    model = default_model()
    for _ in range(50):
        q = rng.uniform(-2.3, 2.3, size=2)
        coms = [(T @ np.r_[link.com_offset, 1.0])[:3] for T, link in zip(_link_transforms(q, (L,) * 3), model.links)]
        masses = np.array([link.mass for link in model.links])
        oracle = masses @ np.array(coms) / masses.sum()
        np.testing.assert_allclose(cog_in_base(model, q), oracle, atol=1e-14)


def test_base_pose_moves_everything(rng):
    model = default_model()
    R, p = random_rotation(rng), rng.normal(size=3)
    fr = forward_kinematics(model, TRIANGLE, (R, p))
    np.testing.assert_allclose(fr.r, p + R @ cog_in_base(model, TRIANGLE), atol=1e-14)
    assert fr.to_world(fr.base_origin_cog) == pytest.approx(p)


def test_joint_limit_error_names_joint(model):
    with pytest.raises(JointLimitError) as exc:
        forward_kinematics(model, (0.0, 3.0))
    assert exc.value.joint == 1


def test_rotations_are_orthonormal(model, rng):
    for _ in range(20):
        fr = forward_kinematics(model, rng.uniform(-2, 2, size=2), (random_rotation(rng), np.zeros(3)))
        assert is_rotation(fr.R_W_cog) and all(is_rotation(R) for R in fr.R_W_L)


def test_mirror_relabel_keeps_cog():
    # links symmetric about their midpoints
    model = _model_from_parts(_parts(0.1, rotor_at=0.5))
    a = cog_in_base(model, (0.4, 1.3))
    b = cog_in_base(model, (1.3, 0.4))
    # swapping links 1 and 3 mirrors the chain about the perpendicular bisector of link 2
    assert a[0] == pytest.approx(L - b[0], abs=1e-14)
    assert a[1] == pytest.approx(b[1], abs=1e-14)


def test_single_link_inertia():
    inertia = np.diag([0.01, 0.02, 0.03])
    zero = LinkSpec(L, 0.0, np.zeros(3), np.zeros((3, 3)), np.zeros(3))
    mid = LinkSpec(L, 1.0, np.array([0.2, 0.0, 0.0]), inertia, np.zeros(3))
    model = RobotModel(links=(zero, mid, zero))
    for q in [(0.0, 0.0), (1.0, -0.5)]:
        np.testing.assert_allclose(inertia_at_cog(model, q), inertia, atol=1e-15)


@pytest.mark.parametrize("q", [(0.0, 0.0), TRIANGLE, (0.7, 1.9)])
def test_inertia_point_mass_oracle(q):
    parts = _parts(frame_offset=0.24)
    model = _model_from_parts(parts)
    pts, ms = _point_samples(parts, q)
    cog = ms @ pts / ms.sum()
    oracle = _inertia_about(pts, ms, cog)
    got = inertia_at_cog(model, q)
    assert np.max(np.abs(got - oracle)) <= 0.01 * np.max(np.abs(oracle))
    np.testing.assert_allclose(np.diag(got), np.diag(oracle), rtol=0.01)


def test_yaw_inertia_depends_on_shape():
    model = _model_from_parts(_parts(frame_offset=0.24))
    straight = inertia_at_cog(model, (0.0, 0.0))[2, 2]
    triangle = inertia_at_cog(model, TRIANGLE)[2, 2]
    assert abs(straight - triangle) > 0.1 * triangle


def test_default_inertia_near_reference(model):
    # plausibility anchor only; the mass split of the prototype is not known
    diag = np.diag(inertia_at_cog(model, TRIANGLE))
    np.testing.assert_allclose(diag, [0.132, 0.151, 0.271], rtol=0.25)
    assert np.all(np.linalg.eigvalsh(inertia_at_cog(model, TRIANGLE)) > 0)


def test_contact_inertia_shift(model):
    base = inertia_at_cog(model, TRIANGLE)
    assert np.array_equal(inertia_at_contact_point(model, TRIANGLE, np.zeros(3)), base)
    shifted = inertia_at_contact_point(model, TRIANGLE, [0.0, 0.0, 0.4])
    delta = shifted - base
    assert model.total_mass == pytest.approx(PROTOTYPE_MASS)
    assert delta[0, 0] == pytest.approx(PROTOTYPE_MASS * 0.4**2, abs=1e-12)
    assert delta[1, 1] == pytest.approx(0.656, abs=1e-12)
    assert delta[2, 2] == pytest.approx(0.0, abs=1e-15)


def test_contact_inertia_point_mass_oracle(rng):
    parts = _parts(frame_offset=0.24)
    model = _model_from_parts(parts)
    pts, ms = _point_samples(parts, TRIANGLE)
    cog = ms @ pts / ms.sum()
    for _ in range(5):
        offset = rng.normal(size=3) * 0.3
        oracle = _inertia_about(pts, ms, cog - offset)
        got = inertia_at_contact_point(model, TRIANGLE, offset)
        np.testing.assert_allclose(np.diag(got), np.diag(oracle), rtol=0.01)


def test_upright_contact_below_cog(model):
    R = rot_x(math.pi / 2)
    fr = contact_point(model, forward_kinematics(model, TRIANGLE, cog_pose=(R, np.zeros(3))))
    np.testing.assert_allclose(R @ fr.p_cp_cog, [0.0, 0.0, PROTOTYPE_FRAME_RADIUS], atol=1e-12)
    np.testing.assert_allclose(fr.cp_world, [0.0, 0.0, -PROTOTYPE_FRAME_RADIUS], atol=1e-12)


@pytest.mark.parametrize("beta", [0.3, math.pi / 2, 2.0])
def test_rolled_contact_arc_length(model, beta):
    """The body-fixed contact point advances along the rim by radius * beta."""
    def rim_point(b):
        R = zxz_from_angles(0.0, math.pi / 2, b)
        fr = contact_point(model, forward_kinematics(model, TRIANGLE, cog_pose=(R, np.zeros(3))))
        centre = fr.link_origin_cog.mean(axis=0)
        return -fr.p_cp_cog - centre

    a, b = rim_point(0.0), rim_point(beta)
    angle = math.acos(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1))
    assert PROTOTYPE_FRAME_RADIUS * angle == pytest.approx(PROTOTYPE_FRAME_RADIUS * beta, abs=1e-9)
    if beta == math.pi / 2:
        assert PROTOTYPE_FRAME_RADIUS * angle == pytest.approx(0.2 * math.pi)


def test_contact_requires_rolling_configuration(model):
    with pytest.raises(ModeError):
        contact_point(model, forward_kinematics(model, (1.75, 1.75)))


def test_model_validation():
    good = default_model().links[0]
    with pytest.raises(ModelError):
        RobotModel(links=(good, good))
    with pytest.raises(ModelError):
        LinkSpec(L, 1.0, np.zeros(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ModelError):
        LinkSpec(L, 1.0, np.zeros(3), np.eye(3), np.zeros(3), rotor_tilt=1.6)
    with pytest.raises(ModelError):
        LinkSpec(-1.0, 1.0, np.zeros(3), np.eye(3), np.zeros(3))


def test_default_model_properties(model):
    assert model.total_mass == pytest.approx(sum(link.mass for link in model.links), abs=1e-9)
    assert [link.rotor_spin_dir for link in model.links] == [1, -1, 1]
    assert np.sign(model.drag_ratios).tolist() == [1.0, -1.0, 1.0]
    assert ROLLING_ANGLE == pytest.approx(2 * math.pi / 3)


def test_model_dict_round_trip(model):
    again = model_from_dict(model_to_dict(model))
    assert model_to_dict(again) == model_to_dict(model)
