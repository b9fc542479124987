import numpy as np
import pytest

from jumpctl.errors import InvalidModelError
from jumpctl.model import builtin_model, model_from_dict


def minimal_doc(**overrides):
    doc = {
        "name": "stick",
        "total_mass": 3.0,
        "base": {"type": "planar-base", "link": "body"},
        "links": [
            {"name": "body", "mass": 2.0, "com": [0, 0, 0], "inertia": [0.1, 0.1, 0.1]},
            {"name": "leg", "mass": 1.0, "com": [0, 0, -0.2], "inertia": [0.01, 0.01, 0.001]},
        ],
        "joints": [
            {"name": "hip", "type": "revolute", "parent": "body", "child": "leg",
             "origin": [0, 0, -0.1], "axis": [0, -1, 0], "limits": [-1.5, 1.5], "tau_max": 50.0},
        ],
        "contacts": [{"name": "foot", "link": "leg", "offset": [0, 0, -0.4]}],
    }
    doc.update(overrides)
    return doc


def test_minimal_model_indexes():
    m = model_from_dict(minimal_doc())
    assert m.dof == 4
    assert m.nb == 3
    assert [l.name for l in m.link_order] == ["body", "leg"]
    assert m.actuated_links == {"leg"}
    assert m.joint_dof["hip"] == 3
    lo, hi = m.joint_limits()
    assert np.all(np.isinf(lo[:3])) and lo[3] == -1.5 and hi[3] == 1.5
    np.testing.assert_array_equal(m.torque_limits(), [50.0])


def test_mass_sum_mismatch_rejected():
    with pytest.raises(InvalidModelError, match="masses sum"):
        model_from_dict(minimal_doc(total_mass=4.0))


def test_duplicate_link_rejected():
    doc = minimal_doc()
    doc["links"].append(dict(doc["links"][1]))
    with pytest.raises(InvalidModelError):
        model_from_dict(doc)


def test_nonunit_axis_rejected():
    doc = minimal_doc()
    doc["joints"][0]["axis"] = [0, -2, 0]
    with pytest.raises(InvalidModelError, match="unit"):
        model_from_dict(doc)


def test_orphan_link_rejected():
    doc = minimal_doc()
    doc["links"].append({"name": "stray", "mass": 0.0, "com": [0, 0, 0],
                         "inertia": [0, 0, 0]})
    doc["total_mass"] = 3.0
    with pytest.raises(InvalidModelError, match="stray"):
        model_from_dict(doc)


def test_bad_nominal_posture_length_rejected():
    with pytest.raises(InvalidModelError, match="nominal"):
        model_from_dict(minimal_doc(nominal_posture=[0.0, 0.0]))


@pytest.mark.parametrize("name,dof,n_contacts,mass", [
    ("planar5", 7, 2, 34.506),
    ("kuavo16", 16, 4, 34.506),
    ("pointleg5", 7, 2, 24.0),
    ("masslessleg5", 7, 2, 20.0),
])
def test_builtin_models(name, dof, n_contacts, mass):
    m = builtin_model(name)
    assert m.dof == dof
    assert m.n_contacts == n_contacts
    assert m.total_mass == pytest.approx(mass)
    assert m.nominal_posture.shape == (dof,)


def test_kuavo16_is_floating_base():
    m = builtin_model("kuavo16")
    assert not m.planar
    assert m.nb == 6
    # 10 actuated joints per leg pair: yaw, roll, pitch hip + knee + ankle
    assert len(m.revolute_joints) == 10


def test_planar5_torque_limits():
    m = builtin_model("planar5")
    np.testing.assert_array_equal(m.torque_limits(), [110.0, 110.0, 110.0, 110.0])
