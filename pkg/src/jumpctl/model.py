"""Robot model description, validation, and the builtin models.

A model is a kinematic tree: one base link attached to the world by a
floating-base (6-DoF) or planar-base (3-DoF: x, z, pitch) joint, plus revolute
joints. Generalized coordinates are ordered base joint first, then revolute
joints in declaration order; for the floating base the layout is
(x, y, z, eulerX, eulerY, eulerZ) with the X-Y-Z Euler chart from
:mod:`jumpctl.rotations`, so qdot is the plain time derivative of q.

Model files are YAML documents in SI units. The loader cross-checks the
declared total mass against the link-mass sum (tolerance 1e-6 relative) and
rejects structurally invalid trees.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import InvalidInputError, InvalidModelError

BASE_JOINT_DOFS = {"floating-base": 6, "planar-base": 3}


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray            # CoM offset in the link frame
    inertia: np.ndarray        # 3x3 rotational inertia about the link CoM, link frame


@dataclass(frozen=True)
class Joint:
    name: str
    type: str                  # revolute | floating-base | planar-base
    parent: str                # parent link name, or "world" for the base joint
    child: str
    origin: np.ndarray         # joint position in the parent frame
    axis: np.ndarray           # unit rotation axis in the parent frame (revolute)
    limits: tuple[float, float]
    tau_max: float


@dataclass(frozen=True)
class ContactFrame:
    name: str
    link: str
    offset: np.ndarray         # contact point in the link frame


@dataclass
class JointState:
    """Generalized position and velocity (base coordinates + joint angles)."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise InvalidInputError(
                f"q and qdot must be equal-length vectors, got {self.q.shape} and {self.qdot.shape}"
            )

    def copy(self):
        return JointState(self.q.copy(), self.qdot.copy())


class RobotModel:
    """Validated kinematic tree with cached index structures.

    Attributes of note:

    - ``dof``: number of generalized coordinates (= velocities).
    - ``nb``: base-joint coordinate count (6 floating, 3 planar).
    - ``link_order``: links in topological order, base link first.
    - ``actuated_links``: links whose support chain contains a revolute joint;
      the complement (just the base link and any link welded to it) is what the
      locked-inertia split treats as the floating-base part.
    """

    def __init__(self, name, links, joints, contacts, total_mass, gravity,
                 nominal_posture=None):
        self.name = name
        self.links = list(links)
        self.joints = list(joints)
        self.contacts = list(contacts)
        self.total_mass = float(total_mass)
        self.gravity = np.asarray(gravity, dtype=float)
        self._validate()
        self._index()
        self.nominal_posture = (
            np.asarray(nominal_posture, dtype=float)
            if nominal_posture is not None
            else np.zeros(self.dof)
        )
        if self.nominal_posture.shape != (self.dof,):
            raise InvalidModelError(
                f"nominal posture has {self.nominal_posture.shape[0]} entries, model has {self.dof} DoF"
            )

    # -- structure ----------------------------------------------------------

    def _validate(self):
        names = [l.name for l in self.links]
        if len(set(names)) != len(names):
            raise InvalidModelError("duplicate link names")
        if len(set(j.name for j in self.joints)) != len(self.joints):
            raise InvalidModelError("duplicate joint names")
        base_joints = [j for j in self.joints if j.type in BASE_JOINT_DOFS]
        if len(base_joints) != 1:
            raise InvalidModelError(f"exactly one base joint required, found {len(base_joints)}")
        if base_joints[0].parent != "world":
            raise InvalidModelError("base joint must attach to 'world'")
        link_set = set(names)
        children = set()
        for j in self.joints:
            if j.child not in link_set:
                raise InvalidModelError(f"joint {j.name} child {j.child!r} is not a link")
            if j.parent != "world" and j.parent not in link_set:
                raise InvalidModelError(f"joint {j.name} parent {j.parent!r} is not a link")
            if j.child in children:
                raise InvalidModelError(f"link {j.child} has more than one parent joint")
            children.add(j.child)
            if j.type == "revolute":
                n = np.linalg.norm(j.axis)
                if abs(n - 1.0) > 1e-9:
                    raise InvalidModelError(f"joint {j.name} axis is not unit length")
        if children != link_set:
            orphans = link_set - children
            raise InvalidModelError(f"links without a parent joint: {sorted(orphans)}")
        for l in self.links:
            if l.mass < 0.0:
                raise InvalidModelError(f"link {l.name} has negative mass")
            if l.inertia.shape != (3, 3):
                raise InvalidModelError(f"link {l.name} inertia must be 3x3")
        mass_sum = sum(l.mass for l in self.links)
        if abs(mass_sum - self.total_mass) > 1e-6 * max(self.total_mass, 1.0):
            raise InvalidModelError(
                f"link masses sum to {mass_sum!r}, declared total is {self.total_mass!r}"
            )
        for c in self.contacts:
            if c.link not in link_set:
                raise InvalidModelError(f"contact {c.name} references unknown link {c.link}")

    def _index(self):
        by_child = {j.child: j for j in self.joints}
        base_joint = next(j for j in self.joints if j.type in BASE_JOINT_DOFS)
        self.base_joint = base_joint
        self.nb = BASE_JOINT_DOFS[base_joint.type]
        # topological order by walking from the base link
        link_by_name = {l.name: l for l in self.links}
        children_of = {}
        for j in self.joints:
            if j.type == "revolute":
                children_of.setdefault(j.parent, []).append(j)
        order = [base_joint.child]
        stack = [base_joint.child]
        while stack:
            cur = stack.pop(0)
            for j in children_of.get(cur, []):
                order.append(j.child)
                stack.append(j.child)
        if len(order) != len(self.links):
            raise InvalidModelError("kinematic tree is disconnected or cyclic")
        self.link_order = [link_by_name[n] for n in order]
        self.link_index = {n: i for i, n in enumerate(order)}
        # per-link parent index and connecting joint (None for the base link)
        self.parent_index = []
        self.parent_joint = []
        for n in order:
            j = by_child[n]
            if j.type in BASE_JOINT_DOFS:
                self.parent_index.append(-1)
                self.parent_joint.append(None)
            else:
                self.parent_index.append(self.link_index[j.parent])
                self.parent_joint.append(j)
        # dof layout: base block, then revolute joints in declaration order
        self.revolute_joints = [j for j in self.joints if j.type == "revolute"]
        self.dof = self.nb + len(self.revolute_joints)
        self.joint_dof = {j.name: self.nb + i for i, j in enumerate(self.revolute_joints)}
        # actuated split: any link below a revolute joint
        actuated = set()
        for n in order:
            j = by_child[n]
            if j.type == "revolute":
                actuated.add(n)
        changed = True
        while changed:
            changed = False
            for n in order:
                j = by_child[n]
                if j.type == "revolute" and j.parent in actuated and n not in actuated:
                    actuated.add(n)
                    changed = True
        self.actuated_links = actuated
        self.planar = base_joint.type == "planar-base"

    # -- convenience --------------------------------------------------------

    @property
    def n_contacts(self):
        return len(self.contacts)

    def joint_limits(self):
        """(lower, upper) arrays over all DoF; base coordinates unbounded."""
        lo = np.full(self.dof, -np.inf)
        hi = np.full(self.dof, np.inf)
        for j in self.revolute_joints:
            k = self.joint_dof[j.name]
            lo[k], hi[k] = j.limits
        return lo, hi

    def torque_limits(self):
        """Per-actuated-joint torque bound, ordered like the actuated DoF."""
        return np.array([j.tau_max for j in self.revolute_joints])

    def nominal_state(self):
        return JointState(self.nominal_posture.copy(), np.zeros(self.dof))

    def __repr__(self):
        return f"RobotModel({self.name!r}, dof={self.dof}, contacts={self.n_contacts})"


# -- file I/O ---------------------------------------------------------------


def _as_inertia(raw):
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise InvalidModelError(f"inertia must be a diagonal triple or 3x3 matrix, got shape {arr.shape}")


def model_from_dict(doc):
    try:
        base = doc["base"]
        links = [
            Link(
                name=str(l["name"]),
                mass=float(l["mass"]),
                com=np.asarray(l["com"], dtype=float),
                inertia=_as_inertia(l["inertia"]),
            )
            for l in doc["links"]
        ]
        joints = [
            Joint(
                name=str(j["name"]),
                type=str(j["type"]),
                parent=str(j["parent"]),
                child=str(j["child"]),
                origin=np.asarray(j.get("origin", [0.0, 0.0, 0.0]), dtype=float),
                axis=np.asarray(j.get("axis", [0.0, 0.0, 1.0]), dtype=float),
                limits=tuple(float(x) for x in j.get("limits", (-np.inf, np.inf))),
                tau_max=float(j.get("tau_max", np.inf)),
            )
            for j in doc["joints"]
        ]
        joints.insert(
            0,
            Joint(
                name="base",
                type=str(base["type"]),
                parent="world",
                child=str(base["link"]),
                origin=np.zeros(3),
                axis=np.zeros(3),
                limits=(-np.inf, np.inf),
                tau_max=np.inf,
            ),
        )
        contacts = [
            ContactFrame(
                name=str(c["name"]),
                link=str(c["link"]),
                offset=np.asarray(c["offset"], dtype=float),
            )
            for c in doc.get("contacts", [])
        ]
        return RobotModel(
            name=str(doc.get("name", "unnamed")),
            links=links,
            joints=joints,
            contacts=contacts,
            total_mass=float(doc["total_mass"]),
            gravity=doc.get("gravity", [0.0, 0.0, -9.81]),
            nominal_posture=doc.get("nominal_posture"),
        )
    except KeyError as e:
        raise InvalidModelError(f"model document missing required key: {e}") from e


def load_robot_model(path):
    """Load and validate a robot model YAML file."""
    with open(path, "r") as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise InvalidModelError(f"{path}: not a model document")
    return model_from_dict(doc)


def builtin_model(name):
    """Load one of the packaged models: planar5, kuavo16, pointleg5, masslessleg5."""
    ref = importlib.resources.files("jumpctl") / "models" / f"{name}.yaml"
    if not ref.is_file():
        raise InvalidInputError(f"no builtin model named {name!r}")
    return model_from_dict(yaml.safe_load(ref.read_text()))
