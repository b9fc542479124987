"""Contact schedules: which contact frames press on the ground at each knot.

A schedule discretizes the planning horizon into fixed time steps and fixes
the contact activity pattern up front; the planner and controller optimize
motion and forces around it but never change it. Knots are labeled by jump
phase so downstream consumers (foot placement, phase-dependent costs) can
key off intent rather than re-deriving it from the activity matrix.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

PHASES = ("launching", "flight", "landing")


@dataclass(frozen=True, eq=False)
class ContactSchedule:
    step_time: float
    S: np.ndarray          # (n_knots, n_contacts) activity, entries 0/1
    phases: tuple          # per-knot label from PHASES

    def __post_init__(self):
        if not self.step_time > 0.0:
            raise InvalidInputError(f"step_time must be positive, got {self.step_time}")
        S = np.asarray(self.S)
        if S.ndim != 2 or S.shape[0] == 0 or S.shape[1] == 0:
            raise InvalidInputError(f"S must be a nonempty matrix, got shape {S.shape}")
        if not np.all((S == 0) | (S == 1)):
            raise InvalidInputError("S entries must be 0 or 1")
        phases = tuple(self.phases)
        if len(phases) != S.shape[0]:
            raise InvalidInputError(
                f"{len(phases)} phase labels for {S.shape[0]} knots"
            )
        bad = sorted(set(phases) - set(PHASES))
        if bad:
            raise InvalidInputError(f"unknown phase labels {bad}")
        for k, ph in enumerate(phases):
            if ph == "flight" and np.any(S[k] != 0):
                raise InvalidInputError(f"flight knot {k} has active contacts")
        S = S.astype(int)
        S.flags.writeable = False
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "phases", phases)

    @property
    def n_knots(self):
        return self.S.shape[0]

    @property
    def n_contacts(self):
        return self.S.shape[1]

    @property
    def horizon(self):
        return self.n_knots * self.step_time

    def times(self):
        return np.arange(self.n_knots) * self.step_time

    def active(self, k):
        """Boolean activity mask over contacts at knot k."""
        return self.S[k] == 1

    def is_flight(self, k):
        return self.phases[k] == "flight"


def _knots(duration, step_time, what):
    n = int(round(duration / step_time))
    if n < 1:
        raise InvalidInputError(
            f"{what} duration {duration} shorter than one {step_time} s step"
        )
    return n


def stance_schedule(n_contacts, duration, step_time=0.05, phase="launching"):
    """All contacts active for the whole horizon."""
    n = _knots(duration, step_time, "stance")
    return ContactSchedule(
        step_time=step_time,
        S=np.ones((n, n_contacts), dtype=int),
        phases=(phase,) * n,
    )


def jump_schedule(n_contacts, launch_time, flight_time, landing_time, step_time=0.05):
    """Stance, then airborne, then stance again; all contacts switch together."""
    nl = _knots(launch_time, step_time, "launch")
    nf = _knots(flight_time, step_time, "flight")
    nd = _knots(landing_time, step_time, "landing")
    S = np.ones((nl + nf + nd, n_contacts), dtype=int)
    S[nl : nl + nf] = 0
    phases = ("launching",) * nl + ("flight",) * nf + ("landing",) * nd
    return ContactSchedule(step_time=step_time, S=S, phases=phases)


def consecutive_jump_schedule(n_contacts, launch_time, flight_time, landing_time,
                              n_jumps, step_time=0.05):
    """Several jumps back to back; each landing doubles as the next launch."""
    if n_jumps < 1:
        raise InvalidInputError(f"n_jumps must be >= 1, got {n_jumps}")
    blocks = []
    phases = []
    for j in range(n_jumps):
        one = jump_schedule(n_contacts, launch_time, flight_time, landing_time, step_time)
        blocks.append(one.S)
        phases.extend(one.phases)
    return ContactSchedule(
        step_time=step_time, S=np.vstack(blocks), phases=tuple(phases)
    )
