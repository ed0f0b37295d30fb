"""Planar puck integration: sliding decay, rail and mallet contacts, goals.

Sliding is modeled as exponential speed decay (v' = v * exp(-mu * dt)), rails
and mallets reflect the normal velocity component with their restitution, and
an optional Gaussian acceleration stands in for airflow disturbance. Substeps
are subdivided whenever one step of travel exceeds half a puck radius so fast
pucks cannot tunnel through rails or mallets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .table import MalletState, PuckParams, PuckState, TableGeometry


@dataclass(frozen=True)
class GoalEvent:
    scoring_side: int      # side that receives the point
    speed: float           # puck speed when crossing the goal line
    y: float               # crossing position along the goal mouth
    time_ms: int = -1


@dataclass(frozen=True)
class WallContact:
    axis: str              # "x" (end rails) or "y" (side rails)
    time_ms: int = -1


@dataclass(frozen=True)
class MalletContact:
    side: int
    degenerate: bool = False
    time_ms: int = -1


class ContactInfo(NamedTuple):
    applied: bool
    degenerate: bool
    normal: np.ndarray


def resolve_mallet_contact(puck: PuckState, mallet: MalletState, params: PuckParams,
                           geom: TableGeometry,
                           prev_normal: Optional[np.ndarray] = None) -> tuple[PuckState, ContactInfo]:
    """Impulse along the contact normal against an infinite-mass mallet.

    Tangential velocity is preserved (frictionless contact); separating pairs
    are left untouched. Coincident centers fall back to the previous step's
    normal and are flagged degenerate.
    """
    delta = puck.pos - mallet.pos
    dist = float(np.linalg.norm(delta))
    degenerate = False
    if dist < 1e-12:
        normal = prev_normal if prev_normal is not None else np.array([1.0, 0.0])
        normal = normal / np.linalg.norm(normal)
        degenerate = True
    else:
        normal = delta / dist
    touch = geom.puck_radius + geom.mallet_radius
    if dist > touch:
        return puck, ContactInfo(False, False, normal)

    rel_n = float((puck.vel - mallet.vel) @ normal)
    out = puck.copy()
    # push out of penetration so the pair separates within the substep
    out.x, out.y = mallet.pos + normal * touch
    if rel_n >= 0:
        return out, ContactInfo(False, degenerate, normal)
    impulse = -(1.0 + params.mallet_restitution) * rel_n
    out.vx = puck.vx + impulse * normal[0]
    out.vy = puck.vy + impulse * normal[1]
    return out, ContactInfo(True, degenerate, normal)


def _reflect_rail(puck: PuckState, params: PuckParams, geom: TableGeometry, events: list,
                  time_ms: int):
    """Resolve side-rail and end-rail penetration in place."""
    wall = geom.wall_y
    if puck.y > wall:
        puck.y = 2 * wall - puck.y
        puck.vy = -params.wall_restitution * puck.vy
        _couple_spin(puck, params, tangent_axis="x")
        events.append(WallContact("y", time_ms))
    elif puck.y < -wall:
        puck.y = -2 * wall - puck.y
        puck.vy = -params.wall_restitution * puck.vy
        _couple_spin(puck, params, tangent_axis="x")
        events.append(WallContact("y", time_ms))

    for bound, scoring in ((geom.puck_radius, 1), (geom.length - geom.puck_radius, 0)):
        goal_line = 0.0 if scoring == 1 else geom.length
        beyond = puck.x < bound if scoring == 1 else puck.x > bound
        if not beyond:
            continue
        # interpolate the y position back at the rail plane to decide mouth entry
        if abs(puck.vx) > 1e-12:
            frac = (puck.x - bound) / puck.vx
            y_at = puck.y - frac * puck.vy
        else:
            y_at = puck.y
        if geom.inside_goal_mouth(y_at):
            crossed = (puck.x <= goal_line) if scoring == 1 else (puck.x >= goal_line)
            if crossed:
                events.append(GoalEvent(scoring_side=scoring, speed=puck.speed,
                                        y=float(y_at), time_ms=time_ms))
            continue
        puck.x = 2 * bound - puck.x
        puck.vx = -params.wall_restitution * puck.vx
        _couple_spin(puck, params, tangent_axis="y")
        events.append(WallContact("x", time_ms))


def _couple_spin(puck: PuckState, params: PuckParams, tangent_axis: str):
    k = params.spin_coupling
    if k <= 0:
        return
    r = 1.0  # lever arm folded into the coupling coefficient
    if tangent_axis == "x":
        vt = puck.vx
        puck.vx = (1 - k) * vt + k * (-puck.omega * r)
        puck.omega = (1 - k) * puck.omega + k * (-vt / r)
    else:
        vt = puck.vy
        puck.vy = (1 - k) * vt + k * (puck.omega * r)
        puck.omega = (1 - k) * puck.omega + k * (vt / r)


def step_puck(puck: PuckState, mallets: Sequence[MalletState], params: PuckParams,
              geom: TableGeometry, dt: float = 1e-3,
              rng: Optional[np.random.Generator] = None,
              time_ms: int = -1) -> tuple[PuckState, list]:
    """Advance the puck by dt, resolving rail and mallet contacts.

    Returns the new state and the events raised during the step. A goal event
    leaves the puck past the goal line; respawning is the match stepper's job.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = puck.copy()
    events: list = []

    if params.disturbance_std > 0 and rng is not None:
        out.vx += rng.normal(0.0, params.disturbance_std) * dt
        out.vy += rng.normal(0.0, params.disturbance_std) * dt

    n_sub = max(1, math.ceil(out.speed * dt / (geom.puck_radius / 2)))
    h = dt / n_sub
    decay = math.exp(-params.slide_friction * h)
    for _ in range(n_sub):
        out.vx *= decay
        out.vy *= decay
        out.omega *= decay
        out.x += out.vx * h
        out.y += out.vy * h
        out.theta = math.remainder(out.theta + out.omega * h, 2 * math.pi)
        scored_before = any(isinstance(e, GoalEvent) for e in events)
        _reflect_rail(out, params, geom, events, time_ms)
        if not scored_before and any(isinstance(e, GoalEvent) for e in events):
            break  # puck is in the goal; stop integrating this step
        for side, mallet in enumerate(mallets):
            updated, info = resolve_mallet_contact(out, mallet, params, geom)
            if info.applied or info.degenerate:
                out = updated
                events.append(MalletContact(side=side, degenerate=info.degenerate,
                                            time_ms=time_ms))
            elif not np.array_equal(updated.pos, out.pos):
                out = updated  # separation push without impulse
        # squeeze guard: a mallet pressing the puck against a rail must not
        # pump energy through repeated push-out/reflect cycles; pin the puck
        # at the rail inelastically instead
        wall = geom.wall_y
        if out.y > wall:
            out.y = wall
            out.vy = min(out.vy, 0.0)
        elif out.y < -wall:
            out.y = -wall
            out.vy = max(out.vy, 0.0)
        if not geom.inside_goal_mouth(out.y):
            if out.x < geom.puck_radius:
                out.x = geom.puck_radius
                out.vx = max(out.vx, 0.0)
            elif out.x > geom.length - geom.puck_radius:
                out.x = geom.length - geom.puck_radius
                out.vx = min(out.vx, 0.0)
    return out, events
