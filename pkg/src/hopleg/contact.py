"""Compliant foot-ground contact."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hopleg import dynamics as dyn
from hopleg.model import LegModel


@dataclass(frozen=True)
class GroundModel:
    stiffness: float = 5.0e4  # N/m
    damping: float = 500.0  # N s/m
    friction_mu: float = 0.8
    tangential_damping: float = 1000.0  # N s/m
    ground_height: float = 0.0  # m


def normal_tangential(ground: GroundModel, penetration: float, xd: float, zd: float) -> tuple[float, float]:
    """Penalty force on the foot given penetration depth and foot velocity."""
    if penetration < 0.0:
        return 0.0, 0.0
    fn = ground.stiffness * penetration - ground.damping * zd
    if fn <= 0.0:
        return 0.0, 0.0
    cap = ground.friction_mu * fn
    ft = -ground.tangential_damping * xd
    return max(-cap, min(cap, ft)), fn


def penetration(q, model: LegModel, ground: GroundModel) -> float:
    _, z = dyn.foot_position(q, model)
    return ground.ground_height + model.foot_radius - z


def detect_contact(q, model: LegModel, ground: GroundModel | None = None) -> bool:
    """True when the bottom of the foot sphere is at or below the ground."""
    ground = ground or GroundModel()
    return penetration(q, model, ground) >= 0.0


def contact_force(q, qd, model: LegModel, ground: GroundModel | None = None) -> np.ndarray:
    """Ground force (x, z) on the foot centre. Never pulls the foot down."""
    ground = ground or GroundModel()
    xd, zd = dyn.foot_velocity(q, qd, model)
    return np.array(normal_tangential(ground, penetration(q, model, ground), xd, zd))
