from .arm import ArmTrackingModel, TrackingMode, step_arm
from .commands import (Boundary, Command, CommandError, InterpolationMode,
                       SetpointSegment, hold_command, interpolate_command,
                       CONTROL_PERIOD_MS)
from .puck import (ContactInfo, GoalEvent, MalletContact, WallContact,
                   resolve_mallet_contact, step_puck)
from .safety import (SetpointBuffer, safety_extend_trajectory,
                     safety_height_correct, EXTENSION_MS)
from .table import (MalletState, PuckParams, PuckState, TableGeometry,
                    EE_HEIGHT_BAND, Z_TABLE)
from .world import (ArmState, FaultEvent, MalformedCommandEvent, MatchConfig,
                    WorldState, mirror_xy, step_match, SIM_DT)

__all__ = [
    "ArmTrackingModel", "TrackingMode", "step_arm",
    "Boundary", "Command", "CommandError", "InterpolationMode",
    "SetpointSegment", "hold_command", "interpolate_command", "CONTROL_PERIOD_MS",
    "ContactInfo", "GoalEvent", "MalletContact", "WallContact",
    "resolve_mallet_contact", "step_puck",
    "SetpointBuffer", "safety_extend_trajectory", "safety_height_correct", "EXTENSION_MS",
    "MalletState", "PuckParams", "PuckState", "TableGeometry", "EE_HEIGHT_BAND", "Z_TABLE",
    "ArmState", "FaultEvent", "MalformedCommandEvent", "MatchConfig", "WorldState",
    "mirror_xy", "step_match", "SIM_DT",
]
