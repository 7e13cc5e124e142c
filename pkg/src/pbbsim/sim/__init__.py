from .contacts import ContactScript, ScriptedContact, detect_contacts
from .mobility import RandomWaypoint, move_point
from .world import (
    BOARD_ID,
    Copy,
    Link,
    Pair,
    Role,
    SimMessage,
    SimNode,
    TransferStatus,
    World,
    transfer_steps,
)

__all__ = [
    "BOARD_ID", "ContactScript", "Copy", "Link", "Pair", "RandomWaypoint", "Role",
    "ScriptedContact", "SimMessage", "SimNode", "TransferStatus", "World",
    "detect_contacts", "move_point", "transfer_steps",
]
