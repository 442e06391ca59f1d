"""Deterministic synthetic store documents for offline runs and tests.

The generator emits hospital-flavored asset data across five attribute groups
(basic, location, building system, equipment, and OmniClass classification).
When a "Pumps" category is generated with at least one record, its first
record is replaced by a hand-authored pump (component 14569, manufacturer
PACO, room 06-470, level 6) so canned end-to-end transcripts replay against
a real record.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

#: Parameters shared by every generated category, in attribute-group order.
PARAMETERS = (
    "component_id", "component_type", "is_asset",
    "level_number", "room_type", "room_name",
    "system_type", "system_name",
    "manufacturer", "model_name", "specification",
    "omniclass_number", "omniclass_title",
)

ID_PARAMETER = "component_id"

#: (category name, object types, omniclass number, omniclass title)
_CATEGORY_POOL = (
    ("Air Handling Units", ("Packaged Rooftop AHU", "Indoor AHU"),
     "23-33 11 13", "Air Handling Units"),
    ("Chillers", ("Centrifugal Chiller", "Screw Chiller"),
     "23-33 21 11", "Chillers"),
    ("Pumps", ("Inline Pump", "End Suction Pump", "Split Coupled Vertical Inline"),
     "23-27 11 13", "Pumps"),
    ("Transformers", ("Dry-Type Transformer",),
     "23-35 11 17", "Transformers"),
    ("Air Terminals", ("VAV Box", "Diffuser"),
     "23-33 41 11", "Air Terminals"),
    ("Smoke Detectors", ("Photoelectric Detector", "Ionization Detector"),
     "23-35 47 13", "Smoke Detectors"),
    ("Fans", ("Exhaust Fan", "Supply Fan"),
     "23-33 31 11", "Fans"),
    ("Electrical Panels", ("Distribution Panel", "Lighting Panel"),
     "23-35 23 11", "Panelboards"),
    ("Valves", ("Gate Valve", "Balancing Valve"),
     "23-27 23 11", "Valves"),
    ("Water Heaters", ("Electric Water Heater",),
     "23-31 27 11", "Water Heaters"),
)

_MANUFACTURERS = ("PACO", "Grundfos", "Carrier", "Trane", "York",
                  "Siemens", "ABB", "Greenheck", "Bell & Gossett", "Honeywell")
_SYSTEM_TYPES = ("Hydronic Return,Power", "Hydronic Supply", "Supply Air",
                 "Return Air", "Exhaust Air", "Domestic Cold Water",
                 "Domestic Hot Water", "Power", "Fire Alarm")
_SYSTEM_NAMES = ("CHW-1", "HHW-2", "SA-3", "EA-57", "DCW-1", "P-6", "FA-1")
_ROOM_TYPES = ("Mechanical Room", "Electrical Room", "Patient Room",
               "Operating Room", "Office", "Corridor", "Lab")

GOLDEN_PUMP = {
    "component_id": 14569,
    "component_type": "End Suction Pump",
    "is_asset": True,
    "level_number": 6,
    "room_type": "Mechanical Room",
    "room_name": "06-470",
    "system_type": "Hydronic Return,Power",
    "system_name": "HHW-2",
    "manufacturer": "PACO",
    "model_name": "LF-4009",
    "specification": "SPEC-23 21 23",
    "omniclass_number": "23-27 11 13",
    "omniclass_title": "Pumps",
}


@dataclass(frozen=True)
class FixtureSpec:
    """Size knobs for the generator; counts must be non-negative."""

    categories: int = 6
    records: int = 600

    def __post_init__(self) -> None:
        if self.categories < 0 or self.records < 0:
            raise ValueError("fixture counts must be >= 0")
        if self.categories > len(_CATEGORY_POOL):
            raise ValueError(f"at most {len(_CATEGORY_POOL)} categories supported")


def generate_fixture(spec: FixtureSpec, seed: int = 0) -> dict:
    """Build a store document; identical output for identical (spec, seed)."""
    rng = random.Random(seed)
    chosen = _CATEGORY_POOL[: spec.categories]
    categories = []
    for name, object_types, omni_number, omni_title in chosen:
        categories.append({
            "name": name,
            "object_types": list(object_types),
            "id_parameter": ID_PARAMETER,
            "parameters": list(PARAMETERS),
            "records": [],
        })

    for i in range(spec.records):
        if not categories:
            break
        entry = categories[i % len(categories)]
        name, object_types, omni_number, omni_title = chosen[i % len(chosen)]
        component_id = 10000 + i
        if component_id == GOLDEN_PUMP["component_id"]:
            component_id = 90000 + i
        level = rng.randint(1, 6)
        record = {
            "component_id": component_id,
            "component_type": rng.choice(object_types),
            "is_asset": rng.random() < 0.8,
            "level_number": level,
            "room_type": rng.choice(_ROOM_TYPES),
            "room_name": f"{level:02d}-{rng.randint(100, 999)}",
            "system_type": rng.choice(_SYSTEM_TYPES),
            "system_name": rng.choice(_SYSTEM_NAMES),
            "manufacturer": rng.choice(_MANUFACTURERS),
            "model_name": f"{name[:2].upper()}-{rng.randint(1000, 9999)}",
            "specification": f"SPEC-{rng.randint(21, 28)} {rng.randint(10, 99)} {rng.randint(10, 99)}",
            "omniclass_number": omni_number,
            "omniclass_title": omni_title,
        }
        # a sprinkle of nulls so null handling stays exercised
        if rng.random() < 0.05:
            record["specification"] = None
        entry["records"].append(record)

    for entry in categories:
        if entry["name"] == "Pumps" and entry["records"]:
            entry["records"][0] = dict(GOLDEN_PUMP)
    return {"categories": categories}
