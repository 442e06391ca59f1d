"""Shared test constants and fixture builders."""

from __future__ import annotations

PUMP_QUERY = "Who is the manufacturer of pump 14569?"

PUMP_SUMMARY = (
    "The manufacturer of pump 14569 is PACO. It is located in room 06-470 on "
    "level 6 and is part of the hydronic return and power systems."
)

#: Scripted stage outputs that drive the canned pump walkthrough end to end.
PUMP_SCRIPT = [
    "A: [search in BIM] for 'Pumps'",
    "A: filter_para: component_id; proj_para: manufacturer",
    "A: extr_value: '14569'; pred_value: '14569'",
    PUMP_SUMMARY,
]

ASK_SCRIPT = [
    "A: [ask in GPT] for 'NA'",
    "BIM stands for building information modeling, a shared digital "
    "representation of a built asset.",
]
