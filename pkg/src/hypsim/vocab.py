"""Closed vocabularies shared by every module: attributes, relations, answers."""

from __future__ import annotations

COLORS = ("gray", "blue", "brown", "yellow", "red", "green", "purple", "cyan")
SHAPES = ("cylinder", "sphere", "cube")
SIZES = ("small", "big")
MATERIALS = ("metal", "rubber")

# Canonical attribute order; referring expressions and filter chains follow it.
ATTRIBUTES = ("size", "color", "material", "shape")

ATTRIBUTE_VALUES: dict[str, tuple[str, ...]] = {
    "size": SIZES,
    "color": COLORS,
    "material": MATERIALS,
    "shape": SHAPES,
}

PLANAR_RELATIONS = ("left", "right", "front", "behind")
RELATIONS = PLANAR_RELATIONS + ("on", "below")

INVERSE_RELATION = {
    "left": "right",
    "right": "left",
    "front": "behind",
    "behind": "front",
    "on": "below",
    "below": "on",
}

ANSWER_LABELS = COLORS + SHAPES + SIZES + MATERIALS + tuple(str(i) for i in range(10)) + ("yes", "no")

_VALUE_TO_ATTRIBUTE = {v: attr for attr, values in ATTRIBUTE_VALUES.items() for v in values}


def attribute_of(value: str) -> str | None:
    """Return the attribute a value belongs to, or None for non-attribute tokens."""
    return _VALUE_TO_ATTRIBUTE.get(value)


def label_kind(label: str) -> str:
    """Classify an answer label as 'integer', 'boolean' or its attribute name."""
    if label in ("yes", "no"):
        return "boolean"
    if label.isdigit():
        return "integer"
    attr = attribute_of(label)
    if attr is None:
        raise ValueError(f"not an answer label: {label!r}")
    return attr
