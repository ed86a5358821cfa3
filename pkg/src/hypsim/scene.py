"""Scene graphs: attributed objects on a bounded plane, with optional stacking.

Relations are derived from planar coordinates, never stored. A stacked object
carries its base's coordinates, so it relates to third objects exactly as its
base does, and has no planar relation to anything in its own stack.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Iterable, Optional

from .vocab import ATTRIBUTE_VALUES, ATTRIBUTES, RELATIONS

PLANE_BOUND = 3.0
MIN_SEPARATION = 0.4
RELATION_EPS = 0.05
MAX_OBJECTS = 10
MIN_GENERATED_OBJECTS = 4


@dataclass(frozen=True)
class ObjectRecord:
    id: str
    size: str
    color: str
    material: str
    shape: str
    x: float
    y: float
    on_base: Optional[str] = None

    def attr(self, name: str) -> str:
        return getattr(self, name)

    @property
    def attributes(self) -> tuple[str, str, str, str]:
        return (self.size, self.color, self.material, self.shape)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "size": self.size,
            "color": self.color,
            "material": self.material,
            "shape": self.shape,
            "x": self.x,
            "y": self.y,
            "on_base": self.on_base,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ObjectRecord":
        try:
            return cls(
                id=str(d["id"]),
                size=d["size"],
                color=d["color"],
                material=d["material"],
                shape=d["shape"],
                x=float(d["x"]),
                y=float(d["y"]),
                on_base=d.get("on_base"),
            )
        except KeyError as exc:
            raise ValueError(f"object record missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Scene:
    objects: tuple[ObjectRecord, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.objects, tuple):
            object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.objects)

    def get(self, oid: str) -> ObjectRecord:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def index(self) -> dict[str, ObjectRecord]:
        return {o.id: o for o in self.objects}

    def with_objects(self, objects: Iterable[ObjectRecord]) -> "Scene":
        return replace(self, objects=tuple(objects))

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scene":
        if not isinstance(d, dict) or "objects" not in d:
            raise ValueError("scene must be an object with an 'objects' list")
        return cls(
            objects=tuple(ObjectRecord.from_dict(o) for o in d["objects"]),
            seed=int(d.get("seed", 0)),
        )


RelationMap = dict[str, dict[str, frozenset[str]]]


def stack_root(index: dict[str, ObjectRecord], oid: str) -> str:
    """Follow on_base links down to the grounded object. Cycles stop at the repeat."""
    seen = {oid}
    cur = index[oid]
    while cur.on_base is not None and cur.on_base in index and cur.on_base not in seen:
        seen.add(cur.on_base)
        cur = index[cur.on_base]
    return cur.id


def derive_relations(scene: Scene) -> RelationMap:
    """Map each object id to {relation label: ids standing in that relation to it}.

    ``b in rel[a]["right"]`` reads "b is to the right of a".
    """
    index = scene.index()
    roots = {o.id: stack_root(index, o.id) for o in scene.objects}
    rel: RelationMap = {}
    for a in scene.objects:
        found: dict[str, set[str]] = {r: set() for r in RELATIONS}
        for b in scene.objects:
            if b.id == a.id:
                continue
            if b.on_base == a.id:
                found["on"].add(b.id)
            if a.on_base == b.id:
                found["below"].add(b.id)
            if roots[a.id] == roots[b.id]:
                continue
            if b.x > a.x + RELATION_EPS:
                found["right"].add(b.id)
            elif b.x < a.x - RELATION_EPS:
                found["left"].add(b.id)
            if b.y > a.y + RELATION_EPS:
                found["behind"].add(b.id)
            elif b.y < a.y - RELATION_EPS:
                found["front"].add(b.id)
        rel[a.id] = {r: frozenset(s) for r, s in found.items()}
    return rel


@dataclass(frozen=True)
class Violation:
    kind: str
    ids: tuple[str, ...]
    message: str


def validate_scene(scene: Scene, min_objects: int = 0) -> list[Violation]:
    """Return every violated scene invariant; an empty list means the scene is valid.

    ``min_objects`` is 0 for executor states and 4 for freshly generated scenes.
    """
    out: list[Violation] = []
    n = len(scene.objects)
    if n > MAX_OBJECTS or n < min_objects:
        out.append(Violation("count", (), f"{n} objects outside [{min_objects}, {MAX_OBJECTS}]"))

    seen: dict[str, int] = {}
    for o in scene.objects:
        seen[o.id] = seen.get(o.id, 0) + 1
    for oid, k in seen.items():
        if k > 1:
            out.append(Violation("duplicate-id", (oid,), f"id {oid!r} used {k} times"))

    index = scene.index()
    for o in scene.objects:
        for attr in ATTRIBUTES:
            if o.attr(attr) not in ATTRIBUTE_VALUES[attr]:
                out.append(Violation("vocabulary", (o.id,), f"{attr}={o.attr(attr)!r} not in vocabulary"))
        if not (-PLANE_BOUND <= o.x <= PLANE_BOUND and -PLANE_BOUND <= o.y <= PLANE_BOUND):
            out.append(Violation("bounds", (o.id,), f"position ({o.x}, {o.y}) outside plane"))
        if o.on_base is None:
            continue
        base = index.get(o.on_base)
        if base is None or o.on_base == o.id:
            out.append(Violation("dangling-base", (o.id,), f"on_base {o.on_base!r} is not another object"))
        elif (base.x, base.y) != (o.x, o.y):
            out.append(Violation("stack-position", (o.id, base.id), "stacked object must share its base's position"))

    reported: set[frozenset[str]] = set()
    for o in scene.objects:
        chain = [o.id]
        cur = o
        while cur.on_base is not None and cur.on_base in index:
            if cur.on_base in chain:
                cycle = frozenset(chain[chain.index(cur.on_base):])
                if cycle not in reported:
                    reported.add(cycle)
                    out.append(Violation("cycle", tuple(sorted(cycle)), "on_base links form a cycle"))
                break
            chain.append(cur.on_base)
            cur = index[cur.on_base]

    roots = {o.id: stack_root(index, o.id) for o in scene.objects}
    objs = scene.objects
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            if roots[a.id] == roots[b.id]:
                continue
            if (a.x - b.x) ** 2 + (a.y - b.y) ** 2 < MIN_SEPARATION ** 2:
                out.append(Violation("separation", (a.id, b.id), "objects closer than minimum separation"))
    return out


def is_separated(x: float, y: float, others: Iterable[ObjectRecord]) -> bool:
    return all((x - o.x) ** 2 + (y - o.y) ** 2 >= MIN_SEPARATION ** 2 for o in others)


def in_bounds(x: float, y: float) -> bool:
    return -PLANE_BOUND <= x <= PLANE_BOUND and -PLANE_BOUND <= y <= PLANE_BOUND
