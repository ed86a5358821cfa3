"""Semantics of the function catalog.

Question programs evaluate to one of the 27 answer labels. Action programs
thread a working copy of the scene through their calls (arguments evaluate
left to right) and yield a new Scene; the input is never touched.
"""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

from .dsl import ACTION, QUESTION, Literal, NewObject, Node, Placeholder, Program, serialize_program
from .rng import derive_rng
from .scene import (
    MAX_OBJECTS,
    PLANE_BOUND,
    ObjectRecord,
    Scene,
    derive_relations,
    in_bounds,
    is_separated,
)

MOVE_DISPLACEMENT = 1.0
NUDGE_STEP = 0.1
PLACEMENT_MARGIN = 0.2
PLACEMENT_ATTEMPTS = 500
MAX_INTEGER_ANSWER = 9

Value = Union[frozenset, str, int, bool, NewObject]


class ExecutionError(Exception):
    """Raised when a program cannot be evaluated on a scene.

    ``step`` is set to the failing program's index by
    ``execute_action_sequence``.
    """

    step: Optional[int] = None


class IllPosedError(ExecutionError):
    """A referent did not resolve to exactly one object."""


class AnswerOverflowError(ExecutionError):
    """An integer answer fell outside 0-9."""


class PlacementError(ExecutionError):
    """No in-bounds position satisfies the requested relation."""


class CapacityError(ExecutionError):
    """The scene would exceed the object limit."""


@lru_cache(maxsize=256)
def _cached_relations(scene: Scene):
    return derive_relations(scene)


def _round(v: float) -> float:
    return round(v, 3)


class _Evaluator:
    def __init__(self, scene: Scene, program_text: str = "", allow_actions: bool = False):
        self.objects: dict[str, ObjectRecord] = {o.id: o for o in scene.objects}
        self.seed = scene.seed
        self.program_text = program_text
        self.allow_actions = allow_actions
        self._relations = None
        self._placements = 0

    # -- state helpers

    def scene(self) -> Scene:
        return Scene(tuple(self.objects.values()), self.seed)

    def relations(self):
        if self._relations is None:
            self._relations = _cached_relations(self.scene())
        return self._relations

    def _dirty(self) -> None:
        self._relations = None

    def _obj(self, oid: str) -> ObjectRecord:
        try:
            return self.objects[oid]
        except KeyError:
            raise IllPosedError(f"object {oid!r} is not in the scene") from None

    def _set(self, ids: Iterable[str]) -> frozenset:
        return frozenset(i for i in ids if i in self.objects)

    def _stacked_on(self, oid: str) -> list[str]:
        """Ids resting (directly or transitively) on ``oid``."""
        out: list[str] = []
        frontier = [oid]
        while frontier:
            base = frontier.pop()
            for o in self.objects.values():
                if o.on_base == base and o.id not in out and o.id != oid:
                    out.append(o.id)
                    frontier.append(o.id)
        return out

    def _next_id(self) -> str:
        used = set(self.objects)
        k = 1 + max((int(m.group(1)) for i in used if (m := re.fullmatch(r"o(\d+)", i))), default=-1)
        while f"o{k}" in used:
            k += 1
        return f"o{k}"

    # -- evaluation

    def eval(self, node: Node) -> Value:
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, NewObject):
            return node
        if isinstance(node, Placeholder):
            raise ExecutionError(f"unbound placeholder {node.pattern}")
        name = node.func.name
        if node.func.dialect == ACTION and not self.allow_actions:
            raise ExecutionError(f"action function {name} in a question program")
        args = [self.eval(a) for a in node.args]
        handler = getattr(self, f"_f_{name}", None)
        if handler is not None:
            return handler(*args)
        prefix, _, attr = name.partition("_")
        return getattr(self, f"_g_{prefix}")(attr, *args)

    def _f_scene(self) -> frozenset:
        return frozenset(self.objects)

    def _f_unique(self, s: frozenset) -> str:
        s = self._set(s)
        if len(s) != 1:
            raise IllPosedError(f"unique() applied to a set of {len(s)} objects")
        return next(iter(s))

    def _f_relate(self, o: str, r: str) -> frozenset:
        self._obj(o)
        return self.relations()[o][r]

    def _f_count(self, s: frozenset) -> int:
        return len(self._set(s))

    def _f_exist(self, s: frozenset) -> bool:
        return bool(self._set(s))

    def _f_equal_integer(self, a: int, b: int) -> bool:
        return a == b

    def _f_less_than(self, a: int, b: int) -> bool:
        return a < b

    def _f_greater_than(self, a: int, b: int) -> bool:
        return a > b

    def _f_and(self, a: frozenset, b: frozenset) -> frozenset:
        return self._set(a & b)

    def _f_or(self, a: frozenset, b: frozenset) -> frozenset:
        return self._set(a | b)

    def _g_filter(self, attr: str, v: str, s: frozenset) -> frozenset:
        return frozenset(i for i in self._set(s) if self.objects[i].attr(attr) == v)

    def _g_not(self, attr: str, v: str, s: frozenset) -> frozenset:
        return frozenset(i for i in self._set(s) if self.objects[i].attr(attr) != v)

    def _g_query(self, attr: str, o: str) -> str:
        return self._obj(o).attr(attr)

    def _g_same(self, attr: str, o: str) -> frozenset:
        v = self._obj(o).attr(attr)
        return frozenset(i for i, rec in self.objects.items() if i != o and rec.attr(attr) == v)

    def _g_equal(self, attr: str, a: str, b: str) -> bool:
        return a == b

    # -- actions

    def _rng(self):
        self._placements += 1
        return derive_rng(self.seed, self.program_text, self._placements)

    def _grounded_others(self, exclude: Iterable[str]) -> list[ObjectRecord]:
        skip = set(exclude)
        return [o for o in self.objects.values() if o.id not in skip]

    def _insert(self, new: NewObject, x: float, y: float, on_base: Optional[str]) -> str:
        if len(self.objects) >= MAX_OBJECTS:
            raise CapacityError(f"scene already holds {MAX_OBJECTS} objects")
        nid = self._next_id()
        self.objects[nid] = ObjectRecord(nid, new.size, new.color, new.material, new.shape, x, y, on_base)
        self._dirty()
        return nid

    def _sample_position(self, region: tuple[float, float, float, float]) -> tuple[float, float]:
        x0, x1, y0, y1 = region
        if x0 > x1 or y0 > y1:
            raise PlacementError("no room on the requested side")
        rng = self._rng()
        others = list(self.objects.values())
        for _ in range(PLACEMENT_ATTEMPTS):
            x, y = _round(rng.uniform(x0, x1)), _round(rng.uniform(y0, y1))
            if x0 <= x <= x1 and y0 <= y <= y1 and is_separated(x, y, others):
                return x, y
        raise PlacementError("no free position satisfies the requested relation")

    def _region(self, ref: ObjectRecord, r: str) -> tuple[float, float, float, float]:
        b, m = PLANE_BOUND, PLACEMENT_MARGIN
        return {
            "right": (ref.x + m, b, -b, b),
            "left": (-b, ref.x - m, -b, b),
            "behind": (-b, b, ref.y + m, b),
            "front": (-b, b, -b, ref.y - m),
        }[r]

    def _f_add(self, s: frozenset, new: NewObject) -> frozenset:
        if len(self.objects) >= MAX_OBJECTS:
            raise CapacityError(f"scene already holds {MAX_OBJECTS} objects")
        x, y = self._sample_position((-PLANE_BOUND, PLANE_BOUND, -PLANE_BOUND, PLANE_BOUND))
        return self._set(s) | {self._insert(new, x, y, None)}

    def _f_add_rel(self, s: frozenset, new: NewObject, ref_id: str, r: str) -> frozenset:
        ref = self._obj(ref_id)
        if len(self.objects) >= MAX_OBJECTS:
            raise CapacityError(f"scene already holds {MAX_OBJECTS} objects")
        if r == "on":
            nid = self._insert(new, ref.x, ref.y, ref.id)
        elif r == "below":
            raise PlacementError("cannot add an object below an existing one")
        else:
            x, y = self._sample_position(self._region(ref, r))
            nid = self._insert(new, x, y, None)
        return self._set(s) | {nid}

    def _delete(self, ids: Iterable[str]) -> None:
        gone = set(ids) & set(self.objects)
        if not gone:
            return
        for oid, o in list(self.objects.items()):
            if oid in gone or o.on_base not in gone:
                continue
            base = o.on_base
            while base in gone:
                base = self.objects[base].on_base
            self.objects[oid] = ObjectRecord(**{**o.to_dict(), "on_base": base})
        for oid in gone:
            del self.objects[oid]
        self._dirty()

    def _f_remove(self, s: frozenset) -> frozenset:
        self._delete(self._set(s))
        return frozenset(self.objects)

    def _f_remove_rel(self, s: frozenset, o: str, ref: str, r: str) -> frozenset:
        self._obj(ref)
        if o not in self._set(s) or o not in self.relations()[ref][r]:
            raise IllPosedError(f"object {o!r} is not {r} of {ref!r}")
        self._delete([o])
        return self._set(s)

    def _move_block(self, oid: str, x: float, y: float, on_base: Optional[str]) -> None:
        o = self.objects[oid]
        self.objects[oid] = ObjectRecord(**{**o.to_dict(), "x": x, "y": y, "on_base": on_base})
        for up in self._stacked_on(oid):
            u = self.objects[up]
            self.objects[up] = ObjectRecord(**{**u.to_dict(), "x": x, "y": y})
        self._dirty()

    def _f_change_loc(self, s: frozenset, o_id: str, ref_id: str, r: str) -> frozenset:
        self._obj(o_id)
        ref = self._obj(ref_id)
        block = {o_id, *self._stacked_on(o_id)}
        if ref_id in block:
            raise PlacementError("an object cannot be moved relative to itself or its own stack")
        if r == "on":
            self._move_block(o_id, ref.x, ref.y, ref_id)
            return self._set(s)
        if r == "below":
            raise PlacementError("cannot move an object below another")
        axis, sign = {"right": (0, 1), "left": (0, -1), "behind": (1, 1), "front": (1, -1)}[r]
        others = self._grounded_others(block)
        k = 0
        while True:
            shift = sign * (MOVE_DISPLACEMENT + NUDGE_STEP * k)
            x = _round(ref.x + shift) if axis == 0 else ref.x
            y = _round(ref.y + shift) if axis == 1 else ref.y
            if not in_bounds(x, y):
                raise PlacementError(f"no in-bounds position {r} of {ref_id!r}")
            if is_separated(x, y, others):
                break
            k += 1
        self._move_block(o_id, x, y, None)
        return self._set(s)

    def _g_change(self, attr: str, s: frozenset, v: str) -> frozenset:
        s = self._set(s)
        for oid in s:
            o = self.objects[oid]
            self.objects[oid] = ObjectRecord(**{**o.to_dict(), attr: v})
        if s:
            self._dirty()
        return s


def to_answer(value: Value) -> str:
    """Map a runtime value onto its answer label."""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        if not 0 <= value <= MAX_INTEGER_ANSWER:
            raise AnswerOverflowError(f"integer answer {value} outside 0-{MAX_INTEGER_ANSWER}")
        return str(value)
    if isinstance(value, str):
        return value
    raise ExecutionError(f"value {value!r} is not an answer")


def evaluate_node(node: Node, scene: Scene) -> Value:
    """Evaluate a side-effect-free subtree against a scene."""
    return _Evaluator(scene).eval(node)


def execute_question(program: Program, scene: Scene) -> str:
    if program.dialect != QUESTION:
        raise ValueError("execute_question needs a question program")
    return to_answer(_Evaluator(scene).eval(program.root))


def execute_action(program: Program, scene: Scene) -> Scene:
    if program.dialect != ACTION:
        raise ValueError("execute_action needs an action program")
    ev = _Evaluator(scene, serialize_program(program), allow_actions=True)
    ev.eval(program.root)
    return ev.scene()


def execute_action_sequence(programs: Sequence[Program], scene: Scene) -> Scene:
    for step, program in enumerate(programs):
        try:
            scene = execute_action(program, scene)
        except ExecutionError as exc:
            exc.step = step
            raise
    return scene


__all__ = [
    "AnswerOverflowError",
    "CapacityError",
    "ExecutionError",
    "IllPosedError",
    "PlacementError",
    "evaluate_node",
    "execute_action",
    "execute_action_sequence",
    "execute_question",
    "to_answer",
]
