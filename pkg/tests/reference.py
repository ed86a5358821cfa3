"""Brute-force reference semantics for question programs.

Written against plain scene dicts with its own tokenizer; shares no code with
the package. Relations are recomputed from coordinates on every call.
"""

import re

EPS = 0.05
ATTRS = ("size", "color", "material", "shape")


class RefIllPosed(Exception):
    pass


class RefOverflow(Exception):
    pass


def parse(text):
    tokens = re.findall(r"[A-Za-z0-9_]+|[(),]", text)
    pos = 0

    def node():
        nonlocal pos
        name = tokens[pos]
        pos += 1
        if pos < len(tokens) and tokens[pos] == "(":
            pos += 1
            args = []
            while tokens[pos] != ")":
                args.append(node())
                if tokens[pos] == ",":
                    pos += 1
            pos += 1
            return (name, args)
        return name

    tree = node()
    assert pos == len(tokens), "trailing tokens"
    return tree


def _ground(objs, oid):
    seen = set()
    while objs[oid]["on_base"] is not None and oid not in seen:
        seen.add(oid)
        oid = objs[oid]["on_base"]
    return oid


def _related(objs, a, r):
    """Ids b such that b stands in relation r to a."""
    out = set()
    for b in objs:
        if b == a:
            continue
        if r == "on":
            if objs[b]["on_base"] == a:
                out.add(b)
            continue
        if r == "below":
            if objs[a]["on_base"] == b:
                out.add(b)
            continue
        if _ground(objs, a) == _ground(objs, b):
            continue
        dx = objs[b]["x"] - objs[a]["x"]
        dy = objs[b]["y"] - objs[a]["y"]
        if (r == "right" and dx > EPS) or (r == "left" and dx < -EPS):
            out.add(b)
        if (r == "behind" and dy > EPS) or (r == "front" and dy < -EPS):
            out.add(b)
    return out


def evaluate(tree, objs):
    if isinstance(tree, str):
        return tree
    name, args = tree
    vals = [evaluate(a, objs) for a in args]
    if name == "scene":
        return set(objs)
    if name == "unique":
        if len(vals[0]) != 1:
            raise RefIllPosed(name)
        return next(iter(vals[0]))
    if name == "relate":
        return _related(objs, vals[0], vals[1])
    if name == "count":
        return len(vals[0])
    if name == "exist":
        return len(vals[0]) > 0
    if name == "equal_integer":
        return vals[0] == vals[1]
    if name == "less_than":
        return vals[0] < vals[1]
    if name == "greater_than":
        return vals[0] > vals[1]
    if name == "and":
        return vals[0] & vals[1]
    if name == "or":
        return vals[0] | vals[1]
    head, attr = name.split("_", 1)
    if head == "filter":
        return {i for i in vals[1] if objs[i][attr] == vals[0]}
    if head == "not":
        return {i for i in vals[1] if objs[i][attr] != vals[0]}
    if head == "query":
        return objs[vals[0]][attr]
    if head == "same":
        return {i for i in objs if i != vals[0] and objs[i][attr] == objs[vals[0]][attr]}
    if head == "equal":
        return vals[0] == vals[1]
    raise ValueError(f"reference evaluator does not know {name}")


def answer(program_text, scene_dict):
    objs = {o["id"]: o for o in scene_dict["objects"]}
    value = evaluate(parse(program_text), objs)
    if value is True:
        return "yes"
    if value is False:
        return "no"
    if isinstance(value, int):
        if value > 9:
            raise RefOverflow(value)
        return str(value)
    return value


def outcome(program_text, scene_dict):
    """Answer label, or the failure class name."""
    try:
        return answer(program_text, scene_dict)
    except RefIllPosed:
        return "ill-posed"
    except RefOverflow:
        return "overflow"
