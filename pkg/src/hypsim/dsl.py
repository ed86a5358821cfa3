"""Typed functional-program language for actions and questions.

Concrete syntax::

    call    := NAME "(" [arg ("," arg)*] ")"
    arg     := call | literal
    literal := attribute value | relation | new-object literal

A new-object literal names all four attributes joined by underscores
(``small_brown_rubber_cube``). It may appear only where a function creates
an object (``add``, ``add_rel``). Template skeletons may additionally hold
placeholder leaves such as ``<C1>`` or ``<Z>_<C>_<M>_<S>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import Iterator, Optional, Union

from .vocab import ATTRIBUTE_VALUES, ATTRIBUTES, RELATIONS, attribute_of


class ValueType(str, Enum):
    OBJSET = "objset"
    OBJECT = "object"
    INTEGER = "integer"
    BOOLEAN = "boolean"
    SIZE = "size"
    COLOR = "color"
    MATERIAL = "material"
    SHAPE = "shape"
    RELATION = "relation"

    def __str__(self) -> str:
        return self.value


VALUE_TYPES = frozenset(
    {ValueType.SIZE, ValueType.COLOR, ValueType.MATERIAL, ValueType.SHAPE, ValueType.RELATION}
)
QUESTION_ROOT_TYPES = frozenset(
    {ValueType.INTEGER, ValueType.BOOLEAN, ValueType.SIZE, ValueType.COLOR, ValueType.MATERIAL, ValueType.SHAPE}
)

SHARED, QUESTION, ACTION = "shared", "question", "action"


@dataclass(frozen=True)
class FunctionSig:
    name: str
    arg_types: tuple[ValueType, ...]
    return_type: ValueType
    dialect: str = SHARED
    # Argument positions that take a new-object literal rather than an object in the scene.
    new_object_params: frozenset[int] = field(default_factory=frozenset)

    @property
    def arity(self) -> int:
        return len(self.arg_types)


def _build_catalog() -> dict[str, FunctionSig]:
    T = ValueType
    sigs = [
        FunctionSig("scene", (), T.OBJSET),
        FunctionSig("unique", (T.OBJSET,), T.OBJECT),
        FunctionSig("relate", (T.OBJECT, T.RELATION), T.OBJSET),
        FunctionSig("count", (T.OBJSET,), T.INTEGER),
        FunctionSig("exist", (T.OBJSET,), T.BOOLEAN),
        FunctionSig("equal_integer", (T.INTEGER, T.INTEGER), T.BOOLEAN),
        FunctionSig("less_than", (T.INTEGER, T.INTEGER), T.BOOLEAN),
        FunctionSig("greater_than", (T.INTEGER, T.INTEGER), T.BOOLEAN),
        FunctionSig("and", (T.OBJSET, T.OBJSET), T.OBJSET),
        FunctionSig("or", (T.OBJSET, T.OBJSET), T.OBJSET),
        FunctionSig("add", (T.OBJSET, T.OBJECT), T.OBJSET, ACTION, frozenset({1})),
        FunctionSig("remove", (T.OBJSET,), T.OBJSET, ACTION),
        FunctionSig("add_rel", (T.OBJSET, T.OBJECT, T.OBJECT, T.RELATION), T.OBJSET, ACTION, frozenset({1})),
        FunctionSig("remove_rel", (T.OBJSET, T.OBJECT, T.OBJECT, T.RELATION), T.OBJSET, ACTION),
        FunctionSig("change_loc", (T.OBJSET, T.OBJECT, T.OBJECT, T.RELATION), T.OBJSET, ACTION),
    ]
    # filter_* and not_* take the value first: filter_color(red,scene()).
    for attr in ATTRIBUTES:
        vt = ValueType(attr)
        sigs += [
            FunctionSig(f"filter_{attr}", (vt, T.OBJSET), T.OBJSET),
            FunctionSig(f"query_{attr}", (T.OBJECT,), vt),
            FunctionSig(f"same_{attr}", (T.OBJECT,), T.OBJSET),
            FunctionSig(f"equal_{attr}", (vt, vt), T.BOOLEAN),
            FunctionSig(f"not_{attr}", (vt, T.OBJSET), T.OBJSET, QUESTION),
            FunctionSig(f"change_{attr}", (T.OBJSET, vt), T.OBJSET, ACTION),
        ]
    return {s.name: s for s in sigs}


CATALOG: dict[str, FunctionSig] = _build_catalog()


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: str
    type: ValueType


@dataclass(frozen=True)
class NewObject:
    size: str
    color: str
    material: str
    shape: str

    @property
    def text(self) -> str:
        return f"{self.size}_{self.color}_{self.material}_{self.shape}"


@dataclass(frozen=True)
class Placeholder:
    pattern: str

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(re.findall(r"<([A-Z][0-9]?)>", self.pattern))


@dataclass(frozen=True)
class Call:
    func: FunctionSig
    args: tuple["Node", ...] = ()

    @property
    def name(self) -> str:
        return self.func.name


Node = Union[Call, Literal, NewObject, Placeholder]


@dataclass(frozen=True)
class Program:
    root: Call
    dialect: str

    def __str__(self) -> str:
        return serialize_program(self)


# --- errors ----------------------------------------------------------------


class ProgramError(ValueError):
    """Base class for every parse or type failure."""

    def __init__(self, message: str, position: Optional[int] = None, path: tuple[int, ...] = ()):
        self.message = message
        self.position = position
        self.path = path
        super().__init__(message if position is None else f"{message} (at position {position})")


class ProgramSyntaxError(ProgramError):
    pass


class UnknownFunctionError(ProgramError):
    pass


class ArityError(ProgramError):
    pass


class ProgramTypeError(ProgramError):
    pass


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([(),])|([A-Za-z0-9_]+)|(\S))")
_TOKEN_PH = re.compile(r"\s*(?:([(),])|([A-Za-z0-9_<>]+)|(\S))")


@dataclass
class _Raw:
    name: str
    pos: int
    args: Optional[list["_Raw"]]  # None for a bare token


def _tokenize(text: str, placeholders: bool) -> list[tuple[str, str, int]]:
    pattern = _TOKEN_PH if placeholders else _TOKEN
    toks: list[tuple[str, str, int]] = []
    i = 0
    while i < len(text):
        m = pattern.match(text, i)
        if m is None:  # trailing whitespace
            break
        if m.end() == i:
            break
        punct, word, bad = m.groups()
        start = m.start(m.lastindex) if m.lastindex else m.start()
        if bad is not None:
            raise ProgramSyntaxError(f"unexpected character {bad!r}", start)
        if punct is not None:
            toks.append(("punct", punct, start))
        elif word is not None:
            toks.append(("word", word, start))
        i = m.end()
    return toks


def _parse_raw(text: str, placeholders: bool) -> _Raw:
    toks = _tokenize(text, placeholders)
    pos = 0

    def peek() -> Optional[tuple[str, str, int]]:
        return toks[pos] if pos < len(toks) else None

    def expr() -> _Raw:
        nonlocal pos
        tok = peek()
        if tok is None:
            raise ProgramSyntaxError("unexpected end of input", len(text))
        kind, value, at = tok
        if kind != "word":
            raise ProgramSyntaxError(f"expected a name, found {value!r}", at)
        pos += 1
        nxt = peek()
        if nxt is None or nxt[1] != "(":
            return _Raw(value, at, None)
        pos += 1
        args: list[_Raw] = []
        nxt = peek()
        if nxt is not None and nxt[1] == ")":
            pos += 1
            return _Raw(value, at, args)
        while True:
            args.append(expr())
            nxt = peek()
            if nxt is None:
                raise ProgramSyntaxError("unclosed '('", len(text))
            pos += 1
            if nxt[1] == ")":
                return _Raw(value, at, args)
            if nxt[1] != ",":
                raise ProgramSyntaxError(f"expected ',' or ')', found {nxt[1]!r}", nxt[2])

    tree = expr()
    if pos != len(toks):
        raise ProgramSyntaxError(f"trailing input {toks[pos][1]!r}", toks[pos][2])
    return tree


def literal_from_token(token: str) -> Union[Literal, NewObject]:
    """Resolve a bare token by vocabulary membership (the vocabularies are disjoint)."""
    token = token.lower()
    if token in RELATIONS:
        return Literal(token, ValueType.RELATION)
    attr = attribute_of(token)
    if attr is not None:
        return Literal(token, ValueType(attr))
    parts = token.split("_")
    if len(parts) == 4 and all(p in ATTRIBUTE_VALUES[a] for p, a in zip(parts, ATTRIBUTES)):
        return NewObject(*parts)
    raise ProgramTypeError(f"unknown literal {token!r}")


def _convert(raw: _Raw, placeholders: bool, positions: dict[tuple[int, ...], int], path: tuple[int, ...]) -> Node:
    positions[path] = raw.pos
    if raw.args is None:
        if placeholders and "<" in raw.name:
            return Placeholder(raw.name)
        try:
            return literal_from_token(raw.name)
        except ProgramTypeError as exc:
            raise ProgramTypeError(exc.message, raw.pos, path) from None
    args = tuple(_convert(a, placeholders, positions, path + (i,)) for i, a in enumerate(raw.args))
    name = raw.name.lower()
    sig = CATALOG.get(name)
    if sig is None:
        raise UnknownFunctionError(f"unknown function {raw.name!r}", raw.pos, path)
    return Call(sig, args)


def parse_node(text: str, placeholders: bool = False) -> Node:
    """Parse text into an untyped AST; type errors are left for ``type_check``."""
    return _convert(_parse_raw(text, placeholders), placeholders, {}, ())


def parse_program(text: str, dialect: Optional[str] = None, placeholders: bool = False) -> Program:
    """Parse and type-check a program.

    The dialect is inferred from the root type when not given. Errors carry the
    character position of the offending node.
    """
    positions: dict[tuple[int, ...], int] = {}
    root = _convert(_parse_raw(text, placeholders), placeholders, positions, ())
    if not isinstance(root, Call):
        raise ProgramTypeError("a program must be a function call", 0, ())
    try:
        dialect = check_dialect(root, dialect, placeholders=placeholders)
    except ProgramError as exc:
        if exc.position is None:
            exc = type(exc)(exc.message, positions.get(exc.path), exc.path)
        raise exc from None
    return Program(root, dialect)


# --- typing ----------------------------------------------------------------


def node_type(node: Node, placeholders: bool = False, _path: tuple[int, ...] = ()) -> Optional[ValueType]:
    """Return the static type of ``node``; raise on the deepest-leftmost violation.

    Placeholders type as None (a wildcard) and are only accepted when
    ``placeholders`` is set.
    """
    if isinstance(node, Literal):
        return node.type
    if isinstance(node, NewObject):
        return ValueType.OBJECT
    if isinstance(node, Placeholder):
        if not placeholders:
            raise ProgramTypeError(f"unbound placeholder {node.pattern}", path=_path)
        return None
    if not isinstance(node, Call):
        raise ProgramTypeError(f"not a program node: {node!r}", path=_path)
    arg_types = [node_type(a, placeholders, _path + (i,)) for i, a in enumerate(node.args)]
    sig = node.func
    if len(node.args) != sig.arity:
        raise ArityError(f"{sig.name} takes {sig.arity} argument(s), got {len(node.args)}", path=_path)
    for i, (arg, got, want) in enumerate(zip(node.args, arg_types, sig.arg_types)):
        where = _path + (i,)
        if i in sig.new_object_params:
            if not isinstance(arg, (NewObject, Placeholder)):
                raise ProgramTypeError(f"{sig.name} argument {i + 1} must be a new-object literal", path=where)
            continue
        if isinstance(arg, NewObject):
            raise ProgramTypeError(f"new-object literal not allowed as {sig.name} argument {i + 1}", path=where)
        if isinstance(arg, Literal) and want not in VALUE_TYPES:
            raise ProgramTypeError(f"{sig.name} argument {i + 1} expects {want}, got literal {arg.value!r}", path=where)
        if got is not None and got != want:
            raise ProgramTypeError(f"{sig.name} argument {i + 1} expects {want}, got {got}", path=where)
    return sig.return_type


def iter_calls(node: Node) -> Iterator[Call]:
    if isinstance(node, Call):
        yield node
        for a in node.args:
            yield from iter_calls(a)


def check_dialect(root: Call, dialect: Optional[str] = None, placeholders: bool = False) -> str:
    rtype = node_type(root, placeholders)
    dialects = {c.func.dialect for c in iter_calls(root)}
    if dialect is None:
        dialect = ACTION if (ACTION in dialects or rtype == ValueType.OBJSET) else QUESTION
    if dialect == QUESTION:
        if rtype not in QUESTION_ROOT_TYPES:
            raise ProgramTypeError(f"question program must return an answer type, not {rtype}")
        if ACTION in dialects:
            raise ProgramTypeError("action function inside a question program")
    elif dialect == ACTION:
        if rtype != ValueType.OBJSET:
            raise ProgramTypeError(f"action program must return objset, not {rtype}")
        if ACTION not in dialects:
            raise ProgramTypeError("action program contains no action function")
        if QUESTION in dialects:
            raise ProgramTypeError("question-only function inside an action program")
    else:
        raise ValueError(f"unknown dialect {dialect!r}")
    return dialect


def type_check(program: Program) -> ValueType:
    """Return the root type of a well-typed program, raising the first violation."""
    check_dialect(program.root, program.dialect)
    return program.root.func.return_type


# --- serialization ---------------------------------------------------------


def serialize_node(node: Node) -> str:
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, NewObject):
        return node.text
    if isinstance(node, Placeholder):
        return node.pattern
    return f"{node.func.name}({','.join(serialize_node(a) for a in node.args)})"


def serialize_program(program: Program) -> str:
    return serialize_node(program.root)


def call(name: str, *args: Node) -> Call:
    """Build a call node by function name (no type checking)."""
    return Call(CATALOG[name], tuple(args))
