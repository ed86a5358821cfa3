"""Surface text: templates paired with program skeletons, referring expressions,
synonym substitution and templated scene descriptions.

A template surface uses placeholders ``<L>`` or ``<Lk>`` where ``L`` is one of
A (attribute name), Z, C, M, S (size, color, material, shape), V (a value),
R (a planar relation) and ``k`` is an optional digit naming the object slot.
The skeleton is a program with the same placeholders as leaves; ``<A>`` may also
appear inside function names (``query_<A>``) and is substituted textually.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from random import Random
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

from .dsl import (
    ACTION,
    QUESTION,
    Call,
    Literal,
    NewObject,
    Node,
    Placeholder,
    Program,
    ProgramError,
    ValueType,
    call,
    check_dialect,
    iter_calls,
    literal_from_token,
    parse_node,
)
from .executor import ExecutionError, evaluate_node
from .scene import ObjectRecord, Scene, derive_relations
from .vocab import ATTRIBUTE_VALUES, ATTRIBUTES, PLANAR_RELATIONS, attribute_of

log = logging.getLogger(__name__)

ACTION_FAMILIES = ("add", "remove", "change", "move_in_plane", "move_on")
QUESTION_FAMILIES = ("count", "exist", "compare_integer", "query_attr", "compare_attr")
LOGIC_KINDS = ("and", "or", "not")

LETTER_ATTR = {"Z": "size", "C": "color", "M": "material", "S": "shape"}
ATTR_LETTER = {v: k for k, v in LETTER_ATTR.items()}
REF_LETTERS = ("Z", "C", "M", "S")

RELATION_PHRASES = {
    "left": "to the left of",
    "right": "to the right of",
    "front": "in front of",
    "behind": "behind",
}
GENERIC_NOUN = "object"

_PLACEHOLDER = re.compile(r"<([A-Z])(\d?)>")


class TemplateError(ValueError):
    """A template is malformed or a binding set does not fit it."""


def size_word(value: str) -> str:
    return "large" if value == "big" else value


def value_word(value: str) -> str:
    return size_word(value) if attribute_of(value) == "size" else value


# --- templates ---------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    family: str
    hop: int
    surface: str
    program: str
    attrs: tuple[str, ...] = ATTRIBUTES
    singular: tuple[str, ...] = ()
    minimal: bool = False
    inherit: Optional[tuple[str, str]] = None  # (placeholder letter, donor slot)
    logic: Optional[str] = None

    @property
    def dialect(self) -> str:
        return ACTION if self.family in ACTION_FAMILIES else QUESTION

    @property
    def uses_attr(self) -> bool:
        return "<A>" in self.surface or "<A>" in self.program

    def skeleton(self, attr: Optional[str] = None) -> Call:
        return _skeleton(self.program, attr if self.uses_attr else None)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family, "hop": self.hop, "surface": self.surface, "program": self.program}
        if self.attrs != ATTRIBUTES:
            d["attrs"] = list(self.attrs)
        if self.singular:
            d["singular"] = list(self.singular)
        if self.minimal:
            d["minimal"] = True
        if self.inherit:
            d["inherit"] = {"placeholder": self.inherit[0], "from": self.inherit[1]}
        if self.logic:
            d["logic"] = self.logic
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Template":
        try:
            inherit = d.get("inherit")
            t = cls(
                family=d["family"],
                hop=int(d["hop"]),
                surface=d["surface"],
                program=d["program"],
                attrs=tuple(d.get("attrs", ATTRIBUTES)),
                singular=tuple(d.get("singular", ())),
                minimal=bool(d.get("minimal", False)),
                inherit=(inherit["placeholder"], inherit["from"]) if inherit else None,
                logic=d.get("logic"),
            )
        except (KeyError, TypeError) as exc:
            raise TemplateError(f"template entry {dict(d)!r} is malformed: {exc}") from None
        validate_template(t)
        return t


@lru_cache(maxsize=None)
def _skeleton(program: str, attr: Optional[str]) -> Call:
    text = program.replace("<A>", attr) if attr else program
    root = parse_node(text, placeholders=True)
    if not isinstance(root, Call):
        raise TemplateError(f"skeleton {program!r} is not a call")
    return root


def placeholder_names(text: str) -> set[str]:
    return {a + b for a, b in _PLACEHOLDER.findall(text)}


def validate_template(t: Template) -> None:
    if t.family not in ACTION_FAMILIES + QUESTION_FAMILIES:
        raise TemplateError(f"unknown template family {t.family!r}")
    if t.hop not in (1, 2):
        raise TemplateError(f"hop must be 1 or 2, got {t.hop}")
    if t.logic is not None and t.logic not in LOGIC_KINDS:
        raise TemplateError(f"unknown logic kind {t.logic!r}")
    if not set(t.attrs) <= set(ATTRIBUTES) or not t.attrs:
        raise TemplateError(f"bad attribute list {t.attrs!r}")
    surface = placeholder_names(t.surface)
    program = placeholder_names(t.program)
    if t.inherit:
        letter, donor = t.inherit
        donor_names = {L + donor for L in REF_LETTERS}
        if not donor_names <= surface or letter not in program or letter in surface:
            raise TemplateError(f"inheritance template {t.surface!r} does not name its donor and target")
        surface = surface - donor_names
        program = program - {letter}
    if surface != program:
        raise TemplateError(f"placeholders differ between surface and program: {sorted(surface ^ program)}")
    for attr in (t.attrs if t.uses_attr else (None,)):
        try:
            check_dialect(t.skeleton(attr), t.dialect, placeholders=True)
        except ProgramError as exc:
            raise TemplateError(f"skeleton {t.program!r} does not type-check: {exc}") from None


def load_templates(path: Union[str, Path, None] = None) -> tuple[Template, ...]:
    """Load templates from JSON; the packaged inventory when ``path`` is None."""
    if path is None:
        raw = json.loads(resources.files("hypsim").joinpath("data/templates.json").read_text("utf-8"))
    else:
        raw = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(raw, list) or not raw:
        raise TemplateError("template file must hold a non-empty list")
    return tuple(Template.from_dict(d) for d in raw)


# --- skeleton analysis ---------------------------------------------------------

Path_ = tuple[int, ...]


@dataclass
class Slot:
    key: str
    kind: str  # unique | singular | set | new
    letters: tuple[str, ...] = ()
    base: Optional[Path_] = None  # node the filter chain narrows
    scope: Optional[Path_] = None  # subtree that must resolve to the target
    head: Optional[Path_] = None  # outermost filter of the chain
    deps: set[str] = field(default_factory=set)

    @property
    def free(self) -> bool:
        return set(self.letters) == set(REF_LETTERS)

    def names(self) -> list[str]:
        return [L + self.key for L in self.letters]


@dataclass
class ValueSlot:
    name: str
    attr: str
    context: str  # change | not
    path: Path_
    target: Optional[Path_] = None  # objset argument of change_X


@dataclass
class Analysis:
    slots: dict[str, Slot]
    values: dict[str, ValueSlot]
    relations: list[str]
    order: list[str]


def _at(root: Node, path: Path_) -> Node:
    node = root
    for i in path:
        node = node.args[i]  # type: ignore[union-attr]
    return node


def _link(node: Node) -> Optional[tuple[str, str]]:
    """(letter, slot key) if node is ``filter_X(<Lk>, ...)`` with L matching X."""
    if not isinstance(node, Call) or not node.name.startswith("filter_"):
        return None
    arg = node.args[0]
    if not isinstance(arg, Placeholder) or len(arg.names) != 1:
        return None
    name = arg.names[0]
    if LETTER_ATTR.get(name[0]) != node.name[len("filter_"):]:
        return None
    return name[0], name[1:]


def _names_in(node: Node) -> set[str]:
    if isinstance(node, Placeholder):
        return set(node.names)
    if isinstance(node, Call):
        out: set[str] = set()
        for a in node.args:
            out |= _names_in(a)
        return out
    return set()


def _slot_keys(names: Iterable[str]) -> set[str]:
    return {n[1:] for n in names if n[0] in REF_LETTERS}


_PASS_THROUGH = ("and", "or")


@lru_cache(maxsize=None)
def _analyse_cached(program: str, attr: Optional[str], singular: tuple[str, ...]) -> Analysis:
    return _analyse(_skeleton(program, attr), singular)


def _analyse(root: Call, singular: Sequence[str]) -> Analysis:
    slots: dict[str, Slot] = {}
    values: dict[str, ValueSlot] = {}
    relations: list[str] = []
    heads: dict[str, Call] = {}

    def visit(node: Node, path: Path_, ancestors: list[tuple[Call, Path_]]) -> None:
        if isinstance(node, Placeholder):
            parent, ppath = ancestors[-1]
            idx = path[-1]
            sig = parent.func
            if idx in sig.new_object_params:
                names = node.names
                key = names[0][1:]
                slots[key] = Slot(key, "new", tuple(n[0] for n in names))
            elif sig.arg_types[idx] == ValueType.RELATION:
                if node.names[0] not in relations:
                    relations.append(node.names[0])
            elif parent.name.startswith("change_"):
                values[node.names[0]] = ValueSlot(node.names[0], parent.name[7:], "change", path, ppath + (0,))
            elif parent.name.startswith("not_"):
                values[node.names[0]] = ValueSlot(node.names[0], parent.name[4:], "not", path)
            return
        if not isinstance(node, Call):
            return
        link = _link(node)
        if link is not None and not (ancestors and _link(ancestors[-1][0]) and _link(ancestors[-1][0])[1] == link[1]):
            key = link[1]
            if key in slots:
                if heads[key] != node:
                    raise TemplateError(f"slot {key!r} appears in two different filter chains")
                return
            heads[key] = node
            letters = []
            cur, cpath = node, path
            while (lk := _link(cur)) is not None and lk[1] == key:
                letters.append(lk[0])
                cur, cpath = cur.args[1], cpath + (1,)
            kind, scope = "set", None
            child = path
            for anc, apath in reversed(ancestors):
                if anc.name == "unique":
                    kind, scope = "unique", child
                    break
                if anc.name in _PASS_THROUGH or anc.name.startswith(("not_", "filter_")):
                    child = apath
                    continue
                break
            if kind == "set" and key in singular:
                kind, scope = "singular", path
            slots[key] = Slot(key, kind, tuple(letters), cpath, scope, path)
        for i, a in enumerate(node.args):
            visit(a, path + (i,), ancestors + [(node, path)])

    visit(root, (), [])
    for slot in slots.values():
        sub = slot.scope if slot.scope is not None else slot.base
        if sub is not None:
            slot.deps = (_slot_keys(_names_in(_at(root, sub))) & set(slots)) - {slot.key}
    order: list[str] = []
    pending = dict(slots)
    while pending:
        ready = sorted(k for k, s in pending.items() if s.deps <= set(order))
        if not ready:
            raise TemplateError("cyclic slot dependencies")
        for k in ready:
            order.append(k)
            del pending[k]
    return Analysis(slots, values, relations, order)


def analyse(template: Template, attr: Optional[str] = None) -> Analysis:
    return _analyse_cached(template.program, attr if template.uses_attr else None, template.singular)


# --- substitution ----------------------------------------------------------------


def substitute(node: Node, bindings: Mapping[str, Optional[str]]) -> Node:
    """Replace placeholder leaves by literals; filter links bound to None are dropped."""
    if isinstance(node, Placeholder):
        names = node.names
        missing = [n for n in names if bindings.get(n) is None]
        if missing:
            raise TemplateError(f"placeholder(s) {missing} are unbound")
        if len(names) == 1:
            try:
                return literal_from_token(bindings[names[0]])  # type: ignore[arg-type]
            except ProgramError as exc:
                raise TemplateError(str(exc)) from None
        values = {LETTER_ATTR[n[0]]: bindings[n] for n in names}
        return NewObject(values["size"], values["color"], values["material"], values["shape"])
    if not isinstance(node, Call):
        return node
    link = _link(node)
    if link is not None:
        name = link[0] + link[1]
        if name in bindings and bindings[name] is None:
            return substitute(node.args[1], bindings)
    return Call(node.func, tuple(substitute(a, bindings) for a in node.args))


# --- referring expressions -------------------------------------------------------


@dataclass(frozen=True)
class ReferringExpression:
    object_id: str
    text: str
    attributes: tuple[str, ...]
    values: tuple[str, ...]

    def bindings(self, key: str = "") -> dict[str, Optional[str]]:
        chosen = dict(zip(self.attributes, self.values))
        return {ATTR_LETTER[a] + key: chosen.get(a) for a in ATTRIBUTES}


def describe(values: Mapping[str, Optional[str]], noun: str = GENERIC_NOUN) -> str:
    """Noun phrase for a partial attribute assignment, e.g. 'small gray object'."""
    words = [value_word(values[a]) for a in ("size", "color", "material") if values.get(a)]
    words.append(values.get("shape") or noun)
    return " ".join(words)


def filter_chain(values: Mapping[str, Optional[str]], base: Optional[Node] = None) -> Node:
    """filter_size(filter_color(filter_material(filter_shape(base)))) skipping unset attributes."""
    node: Node = base if base is not None else call("scene")
    for attr in reversed(ATTRIBUTES):
        v = values.get(attr)
        if v:
            node = call(f"filter_{attr}", Literal(v, ValueType(attr)), node)
    return node


def referring_expressions(scene: Scene, oid: str, base: Optional[Iterable[str]] = None) -> list[ReferringExpression]:
    """Every attribute subset that singles out ``oid`` within ``base`` (default: the scene).

    Subsets are enumerated shortest first and, within a length, in canonical
    attribute order. A missing shape is voiced by the generic noun.
    """
    target = scene.get(oid)
    pool = [o for o in scene.objects if base is None or o.id in set(base)]
    out = []
    for k in range(len(ATTRIBUTES) + 1):
        for subset in itertools.combinations(ATTRIBUTES, k):
            hits = [o for o in pool if all(o.attr(a) == target.attr(a) for a in subset)]
            if len(hits) == 1 and hits[0].id == oid:
                values = tuple(target.attr(a) for a in subset)
                out.append(ReferringExpression(oid, describe(dict(zip(subset, values))), subset, values))
    return out


# --- synonyms ----------------------------------------------------------------------


class Synonyms:
    """Phrase-level synonym classes; every member of a class may replace any other."""

    def __init__(self, mapping: Mapping[str, Sequence[str]]):
        self.classes: dict[str, tuple[str, ...]] = {}
        for key, variants in mapping.items():
            members = tuple(dict.fromkeys([key.lower(), *(v.lower() for v in variants)]))
            for m in members:
                self.classes[m] = members
        phrases = sorted(self.classes, key=len, reverse=True)
        self.pattern = re.compile(
            r"(?<![A-Za-z])(" + "|".join(re.escape(p) for p in phrases) + r")(?![A-Za-z])", re.IGNORECASE
        ) if phrases else None

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "Synonyms":
        if path is None:
            text = resources.files("hypsim").joinpath("data/synonyms.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("synonym file must hold an object {token: [variants]}")
        return cls(data)

    def apply(self, text: str, rng: Random, p: float = 0.5) -> str:
        if not text or self.pattern is None:
            return text

        def swap(m: re.Match) -> str:
            word = m.group(0)
            if rng.random() >= p:
                return word
            others = [w for w in self.classes[word.lower()] if w != word.lower()]
            new = rng.choice(others)
            return new[0].upper() + new[1:] if word[0].isupper() else new

        return _fix_articles(self.pattern.sub(swap, text))


_DEFAULT_SYNONYMS: Optional[Synonyms] = None


def default_synonyms() -> Synonyms:
    global _DEFAULT_SYNONYMS
    if _DEFAULT_SYNONYMS is None:
        _DEFAULT_SYNONYMS = Synonyms.load()
    return _DEFAULT_SYNONYMS


def apply_synonyms(text: str, rng: Random, p: float = 0.5, synonyms: Optional[Synonyms] = None) -> str:
    return (synonyms or default_synonyms()).apply(text, rng, p)


# --- rendering -----------------------------------------------------------------------


def _fix_articles(text: str) -> str:
    def fix(m: re.Match) -> str:
        art, word = m.group(1), m.group(2)
        want = "an" if word[0].lower() in "aeiou" else "a"
        if art[0].isupper():
            want = want.capitalize()
        return f"{want} {word}"

    return re.sub(r"\b([Aa]n?) ([A-Za-z]+)", fix, text)


def render_surface(surface: str, bindings: Mapping[str, Optional[str]]) -> str:
    def fill(m: re.Match) -> str:
        letter, name = m.group(1), m.group(1) + m.group(2)
        value = bindings.get(name)
        if letter == "A":
            return value or ""
        if letter == "R":
            return RELATION_PHRASES.get(value, value or "")
        if letter == "S":
            return value or GENERIC_NOUN
        return value_word(value) if value else ""

    text = _PLACEHOLDER.sub(fill, surface)
    text = re.sub(r"\s+", " ", text).strip()
    text = re.sub(r" ([.,;?!])", r"\1", text)
    text = _fix_articles(text)
    return text[:1].upper() + text[1:]


Bindings = Mapping[str, Union[str, None, ReferringExpression]]


def _expand(bindings: Bindings) -> dict[str, Optional[str]]:
    """Referring expressions bound under a slot key ('' or a digit) expand to Z/C/M/S."""
    flat: dict[str, Optional[str]] = {}
    for k, v in bindings.items():
        if isinstance(v, ReferringExpression):
            if k not in ("",) and not k.isdigit():
                raise TemplateError(f"referring expression bound to {k!r}; use a slot key such as '' or '1'")
            flat.update(v.bindings(k))
    for k, v in bindings.items():
        if not isinstance(v, ReferringExpression):
            flat[k] = v
    return flat


def instantiate(
    template: Template,
    bindings: Bindings,
    rng: Random,
    *,
    synonyms: Optional[Synonyms] = None,
    p: float = 0.5,
    paraphrase: Optional[Callable[[str], str]] = None,
) -> tuple[str, Program]:
    """Fill a template: returns (surface text, type-checked program).

    Filter placeholders bound to None drop their filter; every other placeholder
    must be bound. Synonyms are applied to the text only.
    """
    flat = _expand(bindings)
    attr = flat.get("A")
    if template.uses_attr:
        if attr not in template.attrs:
            raise TemplateError(f"<A> must be one of {template.attrs}, got {attr!r}")
    needed = placeholder_names(template.surface) | placeholder_names(template.program)
    missing = sorted(n for n in needed if n not in flat)
    if missing:
        raise TemplateError(f"bindings missing for {missing}")
    root = substitute(template.skeleton(attr), flat)
    try:
        dialect = check_dialect(root, template.dialect)  # type: ignore[arg-type]
    except ProgramError as exc:
        raise TemplateError(f"bindings do not type-check: {exc}") from None
    text = render_surface(template.surface, flat)
    if p > 0:
        text = apply_synonyms(text, rng, p, synonyms)
    if paraphrase is not None:
        text = paraphrase(text)
    return text, Program(root, dialect)  # type: ignore[arg-type]


# --- binding search --------------------------------------------------------------

_SUBSET_WEIGHTS = (0.1, 0.35, 0.3, 0.17, 0.08)


def _eval_set(node: Node, bindings: Mapping[str, Optional[str]], scene: Scene) -> Optional[frozenset]:
    try:
        value = evaluate_node(substitute(node, bindings), scene)
    except (ExecutionError, TemplateError):
        return None
    return value if isinstance(value, frozenset) else None


def _letter_subsets(letters: Sequence[str]) -> list[tuple[str, ...]]:
    return [c for k in range(len(letters) + 1) for c in itertools.combinations(letters, k)]


def sample_bindings(
    template: Template,
    scene: Scene,
    rng: Random,
    *,
    attr: Optional[str] = None,
    focus: Sequence[ObjectRecord] = (),
) -> Optional[dict[str, Optional[str]]]:
    """Draw placeholder values that make every referent of ``template`` resolve in ``scene``.

    Returns None when this draw cannot be completed; callers retry with fresh
    randomness. Question templates never describe a referent by the queried
    attribute ``<A>``. ``focus`` objects (e.g. the ones an action touched) are
    preferred as referents and as sources of set descriptions half the time.
    """
    b: dict[str, Optional[str]] = {}
    if template.uses_attr:
        attr = attr or rng.choice(template.attrs)
        b["A"] = attr
    elif attr is not None and attr not in template.attrs:
        return None
    an = analyse(template, b.get("A"))
    root = template.skeleton(b.get("A"))
    for r in an.relations:
        b[r] = rng.choice(PLANAR_RELATIONS)
    banned: set[str] = set()
    if template.dialect == QUESTION:
        if "A" in b:
            banned.add(ATTR_LETTER[b["A"]])
        banned |= {ATTR_LETTER[v.attr] for v in an.values.values() if v.context == "not"}
    index = scene.index()
    used_targets: set[str] = set()

    for key in an.order:
        slot = an.slots[key]
        if slot.kind == "new":
            for L in slot.letters:
                b[L + key] = rng.choice(ATTRIBUTE_VALUES[LETTER_ATTR[L]])
            continue
        base = _eval_set(_at(root, slot.base), b, scene)  # type: ignore[arg-type]
        if base is None:
            return None
        letters = [L for L in slot.letters if L not in banned] if slot.free else list(slot.letters)
        if not slot.free and len(letters) != len(slot.letters):
            return None
        if slot.kind == "set":
            if slot.free:
                k = rng.choices(range(len(_SUBSET_WEIGHTS)), _SUBSET_WEIGHTS)[0]
                chosen = set(rng.sample(letters, min(k, len(letters))))
            else:
                chosen = set(letters)
            if focus and rng.random() < 0.5:
                donor = rng.choice(list(focus))
            else:
                donor = index[rng.choice(sorted(base))] if base and rng.random() < 0.8 else None
            for L in slot.letters:
                a = LETTER_ATTR[L]
                if L not in chosen:
                    b[L + key] = None
                else:
                    b[L + key] = donor.attr(a) if donor else rng.choice(ATTRIBUTE_VALUES[a])
            continue

        scope = _at(root, slot.scope)  # type: ignore[arg-type]
        scope_names = _names_in(scope)
        negations = [v for v in an.values.values() if v.context == "not" and v.name in scope_names]
        candidates = sorted(base - used_targets)
        rng.shuffle(candidates)
        if focus and rng.random() < 0.5:
            focus_ids = {o.id for o in focus}
            candidates.sort(key=lambda i: i not in focus_ids)
        subsets = _letter_subsets(letters) if slot.free else [tuple(letters)]
        found = False
        for oid in candidates:
            target = index[oid]
            trial = dict(b)
            for neg in negations:
                options = [v for v in ATTRIBUTE_VALUES[neg.attr] if v != target.attr(neg.attr)]
                trial[neg.name] = rng.choice(options)
            good = []
            for subset in subsets:
                if slot.scope == slot.head:
                    # plain chain: filter the base set directly
                    attrs = [LETTER_ATTR[L] for L in subset]
                    hits = [i for i in base if all(index[i].attr(a) == target.attr(a) for a in attrs)]
                    if hits == [oid]:
                        good.append(subset)
                    continue
                for L in slot.letters:
                    trial[L + key] = target.attr(LETTER_ATTR[L]) if L in subset else None
                if _eval_set(scope, trial, scene) == frozenset({oid}):
                    good.append(subset)
            if template.minimal:
                good = [s for s in good if not any(set(t) < set(s) for t in good)]
            if not good:
                continue
            subset = rng.choice(good)
            for L in slot.letters:
                trial[L + key] = target.attr(LETTER_ATTR[L]) if L in subset else None
            b = trial
            used_targets.add(oid)
            found = True
            break
        if not found:
            return None

    for v in an.values.values():
        if v.name in b:
            continue
        values = ATTRIBUTE_VALUES[v.attr]
        if v.context == "change":
            targets = _eval_set(_at(root, v.target), b, scene)  # type: ignore[arg-type]
            if not targets:
                return None
            current = {index[i].attr(v.attr) for i in targets}
            options = [x for x in values if current != {x}]
        else:
            options = list(values)
        b[v.name] = rng.choice(options)

    if template.inherit:
        letter, donor_key = template.inherit
        inherited = LETTER_ATTR[letter]
        allowed = [a for a in ATTRIBUTES if a != inherited]
        donors = sorted(index)
        rng.shuffle(donors)
        for oid in donors:
            exprs = [e for e in referring_expressions(scene, oid) if set(e.attributes) <= set(allowed)]
            if exprs:
                expr = rng.choice(exprs)
                b.update(expr.bindings(donor_key))
                b[letter] = index[oid].attr(inherited)
                break
        else:
            return None
    # Referents without slots of their own (e.g. unique(relate(x, below))) are
    # only known to resolve once everything else is bound.
    bound = substitute(root, b)
    for c in iter_calls(bound):
        if c.name == "unique":
            try:
                evaluate_node(c, scene)
            except ExecutionError:
                return None
    return b


# --- scene description ---------------------------------------------------------------


def _id_key(oid: str) -> tuple[str, int, str]:
    m = re.fullmatch(r"([A-Za-z_]*)(\d+)", oid)
    return (m.group(1), int(m.group(2)), "") if m else (oid, -1, oid)


def _full_name(o) -> str:
    return f"{size_word(o.size)} {o.color} {o.material} {o.shape}"


def render_scene_text(scene: Scene) -> str:
    """Describe a scene: one existence sentence per object, then one sentence per
    related pair and axis, subjects taken in id order."""
    if not scene.objects:
        return ""
    objs = sorted(scene.objects, key=lambda o: _id_key(o.id))
    rel = derive_relations(scene)
    sentences = [_fix_articles(f"There is a {_full_name(o)}.") for o in objs]
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            r = rel[b.id]
            phrases = []
            if a.id in r["on"]:
                phrases.append("on top of")
            elif a.id in r["below"]:
                phrases.append("below")
            for rr in PLANAR_RELATIONS:
                if a.id in r[rr]:
                    phrases.append(RELATION_PHRASES[rr])
            for phrase in phrases:
                sentences.append(f"The {_full_name(a)} is {phrase} the {_full_name(b)}.")
    return " ".join(sentences)


# --- paraphrase hook -------------------------------------------------------------------


class CommandParaphraser:
    """Pipe text through an external command; fall back to the input on any failure."""

    def __init__(self, command: str, timeout: float = 10.0):
        self.argv = shlex.split(command)
        self.timeout = timeout

    def __call__(self, text: str) -> str:
        try:
            proc = subprocess.run(
                self.argv, input=text, capture_output=True, text=True, timeout=self.timeout, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            log.warning("paraphrase command failed (%s); keeping original text", exc)
            return text
        out = proc.stdout.strip()
        if proc.returncode != 0 or not out:
            log.warning("paraphrase command exited %s; keeping original text", proc.returncode)
            return text
        return out.splitlines()[0]
