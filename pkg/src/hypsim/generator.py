"""Scene sampling, (action, question) pair construction, validity filtering and
split assembly.

Each image draws its randomness from (master seed, split, image index), so
Original, 2HopTA and 2HopQH images can be produced in any order with
identical results. The Balanced split is built sequentially because its
per-label quotas depend on the samples already accepted.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional, Sequence

from .dataset_io import Sample
from .dsl import Call, Node, Program, iter_calls
from .executor import (
    AnswerOverflowError,
    ExecutionError,
    IllPosedError,
    evaluate_node,
    execute_action_sequence,
    execute_question,
)
from .nlg import (
    ACTION_FAMILIES,
    QUESTION_FAMILIES,
    Synonyms,
    Template,
    TemplateError,
    instantiate,
    load_templates,
    sample_bindings,
)
from .rng import derive_rng
from .scene import (
    MAX_OBJECTS,
    MIN_GENERATED_OBJECTS,
    PLANE_BOUND,
    ObjectRecord,
    Scene,
    is_separated,
    validate_scene,
)
from .vocab import ANSWER_LABELS, ATTRIBUTE_VALUES, ATTRIBUTES, label_kind

SPLITS = ("original", "balanced", "2hop-ta", "2hop-qh")
COARSE_FAMILY = {"add": "Add", "remove": "Remove", "change": "Change", "move_in_plane": "Move", "move_on": "Move"}
COARSE_PAIRS = tuple(itertools.combinations(("Add", "Remove", "Change", "Move"), 2))
TWO_ACTION_CONNECTORS = ("{a}, and then {b}", "{a} and {b}", "First, {a}; then {b}", "{a}. After that, {b}")

SCENE_ATTEMPTS = 1000
POSITION_ATTEMPTS = 200
STACK_PROBABILITY = 0.25
MAX_STACK_HEIGHT = 2
SCENE_RESAMPLES = 20
BALANCED_ATTEMPTS = 40
MOVE_RELATIONAL_BIAS = 0.8


class GenerationError(RuntimeError):
    def __init__(self, message: str, image_id: Optional[int] = None, slot: Optional[str] = None):
        self.image_id = image_id
        self.slot = slot
        where = f" (image {image_id}, slot {slot})" if image_id is not None else ""
        super().__init__(message + where)


class BalanceError(ValueError):
    def __init__(self, missing: Sequence[str], message: str = ""):
        self.missing = list(missing)
        super().__init__(message or f"cannot balance: answer label(s) absent: {', '.join(self.missing)}")


@dataclass(frozen=True)
class GenConfig:
    n_images: int
    split: str = "original"
    seed: int = 0
    actions_per_image: int = 5
    questions_per_action: int = 5
    tolerance: float = 0.005
    retries: int = 200
    synonym_p: float = 0.5

    def validate(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.n_images < 1:
            raise ValueError("n_images must be positive")
        if self.split != "2hop-ta" and self.actions_per_image != len(ACTION_FAMILIES):
            raise ValueError(f"actions_per_image must be {len(ACTION_FAMILIES)} (one per action family)")
        if self.questions_per_action != len(QUESTION_FAMILIES):
            raise ValueError(f"questions_per_action must be {len(QUESTION_FAMILIES)} (one per question family)")
        if self.actions_per_image < 1 or self.retries < 1:
            raise ValueError("actions_per_image and retries must be positive")
        if not 0 <= self.tolerance < 1:
            raise ValueError("tolerance must lie in [0, 1)")


# --- scenes ---------------------------------------------------------------------------

_ALL_TUPLES = tuple(itertools.product(*(ATTRIBUTE_VALUES[a] for a in ATTRIBUTES)))


def sample_scene(rng: Random, n_objects: Optional[int] = None) -> Scene:
    """Draw a valid scene of 4 to 10 objects with distinct attribute tuples.

    Distinct tuples make the full description of every object a unique referent.
    At most one object starts stacked on another.
    """
    seed = rng.getrandbits(32)
    lim = PLANE_BOUND - 0.2
    for _ in range(SCENE_ATTEMPTS):
        n = n_objects if n_objects is not None else rng.randint(MIN_GENERATED_OBJECTS, MAX_OBJECTS)
        tuples = rng.sample(_ALL_TUPLES, n)
        stacked = rng.random() < STACK_PROBABILITY and n >= 2
        objs: list[ObjectRecord] = []
        ok = True
        for i, (size, color, material, shape) in enumerate(tuples):
            oid = f"o{i}"
            if stacked and i == n - 1:
                base = objs[rng.randrange(n - 1)]
                objs.append(ObjectRecord(oid, size, color, material, shape, base.x, base.y, base.id))
                continue
            for _ in range(POSITION_ATTEMPTS):
                x = round(rng.uniform(-lim, lim), 2)
                y = round(rng.uniform(-lim, lim), 2)
                if is_separated(x, y, objs):
                    objs.append(ObjectRecord(oid, size, color, material, shape, x, y))
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        scene = Scene(tuple(objs), seed)
        if not validate_scene(scene, MIN_GENERATED_OBJECTS):
            return scene
    raise GenerationError(f"scene resampling exhausted after {SCENE_ATTEMPTS} attempts")


def stack_heights(scene: Scene) -> dict[str, int]:
    index = scene.index()
    out = {}
    for o in scene.objects:
        h, cur, seen = 1, o, {o.id}
        while cur.on_base is not None and cur.on_base in index and cur.on_base not in seen:
            seen.add(cur.on_base)
            cur = index[cur.on_base]
            h += 1
        out[o.id] = h
    return out


# --- validity -------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: Optional[str] = None
    answer: Optional[str] = None

    def __bool__(self) -> bool:
        return self.valid


def _drop_at(node: Node, path: tuple[int, ...]) -> Node:
    """Return node with the filter call at ``path`` replaced by its objset argument."""
    if not path:
        assert isinstance(node, Call)
        return node.args[1]
    assert isinstance(node, Call)
    args = list(node.args)
    args[path[0]] = _drop_at(args[path[0]], path[1:])
    return Call(node.func, tuple(args))


def _filter_paths(node: Node, path: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    """Paths of filter calls in the chain directly under a unique()."""
    out = []
    while isinstance(node, Call) and node.name.startswith("filter_"):
        out.append(path)
        node, path = node.args[1], path + (1,)
    return out


def is_degenerate(question: Program, scene: Scene) -> bool:
    """True when some unique() referent keeps resolving to the same object after
    one of its filters is dropped."""
    for c in iter_calls(question.root):
        if c.name != "unique":
            continue
        arg = c.args[0]
        try:
            target = evaluate_node(arg, scene)
        except ExecutionError:
            continue
        for p in _filter_paths(arg):
            try:
                if evaluate_node(_drop_at(arg, p), scene) == target:
                    return True
            except ExecutionError:
                continue
    return False


def is_valid_sample(
    scene: Scene,
    action_programs: Sequence[Program],
    question_program: Program,
    minimal_referents: bool = False,
) -> Verdict:
    """Classify a candidate pair; the verdict carries the post-action answer when valid."""
    try:
        post = execute_action_sequence(action_programs, scene)
    except IllPosedError:
        return Verdict(False, "ill-posed")
    except ExecutionError:
        return Verdict(False, "execution-error")
    try:
        answer = execute_question(question_program, post)
    except IllPosedError:
        return Verdict(False, "ill-posed")
    except AnswerOverflowError:
        return Verdict(False, "overflow")
    except ExecutionError:
        return Verdict(False, "execution-error")
    if minimal_referents and is_degenerate(question_program, post):
        return Verdict(False, "degenerate")
    try:
        before: Optional[str] = execute_question(question_program, scene)
    except ExecutionError:
        before = None  # unanswerable before the action counts as a different answer
    if before == answer:
        return Verdict(False, "bias", answer)
    return Verdict(True, None, answer)


# --- instantiation ---------------------------------------------------------------------


@dataclass
class _Action:
    text: str
    programs: tuple[Program, ...]
    families: tuple[str, ...]
    post: Scene
    touched: tuple[ObjectRecord, ...] = ()


def touched_objects(pre: Scene, post: Scene) -> tuple[ObjectRecord, ...]:
    """Objects added, changed or moved (post-action records) plus removed ones."""
    before = pre.index()
    after = post.index()
    out = [o for o in post.objects if before.get(o.id) != o]
    out += [o for o in pre.objects if o.id not in after]
    return tuple(out)


class _Context:
    def __init__(self, config: GenConfig, templates: Sequence[Template], synonyms: Optional[Synonyms],
                 paraphrase: Optional[Callable[[str], str]]):
        self.config = config
        self.synonyms = synonyms
        self.paraphrase = paraphrase
        self.by_family: dict[tuple[str, int], list[Template]] = {}
        for t in templates:
            self.by_family.setdefault((t.family, t.hop), []).append(t)

    def templates(self, family: str, hop: int) -> list[Template]:
        ts = self.by_family.get((family, hop))
        if not ts:
            raise GenerationError(f"no templates for family {family!r} at hop {hop}")
        return ts

    def fill(self, t: Template, scene: Scene, rng: Random, attr: Optional[str] = None,
             focus: Sequence[ObjectRecord] = ()):
        b = sample_bindings(t, scene, rng, attr=attr, focus=focus)
        if b is None:
            return None
        try:
            return instantiate(t, b, rng, synonyms=self.synonyms, p=self.config.synonym_p)
        except TemplateError:
            return None


def _unique_target(node: Node, scene: Scene) -> Optional[str]:
    try:
        value = evaluate_node(node, scene)
    except ExecutionError:
        return None
    return value if isinstance(value, str) else None


def _action_ok(family: str, program: Program, pre: Scene, post: Scene) -> bool:
    if post == pre or max(stack_heights(post).values(), default=1) > MAX_STACK_HEIGHT:
        return False
    if family == "add":
        return len(post) == len(pre) + 1
    if family == "remove":
        return 0 < len(post) < len(pre)
    if family in ("move_in_plane", "move_on"):
        mover = _unique_target(program.root.args[1], pre)
        ref = _unique_target(program.root.args[2], pre)
        if mover is None or ref is None or mover == ref:
            return False
        if family == "move_on":
            index = pre.index()
            if index[ref].on_base is not None or any(o.on_base in (ref, mover) for o in pre.objects):
                return False
        # the mover must end up somewhere else
        return post.get(mover) != pre.get(mover)
    return True


def make_action(ctx: _Context, family: str, scene: Scene, rng: Random) -> Optional[_Action]:
    t = rng.choice(ctx.templates(family, 1))
    filled = ctx.fill(t, scene, rng)
    if filled is None:
        return None
    text, program = filled
    try:
        post = execute_action_sequence([program], scene)
    except ExecutionError:
        return None
    if not _action_ok(family, program, scene, post):
        return None
    return _Action(text, (program,), (family,), post, touched_objects(scene, post))


def _join_actions(first: str, second: str, rng: Random) -> str:
    a = first.rstrip(".")
    b_cap = second.rstrip(".")
    b = b_cap if b_cap.split(" ", 1)[0] in ("John", "Jill") else b_cap[:1].lower() + b_cap[1:]
    return rng.choice(TWO_ACTION_CONNECTORS).format(a=a, b=b) + "."


def make_two_actions(ctx: _Context, families: tuple[str, str], scene: Scene, rng: Random) -> Optional[_Action]:
    first = make_action(ctx, families[0], scene, rng)
    if first is None:
        return None
    second = make_action(ctx, families[1], first.post, rng)
    if second is None:
        return None
    text = _join_actions(first.text, second.text, rng)
    if ctx.paraphrase is not None:
        text = ctx.paraphrase(text)
    return _Action(text, first.programs + second.programs, families, second.post,
                   touched_objects(scene, second.post))


def make_question(ctx: _Context, family: str, hop: int, scene: Scene, action: _Action, rng: Random,
                  attr: Optional[str] = None):
    """One attempt at a valid question; returns (text, program, answer) or None."""
    pool = ctx.templates(family, hop)
    if attr is not None:
        pool = [t for t in pool if attr in t.attrs] or pool
    if any(f.startswith("move") for f in action.families) and rng.random() < MOVE_RELATIONAL_BIAS:
        # a move only changes answers that depend on position
        pool = [t for t in pool if "relate(" in t.program] or pool
    t = rng.choice(pool)
    filled = ctx.fill(t, action.post, rng, attr=attr if t.uses_attr else None, focus=action.touched)
    if filled is None:
        return None
    text, program = filled
    verdict = is_valid_sample(scene, action.programs, program, minimal_referents=t.minimal)
    if not verdict:
        return None
    if ctx.paraphrase is not None:
        text = ctx.paraphrase(text)
    return text, program, verdict.answer


def _action_families_for(config: GenConfig, image_index: int, slot: int, rng: Random) -> tuple[str, ...]:
    if config.split != "2hop-ta":
        return (ACTION_FAMILIES[slot],)
    pair = COARSE_PAIRS[(image_index * config.actions_per_image + slot) % len(COARSE_PAIRS)]
    fine = []
    for coarse in pair:
        options = [f for f, c in COARSE_FAMILY.items() if c == coarse]
        fine.append(rng.choice(options))
    if rng.random() < 0.5:
        fine.reverse()
    return tuple(fine)


def _image_samples(ctx: _Context, image_index: int) -> list[Sample]:
    config = ctx.config
    rng = derive_rng(config.seed, config.split, image_index)
    hop = 2 if config.split == "2hop-qh" else 1
    last_slot = "scene"
    for _ in range(SCENE_RESAMPLES):
        scene = sample_scene(rng)
        samples: list[Sample] = []
        for a_slot in range(config.actions_per_image):
            families = _action_families_for(config, image_index, a_slot, rng)
            done = False
            for _ in range(config.retries):
                if len(families) == 2:
                    action = make_two_actions(ctx, families, scene, rng)  # type: ignore[arg-type]
                else:
                    action = make_action(ctx, families[0], scene, rng)
                    if action is not None and ctx.paraphrase is not None:
                        action.text = ctx.paraphrase(action.text)
                if action is None:
                    continue
                rows = []
                for q_slot, qfam in enumerate(QUESTION_FAMILIES):
                    got = None
                    for _ in range(max(1, config.retries // 4)):
                        got = make_question(ctx, qfam, hop, scene, action, rng)
                        if got is not None:
                            break
                    if got is None:
                        last_slot = f"action {a_slot} ({'+'.join(families)}), question {qfam}"
                        break
                    rows.append((q_slot, qfam, got))
                if len(rows) != len(QUESTION_FAMILIES):
                    continue
                for q_slot, qfam, (qtext, qprog, answer) in rows:
                    samples.append(Sample(
                        image_id=image_index,
                        pair_index=a_slot * len(QUESTION_FAMILIES) + q_slot,
                        scene=scene,
                        action_text=action.text,
                        question_text=qtext,
                        action_programs=action.programs,
                        question_program=qprog,
                        answer=answer,
                        action_type=action.families,
                        question_type=qfam,
                        split=config.split,
                    ))
                done = True
                break
            if not done:
                if last_slot == "scene":
                    last_slot = f"action {a_slot} ({'+'.join(families)})"
                break
        else:
            return samples
    raise GenerationError("retry budget exhausted", image_index, last_slot)


# --- balancing ---------------------------------------------------------------------------


def _label_family(label: str, rng: Random) -> tuple[str, Optional[str]]:
    kind = label_kind(label)
    if kind == "integer":
        return "count", None
    if kind == "boolean":
        return rng.choice(("exist", "compare_integer", "compare_attr")), None
    return "query_attr", kind


def _feasible(label: str, scene: Scene) -> bool:
    kind = label_kind(label)
    if kind == "integer":
        return int(label) <= len(scene)
    if kind == "boolean":
        return True
    return any(o.attr(kind) == label for o in scene.objects)


def _balanced_samples(ctx: _Context) -> list[Sample]:
    config = ctx.config
    quota = max(1, config.n_images // 2)
    counts: Counter[str] = Counter()
    accepted: list[Sample] = []
    budget = config.n_images * 40
    for image_index in range(budget):
        if all(counts[label] >= quota for label in ANSWER_LABELS):
            break
        rng = derive_rng(config.seed, config.split, image_index)
        scene = sample_scene(rng)
        for a_slot, afam in enumerate(ACTION_FAMILIES):
            action = None
            for _ in range(20):
                action = make_action(ctx, afam, scene, rng)
                if action is not None:
                    break
            if action is None:
                continue
            if ctx.paraphrase is not None:
                action.text = ctx.paraphrase(action.text)
            taken: set[str] = set()
            for q_slot in range(len(QUESTION_FAMILIES)):
                open_labels = [lb for lb in ANSWER_LABELS if counts[lb] < quota and lb not in taken
                               and _feasible(lb, action.post)]
                if not open_labels:
                    break
                lowest = min(counts[lb] for lb in open_labels)
                target = rng.choice([lb for lb in open_labels if counts[lb] == lowest])
                for _ in range(BALANCED_ATTEMPTS):
                    qfam, attr = _label_family(target, rng)
                    got = make_question(ctx, qfam, 1, scene, action, rng, attr=attr)
                    if got is None or counts[got[2]] >= quota or got[2] in taken:
                        continue
                    qtext, qprog, answer = got
                    accepted.append(Sample(
                        image_id=image_index,
                        pair_index=a_slot * len(QUESTION_FAMILIES) + q_slot,
                        scene=scene,
                        action_text=action.text,
                        question_text=qtext,
                        action_programs=action.programs,
                        question_program=qprog,
                        answer=answer,
                        action_type=action.families,
                        question_type=qfam,
                        split=config.split,
                    ))
                    counts[answer] += 1
                    taken.add(answer)
                    break
    return accepted


def _within(counts: Sequence[int], tolerance: float) -> bool:
    total = sum(counts)
    if total == 0:
        return False
    target = 1 / len(counts)
    return all(abs(c / total - target) <= tolerance + 1e-12 for c in counts)


def balance(samples: Sequence[Sample], rng: Random, tolerance: float = 0.005) -> list[Sample]:
    """Largest answer-balanced subset: every label's share within ``tolerance`` of 1/27.

    Each label is capped at a common ceiling (the largest one that keeps all
    shares in tolerance) and trimmed to it by random choice. Order is preserved.
    """
    if not samples:
        raise ValueError("balance needs a non-empty sample list")
    by_label: dict[str, list[int]] = {lb: [] for lb in ANSWER_LABELS}
    for i, s in enumerate(samples):
        if s.answer not in by_label:
            raise ValueError(f"sample {s.key} has unknown answer {s.answer!r}")
        by_label[s.answer].append(i)
    missing = [lb for lb, idx in by_label.items() if not idx]
    if missing:
        raise BalanceError(missing)
    sizes = {lb: len(idx) for lb, idx in by_label.items()}
    cap = min(sizes.values())
    for c in range(max(sizes.values()), cap, -1):
        if _within([min(n, c) for n in sizes.values()], tolerance):
            cap = c
            break
    keep: set[int] = set()
    for lb in ANSWER_LABELS:
        idx = by_label[lb]
        keep.update(idx if len(idx) <= cap else rng.sample(idx, cap))
    return [samples[i] for i in sorted(keep)]


# --- entry point ---------------------------------------------------------------------------


def generate_split(
    config: GenConfig,
    templates: Optional[Sequence[Template]] = None,
    synonyms: Optional[Synonyms] = None,
    paraphrase: Optional[Callable[[str], str]] = None,
) -> list[Sample]:
    config.validate()
    ctx = _Context(config, templates if templates is not None else load_templates(), synonyms, paraphrase)
    if config.split == "balanced":
        pool = _balanced_samples(ctx)
        if not pool:
            raise GenerationError("balanced generation produced no samples")
        return balance(pool, derive_rng(config.seed, "balance"), config.tolerance)
    out: list[Sample] = []
    for i in range(config.n_images):
        out.extend(_image_samples(ctx, i))
    return out


def verify_sample(sample: Sample) -> Optional[str]:
    """Re-execute a stored sample; returns a failure description or None."""
    try:
        post = execute_action_sequence(sample.action_programs, sample.scene)
        answer = execute_question(sample.question_program, post)
    except ExecutionError as exc:
        return f"execution failed: {exc}"
    if answer != sample.answer:
        return f"stored answer {sample.answer!r} but programs give {answer!r}"
    try:
        before: Optional[str] = execute_question(sample.question_program, sample.scene)
    except ExecutionError:
        before = None
    if before == answer:
        return f"answer {answer!r} unchanged by the action (bias)"
    return None
