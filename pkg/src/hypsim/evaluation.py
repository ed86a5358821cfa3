"""Answer scoring with per-category breakdowns, program exact match, and scene
graph comparison."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from .dataset_io import Sample
from .dsl import ProgramError, iter_calls, parse_program, serialize_program
from .scene import Scene, derive_relations
from .vocab import ANSWER_LABELS, ATTRIBUTES, RELATIONS

Key = tuple[int, int]

ANSWER_SYNONYMS = {
    "ball": "sphere",
    "block": "cube",
    "tiny": "small",
    "large": "big",
    "metallic": "metal",
    "shiny": "metal",
    "matte": "rubber",
}
COARSE = {"add": "Add", "remove": "Remove", "change": "Change", "move_in_plane": "Move", "move_on": "Move"}
COARSE_ORDER = ("Add", "Remove", "Change", "Move")


class PredictionError(ValueError):
    """Predictions do not fit the gold split (bad label, duplicate or unknown key)."""


def canonical_label(label: str) -> str:
    text = str(label).strip().lower()
    text = ANSWER_SYNONYMS.get(text, text)
    if text not in ANSWER_LABELS:
        raise PredictionError(f"unknown answer label {label!r}")
    return text


def read_predictions(path: Union[str, Path], field_name: str = "answer") -> dict[Key, str]:
    out: dict[Key, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                key = (int(d["image_id"]), int(d["pair_index"]))
                value = d[field_name]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise PredictionError(f"line {lineno}: malformed prediction ({exc})") from None
            if key in out:
                raise PredictionError(f"line {lineno}: duplicate prediction for {key}")
            out[key] = value
    return out


# --- categories ----------------------------------------------------------------


def action_category(sample: Sample) -> str:
    return "+".join(sample.action_type)


def combination_category(sample: Sample) -> Optional[str]:
    """Two-action split: the unordered pair of coarse action kinds. Logic split:
    the connectives used by the question program. None for one-hop samples."""
    if len(sample.action_type) >= 2:
        kinds = {COARSE.get(a, a) for a in sample.action_type}
        ordered = [k for k in COARSE_ORDER if k in kinds] + sorted(kinds - set(COARSE_ORDER))
        return "+".join(ordered)
    used = set()
    for c in iter_calls(sample.question_program.root):
        if c.name in ("and", "or"):
            used.add(c.name)
        elif c.name.startswith("not_"):
            used.add("not")
    if not used:
        return None
    return "+".join(k for k in ("and", "or", "not") if k in used)


@dataclass(frozen=True)
class CategoryScore:
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass(frozen=True)
class EvalReport:
    overall: float
    n_scored: int
    n_missing: int
    by_action: dict[str, CategoryScore] = field(default_factory=dict)
    by_question: dict[str, CategoryScore] = field(default_factory=dict)
    by_combination: dict[str, CategoryScore] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        def cats(d: Mapping[str, CategoryScore]) -> dict[str, Any]:
            return {k: {"n": v.n, "correct": v.correct, "accuracy": v.accuracy} for k, v in d.items()}

        return {
            "overall": self.overall,
            "n_scored": self.n_scored,
            "n_missing": self.n_missing,
            "by_action": cats(self.by_action),
            "by_question": cats(self.by_question),
            "by_combination": cats(self.by_combination),
        }


def _report(gold: Sequence[Sample], preds: Mapping[Key, Any], correct_fn: Callable[[Sample, Any], bool]) -> EvalReport:
    gold_keys = {}
    for s in gold:
        if s.key in gold_keys:
            raise PredictionError(f"gold split has duplicate key {s.key}")
        gold_keys[s.key] = s
    unknown = sorted(set(preds) - set(gold_keys))
    if unknown:
        raise PredictionError(f"{len(unknown)} prediction key(s) not in the gold split, e.g. {unknown[0]}")
    tallies: dict[str, dict[str, list[int]]] = {"action": {}, "question": {}, "combination": {}}
    hits = missing = 0
    for s in sorted(gold, key=lambda x: x.key):
        if s.key in preds:
            ok = correct_fn(s, preds[s.key])
        else:
            ok = False
            missing += 1
        hits += ok
        cats = {"action": action_category(s), "question": s.question_type, "combination": combination_category(s)}
        for axis, name in cats.items():
            if name is None:
                continue
            t = tallies[axis].setdefault(name, [0, 0])
            t[0] += 1
            t[1] += ok

    def freeze(d: dict[str, list[int]]) -> dict[str, CategoryScore]:
        return {k: CategoryScore(n, c) for k, (n, c) in sorted(d.items())}

    n = len(gold)
    return EvalReport(
        overall=hits / n if n else 0.0,
        n_scored=n,
        n_missing=missing,
        by_action=freeze(tallies["action"]),
        by_question=freeze(tallies["question"]),
        by_combination=freeze(tallies["combination"]),
    )


def score(gold: Sequence[Sample], pred: Mapping[Key, str]) -> EvalReport:
    """Exact-match answer accuracy; predicted labels are canonicalized first and
    missing predictions count as wrong."""
    canon = {k: canonical_label(v) for k, v in pred.items()}
    return _report(gold, canon, lambda s, p: s.answer == p)


def _canonical_program(text: Any, dialect: str) -> Optional[str]:
    try:
        return serialize_program(parse_program(str(text), dialect))
    except ProgramError:
        return None


def score_programs(gold: Sequence[Sample], pred: Mapping[Key, Any]) -> EvalReport:
    """Exact match of predicted programs after canonical re-serialization.

    A prediction is either a question program string, or an object with
    "question_program" and optionally "action_program" (list); when the action
    programs are given they must match too. Unparseable programs are wrong.
    """

    def correct(s: Sample, p: Any) -> bool:
        if isinstance(p, str):
            p = {"question_program": p}
        if not isinstance(p, Mapping) or "question_program" not in p:
            raise PredictionError(f"program prediction for {s.key} must be a string or hold 'question_program'")
        if _canonical_program(p["question_program"], "question") != serialize_program(s.question_program):
            return False
        if "action_program" in p:
            acts = p["action_program"]
            acts = [acts] if isinstance(acts, str) else list(acts)
            want = [serialize_program(a) for a in s.action_programs]
            return [_canonical_program(a, "action") for a in acts] == want
        return True

    return _report(gold, pred, correct)


def format_report(report: EvalReport) -> str:
    rows = [("Overall", report.n_scored, report.overall)]
    for title, d in (("Action", report.by_action), ("Question", report.by_question), ("2-hop", report.by_combination)):
        rows += [(f"{title}: {k}", v.n, v.accuracy) for k, v in d.items()]
    w = max(len(r[0]) for r in rows)
    lines = [f"{'Category'.ljust(w)}  {'n':>6}  {'Acc (%)':>7}", "-" * (w + 17)]
    lines += [f"{name.ljust(w)}  {n:>6d}  {100 * acc:>7.1f}" for name, n, acc in rows]
    lines.append(f"missing predictions: {report.n_missing}")
    return "\n".join(lines) + "\n"


# --- scene graph comparison ------------------------------------------------------------


@dataclass(frozen=True)
class SceneDiff:
    attribute_rate: float
    relation_rate: float
    matching: tuple[tuple[str, str], ...]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


MAX_MATCH_OBJECTS = 16


def match_objects(gold: Scene, pred: Scene) -> tuple[tuple[int, int], ...]:
    """Maximum-weight pairing by number of equal attributes.

    Only pairs sharing at least one attribute are matched. Among maximum-weight
    pairings the smallest sum of (gold index + pred index) wins, then the
    lexicographically smallest assignment.
    """
    g, p = gold.objects, pred.objects
    if len(p) > MAX_MATCH_OBJECTS:
        raise ValueError(f"scene diff supports at most {MAX_MATCH_OBJECTS} predicted objects")
    w = [[sum(a.attr(k) == b.attr(k) for k in ATTRIBUTES) for b in p] for a in g]

    @lru_cache(maxsize=None)
    def best(i: int, mask: int) -> tuple[int, int]:
        if i == len(g):
            return (0, 0)
        cand = [best(i + 1, mask)]
        for j in range(len(p)):
            if not mask >> j & 1 and w[i][j] > 0:
                wt, neg = best(i + 1, mask | 1 << j)
                cand.append((wt + w[i][j], neg - (i + j)))
        return max(cand)

    pairs = []
    mask = 0
    for i in range(len(g)):
        target = best(i, mask)
        choice = None
        for j in range(len(p)):
            if not mask >> j & 1 and w[i][j] > 0:
                wt, neg = best(i + 1, mask | 1 << j)
                if (wt + w[i][j], neg - (i + j)) == target:
                    choice = j
                    break
        if choice is None:
            continue
        pairs.append((i, choice))
        mask |= 1 << choice
    return tuple(pairs)


def _triples(scene: Scene) -> list[tuple[str, str, str]]:
    rel = derive_relations(scene)
    return [(a, r, b) for a in scene.ids for r in RELATIONS for b in sorted(rel[a][r])]


def diff_scenes(gold: Scene, pred: Scene) -> SceneDiff:
    pairs = match_objects(gold, pred)
    g, p = gold.objects, pred.objects
    mapping = {g[i].id: p[j].id for i, j in pairs}
    denom = max(len(g), len(p))
    exact = sum(g[i].attributes == p[j].attributes for i, j in pairs)
    attr_rate = exact / denom if denom else 1.0
    gold_triples = _triples(gold)
    if gold_triples:
        prel = derive_relations(pred)
        held = sum(1 for a, r, b in gold_triples if a in mapping and b in mapping and mapping[b] in prel[mapping[a]][r])
        rel_rate = held / len(gold_triples)
    else:
        rel_rate = 1.0 if not _triples(pred) and len(mapping) == len(g) else 0.0
    return SceneDiff(attr_rate, rel_rate, tuple((g[i].id, p[j].id) for i, j in pairs))
