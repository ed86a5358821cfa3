"""Sample records, JSONL serialization and split statistics."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

from .dsl import Program, ProgramError, parse_program, serialize_program
from .scene import Scene
from .vocab import ANSWER_LABELS

SAMPLE_KEYS = (
    "image_id",
    "pair_index",
    "scene",
    "action_text",
    "question_text",
    "action_program",
    "question_program",
    "answer",
    "action_type",
    "question_type",
    "split",
)
TEST_TIME_HIDDEN = ("scene", "action_program", "question_program")


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Sample:
    image_id: int
    pair_index: int
    scene: Scene
    action_text: str
    question_text: str
    action_programs: tuple[Program, ...]
    question_program: Program
    answer: str
    action_type: tuple[str, ...]
    question_type: str
    split: str

    @property
    def key(self) -> tuple[int, int]:
        return (self.image_id, self.pair_index)

    def to_dict(self, test_time: bool = False) -> dict[str, Any]:
        d = {
            "image_id": self.image_id,
            "pair_index": self.pair_index,
            "scene": self.scene.to_dict(),
            "action_text": self.action_text,
            "question_text": self.question_text,
            "action_program": [serialize_program(p) for p in self.action_programs],
            "question_program": serialize_program(self.question_program),
            "answer": self.answer,
            "action_type": list(self.action_type),
            "question_type": self.question_type,
            "split": self.split,
        }
        if test_time:
            for k in TEST_TIME_HIDDEN:
                del d[k]
        return d

    @classmethod
    def from_dict(cls, d: Any) -> "Sample":
        if not isinstance(d, dict):
            raise SchemaError("sample must be a JSON object")
        missing = [k for k in SAMPLE_KEYS if k not in d]
        if missing:
            raise SchemaError(f"missing key(s) {missing}")
        if not isinstance(d["action_program"], list) or not isinstance(d["action_type"], list):
            raise SchemaError("action_program and action_type must be lists")
        if d["answer"] not in ANSWER_LABELS:
            raise SchemaError(f"answer {d['answer']!r} is not one of the answer labels")
        try:
            return cls(
                image_id=int(d["image_id"]),
                pair_index=int(d["pair_index"]),
                scene=Scene.from_dict(d["scene"]),
                action_text=str(d["action_text"]),
                question_text=str(d["question_text"]),
                action_programs=tuple(parse_program(p, "action") for p in d["action_program"]),
                question_program=parse_program(d["question_program"], "question"),
                answer=d["answer"],
                action_type=tuple(d["action_type"]),
                question_type=str(d["question_type"]),
                split=str(d["split"]),
            )
        except ProgramError as exc:
            raise SchemaError(f"bad program: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc)) from None


def dumps_sample(sample: Sample, test_time: bool = False) -> str:
    return json.dumps(sample.to_dict(test_time), ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """Write via a temp file in the target directory and rename over the target."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_samples(samples: Iterable[Sample], path: Union[str, Path], test_time: bool = False) -> None:
    text = "".join(dumps_sample(s, test_time) + "\n" for s in samples)
    atomic_write_text(path, text)


def read_samples(path: Union[str, Path]) -> list[Sample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", lineno) from None
            try:
                out.append(Sample.from_dict(d))
            except SchemaError as exc:
                raise SchemaError(str(exc), lineno) from None
    return out


def write_scenes(samples: Sequence[Sample], path: Union[str, Path]) -> None:
    """One pre-action scene per image, keyed by image id."""
    scenes: dict[str, Any] = {}
    for s in samples:
        scenes.setdefault(str(s.image_id), s.scene.to_dict())
    atomic_write_text(path, json.dumps(scenes, indent=1, sort_keys=False) + "\n")


# --- statistics ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitStats:
    n_images: int
    avg_objects: float
    n_action_texts: int
    n_unique_action_texts: int
    avg_action_len: float
    n_questions: int
    n_unique_questions: int
    avg_question_len: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def compute_stats(samples: Sequence[Sample]) -> SplitStats:
    """Table-style statistics.

    Action texts are counted once per (image, text); questions once per sample.
    Lengths are whitespace token counts.
    """
    if not samples:
        raise ValueError("cannot compute statistics of an empty split")
    scenes: dict[int, Scene] = {}
    actions: dict[tuple[int, str], None] = {}
    for s in samples:
        scenes.setdefault(s.image_id, s.scene)
        actions.setdefault((s.image_id, s.action_text), None)
    action_texts = [text for _, text in actions]
    questions = [s.question_text for s in samples]
    return SplitStats(
        n_images=len(scenes),
        avg_objects=sum(len(sc) for sc in scenes.values()) / len(scenes),
        n_action_texts=len(action_texts),
        n_unique_action_texts=len(set(action_texts)),
        avg_action_len=sum(len(t.split()) for t in action_texts) / len(action_texts),
        n_questions=len(questions),
        n_unique_questions=len(set(questions)),
        avg_question_len=sum(len(q.split()) for q in questions) / len(questions),
    )


STATS_COLUMNS = (
    ("#Images", "n_images", "{:d}"),
    ("Avg. #Obj", "avg_objects", "{:.2f}"),
    ("#T_A", "n_action_texts", "{:d}"),
    ("Unique #T_A", "n_unique_action_texts", "{:d}"),
    ("Avg. T_A len", "avg_action_len", "{:.2f}"),
    ("#Q_H", "n_questions", "{:d}"),
    ("Unique #Q_H", "n_unique_questions", "{:d}"),
    ("Avg. Q_H len", "avg_question_len", "{:.2f}"),
)


def format_stats_table(rows: Sequence[tuple[str, SplitStats]]) -> str:
    header = ["Split"] + [c[0] for c in STATS_COLUMNS]
    body = [[name] + [fmt.format(getattr(st, attr)) for _, attr, fmt in STATS_COLUMNS] for name, st in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
