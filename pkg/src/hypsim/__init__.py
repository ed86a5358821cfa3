"""Synthetic hypothetical-edit visual question answering: scenes, a typed program
language and its executor, templated text generation, split assembly and scoring."""

from .dataset_io import Sample, SplitStats, compute_stats, read_samples, write_samples
from .dsl import Program, ProgramError, parse_program, serialize_program, type_check
from .evaluation import EvalReport, SceneDiff, diff_scenes, score
from .executor import ExecutionError, IllPosedError, execute_action, execute_action_sequence, execute_question
from .generator import GenConfig, balance, generate_split, is_valid_sample, sample_scene
from .nlg import Template, apply_synonyms, instantiate, load_templates, referring_expressions, render_scene_text
from .scene import ObjectRecord, Scene, derive_relations, validate_scene

__all__ = [
    "EvalReport",
    "ExecutionError",
    "GenConfig",
    "IllPosedError",
    "ObjectRecord",
    "Program",
    "ProgramError",
    "Sample",
    "Scene",
    "SceneDiff",
    "SplitStats",
    "Template",
    "apply_synonyms",
    "balance",
    "compute_stats",
    "derive_relations",
    "diff_scenes",
    "execute_action",
    "execute_action_sequence",
    "execute_question",
    "generate_split",
    "instantiate",
    "is_valid_sample",
    "load_templates",
    "parse_program",
    "read_samples",
    "referring_expressions",
    "render_scene_text",
    "sample_scene",
    "score",
    "serialize_program",
    "type_check",
    "validate_scene",
    "write_samples",
]
