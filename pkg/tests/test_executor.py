import random

import pytest
from hypothesis import given, settings, strategies as st

import progen
import reference
from hypsim import Scene, derive_relations, execute_action, execute_question, parse_program, validate_scene
from hypsim.executor import (
    AnswerOverflowError,
    CapacityError,
    ExecutionError,
    IllPosedError,
    PlacementError,
)
from hypsim.generator import sample_scene


def make(*objects):
    keys = ("id", "size", "color", "material", "shape", "x", "y", "on_base")
    return Scene.from_dict({"seed": 3, "objects": [dict(zip(keys, o)) for o in objects]})


BASE = make(
    ("o0", "small", "red", "metal", "cube", 0.0, 0.0, None),
    ("o1", "big", "red", "rubber", "sphere", 1.0, 0.0, None),
    ("o2", "big", "blue", "rubber", "cylinder", -1.0, 1.0, None),
    ("o3", "small", "green", "metal", "cube", -1.0, 1.0, "o2"),
)


def ask(text, scene=BASE):
    return execute_question(parse_program(text, "question"), scene)


def act(text, scene=BASE):
    return execute_action(parse_program(text, "action"), scene)


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_matches_reference(seed):
    sd, program = progen.random_case(random.Random(seed))
    try:
        ours = execute_question(parse_program(program, "question"), Scene.from_dict(sd))
    except IllPosedError:
        ours = "ill-posed"
    assert ours == reference.outcome(program, sd)


def test_set_operators():
    assert ask("count(and(filter_color(red,scene()),filter_shape(cube,scene())))") == "1"
    assert ask("count(or(filter_color(red,scene()),filter_shape(cube,scene())))") == "3"
    assert ask("count(not_color(red,scene()))") == "2"


def test_same_excludes_the_object_itself():
    assert ask("count(same_color(unique(filter_shape(sphere,scene()))))") == "1"
    assert ask("count(same_shape(unique(filter_shape(sphere,scene()))))") == "0"


def test_unique_must_resolve_to_one_object():
    with pytest.raises(IllPosedError):
        ask("query_color(unique(filter_shape(cube,scene())))")
    with pytest.raises(IllPosedError):
        ask("query_color(unique(filter_color(yellow,scene())))")


def test_integer_overflow():
    many = make(*[(f"o{i}", "small", "red" if i else "blue", "metal", "cube", -2.5 + 0.5 * i, 0.0, None) for i in range(10)])
    assert ask("count(filter_color(red,scene()))", many) == "9"
    with pytest.raises(AnswerOverflowError):
        ask("count(scene())", many)


def test_questions_do_not_touch_the_scene():
    before = BASE.to_dict()
    ask("count(relate(unique(filter_shape(sphere,scene())),left))")
    assert BASE.to_dict() == before


def test_remove_lets_stacked_objects_fall():
    post = act("remove(filter_shape(cylinder,scene()))")
    assert "o2" not in post.ids
    assert post.get("o3").on_base is None
    assert (post.get("o3").x, post.get("o3").y) == (-1.0, 1.0)
    assert validate_scene(post) == []


def test_remove_rel_requires_the_relation():
    sphere = "unique(filter_shape(sphere,scene()))"
    red_cube = "unique(filter_color(red,filter_shape(cube,scene())))"
    post = act(f"remove_rel(scene(),{sphere},{red_cube},right)")
    assert "o1" not in post.ids
    with pytest.raises(IllPosedError):
        act(f"remove_rel(scene(),{sphere},{red_cube},left)")


def test_change_recolors_the_whole_set():
    post = act("change_color(filter_color(red,scene()),yellow)")
    assert [o.color for o in post.objects] == ["yellow", "yellow", "blue", "green"]


def test_planar_move_uses_the_displacement():
    cube = "unique(filter_color(red,filter_shape(cube,scene())))"
    sphere = "unique(filter_shape(sphere,scene()))"
    post = act(f"change_loc(scene(),{cube},{sphere},behind)")
    moved = post.get("o0")
    assert (moved.x, moved.y) == (1.0, 1.0)
    assert "o0" in derive_relations(post)["o1"]["behind"]


def test_move_carries_the_stack():
    cyl = "unique(filter_shape(cylinder,scene()))"
    sphere = "unique(filter_shape(sphere,scene()))"
    post = act(f"change_loc(scene(),{cyl},{sphere},front)")
    assert (post.get("o2").x, post.get("o2").y) == (1.0, -1.0)
    assert (post.get("o3").x, post.get("o3").y) == (1.0, -1.0)
    assert post.get("o3").on_base == "o2"


def test_move_on_and_invalid_placements():
    sphere = "unique(filter_shape(sphere,scene()))"
    red_cube = "unique(filter_color(red,filter_shape(cube,scene())))"
    post = act(f"change_loc(scene(),{red_cube},{sphere},on)")
    assert post.get("o0").on_base == "o1"
    assert derive_relations(post)["o0"]["below"] == {"o1"}
    cyl = "unique(filter_shape(cylinder,scene()))"
    green = "unique(filter_color(green,scene()))"
    with pytest.raises(PlacementError):
        act(f"change_loc(scene(),{cyl},{green},on)")
    with pytest.raises(PlacementError):
        act(f"change_loc(scene(),{red_cube},{sphere},below)")


def test_add_rel_lands_on_the_requested_side():
    sphere = "unique(filter_shape(sphere,scene()))"
    for r in ("left", "right", "front", "behind"):
        post = act(f"add_rel(scene(),big_cyan_metal_cube,{sphere},{r})")
        new = [o for o in post.objects if o.id not in BASE.ids]
        assert len(new) == 1
        assert new[0].id in derive_relations(post)["o1"][r]
        assert validate_scene(post) == []


def test_add_is_deterministic():
    program = "add(scene(),big_cyan_metal_cube)"
    assert act(program).to_dict() == act(program).to_dict()


def test_capacity():
    full = make(*[(f"o{i}", "small", "red", "metal", "cube", -2.5 + 0.5 * i, 0.0, None) for i in range(10)])
    with pytest.raises(CapacityError):
        act("add(scene(),big_cyan_metal_cube)", full)


def test_dialect_guards():
    with pytest.raises(ValueError):
        execute_question(parse_program("remove(scene())"), BASE)
    with pytest.raises(ValueError):
        execute_action(parse_program("count(scene())"), BASE)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["left", "right", "front", "behind", "on"]))
def test_actions_keep_scenes_valid(seed, rel):
    rng = random.Random(seed)
    scene = sample_scene(rng)
    a, b = rng.sample(scene.objects, 2)
    ra = f"unique(filter_size({a.size},filter_color({a.color},filter_material({a.material},filter_shape({a.shape},scene())))))"
    rb = f"unique(filter_size({b.size},filter_color({b.color},filter_material({b.material},filter_shape({b.shape},scene())))))"
    programs = [f"change_loc(scene(),{ra},{rb},{rel})", f"remove({ra[7:-1]})", f"change_size({ra[7:-1]},big)"]
    if rel != "on":
        programs.append(f"add_rel(scene(),small_cyan_rubber_sphere,{rb},{rel})")
    for text in programs:
        try:
            post = act(text, scene)
        except ExecutionError:
            continue
        assert validate_scene(post) == []
