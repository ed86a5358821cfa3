import random

from hypothesis import given, settings, strategies as st

import progen
import reference
from hypsim import Scene, derive_relations, validate_scene
from hypsim.generator import sample_scene
from hypsim.vocab import INVERSE_RELATION, RELATIONS


def make(*objects):
    return Scene.from_dict({"objects": [dict(zip(("id", "size", "color", "material", "shape", "x", "y", "on_base"), o))
                                        for o in objects]})


def kinds(scene, **kw):
    return sorted(v.kind for v in validate_scene(scene, **kw))


seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_relations_match_coordinate_reference(seed):
    sd = progen.random_scene(random.Random(seed))
    rel = derive_relations(Scene.from_dict(sd))
    objs = {o["id"]: o for o in sd["objects"]}
    for a in objs:
        for r in RELATIONS:
            assert set(rel[a][r]) == reference._related(objs, a, r)


@given(seeds)
def test_relations_have_inverses(seed):
    scene = Scene.from_dict(progen.random_scene(random.Random(seed)))
    rel = derive_relations(scene)
    for a in scene.ids:
        for r in RELATIONS:
            for b in rel[a][r]:
                assert a in rel[b][INVERSE_RELATION[r]]


def test_dead_zone_and_stacks():
    scene = make(
        ("a", "small", "red", "metal", "cube", 0.0, 0.0, None),
        ("b", "small", "blue", "metal", "cube", 0.04, 1.0, None),
        ("c", "big", "gray", "rubber", "sphere", 1.0, -1.0, None),
        ("d", "small", "cyan", "rubber", "cylinder", 1.0, -1.0, "c"),
    )
    rel = derive_relations(scene)
    assert "b" not in rel["a"]["right"] and "b" not in rel["a"]["left"]
    assert "b" in rel["a"]["behind"]
    assert rel["c"]["on"] == {"d"} and rel["d"]["below"] == {"c"}
    # a stacked object has no planar relation to its own base ...
    assert not any(rel["d"][r] & {"c"} for r in ("left", "right", "front", "behind"))
    # ... and relates to third objects exactly like its base
    for r in ("left", "right", "front", "behind"):
        assert rel["d"][r] - {"c"} == rel["c"][r] - {"d"}


def test_validation_reports_each_violation():
    ok = make(("a", "small", "red", "metal", "cube", 0.0, 0.0, None), ("b", "big", "red", "metal", "cube", 1.0, 0.0, None))
    assert validate_scene(ok) == []
    assert kinds(ok, min_objects=4) == ["count"]
    close = make(("a", "small", "red", "metal", "cube", 0.0, 0.0, None), ("b", "big", "red", "metal", "cube", 0.3, 0.0, None))
    assert kinds(close) == ["separation"]
    assert kinds(make(("a", "huge", "red", "metal", "cube", 0.0, 0.0, None))) == ["vocabulary"]
    assert kinds(make(("a", "small", "red", "metal", "cube", 3.5, 0.0, None))) == ["bounds"]
    assert kinds(make(("a", "small", "red", "metal", "cube", 0, 0, None), ("a", "big", "red", "metal", "cube", 2, 0, None))) == ["duplicate-id"]
    assert kinds(make(("a", "small", "red", "metal", "cube", 0.0, 0.0, "zz"))) == ["dangling-base"]
    assert kinds(make(("a", "small", "red", "metal", "cube", 0, 0, None), ("b", "big", "red", "metal", "cube", 1, 0, "a"))) == ["stack-position"]
    cyc = make(("a", "small", "red", "metal", "cube", 0, 0, "b"), ("b", "big", "red", "metal", "cube", 0, 0, "a"))
    assert "cycle" in kinds(cyc)


@settings(max_examples=50)
@given(seeds)
def test_sampled_scenes_are_valid(seed):
    scene = sample_scene(random.Random(seed))
    assert validate_scene(scene, min_objects=4) == []
    assert 4 <= len(scene) <= 10
    assert len({o.attributes for o in scene.objects}) == len(scene)


@given(seeds)
def test_scene_dict_round_trip(seed):
    scene = sample_scene(random.Random(seed))
    assert Scene.from_dict(scene.to_dict()) == scene
