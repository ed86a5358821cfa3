import random

import pytest
from hypothesis import given, strategies as st

import progen
from hypsim.dsl import (
    ArityError,
    ProgramSyntaxError,
    ProgramTypeError,
    UnknownFunctionError,
    ValueType,
    parse_program,
    serialize_program,
    type_check,
)


@pytest.mark.parametrize(
    "text,error,position",
    [
        ("count(scene()", ProgramSyntaxError, 13),
        ("foo(scene())", UnknownFunctionError, 0),
        ("count(scene(),scene())", ArityError, 0),
        ("count(filter_color(cube,scene()))", ProgramTypeError, 19),
    ],
)
def test_errors_carry_positions(text, error, position):
    with pytest.raises(error) as info:
        parse_program(text)
    assert info.value.position == position


def test_root_types():
    assert type_check(parse_program("count(scene())")) == ValueType.INTEGER
    assert type_check(parse_program("exist(scene())")) == ValueType.BOOLEAN
    assert type_check(parse_program("query_color(unique(scene()))")) == ValueType.COLOR
    with pytest.raises(ProgramTypeError):
        parse_program("unique(scene())", "question")


def test_dialects_are_separate():
    assert parse_program("remove(filter_material(rubber,scene()))").dialect == "action"
    assert parse_program("exist(not_color(red,scene()))").dialect == "question"
    with pytest.raises(ProgramTypeError):
        parse_program("remove(not_color(red,scene()))", "action")
    with pytest.raises(ProgramTypeError):
        parse_program("count(change_color(scene(),red))", "question")
    with pytest.raises(ProgramTypeError):
        parse_program("count(scene())", "action")


def test_new_object_literal_only_where_an_object_is_created():
    p = parse_program("add(scene(),small_red_metal_cube)")
    assert serialize_program(p) == "add(scene(),small_red_metal_cube)"
    with pytest.raises(ProgramTypeError):
        parse_program("query_color(small_red_metal_cube)")
    with pytest.raises(ProgramTypeError):
        parse_program("add(scene(),small_red_metal_pyramid)")


def test_placeholders_need_opt_in():
    with pytest.raises(ProgramSyntaxError):
        parse_program("count(filter_color(<C>,scene()))")
    p = parse_program("count(filter_color(<C>,scene()))", placeholders=True)
    assert "<C>" in serialize_program(p)


def test_whitespace_is_not_significant():
    assert serialize_program(parse_program(" count ( filter_size( big , scene() ) ) ")) == "count(filter_size(big,scene()))"


@given(st.integers(0, 2**32 - 1))
def test_serialize_parse_round_trip(seed):
    rng = random.Random(seed)
    _, text = progen.random_case(rng)
    program = parse_program(text, "question")
    assert serialize_program(program) == text
    assert parse_program(serialize_program(program)) == program
