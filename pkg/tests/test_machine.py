import numpy as np
import pytest

from schemegrad.compiler import compile_source
from schemegrad.errors import DomainViolation, EvalError, MissingInput
from schemegrad.machine import eval_program, eval_with_tape
from schemegrad.runtime import ERROR_POLICY, PROPAGATE_POLICY
from schemegrad.values import Value


def test_missing_input_raises():
    prog = compile_source("(+ x y)", inputs=("x", "y"))
    with pytest.raises(MissingInput):
        eval_program(prog, {"x": 1.0})


def test_missing_param_raises():
    prog = compile_source("(* h f)", inputs=("f",), params=("h",))
    with pytest.raises(MissingInput):
        eval_program(prog, {"f": 1.0}, {})


def test_unused_declared_input_not_required():
    prog = compile_source("x", inputs=("x", "unused"))
    assert eval_program(prog, {"x": 2.0}).item() == 2.0


def test_domain_violation_reaching_output_reports_instruction():
    prog = compile_source("(/ 1 x)", inputs=("x",))
    with pytest.raises(DomainViolation) as err:
        eval_program(prog, {"x": 0.0}, policy=ERROR_POLICY)
    assert err.value.instruction is not None
    # propagate mode lets the inf through
    out = eval_program(prog, {"x": 0.0}, policy=PROPAGATE_POLICY)
    assert np.isinf(out.data)


def test_select_discards_untaken_branch_violation():
    # both branches evaluate eagerly, but a non-finite value masked out by
    # the select must not abort error-mode evaluation
    prog = compile_source("(if (> x 0) (/ 1 x) 5)", inputs=("x",))
    out = eval_program(prog, {"x": 0.0}, policy=ERROR_POLICY)
    assert out.item() == 5.0
    batched = Value.batch_scalars(np.array([0.0, 2.0]))
    out = eval_program(prog, {"x": batched}, policy=ERROR_POLICY)
    assert np.array_equal(out.data, [5.0, 0.5])


def test_unmasked_violation_still_raises():
    prog = compile_source("(+ (/ 1 x) 1)", inputs=("x",))
    with pytest.raises(DomainViolation):
        eval_program(prog, {"x": 0.0}, policy=ERROR_POLICY)


def test_batched_loop_condition_rejected():
    prog = compile_source(
        "(loop ((k x)) (if (> k 0) (recur (- k 1)) k))", inputs=("x",))
    with pytest.raises(EvalError):
        eval_program(prog, {"x": Value.batch_scalars(np.array([1.0, 2.0]))})


def test_taped_forward_bit_equal_on_loops():
    from schemegrad.values import bit_equal

    prog = compile_source(
        "(loop ((k 0) (y x)) (if (< k 7) (recur (+ k 1) (* y y)) y))",
        inputs=("x",))
    plain = eval_program(prog, {"x": 1.01})
    taped, tape = eval_with_tape(prog, {"x": 1.01})
    assert bit_equal(plain, taped)


def test_scratch_state_is_per_call():
    # two interleaved evaluations of one program must not share slots
    prog = compile_source("(* x x)", inputs=("x",))
    a = eval_program(prog, {"x": 3.0})
    b = eval_program(prog, {"x": 4.0})
    assert (a.item(), b.item()) == (9.0, 16.0)


def test_safe_domain_ops_recorded_on_program():
    prog = compile_source("(/ (sqrt x) (log y))", inputs=("x", "y"))
    ops = {op for _, op in prog.safe_domain_ops}
    assert ops == {"/", "sqrt", "log"}
