"""Slot-machine evaluation of compiled programs.

Straight-line programs run through a tight dispatch loop; programs with
loops or function calls run on an explicit activation stack so that loop
iteration count and recursion depth never grow the Python stack.  Both
paths can record a tape for reverse-mode differentiation.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainViolation, EvalError, MissingInput
from .lowering import check_depth
from .runtime import (
    ERROR_POLICY,
    PROPAGATE_POLICY,
    PARTIAL_OPS,
    SafeDomainPolicy,
    apply_primitive,
    pow_immediate,
    select,
)
from .values import Value

_EAGER_DOMAIN_OPS = frozenset(["det", "inv"])  # singularities raise immediately


def _param_value(params, name: str) -> Value:
    if params is None:
        raise MissingInput(f"missing parameter {name!r}")
    getter = getattr(params, "value_of", None)
    if getter is not None:
        return getter(name)
    try:
        return Value.of(params[name])
    except KeyError:
        raise MissingInput(f"missing parameter {name!r}") from None


class _Violations:
    """Collects deferred domain violations (error mode only).  A violation
    is reported only if the program output ends up non-finite, so values
    discarded by a select never abort evaluation."""

    __slots__ = ("first",)

    def __init__(self):
        self.first = None

    def check(self, op: str, dest: int, value: Value) -> None:
        if self.first is None and not np.all(np.isfinite(value.data)):
            bad = np.nonzero(~np.isfinite(value.data).ravel())[0]
            where = int(bad[0]) if bad.size else None
            self.first = (op, dest, where)

    def finalize(self, out: Value, output_slot: int) -> None:
        if np.all(np.isfinite(out.data)):
            return
        if self.first is not None:
            op, dest, where = self.first
            raise DomainViolation(op, where=where, instruction=dest)
        raise DomainViolation("non-finite output", instruction=output_slot)


def _exec_prim(ins, slots, policy, violations):
    _, dest, op, operands, aux = ins
    if op == "pow" and aux is not None:
        arg = slots[operands[0]]
        out = pow_immediate(arg, aux, PROPAGATE_POLICY if violations is not None else policy)
    else:
        args = [slots[i] for i in operands]
        if violations is not None and op not in _EAGER_DOMAIN_OPS:
            out = apply_primitive(op, args, PROPAGATE_POLICY)
        else:
            out = apply_primitive(op, args, policy)
    if violations is not None and op in PARTIAL_OPS:
        violations.check(op, dest, out)
    slots[dest] = out
    return out


def _run_block_simple(block, slots, inputs, params, policy, violations,
                      tape=None, ids=None, store=None):
    """Execute a block with no loops/calls (tail is exit, instrs are
    leaf/prim/select).  Returns the exit slot."""
    for ins in block.instrs:
        kind = ins[0]
        if kind == "prim":
            out = _exec_prim(ins, slots, policy, violations)
            if tape is not None:
                dest = ins[1]
                ids[dest] = tape.record(ins[2], tuple(ids[i] for i in ins[3]), out, ins[4])
        elif kind == "const":
            v = Value.scalar(ins[2])
            slots[ins[1]] = v
            if tape is not None:
                ids[ins[1]] = tape.leaf(v)
        elif kind == "input":
            name = ins[2]
            slots[ins[1]], ref = _fetch_input(inputs, name, tape)
            if tape is not None:
                ids[ins[1]] = ref if ref is not None else tape.input_leaf(name, slots[ins[1]])
        elif kind == "param":
            name = ins[2]
            v = _param_value(params, name)
            slots[ins[1]] = v
            if tape is not None:
                ids[ins[1]] = tape.param_leaf(store if store is not None else params, name, v)
        elif kind == "select":
            _, dest, c, t, e = ins
            out = select(slots[c], slots[t], slots[e])
            slots[dest] = out
            if tape is not None:
                ids[dest] = tape.record("select", (ids[c], ids[t], ids[e]), out, None)
        else:
            raise AssertionError(f"unexpected instruction {kind} in simple block")
    return block.tail[1]


def _fetch_input(inputs, name, tape):
    try:
        v = inputs[name]
    except KeyError:
        raise MissingInput(f"missing input {name!r}") from None
    if tape is not None and hasattr(v, "tape_id"):
        return v.value, v.tape_id
    return Value.of(v), None


# ---------------------------------------------------------------------------
# general engine


class _Act:
    __slots__ = ("slots", "ids", "instrs", "pc", "tail", "consumer", "fn")

    def __init__(self, slots, ids, block, consumer, fn=None):
        self.slots = slots
        self.ids = ids
        self.instrs = block.instrs
        self.pc = 0
        self.tail = block.tail
        self.consumer = consumer
        self.fn = fn


def _run_general(prog, inputs, params, policy, violations,
                 tape=None, store=None):
    top_slots = [None] * prog.slot_count
    top_ids = [None] * prog.slot_count if tape is not None else None
    root = _Act(top_slots, top_ids, prog.block, ("top",))
    stack = [root]
    depth = 0
    result = None

    while stack:
        act = stack[-1]
        slots = act.slots
        ids = act.ids
        instrs = act.instrs
        suspended = False
        while act.pc < len(instrs):
            ins = instrs[act.pc]
            kind = ins[0]
            if kind == "prim":
                out = _exec_prim(ins, slots, policy, violations)
                if tape is not None:
                    ids[ins[1]] = tape.record(ins[2], tuple(ids[i] for i in ins[3]), out, ins[4])
                act.pc += 1
            elif kind == "const":
                v = Value.scalar(ins[2])
                slots[ins[1]] = v
                if tape is not None:
                    ids[ins[1]] = tape.leaf(v)
                act.pc += 1
            elif kind == "input":
                name = ins[2]
                slots[ins[1]], ref = _fetch_input(inputs, name, tape)
                if tape is not None:
                    ids[ins[1]] = ref if ref is not None else tape.input_leaf(name, slots[ins[1]])
                act.pc += 1
            elif kind == "param":
                name = ins[2]
                v = _param_value(params, name)
                slots[ins[1]] = v
                if tape is not None:
                    ids[ins[1]] = tape.param_leaf(store if store is not None else params, name, v)
                act.pc += 1
            elif kind == "select":
                _, dest, c, t, e = ins
                out = select(slots[c], slots[t], slots[e])
                slots[dest] = out
                if tape is not None:
                    ids[dest] = tape.record("select", (ids[c], ids[t], ids[e]), out, None)
                act.pc += 1
            elif kind == "loop":
                _, dest, ir, init_slots, cap_slots = ins
                body_slots = [None] * ir.slot_count
                body_ids = [None] * ir.slot_count if tape is not None else None
                for s, outer in zip(ir.var_slots, init_slots):
                    body_slots[s] = slots[outer]
                    if tape is not None:
                        body_ids[s] = ids[outer]
                for s, outer in zip(ir.capture_slots, cap_slots):
                    body_slots[s] = slots[outer]
                    if tape is not None:
                        body_ids[s] = ids[outer]
                act.pc += 1
                stack.append(_Act(body_slots, body_ids, ir.block, ("loop", ir, act, dest)))
                suspended = True
                break
            elif kind == "call":
                _, dest, fn_ir, arg_slots, cap_slots = ins
                check_depth(fn_ir, depth)
                depth += 1
                f_slots = [None] * fn_ir.slot_count
                f_ids = [None] * fn_ir.slot_count if tape is not None else None
                for s, outer in zip(fn_ir.param_slots, arg_slots):
                    f_slots[s] = slots[outer]
                    if tape is not None:
                        f_ids[s] = ids[outer]
                for s, outer in zip(fn_ir.capture_slots, cap_slots):
                    f_slots[s] = slots[outer]
                    if tape is not None:
                        f_ids[s] = ids[outer]
                act.pc += 1
                stack.append(_Act(f_slots, f_ids, fn_ir.block, ("fnret", act, dest), fn=fn_ir))
                suspended = True
                break
            else:
                raise AssertionError(f"unknown instruction {kind}")
        if suspended:
            continue

        # Instructions exhausted: resolve the tail.
        tail = act.tail
        if tail[0] == "branch":
            _, cond_slot, then_b, else_b = tail
            cond = slots[cond_slot]
            if cond.kind != "scalar" or cond.batched:
                raise EvalError(
                    "recur cannot be guarded by a batched or non-scalar condition"
                )
            chosen = then_b if float(cond.data) != 0.0 else else_b
            act.instrs = chosen.instrs
            act.pc = 0
            act.tail = chosen.tail
            continue  # execute the chosen block

        if tail[0] == "recur":
            kind_c = act.consumer[0]
            if kind_c != "loop":
                raise AssertionError("recur outside loop body")
            _, ir, owner, dest = act.consumer
            new_vals = [slots[s] for s in tail[1]]
            new_ids = [ids[s] for s in tail[1]] if tape is not None else None
            for i, s in enumerate(ir.var_slots):
                slots[s] = new_vals[i]
                if tape is not None:
                    ids[s] = new_ids[i]
            act.instrs = ir.block.instrs
            act.pc = 0
            act.tail = ir.block.tail
            continue

        assert tail[0] == "exit"
        value = slots[tail[1]]
        value_id = ids[tail[1]] if tape is not None else None
        stack.pop()
        consumer = act.consumer
        if consumer[0] == "top":
            result = (value, value_id)
        elif consumer[0] == "fnret":
            depth -= 1
            _, caller, dest = consumer
            caller.slots[dest] = value
            if tape is not None:
                caller.ids[dest] = value_id
        elif consumer[0] == "loop":
            _, ir, owner, dest = consumer
            owner.slots[dest] = value
            if tape is not None:
                owner.ids[dest] = value_id

    return result


# ---------------------------------------------------------------------------
# public entry points


def _check_inputs(prog, inputs):
    for name in prog.input_slots:
        if name not in inputs:
            raise MissingInput(f"missing input {name!r}")


def eval_program(prog, inputs, params=None, policy: SafeDomainPolicy = ERROR_POLICY) -> Value:
    """Evaluate a compiled program on concrete values."""
    _check_inputs(prog, inputs)
    violations = _Violations() if policy.raises else None
    if prog.straight_line:
        slots = [None] * prog.slot_count
        out_slot = _run_block_simple(prog.block, slots, inputs, params, policy, violations)
        out = slots[out_slot]
    else:
        out, _ = _run_general(prog, inputs, params, policy, violations)
    if violations is not None:
        violations.finalize(out, prog.output_slot)
    return out


def run_on_tape(prog, inputs, params, tape, policy: SafeDomainPolicy = ERROR_POLICY,
                store=None):
    """Evaluate while appending records to an existing tape.  Inputs may be
    Values or tape references; returns (value, tape node id)."""
    _check_inputs(prog, inputs)
    violations = _Violations() if policy.raises else None
    if prog.straight_line:
        slots = [None] * prog.slot_count
        ids = [None] * prog.slot_count
        out_slot = _run_block_simple(
            prog.block, slots, inputs, params, policy, violations,
            tape=tape, ids=ids, store=store,
        )
        out, out_id = slots[out_slot], ids[out_slot]
    else:
        out, out_id = _run_general(
            prog, inputs, params, policy, violations, tape=tape, store=store
        )
    if violations is not None:
        violations.finalize(out, prog.output_slot)
    return out, out_id


def eval_with_tape(prog, inputs, params=None, policy: SafeDomainPolicy = ERROR_POLICY):
    """Evaluate and return (value, tape) ready for a backward pass."""
    from .autodiff import Tape

    tape = Tape()
    out, out_id = run_on_tape(prog, inputs, params, tape, policy)
    tape.output_id = out_id
    return out, tape
