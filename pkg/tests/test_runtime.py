import numpy as np
import pytest

from schemegrad.errors import DomainViolation, ShapeMismatch, SingularMatrix
from schemegrad.ops import PRIM_NAMES
from schemegrad.runtime import (
    ERROR_POLICY,
    PROPAGATE_POLICY,
    apply_primitive,
    pow_immediate,
    select,
)
from schemegrad.values import Value, bit_equal, stack_batch


def S(x):
    return Value.scalar(x)


def V(*xs):
    return Value.vector(np.array(xs, dtype=float))


def M(rows):
    return Value.matrix(np.array(rows, dtype=float))


def test_trivial_examples():
    assert apply_primitive("dot", [V(1, 2, 3), V(4, 5, 6)]).item() == 32.0
    assert np.array_equal(apply_primitive("cross", [V(1, 0, 0), V(0, 1, 0)]).data,
                          [0.0, 0.0, 1.0])
    eye3 = apply_primitive("eye", [S(3)])
    v = V(1.0, 2.0, 3.0)
    assert bit_equal(apply_primitive("matvec", [eye3, v]), v)
    assert apply_primitive("norm", [V(3, 4)]).item() == 5.0
    assert apply_primitive("pow", [S(2), S(10)]).item() == 1024.0
    assert apply_primitive("+", [S(1), S(2)]).item() == 3.0


def test_outer_shape_table_row():
    out = apply_primitive("outer", [V(1, 2), V(3, 4, 5)])
    assert out.kind == "matrix"
    assert out.data.shape == (2, 3)
    assert np.array_equal(out.data, [[3, 4, 5], [6, 8, 10]])


def test_comparisons_and_logic_return_01():
    assert apply_primitive("<", [S(1), S(2)]).item() == 1.0
    assert apply_primitive(">=", [S(1), S(2)]).item() == 0.0
    assert apply_primitive("and", [S(2), S(3)]).item() == 1.0
    assert apply_primitive("or", [S(0), S(0)]).item() == 0.0
    assert apply_primitive("not", [S(0)]).item() == 1.0


def test_modulo_floored_remainder_truncated():
    assert apply_primitive("modulo", [S(-7), S(3)]).item() == 2.0
    assert apply_primitive("remainder", [S(-7), S(3)]).item() == -1.0
    assert apply_primitive("modulo", [S(7), S(-3)]).item() == -2.0
    assert apply_primitive("remainder", [S(7), S(-3)]).item() == 1.0


def test_unary_minus_is_zero_minus_x():
    # matches the compiled lowering bit for bit, including signed zero
    out = apply_primitive("-", [S(0.0)])
    assert np.signbit(out.data) == np.signbit(0.0 - 0.0)


def test_variadic_folds():
    assert apply_primitive("+", [S(1), S(2), S(3)]).item() == 6.0
    assert apply_primitive("-", [S(10), S(3), S(2)]).item() == 5.0
    assert apply_primitive("*", [S(2), S(3), S(4)]).item() == 24.0
    assert apply_primitive("/", [S(24), S(3), S(2)]).item() == 4.0
    assert apply_primitive("min", [S(3), S(1), S(2)]).item() == 1.0
    assert apply_primitive("max", [S(3), S(5), S(2)]).item() == 5.0


def test_select_elementwise_batched():
    cond = Value.batch_scalars(np.array([1.0, 0.0]))
    then = Value.batch_scalars(np.array([10.0, 10.0]))
    orelse = Value.batch_scalars(np.array([20.0, 20.0]))
    out = select(cond, then, orelse)
    assert np.array_equal(out.data, [10.0, 20.0])


def test_scale_and_vsum_and_vlen():
    assert np.array_equal(apply_primitive("scale", [S(2), V(1, 2)]).data, [2.0, 4.0])
    assert apply_primitive("vsum", [V(1, 2, 3)]).item() == 6.0
    assert apply_primitive("vlen", [V(1, 2, 3, 4)]).item() == 4.0


def test_normalize_unit_norm():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = Value.vector(rng.uniform(-3, 3, size=4))
        if float(apply_primitive("norm", [v]).data) < 1e-6:
            continue
        n = apply_primitive("norm", [apply_primitive("normalize", [v])])
        assert abs(n.item() - 1.0) < 1e-12


def test_det_of_product_property():
    rng = np.random.default_rng(1)
    for _ in range(30):
        A = rng.uniform(-1, 1, size=(3, 3)) + np.eye(3)
        B = rng.uniform(-1, 1, size=(3, 3)) + np.eye(3)
        if np.linalg.cond(A) > 1e3 or np.linalg.cond(B) > 1e3:
            continue
        ab = apply_primitive("matmul", [M(A), M(B)])
        d_ab = apply_primitive("det", [ab]).item()
        d_a = apply_primitive("det", [M(A)]).item()
        d_b = apply_primitive("det", [M(B)]).item()
        assert abs(d_ab - d_a * d_b) <= 1e-9 * max(1.0, abs(d_a * d_b))


def test_inv_is_inverse():
    rng = np.random.default_rng(2)
    A = rng.uniform(-1, 1, size=(3, 3)) + 3 * np.eye(3)
    inv = apply_primitive("inv", [M(A)])
    prod = apply_primitive("matmul", [M(A), inv])
    assert np.allclose(prod.data, np.eye(3), atol=1e-12)


def test_singular_matrix_policy():
    singular = M([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrix):
        apply_primitive("inv", [singular], ERROR_POLICY)
    out = apply_primitive("inv", [singular], PROPAGATE_POLICY)
    assert np.isnan(out.data).all()


def test_domain_violations():
    with pytest.raises(DomainViolation):
        apply_primitive("/", [S(1), S(0)], ERROR_POLICY)
    with pytest.raises(DomainViolation):
        apply_primitive("sqrt", [S(-1)], ERROR_POLICY)
    with pytest.raises(DomainViolation):
        apply_primitive("log", [S(0)], ERROR_POLICY)
    with pytest.raises(DomainViolation):
        apply_primitive("pow", [S(-2), S(0.5)], ERROR_POLICY)
    assert np.isnan(apply_primitive("sqrt", [S(-1)], PROPAGATE_POLICY).data)
    assert np.isinf(apply_primitive("/", [S(1), S(0)], PROPAGATE_POLICY).data)


def test_shape_mismatches():
    with pytest.raises(ShapeMismatch):
        apply_primitive("dot", [V(1, 2), V(1, 2, 3)])
    with pytest.raises(ShapeMismatch):
        apply_primitive("cross", [V(1, 2), V(3, 4)])
    with pytest.raises(ShapeMismatch):
        apply_primitive("matvec", [M([[1, 2]]), V(1, 2, 3)])
    with pytest.raises(ShapeMismatch):
        apply_primitive("+", [V(1, 2), V(1, 2, 3)])
    with pytest.raises(ShapeMismatch):
        batched2 = Value.batch_scalars(np.ones(2))
        batched3 = Value.batch_scalars(np.ones(3))
        apply_primitive("+", [batched2, batched3])


def test_scalar_tensor_promotion():
    out = apply_primitive("+", [V(1, 2, 3), S(10)])
    assert np.array_equal(out.data, [11.0, 12.0, 13.0])
    out = apply_primitive("*", [S(2), M([[1, 2], [3, 4]])])
    assert np.array_equal(out.data, [[2, 4], [6, 8]])


def test_batched_scalar_against_batched_vector():
    s = Value.batch_scalars(np.array([2.0, 3.0]))
    v = Value.batch_vectors(np.array([[1.0, 1.0], [1.0, 1.0]]))
    out = apply_primitive("*", [s, v])
    assert np.array_equal(out.data, [[2, 2], [3, 3]])


# ---------------------------------------------------------------------------
# batch consistency: every primitive, batched == stacked unbatched, bitwise


def _args_for(op, rng):
    two_vec = [V(*rng.uniform(0.5, 2.0, 3)), V(*rng.uniform(0.5, 2.0, 3))]
    spd = rng.uniform(-1, 1, (3, 3))
    spd = spd @ spd.T + 3 * np.eye(3)
    cases = {
        "+": [S(rng.uniform(0.5, 2)), S(rng.uniform(0.5, 2))],
        "-": [S(rng.uniform(0.5, 2)), S(rng.uniform(0.5, 2))],
        "*": [S(rng.uniform(0.5, 2)), S(rng.uniform(0.5, 2))],
        "/": [S(rng.uniform(0.5, 2)), S(rng.uniform(0.5, 2))],
        "pow": [S(rng.uniform(0.5, 2)), S(rng.uniform(-2, 2))],
        "modulo": [S(rng.uniform(-5, 5)), S(rng.uniform(1, 3))],
        "remainder": [S(rng.uniform(-5, 5)), S(rng.uniform(1, 3))],
        "abs": [S(rng.uniform(-2, 2))],
        "min": [S(rng.uniform(-2, 2)), S(rng.uniform(-2, 2))],
        "max": [S(rng.uniform(-2, 2)), S(rng.uniform(-2, 2))],
        "sin": [S(rng.uniform(-3, 3))],
        "cos": [S(rng.uniform(-3, 3))],
        "exp": [S(rng.uniform(-2, 2))],
        "sqrt": [S(rng.uniform(0.1, 4))],
        "log": [S(rng.uniform(0.1, 4))],
        "=": [S(rng.integers(0, 2)), S(rng.integers(0, 2))],
        "<": [S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        ">": [S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        "<=": [S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        ">=": [S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        "and": [S(rng.integers(0, 2)), S(rng.integers(0, 2))],
        "or": [S(rng.integers(0, 2)), S(rng.integers(0, 2))],
        "not": [S(rng.integers(0, 2))],
        "if": [S(rng.integers(0, 2)), S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        "vec": [S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1)), S(rng.uniform(-1, 1))],
        "ref": None,  # handled separately (static index)
        "dot": two_vec,
        "cross": two_vec,
        "norm": [two_vec[0]],
        "normalize": [two_vec[0]],
        "vsum": [two_vec[0]],
        "vlen": None,  # structural constant
        "scale": [S(rng.uniform(-2, 2)), two_vec[0]],
        "mat": two_vec,
        "matmul": [M(spd), M(rng.uniform(-1, 1, (3, 3)))],
        "matvec": [M(spd), two_vec[0]],
        "transpose": [M(spd)],
        "trace": [M(spd)],
        "det": [M(spd)],
        "inv": [M(spd)],
        "outer": two_vec,
        "eye": None,
        "zeros": None,
        "ones": None,
    }
    return cases[op]


@pytest.mark.parametrize("batch", [1, 2, 7])
def test_batch_consistency_all_primitives(batch):
    rng = np.random.default_rng(100 + batch)
    skipped = {"ref", "vlen", "eye", "zeros", "ones"}  # static/structural ops
    for op in sorted(PRIM_NAMES | {"if"}):
        if op in skipped:
            continue
        per_point = [_args_for(op, rng) for _ in range(batch)]
        n_args = len(per_point[0])
        batched_args = [
            stack_batch([per_point[b][i] for b in range(batch)])
            for i in range(n_args)
        ]
        batched = apply_primitive(op, batched_args, PROPAGATE_POLICY)
        singles = [apply_primitive(op, per_point[b], PROPAGATE_POLICY)
                   for b in range(batch)]
        stacked = stack_batch(singles)
        assert bit_equal(batched, stacked), f"{op} diverges at batch {batch}"


def test_batch_consistency_ref():
    rng = np.random.default_rng(5)
    idx = S(1)
    vecs = [V(*rng.uniform(-2, 2, 4)) for _ in range(7)]
    batched = apply_primitive("ref", [stack_batch(vecs), idx])
    singles = stack_batch([apply_primitive("ref", [v, idx]) for v in vecs])
    assert bit_equal(batched, singles)


def test_pow_immediate_matches_power():
    rng = np.random.default_rng(6)
    x = Value.batch_scalars(rng.uniform(0.5, 2.0, 16))
    assert bit_equal(pow_immediate(x, 2.0, PROPAGATE_POLICY),
                     apply_primitive("pow", [x, S(2.0)], PROPAGATE_POLICY))


def test_constructors_and_constants():
    assert np.array_equal(apply_primitive("zeros", [S(3)]).data, np.zeros(3))
    assert np.array_equal(apply_primitive("ones", [S(2), S(3)]).data, np.ones((2, 3)))
    assert np.array_equal(apply_primitive("eye", [S(2)]).data, np.eye(2))
    with pytest.raises(ShapeMismatch):
        apply_primitive("eye", [S(2.5)])


def test_shape_table_conformance():
    """Input/output shape rules for every vector/matrix signature, checked
    unbatched and with a leading batch dimension."""
    B, n, m = 4, 3, 2
    rng = np.random.default_rng(9)

    def batched(shape):
        return Value(rng.uniform(0.5, 1.5, (B,) + shape),
                     {0: "scalar", 1: "vector", 2: "matrix"}[len(shape)], batched=True)

    def plain(shape):
        return Value(rng.uniform(0.5, 1.5, shape),
                     {0: "scalar", 1: "vector", 2: "matrix"}[len(shape)])

    cases = [
        # (op, unbatched arg shapes, expected core output shape, output kind)
        ("vec", [(), (), ()], (3,), "vector"),
        ("dot", [(n,), (n,)], (), "scalar"),
        ("cross", [(3,), (3,)], (3,), "vector"),
        ("norm", [(n,)], (), "scalar"),
        ("normalize", [(n,)], (n,), "vector"),
        ("vsum", [(n,)], (), "scalar"),
        ("scale", [(), (n,)], (n,), "vector"),
        ("matvec", [(n, m), (m,)], (n,), "vector"),
        ("matmul", [(n, m), (m, n)], (n, n), "matrix"),
        ("transpose", [(n, m)], (m, n), "matrix"),
        ("trace", [(n, n)], (), "scalar"),
        ("det", [(n, n)], (), "scalar"),
        ("inv", [(n, n)], (n, n), "matrix"),
        ("outer", [(n,), (m,)], (n, m), "matrix"),
    ]
    for op, arg_shapes, out_core, out_kind in cases:
        out = apply_primitive(op, [plain(s) for s in arg_shapes], PROPAGATE_POLICY)
        assert (out.core_shape, out.kind, out.batched) == (out_core, out_kind, False), op
        out = apply_primitive(op, [batched(s) for s in arg_shapes], PROPAGATE_POLICY)
        assert (out.core_shape, out.kind, out.batched) == (out_core, out_kind, True), op
