"""Forward implementations of the primitive operations.

Reductions (dot, norm, vsum, trace, matvec, matmul, det) accumulate
left-to-right over the trailing axes so that a batched evaluation is
bit-identical to stacking unbatched evaluations regardless of how numpy
would otherwise reassociate sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainViolation, ShapeMismatch, SingularMatrix
from .values import Value

_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class SafeDomainPolicy:
    """How partial operations behave outside their domain.

    ``error`` raises DomainViolation/SingularMatrix; ``propagate_nan``
    lets IEEE non-finite values flow through.
    """

    mode: str = "error"

    def __post_init__(self):
        if self.mode not in ("error", "propagate_nan"):
            raise ValueError(f"unknown safe-domain mode {self.mode!r}")

    @property
    def raises(self) -> bool:
        return self.mode == "error"


ERROR_POLICY = SafeDomainPolicy("error")
PROPAGATE_POLICY = SafeDomainPolicy("propagate_nan")

# Ops whose domain is partial; the compiler records their instruction
# indices so evaluation failures can point at the offending instruction.
PARTIAL_OPS = frozenset(["/", "sqrt", "log", "pow", "normalize", "inv", "det"])


def _violation(policy: SafeDomainPolicy, kind: str, mask) -> None:
    if policy.raises:
        where = None
        bad = np.nonzero(np.asarray(mask).ravel())[0]
        if bad.size:
            where = int(bad[0])
        raise DomainViolation(kind, where=where)


# ---------------------------------------------------------------------------
# shape alignment


def _align_elementwise(args: list[Value], op: str):
    """Return (arrays, kind, batched) for an elementwise application.

    Scalars broadcast against vectors/matrices; unbatched values broadcast
    against batched ones.  Anything else must match exactly.
    """
    kind = "scalar"
    core = None
    batch = None
    for a in args:
        if a.kind != "scalar":
            if kind != "scalar" and a.kind != kind:
                raise ShapeMismatch(f"{op}: mixed kinds {kind}/{a.kind}")
            if core is not None and a.core_shape != core:
                raise ShapeMismatch(
                    f"{op}: core shapes {core} vs {a.core_shape} differ"
                )
            kind = a.kind
            core = a.core_shape
        if a.batched:
            if batch is not None and a.batch_size != batch:
                raise ShapeMismatch(
                    f"{op}: batch sizes {batch} vs {a.batch_size} differ"
                )
            batch = a.batch_size
    batched = batch is not None
    arrays = []
    for a in args:
        arr = a.data
        if batched and a.batched and a.kind == "scalar" and kind != "scalar":
            # batched scalar against batched tensor: (B,) -> (B, 1[, 1])
            arr = arr.reshape((arr.shape[0],) + (1,) * len(core))
        arrays.append(arr)
    return arrays, kind, batched


def _require_kind(a: Value, kind: str, op: str) -> None:
    if a.kind != kind:
        raise ShapeMismatch(f"{op}: expected {kind}, got {a.kind}")


def _batch_of(args: list[Value], op: str) -> int | None:
    batch = None
    for a in args:
        if a.batched:
            if batch is not None and a.batch_size != batch:
                raise ShapeMismatch(f"{op}: batch sizes differ")
            batch = a.batch_size
    return batch


# ---------------------------------------------------------------------------
# ordered reductions


def ordered_sum_last(arr: np.ndarray) -> np.ndarray:
    out = arr[..., 0]
    for i in range(1, arr.shape[-1]):
        out = out + arr[..., i]
    return out


def ordered_sum_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    arr = np.moveaxis(arr, axis, -1)
    return ordered_sum_last(arr)


# ---------------------------------------------------------------------------
# scalar / elementwise ops


def _fold(arrs, fn):
    out = arrs[0]
    for a in arrs[1:]:
        out = fn(out, a)
    return out


def _ew(args, op, compute, policy=None):
    arrays, kind, batched = _align_elementwise(args, op)
    return Value(compute(arrays), kind, batched)


def _op_add(args, policy):
    return _ew(args, "+", lambda xs: _fold(xs, np.add))


def _op_sub(args, policy):
    if len(args) == 1:
        zero = Value.scalar(0.0)
        return _ew([zero, args[0]], "-", lambda xs: np.subtract(xs[0], xs[1]))
    return _ew(args, "-", lambda xs: _fold(xs, np.subtract))


def _op_mul(args, policy):
    return _ew(args, "*", lambda xs: _fold(xs, np.multiply))


def _op_div(args, policy):
    arrays, kind, batched = _align_elementwise(args, "/")
    out = arrays[0]
    for a in arrays[1:]:
        if policy.raises and np.any(a == 0.0):
            _violation(policy, "division by zero", a == 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.divide(out, a)
    return Value(out, kind, batched)


def _op_pow(args, policy):
    arrays, kind, batched = _align_elementwise(args, "pow")
    base, ex = np.broadcast_arrays(*arrays)
    if policy.raises:
        frac = (base < 0.0) & (ex != np.trunc(ex))
        if np.any(frac):
            _violation(policy, "pow of negative base with non-integer exponent", frac)
        zneg = (base == 0.0) & (ex < 0.0)
        if np.any(zneg):
            _violation(policy, "division by zero", zneg)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Value(np.power(arrays[0], arrays[1]), kind, batched)


def pow_immediate(base: Value, exponent: float, policy: SafeDomainPolicy) -> Value:
    """pow with a compile-time constant exponent (no exponent operand)."""
    if policy.raises:
        if exponent != np.trunc(exponent) and np.any(base.data < 0.0):
            _violation(policy, "pow of negative base with non-integer exponent",
                       base.data < 0.0)
        if exponent < 0.0 and np.any(base.data == 0.0):
            _violation(policy, "division by zero", base.data == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Value(np.power(base.data, exponent), base.kind, base.batched)


def _op_modulo(args, policy):
    arrays, kind, batched = _align_elementwise(args, "modulo")
    if policy.raises and np.any(arrays[1] == 0.0):
        _violation(policy, "division by zero", arrays[1] == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Value(np.mod(arrays[0], arrays[1]), kind, batched)


def _op_remainder(args, policy):
    arrays, kind, batched = _align_elementwise(args, "remainder")
    if policy.raises and np.any(arrays[1] == 0.0):
        _violation(policy, "division by zero", arrays[1] == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Value(np.fmod(arrays[0], arrays[1]), kind, batched)


def _op_abs(args, policy):
    return _ew(args, "abs", lambda xs: np.abs(xs[0]))


def _op_min(args, policy):
    return _ew(args, "min", lambda xs: _fold(xs, np.minimum))


def _op_max(args, policy):
    return _ew(args, "max", lambda xs: _fold(xs, np.maximum))


def _op_sin(args, policy):
    return _ew(args, "sin", lambda xs: np.sin(xs[0]))


def _op_cos(args, policy):
    return _ew(args, "cos", lambda xs: np.cos(xs[0]))


def _op_exp(args, policy):
    return _ew(args, "exp", lambda xs: np.exp(xs[0]))


def _op_sqrt(args, policy):
    if policy.raises and np.any(args[0].data < 0.0):
        _violation(policy, "sqrt of negative value", args[0].data < 0.0)
    with np.errstate(invalid="ignore"):
        return _ew(args, "sqrt", lambda xs: np.sqrt(xs[0]))


def _op_log(args, policy):
    if policy.raises and np.any(args[0].data <= 0.0):
        _violation(policy, "log of non-positive value", args[0].data <= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _ew(args, "log", lambda xs: np.log(xs[0]))


def _bool(arr) -> np.ndarray:
    return arr.astype(np.float64)


def _op_eq(args, policy):
    return _ew(args, "=", lambda xs: _bool(np.equal(xs[0], xs[1])))


def _op_lt(args, policy):
    return _ew(args, "<", lambda xs: _bool(np.less(xs[0], xs[1])))


def _op_gt(args, policy):
    return _ew(args, ">", lambda xs: _bool(np.greater(xs[0], xs[1])))


def _op_le(args, policy):
    return _ew(args, "<=", lambda xs: _bool(np.less_equal(xs[0], xs[1])))


def _op_ge(args, policy):
    return _ew(args, ">=", lambda xs: _bool(np.greater_equal(xs[0], xs[1])))


def _op_and(args, policy):
    return _ew(args, "and", lambda xs: _bool(_fold([x != 0.0 for x in xs], np.logical_and)))


def _op_or(args, policy):
    return _ew(args, "or", lambda xs: _bool(_fold([x != 0.0 for x in xs], np.logical_or)))


def _op_not(args, policy):
    return _ew(args, "not", lambda xs: _bool(np.equal(xs[0], 0.0)))


def select(cond: Value, then: Value, orelse: Value) -> Value:
    """Elementwise branch blend: picks `then` where cond is non-zero."""
    arrays, kind, batched = _align_elementwise([cond, then, orelse], "if")
    return Value(np.where(arrays[0] != 0.0, arrays[1], arrays[2]), kind, batched)


def _op_select(args, policy):
    return select(args[0], args[1], args[2])


# ---------------------------------------------------------------------------
# vector ops


def _op_vec(args, policy):
    batch = _batch_of(args, "vec")
    for a in args:
        _require_kind(a, "scalar", "vec")
    if batch is None:
        return Value(np.stack([a.data for a in args], axis=-1), "vector")
    parts = [
        a.data if a.batched else np.broadcast_to(a.data, (batch,))
        for a in args
    ]
    return Value(np.stack(parts, axis=-1), "vector", batched=True)


def _static_index(a: Value, op: str) -> int:
    if a.kind != "scalar" or a.batched:
        raise ShapeMismatch(f"{op}: index must be an unbatched scalar")
    idx = float(a.data)
    if idx != int(idx):
        raise ShapeMismatch(f"{op}: index {idx} is not an integer")
    return int(idx)


def _op_ref(args, policy):
    v, i = args
    _require_kind(v, "vector", "ref")
    idx = _static_index(i, "ref")
    if not 0 <= idx < v.core_shape[-1]:
        raise ShapeMismatch(f"ref: index {idx} out of range for length {v.core_shape[-1]}")
    return Value(v.data[..., idx], "scalar", v.batched)


def _op_dot(args, policy):
    a, b = args
    _require_kind(a, "vector", "dot")
    _require_kind(b, "vector", "dot")
    if a.core_shape != b.core_shape:
        raise ShapeMismatch(f"dot: lengths {a.core_shape} vs {b.core_shape}")
    _batch_of(args, "dot")
    return Value(ordered_sum_last(a.data * b.data), "scalar",
                 a.batched or b.batched)


def _op_cross(args, policy):
    a, b = args
    for x in (a, b):
        _require_kind(x, "vector", "cross")
        if x.core_shape != (3,):
            raise ShapeMismatch("cross: vectors must have length 3")
    _batch_of(args, "cross")
    av, bv = a.data, b.data
    out = np.stack(
        [
            av[..., 1] * bv[..., 2] - av[..., 2] * bv[..., 1],
            av[..., 2] * bv[..., 0] - av[..., 0] * bv[..., 2],
            av[..., 0] * bv[..., 1] - av[..., 1] * bv[..., 0],
        ],
        axis=-1,
    )
    return Value(out, "vector", a.batched or b.batched)


def _op_norm(args, policy):
    v = args[0]
    _require_kind(v, "vector", "norm")
    return Value(np.sqrt(ordered_sum_last(v.data * v.data)), "scalar", v.batched)


def _op_normalize(args, policy):
    v = args[0]
    _require_kind(v, "vector", "normalize")
    n = np.sqrt(ordered_sum_last(v.data * v.data))
    if policy.raises and np.any(n == 0.0):
        _violation(policy, "normalize of zero vector", n == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Value(v.data / n[..., None], "vector", v.batched)


def _op_vsum(args, policy):
    v = args[0]
    _require_kind(v, "vector", "vsum")
    return Value(ordered_sum_last(v.data), "scalar", v.batched)


def _op_vlen(args, policy):
    v = args[0]
    _require_kind(v, "vector", "vlen")
    return Value.scalar(float(v.core_shape[-1]))


def _op_scale(args, policy):
    s, v = args
    _require_kind(s, "scalar", "scale")
    if v.kind not in ("vector", "matrix"):
        raise ShapeMismatch("scale: second argument must be a vector or matrix")
    _batch_of(args, "scale")
    sv = s.data
    if s.batched:
        sv = sv.reshape((sv.shape[0],) + (1,) * len(v.core_shape))
    return Value(sv * v.data, v.kind, s.batched or v.batched)


# ---------------------------------------------------------------------------
# matrix ops


def _op_mat(args, policy):
    batch = _batch_of(args, "mat")
    n = args[0].core_shape
    for a in args:
        _require_kind(a, "vector", "mat")
        if a.core_shape != n:
            raise ShapeMismatch("mat: rows have differing lengths")
    if batch is None:
        return Value(np.stack([a.data for a in args], axis=-2), "matrix")
    parts = [
        a.data if a.batched else np.broadcast_to(a.data, (batch,) + a.core_shape)
        for a in args
    ]
    return Value(np.stack(parts, axis=-2), "matrix", batched=True)


def _op_matmul(args, policy):
    a, b = args
    _require_kind(a, "matrix", "matmul")
    _require_kind(b, "matrix", "matmul")
    if a.core_shape[-1] != b.core_shape[-2]:
        raise ShapeMismatch(
            f"matmul: inner dims {a.core_shape} x {b.core_shape} do not agree"
        )
    _batch_of(args, "matmul")
    prod = a.data[..., :, :, None] * b.data[..., None, :, :]
    return Value(ordered_sum_axis(prod, -2), "matrix", a.batched or b.batched)


def _op_matvec(args, policy):
    m, v = args
    _require_kind(m, "matrix", "matvec")
    _require_kind(v, "vector", "matvec")
    if m.core_shape[-1] != v.core_shape[-1]:
        raise ShapeMismatch(
            f"matvec: {m.core_shape} x {v.core_shape} do not agree"
        )
    _batch_of(args, "matvec")
    prod = m.data * v.data[..., None, :]
    return Value(ordered_sum_last(prod), "vector", m.batched or v.batched)


def _op_transpose(args, policy):
    m = args[0]
    _require_kind(m, "matrix", "transpose")
    return Value(np.swapaxes(m.data, -1, -2), "matrix", m.batched)


def _op_trace(args, policy):
    m = args[0]
    _require_kind(m, "matrix", "trace")
    if m.core_shape[-1] != m.core_shape[-2]:
        raise ShapeMismatch("trace: matrix must be square")
    diag = np.diagonal(m.data, axis1=-2, axis2=-1)
    return Value(ordered_sum_last(diag), "scalar", m.batched)


def _lu_factor(m: np.ndarray):
    """LU with partial pivoting on one square matrix.

    Returns (lu, perm, sign, singular).  Row norms use the infinity norm;
    a pivot below 1e-12 times the largest row norm flags singularity.
    """
    n = m.shape[0]
    lu = m.copy()
    perm = np.arange(n)
    sign = 1.0
    row_scale = np.abs(m).max(axis=1).max() if n else 0.0
    threshold = _SINGULAR_RTOL * row_scale
    singular = False
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= threshold:
            singular = True
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        piv = lu[k, k]
        if piv != 0.0:
            for i in range(k + 1, n):
                f = lu[i, k] / piv
                lu[i, k] = f
                lu[i, k + 1:] = lu[i, k + 1:] - f * lu[k, k + 1:]
    return lu, perm, sign, singular


def _det_one(m: np.ndarray, policy: SafeDomainPolicy) -> float:
    lu, _, sign, singular = _lu_factor(m)
    if singular and policy.raises:
        raise SingularMatrix("det: matrix is numerically singular")
    d = sign
    for k in range(m.shape[0]):
        d = d * lu[k, k]
    return d


def _inv_one(m: np.ndarray, policy: SafeDomainPolicy) -> np.ndarray:
    n = m.shape[0]
    lu, perm, _, singular = _lu_factor(m)
    if singular:
        if policy.raises:
            raise SingularMatrix("inv: matrix is numerically singular")
        return np.full_like(m, np.nan)
    inv = np.empty_like(m)
    # Forward/back substitution, one unit column at a time.
    for col in range(n):
        e = np.zeros(n)
        e[col] = 1.0
        e = e[perm]
        y = np.zeros(n)
        for i in range(n):
            y[i] = e[i]
            for j in range(i):
                y[i] -= lu[i, j] * y[j]
        x = np.zeros(n)
        for i in range(n - 1, -1, -1):
            x[i] = y[i]
            for j in range(i + 1, n):
                x[i] -= lu[i, j] * x[j]
            x[i] /= lu[i, i]
        inv[:, col] = x
    return inv


def _op_det(args, policy):
    m = args[0]
    _require_kind(m, "matrix", "det")
    if m.core_shape[-1] != m.core_shape[-2]:
        raise ShapeMismatch("det: matrix must be square")
    if not m.batched:
        return Value.scalar(_det_one(m.data, policy))
    out = np.empty(m.data.shape[0])
    for i in range(m.data.shape[0]):
        out[i] = _det_one(m.data[i], policy)
    return Value(out, "scalar", batched=True)


def _op_inv(args, policy):
    m = args[0]
    _require_kind(m, "matrix", "inv")
    if m.core_shape[-1] != m.core_shape[-2]:
        raise ShapeMismatch("inv: matrix must be square")
    if not m.batched:
        return Value(_inv_one(m.data, policy), "matrix")
    out = np.empty_like(m.data)
    for i in range(m.data.shape[0]):
        out[i] = _inv_one(m.data[i], policy)
    return Value(out, "matrix", batched=True)


def _op_outer(args, policy):
    a, b = args
    _require_kind(a, "vector", "outer")
    _require_kind(b, "vector", "outer")
    _batch_of(args, "outer")
    out = a.data[..., :, None] * b.data[..., None, :]
    return Value(out, "matrix", a.batched or b.batched)


def _op_eye(args, policy):
    n = _static_index(args[0], "eye")
    if n <= 0:
        raise ShapeMismatch("eye: size must be positive")
    return Value(np.eye(n), "matrix")


def _op_zeros(args, policy):
    dims = [_static_index(a, "zeros") for a in args]
    if any(d <= 0 for d in dims):
        raise ShapeMismatch("zeros: sizes must be positive")
    if len(dims) == 1:
        return Value(np.zeros(dims[0]), "vector")
    return Value(np.zeros((dims[0], dims[1])), "matrix")


def _op_ones(args, policy):
    dims = [_static_index(a, "ones") for a in args]
    if any(d <= 0 for d in dims):
        raise ShapeMismatch("ones: sizes must be positive")
    if len(dims) == 1:
        return Value(np.ones(dims[0]), "vector")
    return Value(np.ones((dims[0], dims[1])), "matrix")


_IMPLS = {
    "+": _op_add,
    "-": _op_sub,
    "*": _op_mul,
    "/": _op_div,
    "pow": _op_pow,
    "modulo": _op_modulo,
    "remainder": _op_remainder,
    "abs": _op_abs,
    "min": _op_min,
    "max": _op_max,
    "sin": _op_sin,
    "cos": _op_cos,
    "exp": _op_exp,
    "sqrt": _op_sqrt,
    "log": _op_log,
    "=": _op_eq,
    "<": _op_lt,
    ">": _op_gt,
    "<=": _op_le,
    ">=": _op_ge,
    "and": _op_and,
    "or": _op_or,
    "not": _op_not,
    "if": _op_select,
    "vec": _op_vec,
    "ref": _op_ref,
    "dot": _op_dot,
    "cross": _op_cross,
    "norm": _op_norm,
    "normalize": _op_normalize,
    "vsum": _op_vsum,
    "vlen": _op_vlen,
    "scale": _op_scale,
    "mat": _op_mat,
    "matmul": _op_matmul,
    "matvec": _op_matvec,
    "transpose": _op_transpose,
    "trace": _op_trace,
    "det": _op_det,
    "inv": _op_inv,
    "outer": _op_outer,
    "eye": _op_eye,
    "zeros": _op_zeros,
    "ones": _op_ones,
}


def apply_primitive(op: str, args: list[Value], policy: SafeDomainPolicy = ERROR_POLICY) -> Value:
    """Evaluate one primitive application on already-computed values."""
    try:
        impl = _IMPLS[op]
    except KeyError:
        raise ShapeMismatch(f"not an applicable primitive: {op!r}") from None
    return impl(args, policy)
