"""Minimal dense network built on the tape: fused linear layers, relu/tanh,
an MSE record, and the hybrid/composition forward patterns."""

from __future__ import annotations

import numpy as np

from .autodiff import ParameterStore, TapeContext, TapeRef, register_vjp
from .errors import ShapeMismatch
from .values import Value


# ---------------------------------------------------------------------------
# tape records


def _linear_forward(x: Value, w: Value, b: Value) -> Value:
    out = np.matmul(x.data, w.data) + b.data
    return Value(out, "vector", x.batched)


def _relu_forward(x: Value) -> Value:
    return Value(np.maximum(x.data, 0.0), x.kind, x.batched)


def _tanh_forward(x: Value) -> Value:
    return Value(np.tanh(x.data), x.kind, x.batched)


def _mse_forward(pred: Value, target: Value) -> Value:
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(
            f"mse: prediction shape {pred.data.shape} != target shape {target.data.shape}"
        )
    d = pred.data - target.data
    return Value.scalar(np.mean(d * d))


def forward_record(op: str, vals: list[Value]) -> Value:
    if op == "linear":
        return _linear_forward(*vals)
    if op == "relu":
        return _relu_forward(*vals)
    if op == "tanh":
        return _tanh_forward(*vals)
    if op == "mse":
        return _mse_forward(*vals)
    raise ValueError(f"unknown record {op!r}")


def _vjp_linear(g, args, out, aux):
    x, w, b = args
    if x.batched:
        gx = np.matmul(g, w.data.T)
        gw = np.matmul(x.data.T, g)
        gb = g.sum(axis=0)
    else:
        gx = np.matmul(g, w.data.T)
        gw = np.outer(x.data, g)
        gb = g
    return [gx, gw, gb]


def _vjp_relu(g, args, out, aux):
    return [g * (args[0].data > 0.0)]


def _vjp_tanh(g, args, out, aux):
    return [g * (1.0 - out.data * out.data)]


def _vjp_mse(g, args, out, aux):
    pred, target = args
    n = pred.data.size
    d = 2.0 * (pred.data - target.data) / n
    return [g * d, -(g * d)]


register_vjp("linear", _vjp_linear)
register_vjp("relu", _vjp_relu)
register_vjp("tanh", _vjp_tanh)
register_vjp("mse", _vjp_mse)


def mse_record(ctx: TapeContext, pred: TapeRef, target) -> TapeRef:
    tref = ctx.lift(target if isinstance(target, (TapeRef, Value)) else Value.of(target))
    value = _mse_forward(pred.value, tref.value)
    nid = ctx.tape.record("mse", (pred.tape_id, tref.tape_id), value)
    return TapeRef(nid, value)


# ---------------------------------------------------------------------------
# the model


class MlpModel:
    """Dense network; weights live in a ParameterStore as w0/b0, w1/b1, ...

    relu layers use Kaiming-uniform fan-in init, tanh layers Xavier-uniform;
    biases start at zero.
    """

    def __init__(self, layer_sizes, activation: str = "relu", rng=None, prefix: str = "",
                 zero_output: bool = False):
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        self.activation = activation
        self.prefix = prefix
        self.store = ParameterStore()
        last = len(self.layer_sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes, self.layer_sizes[1:])):
            if activation == "relu":
                bound = np.sqrt(6.0 / n_in)
            else:
                bound = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
            if zero_output and i == last:
                # correction heads start as a pure bias so the known term
                # carries the model until a residual is actually needed
                w = np.zeros((n_in, n_out))
            self.store.add(f"{prefix}w{i}", Value.matrix(w))
            self.store.add(f"{prefix}b{i}", Value.vector(np.zeros(n_out)))

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def param_count(self) -> int:
        return sum(
            a * b + b for a, b in zip(self.layer_sizes, self.layer_sizes[1:])
        )

    def weight_names(self):
        for i in range(self.num_layers):
            yield f"{self.prefix}w{i}", f"{self.prefix}b{i}"


def mlp_forward(ctx: TapeContext, model: MlpModel, x: TapeRef) -> TapeRef:
    """Affine -> activation per hidden layer, affine output; all on tape."""
    if x.value.kind != "vector":
        raise ShapeMismatch("mlp_forward expects a vector input; pack scalars first")
    if x.value.core_shape[-1] != model.layer_sizes[0]:
        raise ShapeMismatch(
            f"mlp input width {x.value.core_shape[-1]} != layer width {model.layer_sizes[0]}"
        )
    h = x
    for i, (wn, bn) in enumerate(model.weight_names()):
        w = ctx.param(model.store, wn)
        b = ctx.param(model.store, bn)
        value = _linear_forward(h.value, w.value, b.value)
        nid = ctx.tape.record("linear", (h.tape_id, w.tape_id, b.tape_id), value)
        h = TapeRef(nid, value)
        if i < model.num_layers - 1:
            act_value = _relu_forward(h.value) if model.activation == "relu" else _tanh_forward(h.value)
            nid = ctx.tape.record(model.activation, (h.tape_id,), act_value)
            h = TapeRef(nid, act_value)
    return h


def pack_scalars(ctx: TapeContext, refs) -> TapeRef:
    """Stack scalar refs into a vector (batched scalars -> [B, n])."""
    return ctx.prim("vec", *refs)


def unpack_scalar(ctx: TapeContext, vec_ref: TapeRef, index: int) -> TapeRef:
    return ctx.prim("ref", vec_ref, ctx.constant(float(index)))


# ---------------------------------------------------------------------------
# hybrid patterns


def hybrid_forward(ctx: TapeContext, compiled, store, mlp: MlpModel, inputs: dict) -> TapeRef:
    """Known term plus learned correction: compiled(inputs) + mlp(x) where
    x packs the declared inputs in order."""
    known = ctx.run(compiled, inputs, store)
    x = pack_scalars(ctx, [ctx.lift(inputs[name]) for name in compiled.input_names])
    corr = mlp_forward(ctx, mlp, x)
    if known.value.kind == "scalar":
        corr = unpack_scalar(ctx, corr, 0)
    if corr.value.data.shape != known.value.data.shape:
        raise ShapeMismatch(
            f"hybrid components disagree: {known.value.data.shape} vs {corr.value.data.shape}"
        )
    return ctx.add(known, corr)


def compose_chain(ctx: TapeContext, modules, x: TapeRef) -> TapeRef:
    """Left-to-right composition of compiled programs and MLPs on one tape.
    An empty chain is the identity."""
    h = x
    for i, module in enumerate(modules):
        if isinstance(module, MlpModel):
            scalar_in = h.value.kind == "scalar"
            v = pack_scalars(ctx, [h]) if scalar_in else h
            v = mlp_forward(ctx, module, v)
            h = unpack_scalar(ctx, v, 0) if scalar_in else v
        else:
            prog, store = module if isinstance(module, tuple) else (module, None)
            if len(prog.input_names) != 1:
                raise ShapeMismatch(
                    f"chain stage {i} must take exactly one input, got {prog.input_names}"
                )
            h = ctx.run(prog, {prog.input_names[0]: h}, store)
    return h
