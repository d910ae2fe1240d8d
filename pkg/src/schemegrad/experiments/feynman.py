"""Coefficient recovery on the 15-equation physics benchmark: compile each
formula with its constants as trainable parameters and fit them to noisy
samples; the two known optimization traps stay in an expected-failure set."""

from __future__ import annotations

import numpy as np

from ..compiler import compile_source
from ..machine import eval_program
from ..runtime import PROPAGATE_POLICY
from ..training import DataSpec, OptimSpec, draw_inputs, train_coefficients, truth_store
from .registry import FEYNMAN, FEYNMAN_ORDER, handcoded_oracle
from .report import ResultRow

EXPECTED_FAILURES = frozenset(eid for eid, eq in FEYNMAN.items() if eq.expected_fail)

RECOVERY_TOL = 0.01  # relative error per constant


def fit_equation(eq, seed: int, epochs_scale: float = 1.0):
    prog = compile_source(eq.source, inputs=eq.inputs,
                          params=tuple(eq.params) + tuple(eq.frozen))
    epochs = max(20, int(round(eq.epochs * epochs_scale)))
    data = DataSpec(ranges=eq.ranges, noise=eq.noise, batch=eq.batch)
    store, report = train_coefficients(
        prog, eq.params, data, epochs=epochs, seed=seed,
        frozen_params=eq.frozen, optim=OptimSpec(lr0=1e-2, lr1=1e-4),
        polish_samples=0 if eq.expected_fail else 50_000,
    )
    return prog, store, report


def handcoded_equivalence_rows(n_points: int = 1000, seed: int = 0):
    """Max |compiled - native closure| per equation over random safe points."""
    rows = []
    rng = np.random.default_rng(seed)
    for eid in FEYNMAN_ORDER:
        eq = FEYNMAN[eid]
        prog = compile_source(eq.source, inputs=eq.inputs,
                              params=tuple(eq.params) + tuple(eq.frozen))
        st = truth_store(eq.params, eq.frozen)
        ins = draw_inputs(eq.ranges, n_points, rng)
        compiled = eval_program(prog, ins, st, PROPAGATE_POLICY)
        native = handcoded_oracle(eid, ins, {**eq.params, **eq.frozen})
        diff = float(np.max(np.abs(compiled.data - native)))
        rows.append(ResultRow("feynman", "handcoded_oracle", f"{eid}:max_abs_diff",
                              diff, 0.0, "=="))
    return rows


def _fit_one(task):
    """Worker for one equation fit (picklable for process pools)."""
    eid, seed, epochs_scale = task
    eq = FEYNMAN[eid]
    prog, store, report = fit_equation(eq, seed=seed, epochs_scale=epochs_scale)
    return eid, store.num_trainable, report


def run(seed: int = 0, epochs_scale: float = 1.0, with_mlp: bool = False,
        parallel: int = 0):
    """Returns (rows, loss_curves).  Recovery rows for the 13 well-posed
    equations are acceptance rows; expected failures are informational.
    Independent fits may run in `parallel` worker processes, each seeded
    as seed + equation index."""
    rows = []
    curves = {}
    tasks = [(eid, seed + i, epochs_scale) for i, eid in enumerate(FEYNMAN_ORDER)]
    if parallel and parallel > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(t) for t in tasks]
    for eid, num_trainable, report in results:
        eq = FEYNMAN[eid]
        err = report.max_recovery_error
        informational = eq.expected_fail
        rows.append(ResultRow(
            "feynman", "compiled", f"{eid}:coeff_rel_err", err,
            None if informational else RECOVERY_TOL,
            "" if informational else "<=",
            informational=informational,
        ))
        rows.append(ResultRow("feynman", "compiled", f"{eid}:test_mse",
                              report.test_mse, informational=True))
        rows.append(ResultRow("feynman", "compiled", f"{eid}:extrap_mse",
                              report.extrap_mse, informational=True))
        rows.append(ResultRow("feynman", "compiled", f"{eid}:trainable_params",
                              float(num_trainable), informational=True))
        curves[f"feynman_{eid}"] = report.loss_curve
    if with_mlp:
        for i, eid in enumerate(FEYNMAN_ORDER):
            rows.extend(_mlp_rows(FEYNMAN[eid], seed=seed + i, epochs_scale=epochs_scale))
    rows.extend(handcoded_equivalence_rows(seed=seed))
    return rows, curves


def _mlp_rows(eq, seed: int, epochs_scale: float):
    """Informational dense-network baseline on the same data protocol."""
    from ..autodiff import TapeContext
    from ..nn import MlpModel, mlp_forward, pack_scalars
    from ..optim import AdamState, adam_step
    from ..values import Value

    rng = np.random.default_rng(seed + 999)
    model = MlpModel([len(eq.inputs), 64, 64, 64, 1], activation="relu", rng=rng)
    truth = truth_store(eq.params, eq.frozen)
    prog = compile_source(eq.source, inputs=eq.inputs,
                          params=tuple(eq.params) + tuple(eq.frozen))
    adam = AdamState(lr=1e-3)
    epochs = max(20, int(round(eq.epochs * epochs_scale)))
    batch = 1024
    for _ in range(epochs):
        ins = draw_inputs(eq.ranges, batch, rng)
        clean = eval_program(prog, ins, truth, PROPAGATE_POLICY)
        noisy = clean.data * (1.0 + eq.noise * rng.standard_normal(clean.data.shape))
        ctx = TapeContext(PROPAGATE_POLICY)
        x = pack_scalars(ctx, [ctx.lift(ins[name]) for name in eq.inputs])
        pred = mlp_forward(ctx, model, x)
        target = Value.batch_vectors(noisy[:, None])
        loss = ctx.mse(pred, target)
        model.store.zero_grads()
        ctx.backward(loss)
        adam_step(model.store, adam)

    test_rng = np.random.default_rng(seed + 101)
    ins = draw_inputs(eq.ranges, 10_000, test_rng)
    clean = eval_program(prog, ins, truth, PROPAGATE_POLICY)
    ctx = TapeContext(PROPAGATE_POLICY)
    x = pack_scalars(ctx, [ctx.lift(ins[name]) for name in eq.inputs])
    pred = mlp_forward(ctx, model, x)
    mse = float(np.mean((pred.value.data[:, 0] - clean.data) ** 2))
    return [
        ResultRow("feynman", "mlp", f"{eq.id}:test_mse", mse, informational=True),
        ResultRow("feynman", "mlp", f"{eq.id}:params",
                  float(model.param_count), informational=True),
    ]


def recovered_count(rows) -> tuple[int, int]:
    """(#equations under tolerance among the non-expected-fail set, total)."""
    ok = 0
    total = 0
    for r in rows:
        if r.model == "compiled" and r.metric.endswith(":coeff_rel_err") and not r.informational:
            total += 1
            if r.passed:
                ok += 1
    return ok, total
