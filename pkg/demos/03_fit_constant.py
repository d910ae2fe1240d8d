"""Recovering a physical constant from noisy data.

The formula is known; only the constant is not.  Compile the formula with
the constant as a trainable parameter, then fit it with Adam against noisy
evaluations.  One trainable scalar stands in for the thousands of weights
a network would need.
"""

from schemegrad import compile_source
from schemegrad.training import DataSpec, train_coefficients

prog = compile_source("(* h f)", inputs=("f",), params=("h",))

store, report = train_coefficients(
    prog,
    true_params={"h": 6.626},
    data=DataSpec(ranges={"f": (0.1, 4.0)}, noise=0.02, batch=10_000),
    epochs=3000,
    seed=3,
)

print(f"true h      = 6.626")
print(f"recovered h = {report.final_params['h']:.5f}")
print(f"rel. error  = {report.recovery_errors['h'] * 100:.4f}%")
print(f"test MSE (clean targets)        = {report.test_mse:.2e}")
print(f"extrapolation MSE (5x range)    = {report.extrap_mse:.2e}")
print("loss curve (sampled):", [f"{l:.1e}" for _, l in report.loss_curve[::30]])
