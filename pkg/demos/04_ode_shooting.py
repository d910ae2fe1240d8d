"""Fitting ODE rate constants with RK4 and multiple shooting.

The predator-prey right-hand sides compile with their four rate constants
trainable.  Trajectory segments restart from observed states (multiple
shooting) so gradients stay well conditioned, and a Gauss-Newton polish
finishes the descent once Adam has found the basin.
"""

from schemegrad.experiments import lotka_volterra as lv

print("true parameters:", lv.TRUE_PARAMS)

store, errors, curve, clean = lv.fit(noise=0.02, epochs=800, seed=42)

print("\nrecovered from 2% noisy observations:")
for name, true_v in lv.TRUE_PARAMS.items():
    fitted = float(store[name].value.data)
    print(f"  {name:6s} = {fitted:.5f}  (true {true_v}, err {errors[name] * 100:.3f}%)")

n = int(round(lv.T_END / lv.DT))
print(f"\ntrajectory MSE vs truth, t in [0, {lv.T_END:.0f}]:",
      f"{lv.trajectory_mse(store, clean, n):.2e}")
print("shooting loss over training:", [f"{l:.1e}" for _, l in curve[::8]])

# With no observation noise the loss minimum sits exactly at the true
# parameters, and the fit recovers them to machine precision.
store0, errors0, _, _ = lv.fit(noise=0.0, epochs=800, seed=0)
print("\nzero-noise recovery errors:", {k: f"{v:.1e}" for k, v in errors0.items()})
