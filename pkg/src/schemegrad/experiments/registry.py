"""Experiment equations: source programs, ground-truth constants, sampling
ranges, and hand-written numpy closures mirroring each formula's exact
operation structure (the independent implementations compiled programs are
checked against, bit for bit)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UnknownEquation
from ..values import Value


@dataclass
class Equation:
    id: str
    source: str
    inputs: tuple
    params: dict  # trainable name -> true value
    ranges: dict  # scalar input -> (lo, hi)
    closure: object  # callable(**arrays) -> array
    nodes: int | None = None
    frozen: dict = field(default_factory=dict)  # known, non-trainable constants
    expected_fail: bool = False
    noise: float = 0.02
    epochs: int = 3000
    batch: int = 10_000
    sampler: object = None  # custom (rng, n) -> dict for non-scalar inputs


def _sqrt(x):
    return np.sqrt(x)


# --- Feynman benchmark ------------------------------------------------------

FEYNMAN: dict[str, Equation] = {}


def _feq(eq: Equation):
    FEYNMAN[eq.id] = eq
    return eq


_feq(Equation(
    id="planck",
    source="(* h f)",
    inputs=("f",),
    params={"h": 6.626},
    ranges={"f": (0.1, 4.0)},
    closure=lambda f, h: h * f,
    nodes=3,
))

_feq(Equation(
    id="hooke",
    source="(* (- 0 k) x)",
    inputs=("x",),
    params={"k": 2.5},
    ranges={"x": (-2.0, 2.0)},
    closure=lambda x, k: (0.0 - k) * x,
    nodes=5,
))

_feq(Equation(
    id="kinetic",
    source="(* alpha (* m (pow v 2)))",
    inputs=("m", "v"),
    params={"alpha": 0.5},
    ranges={"m": (0.5, 3.0), "v": (-3.0, 3.0)},
    closure=lambda m, v, alpha: alpha * (m * np.power(v, 2.0)),
    nodes=6,
))

_feq(Equation(
    id="gravity",
    source="(/ (* G (* m1 m2)) (pow r 2))",
    inputs=("m1", "m2", "r"),
    params={"G": 6.674},
    ranges={"m1": (0.5, 3.0), "m2": (0.5, 3.0), "r": (0.5, 2.5)},
    closure=lambda m1, m2, r, G: (G * (m1 * m2)) / np.power(r, 2.0),
    nodes=8,
))

_feq(Equation(
    id="ideal_gas",
    source="(* n (* R T))",
    inputs=("n", "T"),
    params={"R": 8.314},
    ranges={"n": (0.5, 2.0), "T": (0.5, 3.0)},
    closure=lambda n, T, R: n * (R * T),
    nodes=5,
))

_feq(Equation(
    id="pendulum_period",
    source="(* k (sqrt (/ L g)))",
    inputs=("L", "g"),
    params={"k": 6.283},
    ranges={"L": (0.2, 2.0), "g": (8.0, 12.0)},
    closure=lambda L, g, k: k * _sqrt(L / g),
    nodes=6,
))

_feq(Equation(
    id="heat_energy",
    source="(* m (* c dT))",
    inputs=("m", "dT"),
    params={"c": 4.184},
    ranges={"m": (0.5, 2.0), "dT": (-5.0, 5.0)},
    closure=lambda m, dT, c: m * (c * dT),
    nodes=5,
))

_feq(Equation(
    id="coulomb",
    source="(/ (* ke (* q1 q2)) (pow r 2))",
    inputs=("q1", "q2", "r"),
    params={"ke": 8.988},
    ranges={"q1": (0.5, 2.0), "q2": (0.5, 2.0), "r": (0.5, 2.5)},
    closure=lambda q1, q2, r, ke: (ke * (q1 * q2)) / np.power(r, 2.0),
    nodes=8,
))

_feq(Equation(
    id="gaussian",
    source="(/ (exp (/ (- 0 (pow (- x mu) 2)) (* 2 (pow sigma 2)))) "
           "(* sigma 2.5066282746310002))",
    inputs=("x",),
    params={"mu": 0.8, "sigma": 1.3},
    ranges={"x": (-3.0, 4.5)},
    closure=lambda x, mu, sigma: (
        np.exp((0.0 - np.power(x - mu, 2.0)) / (2.0 * np.power(sigma, 2.0)))
        / (sigma * 2.5066282746310002)
    ),
    nodes=15,
))

_feq(Equation(
    id="rel_energy",
    source="(/ (* m (pow c 2)) (sqrt (+ 1 (- 0 (/ (pow v 2) (pow c 2))))))",
    inputs=("v",),
    params={"m": 1.2, "c": 2.0},
    ranges={"v": (0.0, 1.5)},
    closure=lambda v, m, c: (m * np.power(c, 2.0))
    / _sqrt(1.0 + (0.0 - (np.power(v, 2.0) / np.power(c, 2.0)))),
    nodes=14,
))

_feq(Equation(
    id="sound",
    source="(/ (sqrt (* gamma P)) (sqrt rho))",
    inputs=("P", "rho"),
    params={"gamma": 1.4},
    ranges={"P": (0.5, 3.0), "rho": (0.5, 3.0)},
    closure=lambda P, rho, gamma: _sqrt(gamma * P) / _sqrt(rho),
    nodes=7,
))

# With kB free, only m/kB is identifiable (they always appear as a ratio),
# so the known Boltzmann-like constant stays frozen and P0, m are trained.
_feq(Equation(
    id="barometric",
    source="(* P0 (exp (/ (* (- 0 m) (* 9.8 h)) (* kB T))))",
    inputs=("h", "T"),
    params={"P0": 1.5, "m": 1.1},
    frozen={"kB": 1.8},
    ranges={"h": (0.0, 0.5), "T": (0.5, 3.0)},
    closure=lambda h, T, P0, m, kB: P0 * np.exp(((0.0 - m) * (9.8 * h)) / (kB * T)),
    nodes=14,
))

_feq(Equation(
    id="efield",
    source="(* coeff (* E (* E V)))",
    inputs=("E", "V"),
    params={"coeff": 0.443},
    ranges={"E": (0.5, 3.0), "V": (0.5, 3.0)},
    closure=lambda E, V, coeff: coeff * (E * (E * V)),
    nodes=6,
))

_feq(Equation(
    id="oscillator",
    source="(* A (sin (+ (* omega t) phi)))",
    inputs=("t",),
    params={"A": 1.5, "omega": 3.0, "phi": 0.7},
    ranges={"t": (0.0, 6.0)},
    closure=lambda t, A, omega, phi: A * np.sin((omega * t) + phi),
    nodes=8,
    expected_fail=True,  # periodic loss surface traps the frequency fit
))

_feq(Equation(
    id="lorentz",
    source="(/ 1 (sqrt (* (- 1 (/ v c)) (+ 1 (/ v c)))))",
    inputs=("v",),
    params={"c": 2.0},
    ranges={"v": (0.1, 1.7)},
    closure=lambda v, c: 1.0 / _sqrt((1.0 - v / c) * (1.0 + v / c)),
    nodes=10,
    expected_fail=True,  # flat gradients approaching the v -> c singularity
))

FEYNMAN_ORDER = list(FEYNMAN)


# --- ODE / PDE / vector experiments ----------------------------------------

LV_PREY = Equation(
    id="lv_prey",
    source="(- (* alpha x) (* beta (* x y)))",
    inputs=("x", "y"),
    params={"alpha": 1.5, "beta": 1.0},
    ranges={"x": (0.3, 4.0), "y": (0.3, 4.0)},
    closure=lambda x, y, alpha, beta: (alpha * x) - (beta * (x * y)),
)

LV_PRED = Equation(
    id="lv_pred",
    source="(- (* delta (* x y)) (* gamma y))",
    inputs=("x", "y"),
    params={"delta": 1.0, "gamma": 3.0},
    ranges={"x": (0.3, 4.0), "y": (0.3, 4.0)},
    closure=lambda x, y, delta, gamma: (delta * (x * y)) - (gamma * y),
)

PENDULUM_DOMEGA = Equation(
    id="pendulum_domega",
    source="(- (* (- 0 g_L) (sin theta)) (* b omega))",
    inputs=("theta", "omega"),
    params={"g_L": 9.81, "b": 0.25},
    ranges={"theta": (-1.5, 1.5), "omega": (-3.0, 3.0)},
    closure=lambda theta, omega, g_L, b: ((0.0 - g_L) * np.sin(theta)) - (b * omega),
)

HEAT_STEP = Equation(
    id="heat_step",
    source="(+ u (scale (* dt alpha) (matvec L u)))",
    inputs=("u", "L", "dt"),
    params={"alpha": 0.01},
    ranges={},
    closure=None,  # vector closure registered in closures() below
)

GRAVITY3D = Equation(
    id="gravity3d",
    source="(scale (/ (* (- 0 G) (* m1 m2)) (pow (norm r) 3)) r)",
    inputs=("m1", "m2", "r"),
    params={"G": 6.674},
    ranges={"m1": (0.5, 2.0), "m2": (0.5, 2.0)},
    closure=None,
)


def _ordered_sq_norm(r):
    # explicit three-term sum, mirroring the runtime's left-to-right norm
    return np.sqrt((r[..., 0] * r[..., 0] + r[..., 1] * r[..., 1]) + r[..., 2] * r[..., 2])


def heat_step_closure(u, L, dt, alpha):
    prod = L * u[..., None, :]
    acc = prod[..., 0]
    for i in range(1, prod.shape[-1]):
        acc = acc + prod[..., i]
    return u + (dt * alpha) * acc


def gravity3d_closure(m1, m2, r, G):
    mag = ((0.0 - G) * (m1 * m2)) / np.power(_ordered_sq_norm(r), 3.0)
    return mag[..., None] * r


HEAT_STEP.closure = heat_step_closure
GRAVITY3D.closure = gravity3d_closure


# --- composition library ----------------------------------------------------

COMPOSITION_OPS = {
    "square": ("(* x x)", lambda x: x * x),
    "cube": ("(* x (* x x))", lambda x: x * (x * x)),
    "sin": ("(sin x)", lambda x: np.sin(x)),
    "exp": ("(exp x)", lambda x: np.exp(x)),
    "add_one": ("(+ x 1)", lambda x: x + 1.0),
    "negate": ("(- 0 x)", lambda x: 0.0 - x),
    "double": ("(* 2 x)", lambda x: 2.0 * x),
    "sqrt_abs": ("(sqrt (abs x))", lambda x: np.sqrt(np.abs(x))),
}

COMPOSITION_CHAINS = [
    ("square", "add_one"),
    ("sin", "square"),
    ("square", "add_one", "cube"),
    ("exp", "negate", "add_one"),
    ("sin", "square", "add_one", "sqrt_abs"),
    ("square", "double", "sin", "add_one"),
    ("sin", "exp", "negate", "add_one", "square"),
    ("square", "add_one", "cube", "negate", "add_one"),
    ("negate", "exp", "sqrt_abs", "double", "sin", "add_one"),
]


# --- benchmark programs (batch-amortization suite) ---------------------------

BENCH_PROGRAMS = {
    "add": ("(+ x y)", ("x", "y")),
    "square_plus": ("(+ (* x x) 1)", ("x",)),
    "four_ops": ("(/ (* (- x y) (+ x y)) 2)", ("x", "y")),
    "quadratic": ("(+ (* a (* x x)) (+ (* b x) c))", ("a", "b", "c", "x")),
    "discriminant": ("(/ (+ b (sqrt (- (* b b) (* 4 (* a c))))) (* 2 a))",
                     ("a", "b", "c")),
    "dot4": ("(dot (vec a b c d) (vec e f g h))",
             ("a", "b", "c", "d", "e", "f", "g", "h")),
}


# --- hand-coded oracle dispatch ----------------------------------------------

ALL_EQUATIONS: dict[str, Equation] = dict(FEYNMAN)
for _eq in (LV_PREY, LV_PRED, PENDULUM_DOMEGA, HEAT_STEP, GRAVITY3D):
    ALL_EQUATIONS[_eq.id] = _eq


def handcoded_oracle(eq_id: str, inputs: dict, params: dict):
    """Evaluate the registered native closure for an experiment equation."""
    if eq_id in ALL_EQUATIONS:
        closure = ALL_EQUATIONS[eq_id].closure
    elif eq_id in COMPOSITION_OPS:
        closure = COMPOSITION_OPS[eq_id][1]
    else:
        raise UnknownEquation(f"no hand-coded closure registered for {eq_id!r}")
    feed = {k: (v.data if isinstance(v, Value) else np.asarray(v, dtype=np.float64))
            for k, v in inputs.items()}
    feed.update({k: (v.data if isinstance(v, Value) else v) for k, v in params.items()})
    return closure(**feed)
