"""schemegrad: compile Scheme-syntax arithmetic expressions into frozen,
differentiable, batch-evaluable instruction programs with named trainable
parameters, plus the training tools to fit those parameters to data."""

from .autodiff import (
    FiniteDiffReport,
    GradResult,
    ParameterStore,
    Tape,
    TapeContext,
    TapeRef,
    backward,
    finite_diff_check,
)
from .compiler import CompileConfig, CompiledProgram, compile_source, disassemble
from .errors import (
    ConfigError,
    CycleDetected,
    DepthLimitExceeded,
    DomainViolation,
    EmptyObservations,
    EvalError,
    LexError,
    LoweringError,
    MissingGradient,
    MissingInput,
    NonFiniteLoss,
    ParseError,
    SchemegradError,
    ScopeError,
    ShapeMismatch,
    SingularMatrix,
    UnboundVariable,
    UnknownEquation,
)
from .interpreter import interpret_ast
from .machine import eval_program, eval_with_tape, run_on_tape
from .nn import MlpModel, compose_chain, hybrid_forward, mlp_forward
from .ode import OdeSystem, ShootingConfig, integrate, multiple_shooting_loss, rk4_step
from .optim import AdamState, adam_step, cosine_lr, mse_loss
from .runtime import (
    ERROR_POLICY,
    PROPAGATE_POLICY,
    SafeDomainPolicy,
    apply_primitive,
)
from .sexpr import parse, pretty, tokenize
from .values import Value, bit_equal

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CompileConfig",
    "CompiledProgram",
    "ConfigError",
    "CycleDetected",
    "DepthLimitExceeded",
    "DomainViolation",
    "EmptyObservations",
    "ERROR_POLICY",
    "EvalError",
    "FiniteDiffReport",
    "GradResult",
    "LexError",
    "LoweringError",
    "MissingGradient",
    "MissingInput",
    "MlpModel",
    "NonFiniteLoss",
    "OdeSystem",
    "ParameterStore",
    "ParseError",
    "PROPAGATE_POLICY",
    "SafeDomainPolicy",
    "SchemegradError",
    "ScopeError",
    "ShapeMismatch",
    "ShootingConfig",
    "SingularMatrix",
    "Tape",
    "TapeContext",
    "TapeRef",
    "UnboundVariable",
    "UnknownEquation",
    "Value",
    "adam_step",
    "apply_primitive",
    "backward",
    "bit_equal",
    "compile_source",
    "compose_chain",
    "cosine_lr",
    "disassemble",
    "eval_program",
    "eval_with_tape",
    "finite_diff_check",
    "hybrid_forward",
    "integrate",
    "interpret_ast",
    "mlp_forward",
    "mse_loss",
    "multiple_shooting_loss",
    "parse",
    "pretty",
    "rk4_step",
    "run_on_tape",
    "tokenize",
]
