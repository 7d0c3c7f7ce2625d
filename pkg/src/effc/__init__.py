"""effc: a compiler for an ML-like language with algebraic effect handlers.

The pipeline infers types for implicitly-typed source programs, elaborates
them into an explicitly-coercion-annotated core, and lowers that core to two
backends: an effect-erased System-F-like language and a pure language that
tracks only the presence of effects.
"""

__version__ = "0.1.0"
