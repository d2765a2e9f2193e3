"""Session-typed protocol toolkit: algebra, DSL, inference, checker, runtime."""

__all__ = ["core", "surface", "infer", "oracle", "runtime", "cli"]
