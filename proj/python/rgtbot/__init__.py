"""Relational graph transformer bot detector (Python bindings)."""

from ._core import (
    Graph,
    Model,
    evaluate,
    fixture_names,
    fixture_spec,
    generate,
    train,
)

__all__ = ["Graph", "Model", "evaluate", "fixture_names", "fixture_spec", "generate", "train"]
