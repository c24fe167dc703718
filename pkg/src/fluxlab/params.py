"""Utilities for parameter containers (dataclasses of Tensors)."""

import dataclasses

from .tensor import Tensor


def named_tensors(obj, prefix=""):
    """Yield (name, Tensor) pairs in deterministic declaration order.

    Walks dataclasses, lists/tuples, and dicts; the traversal order defines
    the flat checkpoint layout, so it must stay stable.
    """
    if isinstance(obj, Tensor):
        yield prefix or "param", obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            child = getattr(obj, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_tensors(child, name)
    elif isinstance(obj, (list, tuple)):
        for i, child in enumerate(obj):
            yield from named_tensors(child, f"{prefix}[{i}]")
    elif isinstance(obj, dict):
        for key in obj:
            yield from named_tensors(obj[key], f"{prefix}.{key}" if prefix else str(key))
    # scalars/arrays that are not Tensors are configuration, not parameters


def all_tensors(obj):
    return [t for _, t in named_tensors(obj)]


def n_parameters(obj):
    return sum(t.size for t in all_tensors(obj))
