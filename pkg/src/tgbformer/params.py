"""Parameter trees and seeded initialization.

Parameters live in (possibly nested) frozen dataclasses whose leaves are
:class:`Tensor` objects. ``flatten`` names every tensor leaf by its dotted
path; ``rebuild`` swaps leaves by name, which is how gradient checks put
watched tensors into a model.

Randomness: each parameter block draws from its own numpy generator seeded
by ``SeedSequence(seed, spawn_key=(crc32(name),))``. Blocks are therefore
reproducible in isolation and independent of construction order.
"""

from __future__ import annotations

import dataclasses
import math
import zlib
from typing import Any, Callable

import numpy as np

from .tensor import Tensor


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for the named stream under a 64-bit root seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(key,)))


def uniform(seed: int, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
    """Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(stream(seed, name).uniform(-bound, bound, size=shape))


def _children(node: Any):
    if dataclasses.is_dataclass(node) and not isinstance(node, type):
        for f in dataclasses.fields(node):
            yield f.name, getattr(node, f.name)
    elif isinstance(node, dict):
        yield from node.items()
    elif isinstance(node, (list, tuple)):
        for i, item in enumerate(node):
            yield str(i), item


def flatten(tree: Any, prefix: str = "") -> dict[str, Tensor]:
    """Map dotted path -> tensor for every Tensor leaf in ``tree``."""
    if isinstance(tree, Tensor):
        return {prefix: tree}
    out: dict[str, Tensor] = {}
    for key, child in _children(tree):
        out.update(flatten(child, f"{prefix}.{key}" if prefix else key))
    return out


def map_leaves(tree: Any, fn: Callable[[str, Tensor], Tensor], prefix: str = "") -> Any:
    """Rebuild ``tree`` with each tensor leaf replaced by ``fn(path, leaf)``."""
    if isinstance(tree, Tensor):
        return fn(prefix, tree)
    if dataclasses.is_dataclass(tree) and not isinstance(tree, type):
        changes = {}
        for f in dataclasses.fields(tree):
            value = getattr(tree, f.name)
            path = f"{prefix}.{f.name}" if prefix else f.name
            new = map_leaves(value, fn, path)
            if new is not value:
                changes[f.name] = new
        return dataclasses.replace(tree, **changes) if changes else tree
    if isinstance(tree, dict):
        return {k: map_leaves(v, fn, f"{prefix}.{k}" if prefix else k) for k, v in tree.items()}
    if isinstance(tree, (list, tuple)):
        items = [map_leaves(item, fn, f"{prefix}.{i}" if prefix else str(i)) for i, item in enumerate(tree)]
        return type(tree)(items)
    return tree


def rebuild(tree: Any, leaves: dict[str, Any]) -> Any:
    """Replace the named leaves; values may be tensors or arrays."""
    def swap(path, leaf):
        if path not in leaves:
            return leaf
        value = leaves[path]
        return value if isinstance(value, Tensor) else Tensor(value)

    return map_leaves(tree, swap)


def count(tree: Any) -> int:
    return sum(t.size for t in flatten(tree).values())
