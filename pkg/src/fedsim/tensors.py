"""Flat named-tensor container and the element-wise arithmetic built on it.

A ParameterSet is an ordered, immutable collection of named flat float64
arrays. All server-side aggregation math (moment updates, bias correction,
the cross-client element-wise softmax) is expressed through the small set
of operations below.
"""
from __future__ import annotations

from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyFederationError, StructureMismatchError


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    out.flags.writeable = False
    return out


class ParameterSet:
    """Ordered list of (name, shape, flat float64 values) layers.

    Instances are immutable: every operation builds a new set. Values are
    validated to be finite on construction, so no public operation can
    hand back NaN or Inf.
    """

    __slots__ = ("_names", "_shapes", "_values")

    def __init__(self, layers: Iterable[tuple[str, Sequence[int], np.ndarray]]):
        names: list[str] = []
        shapes: list[tuple[int, ...]] = []
        values: list[np.ndarray] = []
        for name, shape, vals in layers:
            shape = tuple(int(s) for s in shape)
            if any(s <= 0 for s in shape):
                raise ValueError(f"layer {name!r}: non-positive dim in shape {shape}")
            arr = _freeze(np.ravel(np.asarray(vals, dtype=np.float64)))
            expected = int(np.prod(shape))
            if arr.size != expected:
                raise ValueError(
                    f"layer {name!r}: {arr.size} values for shape {shape} "
                    f"(expected {expected})"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {name!r}: non-finite values")
            if name in names:
                raise ValueError(f"duplicate layer name {name!r}")
            names.append(name)
            shapes.append(shape)
            values.append(arr)
        self._names = tuple(names)
        self._shapes = tuple(shapes)
        self._values = tuple(values)

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return self._shapes

    def layer(self, name: str) -> np.ndarray:
        return self._values[self._names.index(name)]

    def __iter__(self) -> Iterator[tuple[str, tuple[int, ...], np.ndarray]]:
        return iter(zip(self._names, self._shapes, self._values))

    def __len__(self) -> int:
        return len(self._names)

    @property
    def num_elements(self) -> int:
        return sum(v.size for v in self._values)

    def same_structure(self, other: "ParameterSet") -> bool:
        return self._names == other._names and self._shapes == other._shapes

    def check_structure(self, other: "ParameterSet") -> None:
        for i in range(max(len(self._names), len(other._names))):
            a = self._names[i] if i < len(self._names) else None
            b = other._names[i] if i < len(other._names) else None
            if a != b:
                raise StructureMismatchError(
                    f"layer {i}: name {a!r} vs {b!r}"
                )
            if self._shapes[i] != other._shapes[i]:
                raise StructureMismatchError(
                    f"layer {a!r}: shape {self._shapes[i]} vs {other._shapes[i]}"
                )

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "ParameterSet":
        return ParameterSet(
            (n, s, f(v)) for n, s, v in self
        )

    @classmethod
    def zeros_like(cls, template: "ParameterSet") -> "ParameterSet":
        return template.map(np.zeros_like)

    def to_flat(self) -> np.ndarray:
        """Concatenate all layers into one vector, in layer order."""
        return np.concatenate(self._values) if self._values else np.empty(0)

    def with_flat(self, flat: np.ndarray) -> "ParameterSet":
        """Rebuild a structurally identical set from one flat vector."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_elements:
            raise ValueError(f"flat vector size {flat.size} != {self.num_elements}")
        out = []
        off = 0
        for n, s, v in self:
            out.append((n, s, flat[off:off + v.size]))
            off += v.size
        return ParameterSet(out)

    def __repr__(self) -> str:
        layers = ", ".join(f"{n}{list(s)}" for n, s in zip(self._names, self._shapes))
        return f"ParameterSet({layers})"


def zip_map(
    a: ParameterSet,
    b: ParameterSet,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> ParameterSet:
    """Apply a binary element-wise function layer by layer."""
    a.check_structure(b)
    return ParameterSet(
        (n, s, f(va, b._values[i]))
        for i, (n, s, va) in enumerate(a)
    )


def add(a: ParameterSet, b: ParameterSet) -> ParameterSet:
    return zip_map(a, b, np.add)


def sub(a: ParameterSet, b: ParameterSet) -> ParameterSet:
    return zip_map(a, b, np.subtract)


def mul(a: ParameterSet, b: ParameterSet) -> ParameterSet:
    return zip_map(a, b, np.multiply)


def scale(a: ParameterSet, c: float) -> ParameterSet:
    return a.map(lambda v: v * float(c))


def mean(sets: Sequence[ParameterSet]) -> ParameterSet:
    """Uniform mean of structurally identical sets, in given order."""
    if not sets:
        raise EmptyFederationError("mean of zero parameter sets")
    acc = sets[0]
    for other in sets[1:]:
        acc = add(acc, other)
    return scale(acc, 1.0 / len(sets))


def flat_inner_product(a: ParameterSet, b: ParameterSet) -> float:
    """Sum of element-wise products over all layers."""
    a.check_structure(b)
    return float(sum(
        np.dot(va, vb) for (_, _, va), (_, _, vb) in zip(a, b)
    ))


def l2_norm(a: ParameterSet) -> float:
    return float(np.sqrt(flat_inner_product(a, a)))


def cross_client_softmax(stack: Sequence[ParameterSet]) -> list[ParameterSet]:
    """Element-wise softmax across clients.

    For each scalar position, the C values held by the C input sets are
    mapped through a softmax, so each client receives a per-element
    proportion and the proportions at every position sum to one. The
    per-position maximum is subtracted before exponentiation.
    """
    if len(stack) == 0:
        raise EmptyFederationError("softmax over zero clients")
    first = stack[0]
    for other in stack[1:]:
        first.check_structure(other)
    out_layers: list[list[tuple[str, tuple[int, ...], np.ndarray]]] = [
        [] for _ in stack
    ]
    for i, (name, shape, _) in enumerate(first):
        mat = np.stack([ps._values[i] for ps in stack])  # (C, n)
        mat = mat - mat.max(axis=0, keepdims=True)
        e = np.exp(mat)
        p = e / e.sum(axis=0, keepdims=True)
        for c in range(len(stack)):
            out_layers[c].append((name, shape, p[c]))
    return [ParameterSet(layers) for layers in out_layers]
