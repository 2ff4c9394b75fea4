"""Dense tensors, the recording graph and reverse-mode backward."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from pointformer.core.errors import InvalidArgumentError

_DEFAULT_DTYPE: ContextVar[type[np.floating]] = ContextVar("default_dtype", default=np.float32)
_ACTIVE_GRAPH: ContextVar[Graph | None] = ContextVar("active_graph", default=None)


def default_dtype() -> type[np.floating]:
    return _DEFAULT_DTYPE.get()


@contextmanager
def using_dtype(dtype: type[np.floating]) -> Iterator[None]:
    """Create new tensors in *dtype* (float64 for gradient checks)."""
    token = _DEFAULT_DTYPE.set(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


class Tensor:
    """Row-major array with a trainable flag and an optional gradient buffer.

    Only leaf tensors with ``requires_grad`` ever receive ``grad``; frozen
    tensors pass gradients through to their inputs but never store one.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=dtype or default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @classmethod
    def wrap(cls, array: np.ndarray) -> Tensor:
        """Wrap an op result without recasting its dtype."""
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._node = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = "trainable" if self.requires_grad else "frozen"
        label = f"{self.name}, " if self.name else ""
        return f"Tensor({label}shape={self.shape}, {flag})"


@dataclass(eq=False)
class Node:
    """One recorded op: kind, inputs, output and whatever backward needs."""

    kind: str
    inputs: tuple[Tensor, ...]
    attrs: dict[str, Any] = field(default_factory=dict)
    saved: dict[str, Any] = field(default_factory=dict)
    output: Tensor | None = None


class Graph:
    """Topologically ordered record of ops run while the graph is active.

    Use as a context manager; ops executed outside any graph record nothing.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._tokens: list[Any] = []

    def __enter__(self) -> Graph:
        self._tokens.append(_ACTIVE_GRAPH.set(self))
        return self

    def __exit__(self, *exc: object) -> None:
        _ACTIVE_GRAPH.reset(self._tokens.pop())

    @staticmethod
    def active() -> Graph | None:
        return _ACTIVE_GRAPH.get()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(graph: Graph, loss: Tensor) -> None:
    """Populate ``grad`` on every trainable leaf reachable from *loss*.

    Gradients accumulate into existing buffers; call :func:`zero_grad` between steps.
    """
    from pointformer.autodiff.ops import backward_rule

    if loss.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.is_leaf:
        if loss.requires_grad:
            _accumulate(loss, np.ones_like(loss.data))
        return
    if not any(node is loss._node for node in reversed(graph.nodes)):
        raise InvalidArgumentError("loss was not produced by this graph")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(graph.nodes):
        assert node.output is not None
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = backward_rule(node.kind)(node, g)
        for tensor, tg in zip(node.inputs, input_grads):
            if tg is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = tg if key not in grads else grads[key] + tg
            if tensor.is_leaf:
                leaves[key] = tensor
    for key, tensor in leaves.items():
        _accumulate(tensor, grads[key])


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=tensor.data.dtype).reshape(tensor.shape)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
