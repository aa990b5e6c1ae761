from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from siamprint.autodiff.tensor import Tensor
from siamprint.core.exceptions import ContractViolation


@dataclass
class Node:
    op: str
    input_ids: tuple[int, ...]
    output_id: int
    tensor: Tensor = field(repr=False)


class Graph:
    """Topologically ordered op records reachable from one output tensor."""

    def __init__(self, nodes: list[Node]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def trace(cls, output: Tensor) -> 'Graph':
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            for parent in reversed(tensor._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        nodes = [
            Node(
                op=tensor.op,
                input_ids=tuple(id(parent) for parent in tensor._parents),
                output_id=id(tensor),
                tensor=tensor,
            )
            for tensor in order
        ]
        return cls(nodes)

    def leaves(self) -> list[Tensor]:
        return [
            node.tensor for node in self.nodes
            if node.tensor.is_leaf and node.tensor.requires_grad
        ]

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise ContractViolation(
                f'backward() needs a scalar loss, got shape {loss.shape}.'
            )
        if not loss.requires_grad:
            raise ContractViolation(
                'backward() called on a tensor that does not require grad.'
            )
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            tensor = node.tensor
            grad = grads.pop(node.output_id, None)
            if grad is None:
                continue
            if tensor.is_leaf:
                if tensor.requires_grad:
                    tensor.accumulate_grad(grad)
                continue
            parent_grads = tensor._backward(grad)
            for parent, parent_grad in zip(tensor._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad


def backward(loss: Tensor, graph: Optional[Graph] = None) -> Graph:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf."""
    graph = graph if graph is not None else Graph.trace(loss)
    graph.backward(loss)
    return graph
