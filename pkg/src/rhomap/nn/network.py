"""Feed-forward network over a fixed DAG of layers.

Nodes are evaluated in order; each node reads from earlier node outputs (or
the network input, index -1), which is enough to express U-Net style skip
connections. Shape errors are re-raised with the offending layer index.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Network:
    def __init__(self, nodes=None):
        # nodes: list of (layer, inputs) with inputs a tuple of node indices
        self.nodes = []
        self._outputs = None
        for layer, inputs in nodes or []:
            self.add(layer, inputs)

    def add(self, layer, inputs=None):
        """Append a node; ``inputs`` defaults to the previous node's output."""
        idx = len(self.nodes)
        if inputs is None:
            inputs = (idx - 1,)
        inputs = tuple(int(i) for i in inputs)
        for ref in inputs:
            if ref < -1 or ref >= idx:
                raise ValueError(f"node {idx} references invalid input {ref}")
        if len(inputs) != layer.n_inputs:
            raise ValueError(
                f"layer {idx} ({layer.kind}) takes {layer.n_inputs} inputs, got {len(inputs)}"
            )
        self.nodes.append((layer, inputs))
        return idx

    def params(self):
        out = []
        for layer, _ in self.nodes:
            out.extend(layer.params())
        return out

    def forward(self, x, train=False) -> Tensor:
        data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
        outputs = []
        for i, (layer, inputs) in enumerate(self.nodes):
            args = [data if ref == -1 else outputs[ref] for ref in inputs]
            try:
                outputs.append(layer.forward(*args, train=train))
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from exc
        self._outputs = (len(outputs), data.shape)
        return Tensor(outputs[-1])

    def backward(self, loss_grad) -> np.ndarray:
        """Backpropagate d(loss)/d(output); fills param grads, returns d(input)."""
        if self._outputs is None:
            raise RuntimeError("backward called without a prior forward")
        n_nodes, in_shape = self._outputs
        grad_for = [None] * n_nodes
        grad_in = np.zeros(in_shape)
        grad = loss_grad.data if isinstance(loss_grad, Tensor) else np.asarray(loss_grad)
        grad_for[n_nodes - 1] = grad
        for i in range(n_nodes - 1, -1, -1):
            layer, inputs = self.nodes[i]
            gy = grad_for[i]
            if gy is None:
                continue  # node output unused downstream
            gxs = layer.backward(gy)
            for ref, gx in zip(inputs, gxs):
                if ref == -1:
                    grad_in = grad_in + gx
                elif grad_for[ref] is None:
                    grad_for[ref] = gx
                else:
                    grad_for[ref] = grad_for[ref] + gx
        self._outputs = None
        return grad_in
