"""Named parameter collections and the layer building blocks that use them."""

from __future__ import annotations

import hashlib
from collections.abc import Iterator, Mapping

import numpy as np

from sgcl.diff_core import tensor as T
from sgcl.diff_core.tensor import Tensor

ROLES = ("encoder", "projection", "decoder")


class ParameterStore(Mapping):
    """Ordered map of parameter path to trainable tensor, tagged with a role.

    Roles name the three parameter sets of the model: the graph encoder,
    the contrastive projection head and the downstream decoder.
    """

    def __init__(self, role: str):
        if role not in ROLES:
            raise ValueError(f"unknown parameter role {role!r}; expected one of {ROLES}")
        self.role = role
        self._params: dict[str, Tensor] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        t = Tensor(value.copy(), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def frozen(self) -> "ParameterStore":
        """A view whose tensors share values but record no gradients."""
        view = ParameterStore(self.role)
        for name, t in self._params.items():
            view._params[name] = Tensor(t.data, name=name)
        return view

    def copy(self) -> "ParameterStore":
        out = ParameterStore(self.role)
        for name, t in self._params.items():
            out.add(name, t.data)
        return out

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, t in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.shape:
                raise ValueError(f"{name}: shape {value.shape} does not match {t.shape}")
            t.data = value.copy()

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self._params):
            data = self._params[name].data
            h.update(name.encode())
            h.update(repr(data.shape).encode())
            h.update(np.ascontiguousarray(data, dtype="<f8").tobytes())
        return h.hexdigest()


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_linear(store: ParameterStore, name: str, d_in: int, d_out: int, rng: np.random.Generator) -> None:
    store.add(f"{name}.weight", uniform_fan_in(rng, d_in, (d_in, d_out)))
    store.add(f"{name}.bias", np.zeros(d_out))


def dense(x: Tensor, store: Mapping[str, Tensor], name: str) -> Tensor:
    return T.linear(x, store[f"{name}.weight"], store[f"{name}.bias"])


def add_mlp(store: ParameterStore, name: str, d_in: int, d_hidden: int, d_out: int, rng) -> None:
    add_linear(store, f"{name}.0", d_in, d_hidden, rng)
    add_linear(store, f"{name}.1", d_hidden, d_out, rng)


def mlp(x: Tensor, store: Mapping[str, Tensor], name: str) -> Tensor:
    return dense(T.relu(dense(x, store, f"{name}.0")), store, f"{name}.1")


def add_lstm(store: ParameterStore, name: str, d_in: int, d_hidden: int, rng) -> None:
    # gate column order: input, forget, candidate, output
    store.add(f"{name}.weight_ih", uniform_fan_in(rng, d_in, (d_in, 4 * d_hidden)))
    store.add(f"{name}.weight_hh", uniform_fan_in(rng, d_hidden, (d_hidden, 4 * d_hidden)))
    bias = np.zeros(4 * d_hidden)
    bias[d_hidden : 2 * d_hidden] = 1.0
    store.add(f"{name}.bias", bias)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, store: Mapping[str, Tensor], name: str) -> tuple[Tensor, Tensor]:
    """One LSTM cell update; works on single vectors or row batches."""
    w_hh = store[f"{name}.weight_hh"]
    d_h = w_hh.shape[0]
    if h.shape[-1] != d_h or c.shape != h.shape:
        raise T.ShapeError(f"lstm_step: state shapes {h.shape}, {c.shape} vs hidden size {d_h}")
    z = T.add(T.add(T.matmul(x, store[f"{name}.weight_ih"]), T.matmul(h, w_hh)), store[f"{name}.bias"])
    gate = lambda k: z[..., k * d_h : (k + 1) * d_h]  # noqa: E731
    i, f, g, o = T.sigmoid(gate(0)), T.sigmoid(gate(1)), T.tanh(gate(2)), T.sigmoid(gate(3))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new
