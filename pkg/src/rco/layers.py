"""CNN-LSTM backbone: conv + ReLU trunk per timestep, LSTM over time, dense head.

Layers operate on single samples (no batch axis); the trainer loops windows
and averages losses.  All parameters are requires-grad Vars initialized
uniformly scaled by fan-in from a seeded generator, so a fixed seed gives a
bit-identical network.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import cube
from .autodiff import Var
from .errors import ShapeError


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Var:
    bound = 1.0 / np.sqrt(fan_in)
    return Var(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv2d:
    """Cross-correlation layer over (C,H,W) inputs."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3,
                 padding: str = "same", rng: np.random.Generator | None = None):
        if padding == "same" and kernel % 2 == 0:
            raise ShapeError("same padding requires an odd kernel side")
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_ch * kernel * kernel
        self.kernels = _uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in)
        self.bias = _uniform(rng, (out_ch,), fan_in)
        self.padding = padding

    def forward(self, x: Var) -> Var:
        return ad.conv2d(x, self.kernels, self.bias, padding=self.padding)

    def params(self) -> list[Var]:
        return [self.kernels, self.bias]


class LstmCell:
    """Standard LSTM cell: sigmoid input/forget/output gates, tanh candidate."""

    GATES = ("i", "f", "g", "o")

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden_size = hidden_size
        self.wx = {}
        self.wh = {}
        self.b = {}
        for gate in self.GATES:
            self.wx[gate] = _uniform(rng, (hidden_size, input_size), input_size)
            self.wh[gate] = _uniform(rng, (hidden_size, hidden_size), hidden_size)
            self.b[gate] = Var(np.zeros(hidden_size), requires_grad=True)

    def step(self, x: Var, h_prev: Var, c_prev: Var) -> tuple[Var, Var]:
        def gate_input(g):
            return ad.matmul(self.wx[g], x) + ad.matmul(self.wh[g], h_prev) + self.b[g]

        i = ad.sigmoid(gate_input("i"))
        f = ad.sigmoid(gate_input("f"))
        g = ad.tanh(gate_input("g"))
        o = ad.sigmoid(gate_input("o"))
        c = f * c_prev + i * g
        h = o * ad.tanh(c)
        return h, c

    def initial_state(self) -> tuple[Var, Var]:
        zeros = np.zeros(self.hidden_size)
        return Var(zeros), Var(zeros.copy())

    def params(self) -> list[Var]:
        out = []
        for gate in self.GATES:
            out += [self.wx[gate], self.wh[gate], self.b[gate]]
        return out


class Dense:
    def __init__(self, in_size: int, out_size: int,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = _uniform(rng, (out_size, in_size), in_size)
        self.b = Var(np.zeros(out_size), requires_grad=True)

    def forward(self, x: Var) -> Var:
        return ad.matmul(self.w, x) + self.b

    def params(self) -> list[Var]:
        return [self.w, self.b]


class CnnLstm:
    """Per-timestep conv trunk, LSTM across the window, dense head of size s.

    Each timestep grid (rows x cols) is treated as a one-channel image; the
    conv output is flattened before entering the LSTM, and the final hidden
    state feeds the head.
    """

    def __init__(
        self,
        grid: tuple[int, int],
        horizon: int,
        conv_channels: tuple[int, int] = (8, 16),
        lstm_hidden: int = 32,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.grid = tuple(grid)
        self.horizon = horizon
        c1, c2 = conv_channels
        self.conv1 = Conv2d(1, c1, 3, "same", rng)
        self.conv2 = Conv2d(c1, c2, 3, "same", rng)
        self._feat = c2 * grid[0] * grid[1]
        self.cell = LstmCell(self._feat, lstm_hidden, rng)
        self.head = Dense(lstm_hidden, horizon, rng)

    def step_features(self, xt: Var) -> Var:
        """One timestep grid -> flattened conv features."""
        img = ad.reshape(xt, (1,) + self.grid)
        a1 = ad.relu(self.conv1.forward(img))
        a2 = ad.relu(self.conv2.forward(a1))
        return ad.reshape(a2, (self._feat,))

    def forward_window(
        self, window: np.ndarray, perms: Sequence[Var | None] | None = None
    ) -> Var:
        """Predict the horizon from a (t, rows, cols) window.

        ``perms`` holds one relaxed permutation per grid axis (shared across
        all timesteps); None disables the reordering entirely.
        """
        if window.ndim != 3 or window.shape[1:] != self.grid:
            raise ShapeError(f"window shape {window.shape} != (t, {self.grid[0]}, {self.grid[1]})")
        h, c = self.cell.initial_state()
        for step in range(window.shape[0]):
            xt = Var(window[step])
            if perms is not None:
                xt = cube.permute(xt, perms)
            h, c = self.cell.step(self.step_features(xt), h, c)
        return self.head.forward(h)

    def params(self) -> list[Var]:
        return (
            self.conv1.params() + self.conv2.params()
            + self.cell.params() + self.head.params()
        )

    def param_dict(self) -> dict[str, Var]:
        named = {"conv1.kernels": self.conv1.kernels, "conv1.bias": self.conv1.bias,
                 "conv2.kernels": self.conv2.kernels, "conv2.bias": self.conv2.bias,
                 "head.w": self.head.w, "head.b": self.head.b}
        for gate in LstmCell.GATES:
            named[f"lstm.wx_{gate}"] = self.cell.wx[gate]
            named[f"lstm.wh_{gate}"] = self.cell.wh[gate]
            named[f"lstm.b_{gate}"] = self.cell.b[gate]
        return named
