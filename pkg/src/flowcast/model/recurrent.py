"""Recurrent heads: stacked LSTM cores, Gaussian parameter heads, predictors."""

import torch
import torch.nn as nn

from ..losses import GaussianParams


def _orthogonal_recurrent_init(cell):
    # orthogonalize each of the four gate blocks of the hidden-to-hidden matrix
    hidden = cell.hidden_size
    with torch.no_grad():
        for k in range(4):
            nn.init.orthogonal_(cell.weight_hh[k * hidden:(k + 1) * hidden])


class StackedLSTM(nn.Module):
    """Linear embedding into a stack of LSTM cells, one step at a time.

    State is a list of (h, c) pairs, one per layer, owned by the caller so
    a single module can serve many concurrent rollouts.
    """

    def __init__(self, input_dim, hidden_dim, layers):
        super().__init__()
        if layers < 1:
            raise ValueError(f"need at least one layer, got {layers}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.embed = nn.Linear(input_dim, hidden_dim)
        self.cells = nn.ModuleList(
            nn.LSTMCell(hidden_dim, hidden_dim) for _ in range(layers)
        )
        for cell in self.cells:
            _orthogonal_recurrent_init(cell)

    def init_state(self, batch, device=None, dtype=None):
        ref = self.embed.weight
        device = device or ref.device
        dtype = dtype or ref.dtype
        return [
            (torch.zeros(batch, self.hidden_dim, device=device, dtype=dtype),
             torch.zeros(batch, self.hidden_dim, device=device, dtype=dtype))
            for _ in self.cells
        ]

    def forward(self, x, state):
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        if len(state) != len(self.cells):
            raise ValueError(f"state has {len(state)} layers, module has {len(self.cells)}")
        h = self.embed(x)
        new_state = []
        for cell, layer_state in zip(self.cells, state):
            h, c = cell(h, layer_state)
            new_state.append((h, c))
        return h, new_state


class GaussianHead(nn.Module):
    """Recurrent head emitting (mean, logvar) of a latent distribution."""

    def __init__(self, input_dim, hidden_dim, latent_dim, layers=1,
                 logvar_min=-10.0, logvar_max=10.0):
        super().__init__()
        self.core = StackedLSTM(input_dim, hidden_dim, layers)
        self.out = nn.Linear(hidden_dim, 2 * latent_dim)
        self.latent_dim = latent_dim
        self.logvar_min = logvar_min
        self.logvar_max = logvar_max

    def init_state(self, batch, device=None, dtype=None):
        return self.core.init_state(batch, device, dtype)

    def step(self, h, state):
        top, new_state = self.core(h, state)
        raw = self.out(top)
        mean, logvar = raw.chunk(2, dim=-1)
        logvar = logvar.clamp(self.logvar_min, self.logvar_max)
        return new_state, GaussianParams(mean, logvar)


class Predictor(nn.Module):
    """Recurrent head merging past features and a latent into a summary g_t."""

    def __init__(self, input_dim, hidden_dim, output_dim, layers=2):
        super().__init__()
        self.core = StackedLSTM(input_dim, hidden_dim, layers)
        self.out = nn.Linear(hidden_dim, output_dim)

    def init_state(self, batch, device=None, dtype=None):
        return self.core.init_state(batch, device, dtype)

    def step(self, h_prev, z, state):
        x = torch.cat([h_prev, z], dim=-1)
        top, new_state = self.core(x, state)
        return new_state, torch.tanh(self.out(top))


def reparameterize(params, noise):
    """z = mean + exp(logvar / 2) * noise."""
    if noise.shape != params.mean.shape:
        raise ValueError(
            f"noise shape {tuple(noise.shape)} does not match "
            f"mean {tuple(params.mean.shape)}"
        )
    return params.mean + torch.exp(0.5 * params.logvar) * noise
