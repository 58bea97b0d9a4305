"""
Neural Model

A tiny per-position MLP standing in for the transformer at desk scale.

For every position i the input is [u_i || mean_j u_j] with
u_j = tanh(tok[x_j] + pos[j]); two tanh hidden layers follow and a linear
head produces N logits. The tanh before pooling keeps token/position
interactions in the pooled context, so predictions depend on which token sits
where. Gradients are derived by hand.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from radd.contracts import ModelBackend
from radd.diffusion.space import SequenceState, Vocab

from .base_model import SoftmaxModel


@dataclass(frozen=True)
class _Slot:
    name: str
    start: int
    shape: Tuple[int, ...]

    @property
    def stop(self) -> int:
        return self.start + int(np.prod(self.shape))


@dataclass
class _Forward:
    tokens: np.ndarray
    u: np.ndarray
    z0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray


class NeuralModel(SoftmaxModel):
    """
    Embeddings + two hidden layers, all weights in one flat vector.

    Args:
        vocab: Vocabulary (the mask token gets its own embedding row)
        d: Sequence length
        embed_dim: Width e of token and position embeddings
        hidden: Widths (h1, h2) of the hidden layers
        seed: Initialization seed
        head_scale: Init scale of the output head; 0 makes the untrained model uniform
    """

    backend = ModelBackend.NEURAL

    def __init__(
        self,
        vocab: Vocab,
        d: int,
        embed_dim: int = 16,
        hidden: Tuple[int, int] = (64, 64),
        seed: Optional[int] = 0,
        head_scale: float = 0.01,
        params: Optional[np.ndarray] = None,
    ):
        self.embed_dim = int(embed_dim)
        self.hidden = (int(hidden[0]), int(hidden[1]))
        self.seed = seed
        self.head_scale = head_scale
        self._slots = self._layout(vocab, d)
        size = self._slots[-1].stop
        if params is None:
            params = self._initial_params(vocab, d, size)
        super().__init__(vocab, d, params, size)

    def _layout(self, vocab: Vocab, d: int) -> List[_Slot]:
        e, (h1, h2) = self.embed_dim, self.hidden
        shapes = [
            ("tok", (vocab.size_with_mask, e)),
            ("pos", (d, e)),
            ("w1", (2 * e, h1)),
            ("b1", (h1,)),
            ("w2", (h1, h2)),
            ("b2", (h2,)),
            ("w3", (h2, vocab.n_tokens)),
            ("b3", (vocab.n_tokens,)),
        ]
        slots, start = [], 0
        for name, shape in shapes:
            slot = _Slot(name, start, shape)
            slots.append(slot)
            start = slot.stop
        return slots

    def _initial_params(self, vocab: Vocab, d: int, size: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        params = np.zeros(size)
        for slot in self._slots:
            if slot.name.startswith("b"):
                continue
            if slot.name in ("tok", "pos"):
                scale = 1.0 / np.sqrt(self.embed_dim)
            elif slot.name == "w3":
                scale = self.head_scale / np.sqrt(slot.shape[0])
            else:
                scale = 1.0 / np.sqrt(slot.shape[0])
            params[slot.start:slot.stop] = rng.normal(0.0, scale, size=slot.stop - slot.start)
        return params

    def _view(self, params: np.ndarray) -> Dict[str, np.ndarray]:
        return {s.name: params[s.start:s.stop].reshape(s.shape) for s in self._slots}

    def _logits(self, x: SequenceState) -> Tuple[np.ndarray, Any]:
        w = self._view(self._params)
        tokens = x.tokens
        u = np.tanh(w["tok"][tokens] + w["pos"])
        context = u.mean(axis=0, keepdims=True)
        z0 = np.concatenate([u, np.repeat(context, self.d, axis=0)], axis=1)
        a1 = np.tanh(z0 @ w["w1"] + w["b1"])
        a2 = np.tanh(a1 @ w["w2"] + w["b2"])
        logits = a2 @ w["w3"] + w["b3"]
        return logits, _Forward(tokens=tokens, u=u, z0=z0, a1=a1, a2=a2)

    def _backward(self, x: SequenceState, cache: Any, dlogits: np.ndarray) -> np.ndarray:
        w = self._view(self._params)
        grad = np.zeros_like(self._params)
        g = self._view(grad)
        e = self.embed_dim

        g["w3"][:] = cache.a2.T @ dlogits
        g["b3"][:] = dlogits.sum(axis=0)
        dz2 = (dlogits @ w["w3"].T) * (1.0 - cache.a2 ** 2)

        g["w2"][:] = cache.a1.T @ dz2
        g["b2"][:] = dz2.sum(axis=0)
        dz1 = (dz2 @ w["w2"].T) * (1.0 - cache.a1 ** 2)

        g["w1"][:] = cache.z0.T @ dz1
        g["b1"][:] = dz1.sum(axis=0)
        dz0 = dz1 @ w["w1"].T

        # pooled half feeds every position equally
        du = dz0[:, :e] + dz0[:, e:].sum(axis=0, keepdims=True) / self.d
        dpre = du * (1.0 - cache.u ** 2)
        g["pos"][:] = dpre
        np.add.at(g["tok"], cache.tokens, dpre)
        return grad

    def hyperparameters(self) -> Dict[str, Any]:
        return {
            "embed_dim": self.embed_dim,
            "hidden": list(self.hidden),
            "seed": self.seed,
            "head_scale": self.head_scale,
        }
