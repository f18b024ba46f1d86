"""Sine-activated multilayer perceptron: weights, initialisation, evaluation and JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from simready import dual
from simready.errors import ConfigError, WeightFileError


@dataclass
class MlpWeights:
    """Parameters of a ``[2, W, W, 1]`` network with sine hidden activations.

    Hidden layers compute ``sin(omega0 * (W a + b))``; the output layer is affine.
    """

    arch: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    omega0: float = 30.0
    seed: int = 0
    steps: int = 0

    def __post_init__(self) -> None:
        validate_arch(self.arch)
        if len(self.weights) != len(self.arch) - 1 or len(self.biases) != len(self.arch) - 1:
            raise WeightFileError(
                f"expected {len(self.arch) - 1} layers for arch {self.arch}, "
                f"got {len(self.weights)} weights and {len(self.biases)} biases"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.arch[i + 1], self.arch[i])
            if w.shape != want:
                raise WeightFileError(f"layers[{i}].weight has shape {w.shape}, arch requires {want}")
            if b.shape != (self.arch[i + 1],):
                raise WeightFileError(
                    f"layers[{i}].bias has shape {b.shape}, arch requires ({self.arch[i + 1]},)"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise WeightFileError(f"layers[{i}] contains non-finite entries")

    def copy(self) -> "MlpWeights":
        return MlpWeights(
            list(self.arch),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.omega0,
            self.seed,
            self.steps,
        )

    def flat(self) -> np.ndarray:
        """All parameters concatenated as W1, b1, W2, b2, W3, b3."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend([w.ravel(), b.ravel()])
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "MlpWeights":
        out = self.copy()
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.weights[i] = theta[k : k + w.size].reshape(w.shape).copy()
            k += w.size
            out.biases[i] = theta[k : k + b.size].copy()
            k += b.size
        return out


def validate_arch(arch) -> None:
    if len(arch) != 4 or arch[0] != 2 or arch[-1] != 1 or arch[1] != arch[2]:
        raise ConfigError(f"architecture must be [2, W, W, 1], got {list(arch)}")
    if not 16 <= arch[1] <= 128:
        raise ConfigError(f"hidden width must lie in [16, 128], got {arch[1]}")


def init_weights(arch, omega0: float = 30.0, seed: int = 0) -> MlpWeights:
    """SIREN-style initialisation drawn from a PCG64 generator seeded with ``seed``.

    First layer entries are uniform in ``±1/fan_in``; later layers in
    ``±sqrt(6/fan_in)/omega0``.  Biases use the same bound as their layer.
    """
    arch = [int(a) for a in arch]
    validate_arch(arch)
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for i in range(len(arch) - 1):
        fan_in, fan_out = arch[i], arch[i + 1]
        bound = 1.0 / fan_in if i == 0 else math.sqrt(6.0 / fan_in) / omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpWeights(arch, weights, biases, float(omega0), int(seed), 0)


def forward(w: MlpWeights, points: np.ndarray) -> np.ndarray:
    """Network value at ``points`` (shape (N, 2))."""
    a = np.asarray(points, dtype=float)
    n_layers = len(w.weights)
    for i in range(n_layers - 1):
        a = np.sin(w.omega0 * (a @ w.weights[i].T + w.biases[i]))
    return (a @ w.weights[-1].T + w.biases[-1])[:, 0]


def forward_dual(w: MlpWeights, points: np.ndarray) -> dual.DualScalar2:
    """Value, gradient and Hessian of the network at ``points`` by forward-mode propagation."""
    a = dual.DualScalar2.coordinates(points)
    n_layers = len(w.weights)
    for i in range(n_layers - 1):
        a = dual.sin(dual.affine(a, w.omega0 * w.weights[i], w.omega0 * w.biases[i]))
    out = dual.affine(a, w.weights[-1], w.biases[-1])
    return dual.DualScalar2(out.value[:, 0], out.d1[:, 0, :], out.d2[:, 0, :])


# -- JSON weight files -----------------------------------------------------

_TOP_FIELDS = ("arch", "omega0", "layers", "seed", "steps")


def weights_to_dict(w: MlpWeights) -> dict:
    return {
        "arch": list(w.arch),
        "omega0": w.omega0,
        "layers": [
            {"weight": wt.tolist(), "bias": b.tolist()} for wt, b in zip(w.weights, w.biases)
        ],
        "seed": w.seed,
        "steps": w.steps,
    }


def weights_from_dict(doc: dict, source: str = "<dict>") -> MlpWeights:
    if not isinstance(doc, dict):
        raise WeightFileError(f"{source}: top level must be an object")
    for key in _TOP_FIELDS:
        if key not in doc:
            raise WeightFileError(f"{source}: missing field '{key}'")
    layers = doc["layers"]
    if not isinstance(layers, list):
        raise WeightFileError(f"{source}: field 'layers' must be a list")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        for key in ("weight", "bias"):
            if not isinstance(layer, dict) or key not in layer:
                raise WeightFileError(f"{source}: missing field 'layers[{i}].{key}'")
        try:
            wt = np.array(layer["weight"], dtype=float)
            b = np.array(layer["bias"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise WeightFileError(f"{source}: layers[{i}] is not numeric: {exc}") from None
        if wt.ndim != 2:
            raise WeightFileError(f"{source}: layers[{i}].weight must be a 2D array")
        weights.append(wt)
        biases.append(b)
    try:
        return MlpWeights(
            [int(a) for a in doc["arch"]],
            weights,
            biases,
            float(doc["omega0"]),
            int(doc["seed"]),
            int(doc["steps"]),
        )
    except (ConfigError, WeightFileError) as exc:
        raise WeightFileError(f"{source}: {exc}") from None


def save_weights(w: MlpWeights, path) -> None:
    # repr-based float output round-trips float64 exactly
    Path(path).write_text(json.dumps(weights_to_dict(w)))


def load_weights(path) -> MlpWeights:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return weights_from_dict(doc, str(path))
