"""Coordinate-MLP field networks: SIREN (default), Fourier-feature, ReLU.

Two evaluation paths exist on purpose:
  * plain numpy forward / forward_with_jacobian for inference, sensitivity
    collection and rasterization (no gradients needed);
  * build_forward / build_forward_with_jacobian, which record the same
    computation on an autodiff Tape so parameter gradients of losses that
    consume outputs and spatial jacobians are exact.
Consistency of the two paths is covered by tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Node, Tape


@dataclass(frozen=True)
class Siren:
    omega0: float = 60.0


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class FourierFeature:
    feature_count: int = 128
    scale: float = 10.0


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_dim: int
    output_dim: int
    hidden_layers: int = 4  # five-layer MLP: 4 hidden + linear output
    activation: object = field(default_factory=Siren)
    residual: bool = True

    def layer_dims(self) -> list[tuple[int, int]]:
        if isinstance(self.activation, FourierFeature):
            first_in = 2 * self.activation.feature_count
        else:
            first_in = self.input_dim
        dims = [(first_in, self.hidden_dim)]
        dims += [(self.hidden_dim, self.hidden_dim)] * (self.hidden_layers - 1)
        dims += [(self.hidden_dim, self.output_dim)]
        return dims


@dataclass
class NetworkParams:
    arch: MlpArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int
    fourier_matrix: np.ndarray | None = None  # (feature_count, input_dim), fixed at init

    def parameter_tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            None if self.fourier_matrix is None else self.fourier_matrix.copy(),
        )


def init_network(arch: MlpArchitecture, seed: int) -> NetworkParams:
    act = arch.activation
    if isinstance(act, Siren):
        return init_siren(arch, seed)
    rng = np.random.default_rng(seed)
    fourier = None
    if isinstance(act, FourierFeature):
        fourier = rng.normal(0.0, act.scale, size=(act.feature_count, arch.input_dim))
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_dims():
        # He init for the ReLU body
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(arch, weights, biases, seed, fourier)


def init_siren(arch: MlpArchitecture, seed: int) -> NetworkParams:
    """Sitzmann initialization: first layer uniform in +-1/fan_in, deeper
    layers uniform in +-sqrt(6/fan_in)/omega0."""
    act = arch.activation
    if not isinstance(act, Siren) or act.omega0 <= 0:
        raise ValueError(f"init_siren needs a Siren activation with omega0 > 0, got {act}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(arch.layer_dims()):
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / act.omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return NetworkParams(arch, weights, biases, seed)


def init_density_head(params: NetworkParams, target_volume: float) -> NetworkParams:
    """Start the density field near uniform target_volume: shrink output
    weights by 1e-3 and set the bias so sigmoid(5 * Phi) ~= target_volume."""
    if not 0.0 < target_volume < 1.0:
        raise ValueError(f"target volume must be in (0, 1), got {target_volume}")
    out = params.copy()
    out.weights[-1] *= 1e-3
    logit = np.log(target_volume / (1.0 - target_volume))
    out.biases[-1] = np.full_like(out.biases[-1], logit / 5.0)
    return out


def fourier_embed(x: np.ndarray, feature_matrix: np.ndarray) -> np.ndarray:
    """[cos(2 pi B x), sin(2 pi B x)] embedding for the Fourier-feature MLP."""
    z = 2.0 * np.pi * x @ feature_matrix.T
    return np.concatenate([np.cos(z), np.sin(z)], axis=-1)


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Plain forward pass, (n, input_dim) -> (n, output_dim)."""
    arch = params.arch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != arch.input_dim:
        raise ValueError(f"expected input dim {arch.input_dim}, got {x.shape[1]}")
    act = arch.activation
    if isinstance(act, FourierFeature):
        h = _relu_body(params, fourier_embed(x, params.fourier_matrix))
    elif isinstance(act, Relu):
        h = _relu_body(params, x)
    else:
        h = np.sin((act.omega0 * x) @ params.weights[0] + params.biases[0])
        for w, b in zip(params.weights[1:-1], params.biases[1:-1]):
            z = np.sin(h @ w + b)
            h = z + h if arch.residual else z
    out = h @ params.weights[-1] + params.biases[-1]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite network output")
    return out


def _relu_body(params: NetworkParams, h: np.ndarray) -> np.ndarray:
    h = np.maximum(0.0, h @ params.weights[0] + params.biases[0])
    for w, b in zip(params.weights[1:-1], params.biases[1:-1]):
        z = np.maximum(0.0, h @ w + b)
        h = z + h if params.arch.residual else z
    return h


def forward_with_jacobian(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-mode spatial jacobian alongside the forward pass.

    Returns (outputs (n, out), jacobians (n, out, dim)); jacobians[i, c, d]
    is d output_c / d x_d at point i.
    """
    arch = params.arch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != arch.input_dim:
        raise ValueError(f"expected input dim {arch.input_dim}, got {x.shape[1]}")
    n, dim = x.shape
    act = arch.activation

    if isinstance(act, FourierFeature):
        z = 2.0 * np.pi * x @ params.fourier_matrix.T
        h = np.concatenate([np.cos(z), np.sin(z)], axis=-1)
        dz = 2.0 * np.pi * params.fourier_matrix  # (features, dim)
        jac = np.concatenate(
            [-np.sin(z)[:, :, None] * dz[None], np.cos(z)[:, :, None] * dz[None]], axis=1
        )
        h, jac = _relu_body_jac(params, h, jac)
    elif isinstance(act, Relu):
        jac = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()
        h, jac = _relu_body_jac(params, x, jac)
    else:
        z = (act.omega0 * x) @ params.weights[0] + params.biases[0]
        h = np.sin(z)
        jac = np.cos(z)[:, :, None] * (act.omega0 * params.weights[0].T)[None]
        for w, b in zip(params.weights[1:-1], params.biases[1:-1]):
            z = h @ w + b
            jz = np.einsum("nhd,hk->nkd", jac, w)
            a, ja = np.sin(z), np.cos(z)[:, :, None] * jz
            if arch.residual:
                h, jac = a + h, ja + jac
            else:
                h, jac = a, ja
    out = h @ params.weights[-1] + params.biases[-1]
    jout = np.einsum("nhd,hk->nkd", jac, params.weights[-1])
    return out, jout


def _relu_body_jac(params, h, jac):
    z = h @ params.weights[0] + params.biases[0]
    mask = (z > 0.0).astype(np.float64)
    h2 = z * mask
    j2 = mask[:, :, None] * np.einsum("nhd,hk->nkd", jac, params.weights[0])
    h, jac = h2, j2
    for w, b in zip(params.weights[1:-1], params.biases[1:-1]):
        z = h @ w + b
        mask = (z > 0.0).astype(np.float64)
        a = z * mask
        ja = mask[:, :, None] * np.einsum("nhd,hk->nkd", jac, w)
        if params.arch.residual:
            h, jac = a + h, ja + jac
        else:
            h, jac = a, ja
    return h, jac


# -- tape builders --------------------------------------------------------


def make_param_leaves(tape: Tape, params: NetworkParams) -> list[Node]:
    """Leaf nodes in parameter_tensors() order (w0, b0, w1, b1, ...)."""
    return [tape.leaf(t, requires_grad=True) for t in params.parameter_tensors()]


def build_forward(tape: Tape, params: NetworkParams, leaves: list[Node], x: np.ndarray) -> Node:
    out, _ = _build(tape, params, leaves, x, want_jacobian=False)
    return out


def build_forward_with_jacobian(
    tape: Tape, params: NetworkParams, leaves: list[Node], x: np.ndarray
) -> tuple[Node, list[Node]]:
    """Tape version of forward_with_jacobian; the jacobian comes back as
    dim nodes of shape (n, output_dim), one per spatial direction."""
    return _build(tape, params, leaves, x, want_jacobian=True)


def _build(tape, params, leaves, x, want_jacobian):
    arch = params.arch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, dim = x.shape
    act = arch.activation
    ws = leaves[0::2]
    bs = leaves[1::2]

    if isinstance(act, (Relu, FourierFeature)):
        if isinstance(act, FourierFeature):
            zc = tape.constant(2.0 * np.pi * x @ params.fourier_matrix.T)
            h = tape.concat([tape.cos(zc), tape.sin(zc)], axis=-1)
            if want_jacobian:
                dz = 2.0 * np.pi * params.fourier_matrix  # constant w.r.t. params
                jh = [
                    tape.concat(
                        [
                            tape.mul(tape.scale(tape.sin(zc), -1.0), tape.constant(dz[:, d])),
                            tape.mul(tape.cos(zc), tape.constant(dz[:, d])),
                        ],
                        axis=-1,
                    )
                    for d in range(dim)
                ]
            else:
                jh = None
        else:
            h = tape.constant(x)
            jh = [tape.constant(np.broadcast_to(np.eye(dim)[d], (n, dim)).copy()) for d in range(dim)] if want_jacobian else None
        nonlin = tape.relu
        is_sin = False
    else:
        h = tape.constant(act.omega0 * x)
        jh = [tape.constant(np.broadcast_to(act.omega0 * np.eye(dim)[d], (n, dim)).copy()) for d in range(dim)] if want_jacobian else None
        nonlin = tape.sin
        is_sin = True

    n_layers = len(params.weights)
    for i in range(n_layers - 1):
        z = tape.add(tape.matmul(h, ws[i]), bs[i])
        a = nonlin(z)
        if want_jacobian:
            ja = []
            dz = tape.cos(z) if is_sin else tape.constant((z.value > 0.0).astype(np.float64))
            for d in range(dim):
                jz = tape.matmul(jh[d], ws[i])
                ja.append(tape.mul(dz, jz))
        res = arch.residual and i > 0 and a.shape == h.shape
        if res:
            h = tape.add(a, h)
            if want_jacobian:
                jh = [tape.add(ja[d], jh[d]) for d in range(dim)]
        else:
            h = a
            if want_jacobian:
                jh = ja
    out = tape.add(tape.matmul(h, ws[-1]), bs[-1])
    jout = [tape.matmul(jh[d], ws[-1]) for d in range(dim)] if want_jacobian else None
    return out, jout
