import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pairlab.data import Dataset, Normalization
from pairlab.errors import ArgumentError, TrainingError
from pairlab.masks import MaskOperator, apply_mask
from pairlab.networks import Mlp, MlpSpec, init_mlp, zero_mlp
from pairlab.random import get_stream, kShuffleStream
from pairlab.tape import GradientTape, Slot

logger = logging.getLogger(__name__)

kNetworks = ("encode_x", "decode_x", "encode_y", "decode_y", "map_fwd",
             "map_bwd")
kRoles = kNetworks + ("end_to_end", "surrogate_forward")
kEvalChunk = 256


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    learning_rate_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    weights: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ArgumentError("epochs must be nonnegative and batch size positive")
        if self.learning_rate < 0.0:
            raise ArgumentError(
                f"learning rate must be nonnegative, got {self.learning_rate}")
        if not 0.0 < self.learning_rate_decay <= 1.0:
            raise ArgumentError(
                f"learning rate decay must be in (0, 1], got {self.learning_rate_decay}")
        if len(self.weights) != 4 or min(self.weights) < 0.0:
            raise ArgumentError(f"loss weights must be 4 nonnegative reals, got {self.weights}")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ArgumentError(f"moment decays must be in [0, 1), got {self.betas}")


kEncDecWeights = (0.0, 0.0, 1.0, 0.0)


def encdec_config(config: TrainConfig) -> TrainConfig:
    return replace(config, weights=kEncDecWeights)


class PairSpec:

    def __init__(self, networks: Dict[str, MlpSpec]):
        missing = [r for r in kNetworks if r not in networks]
        if missing:
            raise ArgumentError(f"missing network specs: {missing}")
        self.networks = {r: networks[r] for r in kNetworks}
        self._check_chain()

    def _check_chain(self) -> None:
        s = self.networks
        n = s["encode_x"].input_width
        q = s["encode_y"].input_width
        lx = s["encode_x"].output_width
        ly = s["encode_y"].output_width
        chain = {
            "decode_x": (lx, n),
            "decode_y": (ly, q),
            "map_fwd": (lx, ly),
            "map_bwd": (ly, lx),
        }
        for role, (i, o) in chain.items():
            spec = s[role]
            if (spec.input_width, spec.output_width) != (i, o):
                raise ArgumentError(
                    f"{role} maps {spec.input_width} -> {spec.output_width}, expected {i} -> {o}"
                )

    def to_dict(self) -> dict:
        return {r: s.to_dict() for r, s in self.networks.items()}

    @staticmethod
    def from_dict(d: dict) -> "PairSpec":
        return PairSpec({r: MlpSpec.from_dict(d[r]) for r in kNetworks})


def default_pair_spec(n: int,
                      q: int,
                      latent_x: int = 64,
                      latent_y: int = 64,
                      hidden_x: Sequence[int] = (128, 64),
                      hidden_y: Sequence[int] = (256, 128),
                      activation: str = "tanh") -> PairSpec:
    hidden_x, hidden_y = tuple(hidden_x), tuple(hidden_y)
    return PairSpec({
        "encode_x": MlpSpec((n,) + hidden_x + (latent_x,), activation),
        "decode_x": MlpSpec((latent_x,) + hidden_x[::-1] + (n,), activation),
        "encode_y": MlpSpec((q,) + hidden_y + (latent_y,), activation),
        "decode_y": MlpSpec((latent_y,) + hidden_y[::-1] + (q,), activation),
        "map_fwd": MlpSpec((latent_x, latent_y), activation),
        "map_bwd": MlpSpec((latent_y, latent_x), activation),
    })


class PairModel:

    def __init__(self, networks: Dict[str, Mlp], normalization: Normalization):
        self.spec = PairSpec({r: networks[r].spec for r in kNetworks})
        self.networks = {r: networks[r] for r in kNetworks}
        self.normalization = normalization

    @property
    def n(self) -> int:
        return self.spec.networks["encode_x"].input_width

    @property
    def q(self) -> int:
        return self.spec.networks["encode_y"].input_width

    @property
    def latent_x(self) -> int:
        return self.spec.networks["encode_x"].output_width

    @property
    def latent_y(self) -> int:
        return self.spec.networks["encode_y"].output_width

    @property
    def x_std(self) -> float:
        return self.normalization.x_std

    @property
    def y_std(self) -> float:
        return self.normalization.y_std

    def parameters(self) -> List[np.ndarray]:
        params = []
        for r in kNetworks:
            params.extend(self.networks[r].parameters())
        return params

    def copy(self) -> "PairModel":
        return PairModel({r: m.copy()
                          for r, m in self.networks.items()},
                         self.normalization)

    def normalize_x(self, x: np.ndarray) -> np.ndarray:
        return self.normalization.normalize_x(x)

    def denormalize_x(self, x: np.ndarray) -> np.ndarray:
        return self.normalization.denormalize_x(x)

    def normalize_y(self, y: np.ndarray) -> np.ndarray:
        return self.normalization.normalize_y(y)

    def denormalize_y(self, y: np.ndarray) -> np.ndarray:
        return self.normalization.denormalize_y(y)

    def encode_x(self, x: np.ndarray) -> np.ndarray:
        return self.networks["encode_x"](x)

    def decode_x(self, z: np.ndarray) -> np.ndarray:
        return self.networks["decode_x"](z)

    def encode_y(self, y: np.ndarray) -> np.ndarray:
        return self.networks["encode_y"](y)

    def decode_y(self, z: np.ndarray) -> np.ndarray:
        return self.networks["decode_y"](z)

    def map_fwd(self, z: np.ndarray) -> np.ndarray:
        return self.networks["map_fwd"](z)

    def map_bwd(self, z: np.ndarray) -> np.ndarray:
        return self.networks["map_bwd"](z)

    def vjp_decode_x(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.networks["decode_x"].vjp(z, g)

    def vjp_decode_y(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.networks["decode_y"].vjp(z, g)

    def vjp_map_fwd(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.networks["map_fwd"].vjp(z, g)


def init_model(spec: PairSpec,
               seed: int,
               normalization: Optional[Normalization] = None) -> PairModel:
    networks = {r: init_mlp(spec.networks[r], seed, k) for k, r in enumerate(kNetworks)}
    return PairModel(networks, normalization or Normalization.identity())


def zero_model(spec: PairSpec,
               normalization: Optional[Normalization] = None) -> PairModel:
    networks = {r: zero_mlp(spec.networks[r]) for r in kNetworks}
    return PairModel(networks, normalization or Normalization.identity())


def apply(model: PairModel, role: str, v: np.ndarray) -> np.ndarray:
    if role not in kRoles:
        raise ArgumentError(f"unknown role '{role}'")
    if role == "end_to_end":
        y = model.normalize_y(v)
        return model.denormalize_x(
            model.decode_x(model.map_bwd(model.encode_y(y))))
    if role == "surrogate_forward":
        x = model.normalize_x(v)
        return model.denormalize_y(
            model.decode_y(model.map_fwd(model.encode_x(x))))
    return model.networks[role](v)


def vjp(model: PairModel, role: str, v: np.ndarray, g: np.ndarray) -> np.ndarray:
    if role not in kNetworks:
        raise ArgumentError(f"no vector-Jacobian product for role '{role}'")
    return model.networks[role].vjp(v, g)


# Loss.


def _record_residual_term(tape: GradientTape, out: Slot, target: Slot,
                          weight: float) -> Slot:
    return tape.scale(tape.squared_norm(tape.sub(out, target)), weight)


def _record_pair_loss(
        tape: GradientTape,
        model: PairModel,
        X: np.ndarray,
        Y: np.ndarray,
        weights: Sequence[float],
        Y_in: Optional[np.ndarray] = None) -> Tuple[Slot, List[Slot]]:
    if len(X) == 0 or len(X) != len(Y):
        raise ArgumentError("batch must be nonempty with matching sample counts")
    params: Dict[str, List[Slot]] = {
        r: model.networks[r].watch(tape) for r in kNetworks
    }
    x = tape.watch(X)
    y = tape.watch(Y)
    y_in = y if Y_in is None else tape.watch(Y_in)

    def run(role: str, v: Slot) -> Slot:
        return model.networks[role].record(tape, v, params[role])

    w_ax, w_ay, w_inv, w_fwd = weights
    terms: List[Slot] = []
    need_zx = w_ax > 0.0 or w_fwd > 0.0
    need_zy = w_ay > 0.0 or w_inv > 0.0
    zx = run("encode_x", x) if need_zx else None
    zy = run("encode_y", y_in) if need_zy else None
    if w_ax > 0.0:
        terms.append(_record_residual_term(tape, run("decode_x", zx), x, w_ax))
    if w_ay > 0.0:
        terms.append(_record_residual_term(tape, run("decode_y", zy), y, w_ay))
    if w_inv > 0.0:
        terms.append(
            _record_residual_term(tape, run("decode_x", run("map_bwd", zy)), x,
                                  w_inv))
    if w_fwd > 0.0:
        terms.append(
            _record_residual_term(tape, run("decode_y", run("map_fwd", zx)), y,
                                  w_fwd))
    if not terms:
        terms.append(tape.scale(tape.squared_norm(x), 0.0))

    loss = terms[0]
    for t in terms[1:]:
        loss = tape.add(loss, t)
    flat_params = [s for r in kNetworks for s in params[r]]
    return loss, flat_params


def pair_loss(model: PairModel,
              X: np.ndarray,
              Y: np.ndarray,
              weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
              Y_in: Optional[np.ndarray] = None) -> float:
    tape = GradientTape()
    loss, _ = _record_pair_loss(tape, model, np.atleast_2d(X),
                                np.atleast_2d(Y), weights, Y_in)
    return float(tape.value(loss))


def pair_loss_grad(
        model: PairModel,
        X: np.ndarray,
        Y: np.ndarray,
        weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
        Y_in: Optional[np.ndarray] = None) -> Tuple[float, List[np.ndarray]]:
    tape = GradientTape()
    loss, params = _record_pair_loss(tape, model, np.atleast_2d(X),
                                     np.atleast_2d(Y), weights, Y_in)
    return float(tape.value(loss)), tape.gradient(loss, params)


# Training.


class TrainResult:

    def __init__(self, model: PairModel, trace: List[float]):
        self.model = model
        self.trace = trace


def _normalized_arrays(
        model: PairModel, dataset: Dataset, input_mask: Optional[MaskOperator]
) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    if dataset.n != model.n or dataset.q != model.q:
        raise ArgumentError(
            f"dataset dimensions ({dataset.n}, {dataset.q}) do not match the model ({model.n}, {model.q})"
        )
    X = model.normalize_x(dataset.X)
    Y = model.normalize_y(dataset.Y)
    Y_in = None
    if input_mask is not None:
        Y_in = model.normalize_y(apply_mask(input_mask, dataset.Y))
    return X, Y, Y_in


def mean_loss(model: PairModel,
              X: np.ndarray,
              Y: np.ndarray,
              weights: Sequence[float],
              Y_in: Optional[np.ndarray] = None) -> float:
    total = 0.0
    for start in range(0, len(X), kEvalChunk):
        chunk = slice(start, start + kEvalChunk)
        total += pair_loss(model, X[chunk], Y[chunk], weights,
                           None if Y_in is None else Y_in[chunk])
    return total / len(X)


def get_learning_rate(config: TrainConfig, step: int, total_steps: int) -> float:
    """Cosine schedule from the learning rate down to its decayed value."""
    progress = step / max(total_steps - 1, 1)
    floor = config.learning_rate_decay
    return config.learning_rate * (floor + (1.0 - floor) * 0.5 *
                                   (1.0 + np.cos(np.pi * progress)))


def train(model: PairModel,
          dataset: Dataset,
          config: TrainConfig,
          input_mask: Optional[MaskOperator] = None) -> TrainResult:
    config.validate()
    model = model.copy()
    X, Y, Y_in = _normalized_arrays(model, dataset, input_mask)
    count = len(X)
    total_steps = config.epochs * (-(-count // config.batch_size))
    params = model.parameters()
    b1, b2 = config.betas
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0

    def checked(epoch: int, loss: float) -> float:
        if not np.isfinite(loss):
            raise TrainingError(epoch, f"loss became non-finite ({loss})")
        return loss

    trace = [checked(0, mean_loss(model, X, Y, config.weights, Y_in))]
    for epoch in range(config.epochs):
        order = get_stream(config.seed, kShuffleStream, epoch).permutation(count)
        for start in range(0, count, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = pair_loss_grad(model, X[idx], Y[idx], config.weights,
                                         None if Y_in is None else Y_in[idx])
            checked(epoch, loss)

            # Adam on the batch-mean loss.
            lr = get_learning_rate(config, step, total_steps)
            step += 1
            scale = 1.0 / len(idx)
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for p, g, mk, vk in zip(params, grads, m, v):
                g = scale * g
                mk *= b1
                mk += (1.0 - b1) * g
                vk *= b2
                vk += (1.0 - b2) * g * g
                p -= lr * (mk / c1) / (np.sqrt(vk / c2) + config.eps)

        trace.append(checked(epoch, mean_loss(model, X, Y, config.weights,
                                              Y_in)))
        logger.info("epoch %d/%d: loss %.6e", epoch + 1, config.epochs,
                    trace[-1])
    return TrainResult(model, trace)


def train_encdec(model: PairModel,
                 dataset: Dataset,
                 config: TrainConfig,
                 input_mask: Optional[MaskOperator] = None) -> TrainResult:
    return train(model, dataset, encdec_config(config), input_mask)
