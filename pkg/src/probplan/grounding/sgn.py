"""Modular symbol grounding network written directly against numpy.

Each object owns a two-layer perceptron that embeds the whole observation;
each predicate owns a two-layer perceptron that scores the concatenated
embeddings of its arguments. Atoms of one predicate share that predicate's
parameters. Zero-arity predicates read the mean of all object embeddings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..belief import BeliefState
from ..domains import ContinuousState, WorldState
from ..pddl import AtomUniverse, GroundAtom, parse_call
from .oracle import Grounder

CHECKPOINT_MAGIC = b"PROBPLAN-SGN\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-3
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    hidden: int = 128
    embed: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs", "hidden", "embed", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class _Pred:
    name: str
    arity: int
    atom_ids: np.ndarray  # (m,)
    arg_index: np.ndarray  # (m, arity) object indices
    onehots: list = field(default_factory=list)  # per argument slot: (m, n_objects)


class ModularSgn:
    """Object modules plus predicate modules over one flat parameter vector."""

    def __init__(
        self,
        objects: Sequence[str],
        universe: AtomUniverse,
        input_dim: int,
        hidden: int = 128,
        embed: int = 32,
        seed: int = 0,
        params: np.ndarray | None = None,
    ):
        self.objects = tuple(objects)
        self.universe = universe
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        self.embed = int(embed)
        obj_index = {o: i for i, o in enumerate(self.objects)}
        self.preds: list[_Pred] = []
        groups: dict[str, list[int]] = {}
        for i, atom in enumerate(universe.atoms):
            groups.setdefault(atom.predicate, []).append(i)
        for name, ids in sorted(groups.items()):
            ids = np.asarray(ids, dtype=np.intp)
            arity = len(universe.atoms[ids[0]].args)
            args = np.array(
                [[obj_index[a] for a in universe.atoms[i].args] for i in ids], dtype=np.intp
            ).reshape(len(ids), arity)
            p = _Pred(name, arity, ids, args)
            for j in range(arity):
                oh = np.zeros((len(ids), len(self.objects)))
                oh[np.arange(len(ids)), args[:, j]] = 1.0
                p.onehots.append(oh)
            self.preds.append(p)

        O, D, H, E = len(self.objects), self.input_dim, self.hidden, self.embed
        self.layout: list[tuple[str, tuple[int, ...]]] = [
            ("obj.W1", (O, D, H)),
            ("obj.b1", (O, H)),
            ("obj.W2", (O, H, E)),
            ("obj.b2", (O, E)),
        ]
        for p in self.preds:
            k_in = max(p.arity, 1) * E
            self.layout += [
                (f"{p.name}.W1", (k_in, H)),
                (f"{p.name}.b1", (H,)),
                (f"{p.name}.W2", (H,)),
                (f"{p.name}.b2", ()),
            ]
        self.n_params = sum(math.prod(s) for _, s in self.layout)
        if params is None:
            params = self._init_params(seed)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        self.params = params.copy()
        self.views = self._views(self.params)

    # -- parameters ----------------------------------------------------------

    def _views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, k = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = flat[k : k + n].reshape(shape)
            k += n
        return out

    def _init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        flat = np.zeros(self.n_params)
        v = self._views(flat)
        D, H, E = self.input_dim, self.hidden, self.embed
        v["obj.W1"][...] = rng.normal(0.0, math.sqrt(2.0 / D), v["obj.W1"].shape)
        v["obj.W2"][...] = rng.normal(0.0, math.sqrt(1.0 / H), v["obj.W2"].shape)
        for p in self.preds:
            w1 = v[f"{p.name}.W1"]
            w1[...] = rng.normal(0.0, math.sqrt(2.0 / w1.shape[0]), w1.shape)
            v[f"{p.name}.W2"][...] = rng.normal(0.0, math.sqrt(1.0 / H), (H,))
        return flat

    def module_sizes(self) -> dict[str, int]:
        """Parameter count of every module, keyed by object or predicate name."""
        O = len(self.objects)
        per_obj = sum(math.prod(s) for n, s in self.layout if n.startswith("obj.")) // O
        sizes = {f"object:{o}": per_obj for o in self.objects}
        for p in self.preds:
            sizes[f"predicate:{p.name}"] = sum(math.prod(s) for n, s in self.layout if n.split(".")[0] == p.name)
        return sizes

    def predicate_params(self, predicate: str) -> dict[str, np.ndarray]:
        return {n.split(".", 1)[1]: self.views[n] for n, _ in self.layout if n.split(".")[0] == predicate}

    def object_params(self, obj: str) -> dict[str, np.ndarray]:
        i = self.objects.index(obj)
        return {k: self.views[f"obj.{k}"][i] for k in ("W1", "b1", "W2", "b2")}

    def atom_module(self, atom) -> str:
        """Name of the predicate module that scores ``atom``."""
        i = self.universe.id(atom) if not isinstance(atom, int) else atom
        return self.universe.atoms[i].predicate

    # -- forward / backward ------------------------------------------------------

    def _forward(self, X: np.ndarray, params: np.ndarray | None = None):
        v = self.views if params is None else self._views(params)
        N = X.shape[0]
        h_pre = np.einsum("nd,odh->noh", X, v["obj.W1"]) + v["obj.b1"]
        h = np.maximum(h_pre, 0.0)
        emb = np.einsum("noh,ohe->noe", h, v["obj.W2"]) + v["obj.b2"]
        logits = np.empty((N, len(self.universe)))
        cache = []
        for p in self.preds:
            if p.arity == 0:
                inp = emb.mean(axis=1)[:, None, :]
            else:
                inp = emb[:, p.arg_index].reshape(N, len(p.atom_ids), p.arity * self.embed)
            z1 = inp @ v[f"{p.name}.W1"] + v[f"{p.name}.b1"]
            a1 = np.maximum(z1, 0.0)
            logits[:, p.atom_ids] = a1 @ v[f"{p.name}.W2"] + v[f"{p.name}.b2"]
            cache.append((inp, z1, a1))
        return logits, (X, h_pre, h, cache)

    def _backward(self, dlogits: np.ndarray, fwd, params: np.ndarray | None = None) -> np.ndarray:
        v = self.views if params is None else self._views(params)
        X, h_pre, h, cache = fwd
        N, O, E = X.shape[0], len(self.objects), self.embed
        grad = np.zeros(self.n_params)
        g = self._views(grad)
        demb = np.zeros((N, O, E))
        for p, (inp, z1, a1) in zip(self.preds, cache):
            dl = dlogits[:, p.atom_ids]
            g[f"{p.name}.W2"][...] = np.einsum("nmh,nm->h", a1, dl)
            g[f"{p.name}.b2"][...] = dl.sum()
            dz1 = dl[..., None] * v[f"{p.name}.W2"] * (z1 > 0)
            g[f"{p.name}.W1"][...] = np.einsum("nmi,nmh->ih", inp, dz1)
            g[f"{p.name}.b1"][...] = dz1.sum(axis=(0, 1))
            dinp = dz1 @ v[f"{p.name}.W1"].T
            if p.arity == 0:
                demb += dinp[:, 0, None, :] / O
            else:
                dinp = dinp.reshape(N, len(p.atom_ids), p.arity, E)
                for j, oh in enumerate(p.onehots):
                    demb += np.einsum("nme,mo->noe", dinp[:, :, j], oh)
        g["obj.b2"][...] = demb.sum(axis=0)
        g["obj.W2"][...] = np.einsum("noh,noe->ohe", h, demb)
        dh = np.einsum("noe,ohe->noh", demb, v["obj.W2"]) * (h_pre > 0)
        g["obj.W1"][...] = np.einsum("nd,noh->odh", X, dh)
        g["obj.b1"][...] = dh.sum(axis=0)
        return grad

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self._forward(np.atleast_2d(np.asarray(X, dtype=np.float64)))[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Atom probabilities, one row per input row."""
        return _sigmoid(self.logits(X))

    def loss_and_grad(self, X: np.ndarray, Y: np.ndarray, params: np.ndarray | None = None):
        """Mean per-atom binary cross-entropy and its gradient in flat layout."""
        logits, fwd = self._forward(X, params)
        loss = _bce(logits, Y)
        dlogits = (_sigmoid(logits) - Y) / Y.size
        return loss, self._backward(dlogits, fwd, params)

    def loss(self, X: np.ndarray, Y: np.ndarray, params: np.ndarray | None = None) -> float:
        logits, _ = self._forward(X, params)
        return _bce(logits, Y)

    def ground_state(self, s: ContinuousState) -> BeliefState:
        if s.objects != self.objects:
            raise ValueError("observation object ordering differs from the model's")
        return BeliefState(np.clip(self.predict(s.features()[None])[0], 0.0, 1.0), self.universe)

    # -- serialization ---------------------------------------------------------

    def architecture(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "objects": list(self.objects),
            "atoms": [str(a) for a in self.universe.atoms],
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "embed": self.embed,
            "n_params": self.n_params,
            "dtype": "<f8",
        }


def _bce(logits: np.ndarray, Y: np.ndarray) -> float:
    # softplus(z) - y z, split so saturated logits do not cancel
    return float(np.mean(Y * np.logaddexp(0.0, -logits) + (1.0 - Y) * np.logaddexp(0.0, logits)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def save_checkpoint(model: ModularSgn, path) -> Path:
    """Magic line, one JSON architecture line, then raw little-endian float64 parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(model.architecture(), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(header + b"\n")
        f.write(model.params.astype("<f8").tobytes())
    return path


def load_checkpoint(path) -> ModularSgn:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a grounding-network checkpoint")
    rest = data[len(CHECKPOINT_MAGIC) :]
    nl = rest.index(b"\n")
    arch = json.loads(rest[:nl])
    if arch.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {arch.get('version')}")
    params = np.frombuffer(rest[nl + 1 :], dtype="<f8")
    universe = AtomUniverse(tuple(GroundAtom(*parse_call(a)) for a in arch["atoms"]))
    return ModularSgn(
        arch["objects"], universe, arch["input_dim"], arch["hidden"], arch["embed"], params=params.astype(np.float64)
    )


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    n_train: int = 0
    n_val: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def encode_dataset(dataset, universe: AtomUniverse) -> tuple[np.ndarray, np.ndarray]:
    """Stack (observation, true atoms) pairs into feature and multi-hot label arrays."""
    X = np.stack([s.features() for s, _ in dataset])
    Y = np.zeros((len(dataset), len(universe)))
    for r, (_, state) in enumerate(dataset):
        Y[r, sorted(state)] = 1.0
    return X, Y


def train_sgn(
    dataset: Sequence[tuple[ContinuousState, frozenset[int]]],
    universe: AtomUniverse,
    cfg: TrainConfig | None = None,
    model: ModularSgn | None = None,
) -> tuple[ModularSgn, TrainHistory]:
    """Fit a network with Adam on mini-batches of mean per-atom cross-entropy.

    History entries are full-split losses measured after each epoch.
    """
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    objects = dataset[0][0].objects
    for s, state in dataset:
        if s.objects != objects:
            raise ValueError("dataset mixes object orderings")
        if state and max(state) >= len(universe):
            raise ValueError("label atom id outside the universe")
    X, Y = encode_dataset(dataset, universe)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(dataset))
    n_val = int(round(cfg.val_fraction * len(dataset))) if len(dataset) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if model is None:
        model = ModularSgn(objects, universe, X.shape[1], cfg.hidden, cfg.embed, seed=cfg.seed)
    opt = Adam(model.n_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = TrainHistory(n_train=len(train_idx), n_val=n_val)
    Xt, Yt = X[train_idx], Y[train_idx]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_idx))
        for start in range(0, len(perm), cfg.batch_size):
            b = perm[start : start + cfg.batch_size]
            loss, grad = model.loss_and_grad(Xt[b], Yt[b])
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, batch starting {start}; "
                    f"try a smaller learning rate than {cfg.lr}"
                )
            opt.step(model.params, grad)
        hist.train_loss.append(model.loss(Xt, Yt))
        if n_val:
            hist.val_loss.append(model.loss(X[val_idx], Y[val_idx]))
    return model, hist


def atom_accuracy(model: ModularSgn, dataset) -> float:
    X, Y = encode_dataset(dataset, model.universe)
    return float(np.mean((model.predict(X) > 0.5) == (Y > 0.5)))


def gradient_check(
    model: ModularSgn, X: np.ndarray, Y: np.ndarray, n_coords: int = 10, eps: float = 1e-5, seed: int = 0
) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    _, grad = model.loss_and_grad(X, Y)
    rng = np.random.default_rng(seed)
    coords = rng.choice(model.n_params, size=min(n_coords, model.n_params), replace=False)
    worst = 0.0
    for i in coords:
        p = model.params.copy()
        p[i] += eps
        up = model.loss(X, Y, p)
        p[i] -= 2 * eps
        down = model.loss(X, Y, p)
        num = (up - down) / (2 * eps)
        denom = max(abs(num), abs(grad[i]), 1e-8)
        worst = max(worst, abs(num - grad[i]) / denom)
    return worst


class SgnGrounder(Grounder):
    def __init__(self, model: ModularSgn):
        self.model = model

    def ground(self, world: WorldState) -> BeliefState:
        if world.env.universe != self.model.universe:
            raise ValueError("world universe differs from the model's")
        return self.model.ground_state(world.poses)


def save_dataset(dataset, universe: AtomUniverse, path) -> Path:
    """JSON lines of poses and true atom names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for s, state in dataset:
            f.write(json.dumps({"poses": s.to_dict(), "atoms": universe.names(state)}, sort_keys=True) + "\n")
    return path


def load_dataset(path, universe: AtomUniverse) -> list[tuple[ContinuousState, frozenset[int]]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append((ContinuousState.from_dict(d["poses"]), universe.ids(d["atoms"])))
    return out
