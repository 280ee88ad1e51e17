"""
MPS-GNN Model - meta-path structured message passing, training and F1 evaluation.

One tower per meta-path r_1 ... r_L. Layer l (0-based) passes messages along relation
r_{L-l}, so the first layer starts at the far end of the path:

    h0 = x
    h_{l+1}(v) = act(W_self h_l(v) + W_neigh sum_{u in N_v^{r_{L-l}}} h_l(u) + W_skip x(v))

Each tower only sees the subgraph induced by its meta-path's occurrences from the
targets; nodes are processed in sorted id order so predictions depend on nothing
outside that subgraph. Final target embeddings of all towers are concatenated and a
linear readout gives two class logits.
"""

from dataclasses import asdict, dataclass, field
import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.metrics import f1_score
from sklearn.model_selection import train_test_split

from . import config
from .errors import DataError, DegenerateLabelsError, NumericalError, UsageError
from .graph import HeteroGraph, MetaPath, induced_subgraph
from .reporting import log, warn

ACTIVATIONS = {
    'logistic': torch.sigmoid,
    'relu': torch.relu,
}

CHECKPOINT_HEADER = "# mps-gnn checkpoint v1"


@dataclass
class TrainConfig:
    split: Tuple[float, float, float] = config.SPLIT_FRACTIONS
    lr: float = config.TRAIN_LR
    weight_decay: float = config.WEIGHT_DECAY
    max_epochs: int = config.MAX_EPOCHS
    patience: int = config.PATIENCE
    embedding_dim: int = config.EMBEDDING_DIM
    activation: str = config.ACTIVATION
    skip_connection: bool = config.SKIP_CONNECTION
    min_split_targets: int = config.MIN_SPLIT_TARGETS
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise UsageError(f"Split fractions must be three non-negative numbers summing to 1, got {self.split}")
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"Unknown activation '{self.activation}', expected one of {sorted(ACTIVATIONS)}")
        if self.max_epochs < 1 or self.patience < 1 or self.embedding_dim < 1:
            raise UsageError("max_epochs, patience and embedding_dim must be positive")


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fallback: bool = False


@dataclass
class TrainMetrics:
    train_f1: float
    val_f1: float
    test_f1: float
    val_loss: float
    epochs_run: int
    best_epoch: int
    split_sizes: Dict[str, int] = field(default_factory=dict)
    fallback_split: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------- metrics and splits


def f1(pred: Sequence[int], gold: Sequence[int], positive_class: int = 1) -> float:
    """F1 of the positive class; 0 when precision + recall is 0."""
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape:
        raise UsageError(f"f1 needs equal lengths, got {pred.shape} and {gold.shape}")
    if len(gold) == 0:
        return 0.0
    return float(f1_score(gold, pred, pos_label=positive_class, zero_division=0))


def label_arrays(labels: Mapping[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted labelled node ids and their 0/1 labels."""
    nodes = np.array(sorted(labels), dtype=np.int64)
    y = np.array([int(labels[v]) for v in nodes.tolist()], dtype=np.int64)
    if len(y) and not np.isin(y, (0, 1)).all():
        raise DataError("Labels must be 0 or 1")
    return nodes, y


def stratified_split(labels: Mapping[int, int], fractions: Sequence[float] = config.SPLIT_FRACTIONS,
                     seed: int = config.DEFAULT_SEED,
                     min_targets: int = config.MIN_SPLIT_TARGETS) -> Split:
    """Stratified train/validation/test split.

    When there are fewer than ``min_targets`` labelled nodes, or a split would miss a
    class, every labelled node is used for all three parts.
    """
    nodes, y = label_arrays(labels)
    if len(np.unique(y)) < 2:
        raise DegenerateLabelsError("Labels contain a single class; both classes are required")
    n_train = int(round(fractions[0] * len(nodes)))
    n_val = int(round(fractions[1] * len(nodes)))
    parts = None
    if len(nodes) >= min_targets:
        try:
            train, rest, _, y_rest = train_test_split(
                nodes, y, train_size=n_train, test_size=len(nodes) - n_train, stratify=y, random_state=seed)
            val, test = train_test_split(
                rest, train_size=n_val, test_size=len(rest) - n_val, stratify=y_rest, random_state=seed)
            parts = tuple(np.sort(p) for p in (train, val, test))
        except ValueError:
            parts = None

    def both_classes(part: np.ndarray) -> bool:
        return len(np.unique([labels[int(v)] for v in part])) == 2

    if parts is None or not all(both_classes(p) for p in parts):
        warn("Train", f"{len(nodes)} labelled nodes cannot be split with both classes in every part; "
                      f"using all of them for train, validation and test")
        return Split(nodes, nodes, nodes, fallback=True)
    return Split(*parts)


# ---------------------------------------------------------------------- model


@dataclass
class TowerInputs:
    """Induced-subgraph tensors of one meta-path for a fixed target list."""

    x: torch.Tensor
    target_index: torch.Tensor
    layer_edges: List[Tuple[torch.Tensor, torch.Tensor]]


def prepare_tower(g: HeteroGraph, mp: MetaPath, targets: np.ndarray) -> TowerInputs:
    sub = induced_subgraph(g, targets, mp)
    nodes = sub.nodes()
    layer_edges = []
    for layer in range(len(mp)):
        relation = mp[len(mp) - 1 - layer]
        src, dst = sub.relation_edges(relation)
        layer_edges.append((torch.as_tensor(np.searchsorted(nodes, src), dtype=torch.int64),
                            torch.as_tensor(np.searchsorted(nodes, dst), dtype=torch.int64)))
    return TowerInputs(
        x=torch.as_tensor(g.features[nodes], dtype=torch.float64),
        target_index=torch.as_tensor(np.searchsorted(nodes, targets), dtype=torch.int64),
        layer_edges=layer_edges,
    )


class MpsGnnLayer(nn.Module):
    """W_self, W_neigh and (optionally) W_skip of one layer."""

    def __init__(self, in_dim: int, out_dim: int, feature_dim: int, skip_connection: bool = True):
        super().__init__()
        self.w_self = nn.Linear(in_dim, out_dim, bias=False, dtype=torch.float64)
        self.w_neigh = nn.Linear(in_dim, out_dim, bias=False, dtype=torch.float64)
        self.w_skip = nn.Linear(feature_dim, out_dim, bias=False, dtype=torch.float64) if skip_connection else None

    def forward(self, h: torch.Tensor, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor,
                activation) -> torch.Tensor:
        pooled = torch.zeros_like(h).index_add(0, src, h[dst])
        out = self.w_self(h) + self.w_neigh(pooled)
        if self.w_skip is not None:
            out = out + self.w_skip(x)
        return activation(out)


class MpsGnnTower(nn.Module):
    def __init__(self, length: int, feature_dim: int, embedding_dim: int, skip_connection: bool):
        super().__init__()
        dims = [feature_dim] + [embedding_dim] * length
        self.layers = nn.ModuleList(
            MpsGnnLayer(dims[l], dims[l + 1], feature_dim, skip_connection) for l in range(length))
        self.out_dim = dims[-1]

    def forward(self, inputs: TowerInputs, activation) -> torch.Tensor:
        h = inputs.x
        for layer, (src, dst) in zip(self.layers, inputs.layer_edges):
            h = layer(h, inputs.x, src, dst, activation)
        return h[inputs.target_index]


class MpsGnnModel(nn.Module):
    """K meta-path towers, concatenated, followed by a 2-class linear readout."""

    def __init__(self, metapaths: Sequence[MetaPath], feature_dim: int,
                 embedding_dim: int = config.EMBEDDING_DIM, activation: str = config.ACTIVATION,
                 skip_connection: bool = config.SKIP_CONNECTION, seed: int = config.DEFAULT_SEED):
        super().__init__()
        if not metapaths:
            raise UsageError("MpsGnnModel needs at least one meta-path")
        if activation not in ACTIVATIONS:
            raise UsageError(f"Unknown activation '{activation}'")
        self.metapaths = [MetaPath(mp) if not isinstance(mp, MetaPath) else mp for mp in metapaths]
        self.feature_dim = int(feature_dim)
        self.embedding_dim = int(embedding_dim)
        self.activation = activation
        self.skip_connection = bool(skip_connection)
        self.towers = nn.ModuleList(
            MpsGnnTower(len(mp), self.feature_dim, self.embedding_dim, self.skip_connection)
            for mp in self.metapaths)
        self.readout = nn.Linear(sum(t.out_dim for t in self.towers), 2, dtype=torch.float64)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int):
        """Glorot-uniform weights from a private generator; zero readout bias."""
        generator = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for name, param in self.named_parameters():
                if name.endswith('bias'):
                    nn.init.zeros_(param)
                else:
                    nn.init.xavier_uniform_(param, generator=generator)

    def check_compatible(self, g: HeteroGraph, mps: Sequence[MetaPath]):
        if g.feature_dim != self.feature_dim:
            raise UsageError(f"Graph feature dimension {g.feature_dim} does not match the model's {self.feature_dim}")
        if [len(mp) for mp in mps] != [len(mp) for mp in self.metapaths]:
            raise UsageError("Meta-path lengths do not match the model's towers")

    def prepare(self, g: HeteroGraph, targets: Sequence[int],
                mps: Optional[Sequence[MetaPath]] = None) -> List[TowerInputs]:
        mps = self.metapaths if mps is None else list(mps)
        self.check_compatible(g, mps)
        targets = np.asarray(targets, dtype=np.int64)
        return [prepare_tower(g, mp, targets) for mp in mps]

    def logits(self, prepared: List[TowerInputs]) -> torch.Tensor:
        act = ACTIVATIONS[self.activation]
        embeddings = [tower(inputs, act) for tower, inputs in zip(self.towers, prepared)]
        return self.readout(torch.cat(embeddings, dim=1))

    def forward(self, prepared: List[TowerInputs]) -> torch.Tensor:
        return self.logits(prepared)

    def predict_proba(self, g: HeteroGraph, targets: Sequence[int]) -> np.ndarray:
        """Class probabilities, shape (len(targets), 2)."""
        with torch.no_grad():
            return torch.softmax(self.logits(self.prepare(g, targets)), dim=1).numpy()

    def predict(self, g: HeteroGraph, targets: Sequence[int]) -> np.ndarray:
        return np.argmax(self.predict_proba(g, targets), axis=1)

    def describe(self, g: Optional[HeteroGraph] = None) -> List[str]:
        if g is None:
            return [str(list(mp.relations)) for mp in self.metapaths]
        return [mp.describe(g) for mp in self.metapaths]


def forward(model: MpsGnnModel, g: HeteroGraph, mps: Sequence[MetaPath], targets: Sequence[int]) -> np.ndarray:
    """Per-target class probabilities of the model with the given meta-paths."""
    with torch.no_grad():
        return torch.softmax(model.logits(model.prepare(g, targets, mps)), dim=1).numpy()


# ---------------------------------------------------------------------- training


def train(g: HeteroGraph, mps: Sequence[MetaPath], labels: Mapping[int, int],
          cfg: Optional[TrainConfig] = None) -> Tuple[MpsGnnModel, TrainMetrics]:
    """Train an MPS-GNN with early stopping on validation F1.

    Args:
        g: Graph
        mps: One or more meta-paths; one tower each
        labels: node id -> 0/1
        cfg: Training settings

    Returns:
        The model restored to its best validation epoch and its metrics
    """
    cfg = cfg or TrainConfig()
    split = stratified_split(labels, cfg.split, cfg.seed, cfg.min_split_targets)
    nodes, y_all = label_arrays(labels)
    train_y = y_all[np.searchsorted(nodes, split.train)]
    if len(np.unique(train_y)) < 2:
        raise DegenerateLabelsError("Training split contains a single class")

    model = MpsGnnModel(mps, g.feature_dim, cfg.embedding_dim, cfg.activation, cfg.skip_connection, cfg.seed)
    prepared = model.prepare(g, nodes)
    y = torch.as_tensor(y_all)
    index = {name: torch.as_tensor(np.searchsorted(nodes, part), dtype=torch.int64)
             for name, part in (('train', split.train), ('val', split.val), ('test', split.test))}
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    best_state: Optional[Dict[str, torch.Tensor]] = None
    best_f1, best_loss, best_epoch = -1.0, np.inf, 0
    wait = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        optimizer.zero_grad()
        log_probs = F.log_softmax(model.logits(prepared), dim=1)
        loss = F.nll_loss(log_probs[index['train']], y[index['train']])
        if not torch.isfinite(loss):
            raise NumericalError(f"Non-finite training loss at epoch {epoch}")
        loss.backward()
        optimizer.step()

        model.eval()
        with torch.no_grad():
            log_probs = F.log_softmax(model.logits(prepared), dim=1)
            val_loss = float(F.nll_loss(log_probs[index['val']], y[index['val']]))
            val_pred = log_probs[index['val']].argmax(dim=1).numpy()
        val_f1 = f1(val_pred, y[index['val']].numpy())

        if val_f1 > best_f1 or (val_f1 == best_f1 and val_loss < best_loss):
            best_f1, best_loss, best_epoch = val_f1, val_loss, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
        if epoch % 100 == 0:
            log("Train", f"epoch {epoch}: train loss={float(loss):.4f} val F1={val_f1:.3f}")

    model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        pred = model.logits(prepared).argmax(dim=1).numpy()

    def part_f1(name: str) -> float:
        idx = index[name].numpy()
        return f1(pred[idx], y_all[idx])

    metrics = TrainMetrics(
        train_f1=part_f1('train'),
        val_f1=part_f1('val'),
        test_f1=part_f1('test'),
        val_loss=best_loss,
        epochs_run=epoch,
        best_epoch=best_epoch,
        split_sizes={'train': len(split.train), 'val': len(split.val), 'test': len(split.test)},
        fallback_split=split.fallback,
    )
    log("Train", f"{', '.join(model.describe(g))}: val F1={metrics.val_f1:.3f} "
                 f"test F1={metrics.test_f1:.3f} after {epoch} epochs")
    return model, metrics


# ---------------------------------------------------------------------- checkpoints


def save_checkpoint(model: MpsGnnModel, path: Path, g: Optional[HeteroGraph] = None):
    """Text checkpoint: header, JSON hyperparameters, then per parameter a
    ``name dim...`` line followed by its values in row-major order, one row per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        'activation': model.activation,
        'embedding_dim': model.embedding_dim,
        'feature_dim': model.feature_dim,
        'metapaths': [list(mp.relations) for mp in model.metapaths],
        'skip_connection': model.skip_connection,
    }
    if g is not None:
        header['metapath_names'] = [mp.names(g) for mp in model.metapaths]
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(CHECKPOINT_HEADER + "\n")
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for name, tensor in model.state_dict().items():
            values = tensor.detach().numpy()
            f.write(f"{name} {' '.join(str(d) for d in values.shape)}\n")
            rows = values.reshape(values.shape[0], -1) if values.ndim > 1 else values.reshape(1, -1)
            for row in rows:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path: Path) -> MpsGnnModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Checkpoint {path} does not exist")
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().split("\n")
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise DataError(f"{path} is not an MPS-GNN checkpoint")
    header = json.loads(lines[1])
    model = MpsGnnModel([MetaPath(tuple(mp)) for mp in header['metapaths']], header['feature_dim'],
                        header['embedding_dim'], header['activation'], header['skip_connection'])
    state = {}
    i = 2
    while i < len(lines) and lines[i]:
        parts = lines[i].split(" ")
        name, shape = parts[0], tuple(int(d) for d in parts[1:])
        num_rows = shape[0] if len(shape) > 1 else 1
        rows = [[float(v) for v in lines[i + 1 + k].split(" ")] for k in range(num_rows)]
        state[name] = torch.tensor(rows, dtype=torch.float64).reshape(shape)
        i += 1 + num_rows
    model.load_state_dict(state)
    model.eval()
    return model
