"""
Relation Scoring - weighted multi-instance classification over bags of nodes.

For a candidate relation r, every bag member v gets the node feature

    f(v) = theta.x_v                      if v has no r-successors
    f(v) = theta.x_v * sum_u w_u          otherwise (u over the r-successors of v)

with w_u = logistic(w_logit_u) one putative weight per frontier node. A bag scores
F(B) = sum_v alpha(v, B) f(v) and the relaxed pairwise loss is the mean of
logistic(F(B-) - F(B+)) over sampled (positive, negative) bag pairs. The loss of a
relation is the best value Adam reaches over (theta, w_logits).

After a relation is chosen, bags move one step along it: the new bag is the set of
r-children of the old members and each child inherits sum_v theta.x_v * alpha(v).

The "max" aggregation (existence semantics) replaces the sum over w_u by a max and is
kept only as a comparator.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np
import torch

from . import config
from .errors import DeadEndRelationError, DegenerateLabelsError, NumericalError, UsageError
from .graph import HeteroGraph
from .reporting import log

AGGREGATIONS = ('sum', 'max')

# SeedSequence keys for the independent random streams of one scoring call
_EVAL_STREAM = 1_000_003
_BASELINE_STREAM = 1_000_033


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic child seed from a master seed and integer keys."""
    entropy = [abs(int(master))] + [abs(int(k)) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state % np.uint64(2 ** 63 - 1))


@dataclass
class Bag:
    """Labelled node set; alpha[i] is the weight of members[i] in this bag."""

    members: np.ndarray
    alpha: np.ndarray
    label: int

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.int64).reshape(-1)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if len(members) != len(alpha):
            raise UsageError("Bag alpha must be defined for exactly the members")
        if len(np.unique(members)) != len(members):
            raise UsageError("Bag members must be distinct")
        order = np.argsort(members, kind='stable')
        self.members = members[order]
        self.alpha = alpha[order]
        self.label = int(self.label)

    def __len__(self) -> int:
        return len(self.members)

    def alpha_of(self, node: int) -> float:
        i = np.searchsorted(self.members, node)
        if i >= len(self.members) or self.members[i] != node:
            raise KeyError(node)
        return float(self.alpha[i])

    @classmethod
    def singleton(cls, node: int, label: int) -> 'Bag':
        return cls(np.array([node]), np.array([1.0]), label)


@dataclass
class BagSets:
    """Positive and negative training bags of one search iteration."""

    positives: List[Bag]
    negatives: List[Bag]
    iteration: int = 0

    def __post_init__(self):
        for bag in self.positives:
            if bag.label != 1 or len(bag) == 0:
                raise UsageError("Positive bags must be nonempty and labelled 1")
        for bag in self.negatives:
            if bag.label != 0 or len(bag) == 0:
                raise UsageError("Negative bags must be nonempty and labelled 0")

    @property
    def bags(self) -> List[Bag]:
        return self.positives + self.negatives

    def member_nodes(self) -> np.ndarray:
        if not self.bags:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([b.members for b in self.bags]))

    def require_both_classes(self):
        if not self.positives or not self.negatives:
            raise DegenerateLabelsError(
                f"Need both classes, got {len(self.positives)} positive and {len(self.negatives)} negative bags")

    @classmethod
    def from_labels(cls, labels: Mapping[int, int]) -> 'BagSets':
        """One singleton bag per labelled node, alpha = 1."""
        positives, negatives = [], []
        for node in sorted(labels):
            label = int(labels[node])
            if label not in (0, 1):
                raise DegenerateLabelsError(f"Label of node {node} is {label}, expected 0 or 1")
            (positives if label == 1 else negatives).append(Bag.singleton(node, label))
        return cls(positives, negatives, 0)


@dataclass
class ScoringParams:
    """theta over the feature space and one w-logit per frontier node."""

    theta: np.ndarray
    w_logits: np.ndarray
    frontier: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.w_logits))

    def weight_map(self) -> Dict[int, float]:
        return dict(zip(self.frontier.tolist(), self.weights.tolist()))

    def weight_of(self, node: int) -> float:
        i = np.searchsorted(self.frontier, node)
        if i < len(self.frontier) and self.frontier[i] == node:
            return float(self.weights[i])
        return 0.5


@dataclass
class OptimizerConfig:
    lr: float = config.SCORING_LR
    steps: int = config.SCORING_STEPS
    restarts: int = config.SCORING_RESTARTS
    pair_sample_size: int = config.PAIR_SAMPLE_SIZE
    baseline_draws: int = config.BASELINE_DRAWS
    theta_init_scale: float = config.THETA_INIT_SCALE
    aggregation: str = 'sum'

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise UsageError(f"Unknown aggregation '{self.aggregation}', expected one of {AGGREGATIONS}")
        if self.steps < 0 or self.restarts < 1 or self.pair_sample_size < 1 or self.baseline_draws < 1:
            raise UsageError("Optimizer budget values must be positive")


@dataclass
class PairSample:
    """Indices of (positive bag, negative bag) pairs."""

    positive: np.ndarray
    negative: np.ndarray
    exhaustive: bool = False

    def __len__(self) -> int:
        return len(self.positive)

    @classmethod
    def all_pairs(cls, num_positive: int, num_negative: int) -> 'PairSample':
        pos, neg = np.meshgrid(np.arange(num_positive), np.arange(num_negative), indexing='ij')
        return cls(pos.reshape(-1), neg.reshape(-1), exhaustive=True)

    @classmethod
    def draw(cls, num_positive: int, num_negative: int, size: int,
             rng: np.random.Generator) -> 'PairSample':
        """min(size, |S+||S-|) pairs; every pair when that product fits in size."""
        if num_positive * num_negative <= size:
            return cls.all_pairs(num_positive, num_negative)
        return cls(rng.integers(0, num_positive, size), rng.integers(0, num_negative, size))


@dataclass
class ScoredRelation:
    relation: int
    loss: float
    params: ScoringParams
    baseline_loss: float
    aggregation: str = 'sum'

    def passes(self, eta: float) -> bool:
        """True if the optimized loss improves on the random baseline by the factor eta."""
        return self.loss < eta * self.baseline_loss


@dataclass
class ScoringProblem:
    """Tensors of one (bags, relation) scoring task.

    Bag members are deduplicated into ``nodes``; ``member_node`` maps each
    (bag, member) entry back to its row.
    """

    relation: int
    nodes: np.ndarray
    frontier: np.ndarray
    x: torch.Tensor
    has_frontier: torch.Tensor
    edge_node: torch.Tensor
    edge_frontier: torch.Tensor
    member_node: torch.Tensor
    member_bag: torch.Tensor
    member_alpha: torch.Tensor
    num_positive: int
    num_negative: int
    aggregation: str = 'sum'

    @classmethod
    def build(cls, g: HeteroGraph, bags: BagSets, r: int, aggregation: str = 'sum') -> 'ScoringProblem':
        g.check_relation(r)
        if aggregation not in AGGREGATIONS:
            raise UsageError(f"Unknown aggregation '{aggregation}'")
        all_bags = bags.bags
        members = np.concatenate([b.members for b in all_bags]) if all_bags else np.zeros(0, dtype=np.int64)
        alphas = np.concatenate([b.alpha for b in all_bags]) if all_bags else np.zeros(0)
        member_bag = np.repeat(np.arange(len(all_bags)), [len(b) for b in all_bags])
        nodes, member_node = np.unique(members, return_inverse=True)

        degrees = g.out_degree(r)[nodes] if len(nodes) else np.zeros(0, dtype=np.int64)
        successors = [g.successors(v, r) for v in nodes.tolist()]
        flat = np.concatenate(successors) if successors else np.zeros(0, dtype=np.int64)
        frontier = np.unique(flat)
        edge_node = np.repeat(np.arange(len(nodes)), degrees)
        edge_frontier = np.searchsorted(frontier, flat)

        return cls(
            relation=int(r),
            nodes=nodes,
            frontier=frontier,
            x=torch.as_tensor(g.features[nodes], dtype=torch.float64),
            has_frontier=torch.as_tensor(degrees > 0),
            edge_node=torch.as_tensor(edge_node, dtype=torch.int64),
            edge_frontier=torch.as_tensor(edge_frontier, dtype=torch.int64),
            member_node=torch.as_tensor(member_node.reshape(-1), dtype=torch.int64),
            member_bag=torch.as_tensor(member_bag, dtype=torch.int64),
            member_alpha=torch.as_tensor(alphas, dtype=torch.float64),
            num_positive=len(bags.positives),
            num_negative=len(bags.negatives),
            aggregation=aggregation,
        )

    def node_features(self, theta: torch.Tensor, w_logits: torch.Tensor) -> torch.Tensor:
        """f(v) for every distinct bag member."""
        score = self.x @ theta
        w = torch.sigmoid(w_logits)
        gathered = w[self.edge_frontier]
        zeros = torch.zeros(len(self.nodes), dtype=torch.float64)
        if self.aggregation == 'sum':
            pooled = zeros.index_add(0, self.edge_node, gathered)
        else:
            pooled = zeros.scatter_reduce(0, self.edge_node, gathered, reduce='amax', include_self=False)
        return torch.where(self.has_frontier, score * pooled, score)

    def discriminants(self, theta: torch.Tensor, w_logits: torch.Tensor) -> torch.Tensor:
        """F(B) for every bag, positives first."""
        f = self.node_features(theta, w_logits)
        contributions = self.member_alpha * f[self.member_node]
        zeros = torch.zeros(self.num_positive + self.num_negative, dtype=torch.float64)
        return zeros.index_add(0, self.member_bag, contributions)

    def loss(self, theta: torch.Tensor, w_logits: torch.Tensor, sample: PairSample) -> torch.Tensor:
        F = self.discriminants(theta, w_logits)
        pos = torch.as_tensor(sample.positive, dtype=torch.int64)
        neg = torch.as_tensor(sample.negative, dtype=torch.int64) + self.num_positive
        return torch.sigmoid(F[neg] - F[pos]).mean()

    def logits_from(self, params: ScoringParams) -> np.ndarray:
        """Map params' w-logits onto this problem's frontier (missing nodes get w = 0.5)."""
        logits = np.zeros(len(self.frontier))
        if len(params.frontier):
            idx = np.searchsorted(params.frontier, self.frontier)
            idx = np.clip(idx, 0, len(params.frontier) - 1)
            found = params.frontier[idx] == self.frontier
            logits[found] = params.w_logits[idx[found]]
        return logits


# ---------------------------------------------------------------------- scalar API


def node_feature(g: HeteroGraph, v: int, r: int, params: ScoringParams, aggregation: str = 'sum') -> float:
    """f(v, r, theta, w) evaluated directly."""
    g.check_node(v)
    g.check_relation(r)
    score = float(g.features[v] @ params.theta)
    successors = g.successors(v, r)
    if len(successors) == 0:
        return score
    weights = [params.weight_of(u) for u in successors.tolist()]
    pooled = sum(weights) if aggregation == 'sum' else max(weights)
    return score * pooled


def discriminant(g: HeteroGraph, bag: Bag, r: int, params: ScoringParams, aggregation: str = 'sum') -> float:
    """F(B) = sum over members of alpha(v, B) * f(v)."""
    return float(sum(a * node_feature(g, v, r, params, aggregation)
                     for v, a in zip(bag.members.tolist(), bag.alpha.tolist())))


def pairwise_loss(g: HeteroGraph, bags: BagSets, r: int, params: ScoringParams,
                  sample: Optional[PairSample] = None, aggregation: str = 'sum') -> float:
    """Mean of logistic(F(B-) - F(B+)) over the sample (every pair when sample is None)."""
    bags.require_both_classes()
    problem = ScoringProblem.build(g, bags, r, aggregation)
    if sample is None:
        sample = PairSample.all_pairs(problem.num_positive, problem.num_negative)
    with torch.no_grad():
        value = problem.loss(torch.as_tensor(params.theta, dtype=torch.float64),
                             torch.as_tensor(problem.logits_from(params), dtype=torch.float64),
                             sample)
    return float(value)


# ---------------------------------------------------------------------- optimization


def _checked(value: torch.Tensor, r: int, context: str) -> float:
    number = float(value)
    if not np.isfinite(number):
        raise NumericalError(f"Non-finite scoring loss for relation {r} ({context})")
    return number


def score_relation(g: HeteroGraph, bags: BagSets, r: int,
                   opt: Optional[OptimizerConfig] = None, seed: int = config.DEFAULT_SEED) -> ScoredRelation:
    """Minimize the pairwise loss of relation r over (theta, w_logits).

    Runs ``opt.restarts`` Adam runs from seeded inits, keeps the best loss seen on a
    fixed evaluation sample, and reports the mean loss of ``opt.baseline_draws``
    random parameter draws as the baseline.

    Args:
        g: Graph
        bags: Current positive/negative bags
        r: Candidate relation id
        opt: Optimizer settings
        seed: Seed for this (bags, relation) call

    Returns:
        ScoredRelation with the best loss and the parameters that reached it
    """
    opt = opt or OptimizerConfig()
    bags.require_both_classes()
    problem = ScoringProblem.build(g, bags, r, opt.aggregation)
    dim, width = g.feature_dim, len(problem.frontier)
    eval_rng = np.random.default_rng(derive_seed(seed, _EVAL_STREAM))
    eval_sample = PairSample.draw(problem.num_positive, problem.num_negative, opt.pair_sample_size, eval_rng)

    best_loss = np.inf
    best_theta = np.zeros(dim)
    best_logits = np.zeros(width)

    for restart in range(opt.restarts):
        restart_seed = derive_seed(seed, restart)
        generator = torch.Generator().manual_seed(restart_seed)
        pair_rng = np.random.default_rng(restart_seed)
        theta = ((torch.rand(dim, generator=generator, dtype=torch.float64) * 2 - 1)
                 * opt.theta_init_scale).requires_grad_(True)
        logits = torch.zeros(width, dtype=torch.float64, requires_grad=True)
        optimizer = torch.optim.Adam([theta, logits], lr=opt.lr)

        for step in range(opt.steps + 1):
            with torch.no_grad():
                current = _checked(problem.loss(theta, logits, eval_sample), r, f"restart {restart}, step {step}")
            if current < best_loss:
                best_loss = current
                best_theta = theta.detach().numpy().copy()
                best_logits = logits.detach().numpy().copy()
            if step == opt.steps:
                break
            sample = eval_sample if eval_sample.exhaustive else PairSample.draw(
                problem.num_positive, problem.num_negative, opt.pair_sample_size, pair_rng)
            optimizer.zero_grad()
            loss = problem.loss(theta, logits, sample)
            _checked(loss, r, f"restart {restart}, step {step}")
            loss.backward()
            optimizer.step()

    generator = torch.Generator().manual_seed(derive_seed(seed, _BASELINE_STREAM))
    draws = []
    with torch.no_grad():
        for _ in range(opt.baseline_draws):
            theta = (torch.rand(dim, generator=generator, dtype=torch.float64) * 2 - 1) * opt.theta_init_scale
            logits = torch.randn(width, generator=generator, dtype=torch.float64)
            draws.append(_checked(problem.loss(theta, logits, eval_sample), r, "baseline"))

    baseline = float(np.mean(draws))
    return ScoredRelation(
        relation=int(r),
        loss=float(best_loss),
        params=ScoringParams(best_theta, best_logits, problem.frontier),
        baseline_loss=baseline,
        aggregation=opt.aggregation,
    )


def candidate_relations(g: HeteroGraph, bags: BagSets) -> List[int]:
    """Relations with at least one edge leaving some bag member."""
    members = bags.member_nodes()
    if len(members) == 0:
        return []
    return [r for r in range(g.num_relations) if g.out_degree(r)[members].any()]


def _propagate_bag(g: HeteroGraph, bag: Bag, r: int, theta: np.ndarray) -> Optional[Bag]:
    degrees = g.out_degree(r)[bag.members]
    if degrees.sum() == 0:
        return None
    children = np.concatenate([g.successors(v, r) for v in bag.members.tolist()])
    coefficient = (g.features[bag.members] @ theta) * bag.alpha
    inherited = np.repeat(coefficient, degrees)
    members, inverse = np.unique(children, return_inverse=True)
    alpha = np.zeros(len(members))
    np.add.at(alpha, inverse, inherited)
    return Bag(members, alpha, bag.label)


def propagate_bags(g: HeteroGraph, bags: BagSets, chosen: ScoredRelation) -> BagSets:
    """Move every bag one step along the chosen relation.

    New members are the r-children of the old members; a child u gets
    alpha(u) = sum over parents v of theta.x_v * alpha(v). Bags without children are dropped.
    """
    r = chosen.relation
    theta = np.asarray(chosen.params.theta, dtype=np.float64)
    positives = [b for b in (_propagate_bag(g, bag, r, theta) for bag in bags.positives) if b is not None]
    negatives = [b for b in (_propagate_bag(g, bag, r, theta) for bag in bags.negatives) if b is not None]
    if not positives and not negatives:
        raise DeadEndRelationError(
            f"Relation '{g.relation_names[r]}' leaves every bag empty (dead end)")
    dropped = len(bags.bags) - len(positives) - len(negatives)
    if dropped:
        log("Scoring", f"relation {g.relation_names[r]}: dropped {dropped} empty bag(s)")
    return BagSets(positives, negatives, bags.iteration + 1)
