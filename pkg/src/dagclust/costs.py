"""Cluster-layer transition costs, the search heuristic, and related probes.

The search walks the DAG from the leaf layer upward.  Costing one
cluster-layer (cluster k, layer l, node set Z) means: pull in the stored
partial results of the cluster-layers that contain children of Z, cut each
down to the dimensions it shares with Z's tables, multiply everything
together with Z's own conditional tables, and sum out each member of Z that
has no child outside its cluster.  The surviving dimensions (unassigned
parents plus retained link nodes) are the new dependency record; their size
is what makes neighbouring clusters' costs interdependent.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Protocol, Sequence

from .dag import Dag, LayerAssignment, ValidationError, check_contiguity
from .factors import (
    DEFAULT_WEIGHTS,
    OpCostWeights,
    marginalize_cost,
    multiply_cost,
    table_size,
)

TOL = 1e-9


class JEntry(NamedTuple):
    """Dependency record of one costed cluster-layer.

    ``members`` are the nodes whose tables were folded in; ``dims`` are the
    dimensions surviving in the partial result.
    """

    cluster: int
    layer: int
    members: frozenset[int]
    dims: frozenset[int]


class Transition(NamedTuple):
    cost: float
    dims: frozenset[int]
    gathered: tuple[int, ...]  # indexes into the entry list that were absorbed


class CostModel(Protocol):
    """Contract the search engine drives.

    Implementations must return strictly positive transition costs and a
    non-negative heuristic; any such heuristic preserves optimality and only
    affects search order.  The heuristic must however upper-bound the true
    completion cost whenever it seeds the incumbent bound, so implementations
    should anchor it to a concrete feasible completion.  ``super_additive``
    gates the root-splitting proposal filter.
    """

    weights: OpCostWeights
    super_additive: bool

    def transition(
        self,
        u: dict[int, int],
        entries: Sequence[JEntry],
        cluster: int,
        layer: int,
        zset: frozenset[int],
    ) -> Transition: ...

    def heuristic(
        self,
        remaining: Iterable[int],
        live: Sequence[JEntry],
        u: dict[int, int] | None = None,
    ) -> float: ...


class BnComputationCost:
    """Inference computation cost over conditional-table shapes."""

    super_additive = True

    def __init__(self, dag: Dag, layers: LayerAssignment, weights: OpCostWeights = DEFAULT_WEIGHTS):
        self.dag = dag
        self.layers = layers
        self.weights = weights
        from .dag import founding_labels

        self._labels = founding_labels(dag, layers)

    # -- transition ---------------------------------------------------------

    def transition(
        self,
        u: dict[int, int],
        entries: Sequence[JEntry],
        cluster: int,
        layer: int,
        zset: frozenset[int],
    ) -> Transition:
        if not zset:
            raise ValidationError("cluster-layer node set is empty")
        dag, states, w = self.dag, self.dag.states, self.weights
        for z in zset:
            for c in dag.children(z):
                if not u.get(c):
                    raise ValidationError(
                        f"child {dag.name(c)} of {dag.name(z)} not yet assigned"
                    )
        scope = frozenset(zset)
        for z in zset:
            scope |= dag.parents(z)

        cost = 0.0
        gathered: list[int] = []
        restricted: list[tuple[frozenset[int], int, int]] = []
        order = sorted(
            range(len(entries)),
            key=lambda i: (entries[i].layer, entries[i].cluster),
        )
        for i in order:
            e = entries[i]
            if not any(c in e.members for z in zset for c in dag.children(z)):
                continue
            gathered.append(i)
            dims = e.dims
            for d in sorted(dims - scope):
                dims, c = marginalize_cost(dims, d, states, w)
                cost += c
            restricted.append((dims, e.layer, e.cluster))

        acc: frozenset[int] = frozenset()
        for dims, el, ek in sorted(
            restricted, key=lambda t: (table_size(t[0], states), t[1], t[2])
        ):
            acc, c = multiply_cost(acc, dims, states, w)
            cost += c
        for z in sorted(zset):
            acc, c = multiply_cost(acc, dag.scope(z), states, w)
            cost += c
        for z in sorted(zset):
            if all(u.get(c) == cluster for c in dag.children(z)):
                acc, c = marginalize_cost(acc, z, states, w)
                cost += c
        return Transition(cost=cost, dims=acc, gathered=tuple(gathered))

    # -- heuristic ----------------------------------------------------------

    def heuristic(
        self,
        remaining: Iterable[int],
        live: Sequence[JEntry],
        u: dict[int, int] | None = None,
    ) -> float:
        """Upper-bound completion estimate for the unassigned nodes.

        Two naive completions are costed and the dearer one returned: a
        single backward elimination sweep that folds the live partials into
        one chain and sums each remaining node straight out, and an actual
        one-cluster-per-node completion driven through the transition
        machinery.  The latter is the cost of a concrete feasible
        completion, which makes the estimate a true upper bound; the sweep
        usually dominates on narrow graphs and keeps the classic naive
        figure.
        """
        remaining = list(remaining)
        return max(
            self._sweep_estimate(remaining, live),
            self._singleton_completion(remaining, live, u or {}),
        )

    def _sweep_estimate(self, remaining: list[int], live: Sequence[JEntry]) -> float:
        dag, states, w = self.dag, self.dag.states, self.weights
        acc: frozenset[int] = frozenset()
        cost = 0.0
        for e in sorted(
            live, key=lambda e: (table_size(e.dims, states), e.layer, e.cluster)
        ):
            acc, c = multiply_cost(acc, e.dims, states, w)
            cost += c
        todo = sorted(
            remaining,
            key=lambda x: (
                self.layers.of(x),
                table_size(dag.scope(x), states),
                x,
            ),
        )
        for x in todo:
            acc, c = multiply_cost(acc, dag.scope(x), states, w)
            cost += c
            acc, c = marginalize_cost(acc, x, states, w)
            cost += c
        return cost

    def _singleton_completion(
        self, remaining: list[int], live: Sequence[JEntry], u: dict[int, int]
    ) -> float:
        entries = list(live)
        u2 = dict(u)
        cost = 0.0
        for z in sorted(remaining, key=lambda x: (self.layers.of(x), x)):
            k = self._labels[z]
            t = self.transition(u2, entries, k, self.layers.of(z), frozenset({z}))
            entries.append(JEntry(k, self.layers.of(z), frozenset({z}), t.dims))
            u2[z] = k
            cost += t.cost
        return cost


@dataclass(frozen=True)
class GhatEstimate:
    """Priority estimate: accrued cost + transition + completion upper bound."""

    g_so_far: float
    transition: float
    heuristic_remaining: float

    def __post_init__(self):
        for part in (self.g_so_far, self.transition, self.heuristic_remaining):
            if part < 0:
                raise ValidationError("ghat components must be non-negative")

    @property
    def total(self) -> float:
        return self.g_so_far + self.transition + self.heuristic_remaining


def ghat(g_so_far: float, transition: float, heuristic_remaining: float) -> GhatEstimate:
    return GhatEstimate(g_so_far, transition, heuristic_remaining)


# ---------------------------------------------------------------------------
# Whole-mapping evaluation (shared by the oracle and the probes)


@dataclass
class MappingCost:
    total: float
    per_layer: dict[int, float]
    transitions: list[tuple[int, int, frozenset[int], float]]  # (cluster, layer, z, cost)


def evaluate_mapping(
    dag: Dag,
    layers: LayerAssignment,
    model: CostModel,
    mapping: dict[int, int],
) -> MappingCost:
    """Total cost of a complete mapping: sum of cluster-layer transitions in
    ascending layer order, driving the model exactly as the engine would."""
    if not check_contiguity(dag, mapping):
        raise ValidationError("mapping is not contiguous")
    entries: list[JEntry] = []
    per_layer: dict[int, float] = {}
    transitions = []
    total = 0.0
    for l in range(layers.l_max + 1):
        groups: dict[int, set[int]] = {}
        for x in layers.members.get(l, ()):
            groups.setdefault(mapping[x], set()).add(x)
        for k in sorted(groups):
            z = frozenset(groups[k])
            t = model.transition(mapping, entries, k, l, z)
            entries.append(JEntry(k, l, z, t.dims))
            total += t.cost
            per_layer[l] = per_layer.get(l, 0.0) + t.cost
            transitions.append((k, l, z, t.cost))
    return MappingCost(total=total, per_layer=per_layer, transitions=transitions)


# ---------------------------------------------------------------------------
# Super-additivity probe and the root-splitting proposal filter


def is_super_additive_probe(
    dag: Dag,
    layers: LayerAssignment,
    model: CostModel,
    samples: int = 20,
    rng: random.Random | None = None,
    pairs: list[tuple[int, int]] | None = None,
) -> bool:
    """Empirically test whether costing two same-layer nodes as one
    cluster-layer always exceeds costing them separately.

    Returns False on the first sampled counterexample.  Sampling builds a
    random feasible prefix below the probed layer so child partials exist.
    Note the computation-cost model is not universally super-additive: when
    one shared child partial carries both nodes' dimensions, splitting them
    pays the partial-restriction cost twice, which can beat the joint table
    growth.  Pass explicit ``pairs`` to probe a chosen situation.
    """
    rng = rng or random.Random(0)
    from .dag import founding_labels  # local import to avoid cycle at module load

    labels = founding_labels(dag, layers)
    if pairs is None:
        pairs = [
            (x1, x2)
            for l in range(layers.l_max + 1)
            for x1 in layers.members.get(l, ())
            for x2 in layers.members.get(l, ())
            if x1 < x2
        ]
    if not pairs:
        return True
    for _ in range(samples):
        x1, x2 = pairs[rng.randrange(len(pairs))]
        if layers.of(x1) != layers.of(x2):
            raise ValidationError("probe pairs must share a layer")
        l = layers.of(x1)
        # Random proposal-rule prefix for everything below layer l.
        u: dict[int, int] = {}
        for ll in range(l):
            for x in layers.members.get(ll, ()):
                choices = [labels[x]] + sorted({u[c] for c in dag.children(x)})
                u[x] = rng.choice(choices)
        entries: list[JEntry] = []
        evaluate_mapping_prefix(dag, layers, model, u, l, entries)
        k = labels[x1]
        u_joint = {**u, x1: k, x2: k}
        u_split = {**u, x1: k, x2: labels[x2]}
        joint = model.transition(u_joint, entries, k, l, frozenset({x1, x2})).cost
        single1 = model.transition(u_split, entries, k, l, frozenset({x1})).cost
        single2 = model.transition(u_split, entries, labels[x2], l, frozenset({x2})).cost
        if not joint > single1 + single2:
            return False
    return True


def evaluate_mapping_prefix(
    dag: Dag,
    layers: LayerAssignment,
    model: CostModel,
    u: dict[int, int],
    upto_layer: int,
    entries: list[JEntry],
) -> float:
    """Cost the assigned layers strictly below ``upto_layer``, filling ``entries``."""
    total = 0.0
    for l in range(upto_layer):
        groups: dict[int, set[int]] = {}
        for x in layers.members.get(l, ()):
            groups.setdefault(u[x], set()).add(x)
        for k in sorted(groups):
            z = frozenset(groups[k])
            t = model.transition(u, entries, k, l, z)
            entries.append(JEntry(k, l, z, t.dims))
            total += t.cost
    return total


def root_split_filter(
    dag: Dag,
    layers: LayerAssignment,
    proposal: frozenset[int],
    enabled: bool = True,
) -> list[frozenset[int]]:
    """Split proposals that put two or more parentless nodes in one cluster.

    For super-additive cost functions, co-clustering root nodes of a layer
    can never beat splitting them, so such proposals are replaced by one
    proposal per root.  Identity when disabled.
    """
    if not enabled:
        return [proposal]
    roots = sorted(x for x in proposal if not dag.parents(x))
    if len(roots) <= 1:
        return [proposal]
    rest = frozenset(proposal) - frozenset(roots)
    return [rest | {r} for r in roots]
