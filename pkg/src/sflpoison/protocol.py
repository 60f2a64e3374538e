"""SplitFed training orchestration.

Each global epoch: every client pushes its batches through the client-side
segment, ships cut-layer activations plus labels to the main server, which
runs forward/backward on a per-client working copy of the server segment and
returns the cut gradient; the client finishes its backward pass. At the end
of the epoch the fed server averages all client segments and the main server
averages its working copies, yielding one global model.

Servers are honest: nothing here inspects a client's malicious flag. A
malicious client only ever rewrites the labels of its own shard view, and the
stored shard is never touched, so a benign baseline stays recoverable in the
same process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn
from .data import Dataset, Shard
from .metrics import MetricsReport, evaluate_predictions
from .models import ModelSegment
from .poisoning import AttackConfig, LabeledBatch, apply_attack


@dataclass
class ClientState:
    client_id: int
    segment: ModelSegment
    shard: Shard
    is_malicious: bool = False
    attack: AttackConfig = field(default_factory=AttackConfig)
    pending: nn.ForwardCache | None = field(default=None, repr=False)


@dataclass
class ServerState:
    segment: ModelSegment
    working: dict[int, ModelSegment] = field(default_factory=dict, repr=False)

    def working_copy(self, client_id: int) -> ModelSegment:
        if client_id not in self.working:
            self.working[client_id] = self.segment.copy()
        return self.working[client_id]


@dataclass
class SmashedBatch:
    """Client-to-server message: cut-layer activations plus the batch labels."""

    client_id: int
    activations: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.activations.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.activations.shape[0]} activation rows but "
                             f"{self.labels.shape[0]} labels")


@dataclass
class FedServerState:
    """Synchronous aggregation barrier: averages only full rounds of K updates."""

    expected: int
    received: dict[int, list[np.ndarray]] = field(default_factory=dict)

    def submit(self, client_id: int, params: list[np.ndarray]) -> None:
        self.received[client_id] = params

    def aggregate(self) -> list[np.ndarray]:
        if len(self.received) != self.expected:
            raise ValueError(f"fed server holds {len(self.received)} of "
                             f"{self.expected} client updates")
        ordered = [self.received[k] for k in sorted(self.received)]
        self.received = {}
        return fedavg(ordered)


@dataclass
class SFLState:
    clients: list[ClientState]
    server: ServerState
    fed: FedServerState
    num_classes: int


def fedavg(param_sets: Sequence[Sequence[np.ndarray]],
           weights: Sequence[float] | None = None) -> list[np.ndarray]:
    """Elementwise convex combination of parameter collections.

    Defaults to equal weights. Accumulation runs in the given (ascending
    client id) order so repeated runs match bitwise.
    """
    if not param_sets:
        raise ValueError("nothing to average")
    k = len(param_sets)
    if weights is None:
        weights = [1.0 / k] * k
    if len(weights) != k:
        raise ValueError(f"{k} parameter sets but {len(weights)} weights")
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    shapes = [tuple(p.shape) for p in param_sets[0]]
    for i, ps in enumerate(param_sets):
        if [tuple(p.shape) for p in ps] != shapes:
            raise ValueError(f"parameter set {i} shapes do not match set 0")
    out = []
    for arrays in zip(*param_sets):
        dt = arrays[0].dtype.type
        acc = arrays[0] * dt(weights[0])
        for w, a in zip(weights[1:], arrays[1:]):
            acc += a * dt(w)
        out.append(acc)
    return out


def load_params(segment: ModelSegment, params: Sequence[np.ndarray]) -> None:
    """Copy averaged arrays into the segment's own parameter buffers."""
    own = segment.parameters()
    if len(own) != len(params):
        raise ValueError(f"segment has {len(own)} parameter arrays, got {len(params)}")
    for dst, src in zip(own, params):
        if dst.shape != src.shape:
            raise ValueError(f"shape mismatch {src.shape} vs {dst.shape}")
        np.copyto(dst, src)


def client_local_pass(client: ClientState, batch: LabeledBatch) -> SmashedBatch:
    """Forward the batch through the client segment; emit smashed data + labels.

    Only batches from the client's own shard are accepted, and the forward
    cache is retained for the later backward step.
    """
    if batch.owner_id is not None and batch.owner_id != client.client_id:
        raise ValueError(f"client {client.client_id} got a batch owned by "
                         f"client {batch.owner_id}")
    activations, cache = nn.forward(client.segment.layers, batch.inputs)
    client.pending = cache
    return SmashedBatch(client.client_id, activations, batch.labels)


def server_step(server: ServerState, smashed: SmashedBatch, lr: float) -> np.ndarray:
    """Forward/backward on the server's working copy for this client.

    Applies one SGD step to that working copy and returns the gradient at the
    cut layer, to be sent back to the client.
    """
    working = server.working_copy(smashed.client_id)
    logits, cache = nn.forward(working.layers, smashed.activations)
    _, grad_logits = nn.softmax_cross_entropy(logits, smashed.labels)
    param_grads, cut_grad = nn.backward(working.layers, cache, grad_logits)
    nn.apply_gradients(working.layers, param_grads, lr)
    return cut_grad


def client_backward(client: ClientState, cut_gradient: np.ndarray, lr: float) -> list[np.ndarray]:
    """Finish backprop on the client segment using the cached forward pass."""
    if client.pending is None:
        raise ValueError(f"client {client.client_id} has no pending forward cache")
    param_grads, _ = nn.backward(client.segment.layers, client.pending, cut_gradient)
    client.pending = None
    nn.apply_gradients(client.segment.layers, param_grads, lr)
    return client.segment.parameters()


def _attack_rng(attack: AttackConfig, client_id: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng((attack.seed or 0, client_id, epoch))


def _poisoned_batches(client: ClientState, batch_size: int, epoch: int) -> list[LabeledBatch]:
    """This epoch's shard view: clean for benign clients, relabeled for malicious ones."""
    batches = list(client.shard.batches(batch_size))
    if not client.is_malicious or client.attack.kind == "none":
        return batches
    rng = _attack_rng(client.attack, client.client_id, epoch)
    if client.attack.kind == "distance" and client.attack.distance_scope == "shard":
        whole = LabeledBatch(client.shard.train.inputs, client.shard.train.labels,
                             client.shard.train.num_classes, owner_id=client.client_id)
        poisoned = apply_attack(whole, client.attack, rng)
        return [LabeledBatch(poisoned.inputs[i:i + batch_size],
                             poisoned.labels[i:i + batch_size],
                             poisoned.num_classes, owner_id=client.client_id)
                for i in range(0, len(poisoned.labels), batch_size)]
    return [apply_attack(b, client.attack, rng) for b in batches]


def run_global_epoch(state: SFLState, lr: float, batch_size: int, epoch: int = 0,
                     aggregate_per_batch: bool = False) -> None:
    """One synchronous SplitFed round over every client's local data.

    Clients advance batch-by-batch in lockstep (all process batch j before
    batch j+1); aggregation happens once at the end of the epoch, or after
    every lockstep batch when aggregate_per_batch is set.
    """
    if not state.clients:
        raise ValueError("no clients")
    per_client = {c.client_id: _poisoned_batches(c, batch_size, epoch) for c in state.clients}
    num_rounds = max(len(b) for b in per_client.values())

    def aggregate() -> None:
        for client in state.clients:
            state.fed.submit(client.client_id, client.segment.parameters())
        global_client = state.fed.aggregate()
        for client in state.clients:
            load_params(client.segment, global_client)
        ordered = sorted(state.server.working)
        server_avg = fedavg([state.server.working[k].parameters() for k in ordered])
        load_params(state.server.segment, server_avg)
        state.server.working = {}

    for j in range(num_rounds):
        for client in state.clients:
            batches = per_client[client.client_id]
            if j >= len(batches):
                continue
            smashed = client_local_pass(client, batches[j])
            cut_grad = server_step(state.server, smashed, lr)
            client_backward(client, cut_grad, lr)
        if aggregate_per_batch:
            aggregate()
    if not aggregate_per_batch:
        aggregate()


def setup_state(client_segment: ModelSegment, server_segment: ModelSegment,
                shards: Sequence[Shard], num_classes: int,
                malicious_ids: Sequence[int] = (),
                attack: AttackConfig | None = None) -> SFLState:
    """Distribute fresh copies of the initial segments to every party."""
    attack = attack or AttackConfig()
    malicious = set(malicious_ids)
    clients = [ClientState(shard.client_id, client_segment.copy(), shard,
                           is_malicious=shard.client_id in malicious,
                           attack=attack if shard.client_id in malicious else AttackConfig())
               for shard in shards]
    return SFLState(clients, ServerState(server_segment.copy()),
                    FedServerState(len(clients)), num_classes)


def global_layers(state: SFLState) -> list[nn.Layer]:
    """The composed global model: synchronized client segment + server segment."""
    return state.clients[0].segment.layers + state.server.segment.layers


def predict(layers: Sequence[nn.Layer], inputs: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    preds = []
    for start in range(0, inputs.shape[0], batch_size):
        logits, _ = nn.forward(layers, inputs[start:start + batch_size])
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds)


def run_training(client_segment: ModelSegment, server_segment: ModelSegment,
                 shards: Sequence[Shard], test: Dataset, *,
                 epochs: int, lr: float, batch_size: int,
                 malicious_ids: Sequence[int] = (),
                 attack: AttackConfig | None = None,
                 prepare_inputs: Callable[[np.ndarray], np.ndarray] | None = None,
                 aggregate_per_batch: bool = False,
                 ) -> tuple[SFLState, list[MetricsReport]]:
    """Run the full protocol for `epochs` global rounds, evaluating after each.

    prepare_inputs reshapes raw rows into the model's expected sample shape
    (e.g. adding the channel axis for convolutional stacks); it is applied to
    training batches and the test set alike.
    """
    if epochs < 1:
        raise ValueError("need at least one epoch")
    if prepare_inputs is not None:
        shards = [Shard(s.client_id,
                        Dataset(prepare_inputs(s.train.inputs), s.train.labels,
                                s.train.num_classes, s.train.name),
                        s.holdout) for s in shards]
        test_inputs = prepare_inputs(test.inputs)
    else:
        test_inputs = test.inputs
    state = setup_state(client_segment, server_segment, shards, test.num_classes,
                        malicious_ids, attack)
    reports = []
    for epoch in range(epochs):
        run_global_epoch(state, lr, batch_size, epoch, aggregate_per_batch)
        preds = predict(global_layers(state), test_inputs)
        reports.append(evaluate_predictions(preds, test.labels, test.num_classes, epoch))
    return state, reports
