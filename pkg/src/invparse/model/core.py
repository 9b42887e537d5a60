"""Parser formulations, training and greedy decoding.

Two formulations share one network:

* ``inventory`` (inventory-pointer): the encoder reads the linearized
  domain inventory, a separator, then the utterance; the decoder emits the
  index-form frame (``[ 1 [ 4 6pm ] ]``). Index tokens are ordinary reserved
  vocabulary entries, so a new domain needs no new parameters.
* ``copygen`` (copy-generate baseline): the encoder reads the utterance only;
  the decoder emits label tokens (``[IN:CREATE_ALARM``) that live in an
  augmented vocabulary, one randomly initialized row per label.
"""

from __future__ import annotations

import copy
import enum
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import torch
import torch.nn.functional as F

from ..dataset import Sample
from ..frame import Frame, FrameParseError, frame_tokens, lowercase_frame, parse_frame
from ..inventory import (
    Inventory,
    InventoryComponent,
    InventoryVariant,
    UnknownIndex,
    UnknownLabel,
    from_index_frame,
    linearize_tokens,
    to_index_frame,
)
from .network import Seq2SeqTransformer
from .vocab import BOS, EOS, SEP, Vocabulary

logger = logging.getLogger(__name__)


class ParserMode(str, enum.Enum):
    INVENTORY = "inventory"
    COPYGEN = "copygen"

    @classmethod
    def parse(cls, value) -> "ParserMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"inventory": cls.INVENTORY, "inventorypointer": cls.INVENTORY, "pointer": cls.INVENTORY,
                   "copygen": cls.COPYGEN, "copygenerate": cls.COPYGEN}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown parser mode {value!r}; expected 'inventory' or 'copygen'") from None


class SourceTooLong(ValueError):
    pass


class TargetTooLong(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DecodeFailure:
    """A decoder output that does not form a valid frame. Scores as a miss."""

    tokens: tuple[str, ...]
    cause: str

    def __str__(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class ModelConfig:
    mode: ParserMode = ParserMode.INVENTORY
    inventory_variant: InventoryVariant = InventoryVariant.INDEX_TYPE_SPAN
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ffn_dim: int = 128
    max_source_len: int = 256
    max_target_len: int = 64
    dropout: float = 0.1
    seed: int = 0
    index_reserve: int = 64
    dtype: str = "float32"
    source_order: str = "inventory_first"
    component_embeddings: bool = True
    copy_attention: bool = True
    lexical_match: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", ParserMode.parse(self.mode))
        object.__setattr__(self, "inventory_variant", InventoryVariant.parse(self.inventory_variant))
        for name in ("layers", "model_dim", "heads", "ffn_dim", "max_source_len", "max_target_len",
                     "index_reserve"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim={self.model_dim} is not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.source_order not in ("inventory_first", "utterance_first"):
            raise ValueError(f"source_order must be inventory_first or utterance_first, got {self.source_order!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["inventory_variant"] = self.inventory_variant.value
        return d


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 10
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    seed: int = 0
    inventory_shuffle: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.inventory_shuffle <= 1.0:
            raise ValueError("inventory_shuffle is a probability in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive or None")
        object.__setattr__(self, "betas", tuple(self.betas))


@dataclass
class TrainedModel:
    config: ModelConfig
    vocabulary: Vocabulary
    network: Seq2SeqTransformer
    training_log: list[dict] = field(default_factory=list)

    @property
    def parameters(self) -> dict[str, torch.Tensor]:
        return {name: p.detach() for name, p in self.network.named_parameters()}

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(p.shape) for name, p in self.network.named_parameters()}

    def copy(self) -> "TrainedModel":
        return copy.deepcopy(self)


# -- sequence construction ---------------------------------------------------

def utterance_words(utterance: str) -> list[str]:
    return utterance.lower().split()


def source_tokens(utterance: str, inventory: Inventory | None, config: ModelConfig) -> list[str]:
    words = utterance_words(utterance)
    if config.mode is ParserMode.COPYGEN:
        return words
    if inventory is None:
        raise ValueError("inventory mode needs the domain inventory")
    inv = linearize_tokens(inventory, config.inventory_variant)
    if config.source_order == "utterance_first":
        return words + [SEP] + inv
    return inv + [SEP] + words


def build_source(utterance: str, inventory: Inventory | None, config: ModelConfig,
                 vocabulary: Vocabulary) -> list[int]:
    """Encoder ids: ``inventory <sep> utterance`` (pointer) or ``utterance``."""
    if not utterance.strip():
        warnings.warn("empty utterance", RuntimeWarning, stacklevel=2)
    tokens = source_tokens(utterance, inventory, config)
    if len(tokens) > config.max_source_len:
        raise SourceTooLong(f"source has {len(tokens)} tokens, max_source_len={config.max_source_len}")
    return vocabulary.encode(tokens)


def target_tokens(frame: Frame, inventory: Inventory | None, mode) -> list[str]:
    mode = ParserMode.parse(mode)
    frame = lowercase_frame(frame)
    if mode is ParserMode.INVENTORY:
        frame = to_index_frame(frame, inventory)
    return [BOS, *frame_tokens(frame), EOS]


def build_target(frame: Frame, inventory: Inventory | None, config: ModelConfig,
                 vocabulary: Vocabulary) -> list[int]:
    """Decoder ids ``<s> frame </s>``; labels become indices in pointer mode."""
    tokens = target_tokens(frame, inventory, config.mode)
    if config.mode is ParserMode.COPYGEN:
        for tok in tokens:
            if tok.startswith("[") and len(tok) > 1 and tok not in vocabulary:
                raise UnknownLabel(tok[1:], inventory.domain if inventory else "<vocabulary>")
    if len(tokens) - 1 > config.max_target_len:
        raise TargetTooLong(f"target needs {len(tokens) - 1} decoder steps, max_target_len={config.max_target_len}")
    return vocabulary.encode(tokens)


def tokens_to_frame(tokens: Sequence[str], inventory: Inventory | None, mode) -> Frame | DecodeFailure:
    """Turn generated tokens (without ``<s>``/``</s>``) into a frame."""
    mode = ParserMode.parse(mode)
    try:
        if mode is ParserMode.INVENTORY:
            return from_index_frame(list(tokens), inventory)
        return parse_frame(list(tokens))
    except (FrameParseError, UnknownIndex) as exc:
        return DecodeFailure(tuple(tokens), f"{type(exc).__name__}: {exc}")


# -- batching -----------------------------------------------------------------

def component_segments(ids: Sequence[int], vocabulary: Vocabulary) -> list[int]:
    """Per source position, the id of the index token of the inventory
    component it belongs to (0 outside the inventory)."""
    open_id, sep_id = vocabulary.id("["), vocabulary.id(SEP)
    lo, hi = vocabulary.id("1"), vocabulary.id(str(vocabulary.index_reserve))
    out, current = [], 0
    for pos, tok in enumerate(ids):
        if tok == sep_id:
            current = 0
        elif tok == open_id and pos + 1 < len(ids) and lo <= ids[pos + 1] <= hi:
            current = ids[pos + 1]
        out.append(current)
    return out


def copy_targets(ids: Sequence[int], vocabulary: Vocabulary, config: ModelConfig) -> list[int]:
    """Per source position, the token id a copy from there produces (0: none).

    Utterance words copy themselves. In inventory mode every position of a
    component copies that component's index token, so pointing at a
    component emits its index.
    """
    special = vocabulary.special_ids
    words = [0 if t in special else t for t in ids]
    if config.mode is not ParserMode.INVENTORY:
        return words
    return [seg or w for seg, w in zip(component_segments(ids, vocabulary), words)]


def lexical_matches(ids: Sequence[int], vocabulary: Vocabulary) -> list[list[int]]:
    """Per source position, index-token ids of the components whose span
    contains the word at that position (utterance positions only)."""
    segs = component_segments(ids, vocabulary)
    fixed = vocabulary.special_ids | vocabulary.structure_ids
    spans: dict[int, list[int]] = {}
    for tok, seg in zip(ids, segs):
        if seg and tok not in fixed:
            spans.setdefault(tok, [])
            if seg not in spans[tok]:
                spans[tok].append(seg)
    return [spans.get(tok, []) if not seg else [] for tok, seg in zip(ids, segs)]


def source_segments(ids: Sequence[int], vocabulary: Vocabulary, config: ModelConfig) -> list[list[int]]:
    """Ids whose embeddings are averaged into each source position."""
    out = [[s] if s else [] for s in component_segments(ids, vocabulary)] if config.component_embeddings \
        else [[] for _ in ids]
    if config.lexical_match:
        out = [a + b for a, b in zip(out, lexical_matches(ids, vocabulary))]
    return out


def _source_batch(model: TrainedModel, sources: Sequence[Sequence[int]]):
    vocab = model.vocabulary
    cfg = model.config
    src, src_pad = pad_batch(sources, vocab.pad_id)
    segments = copy_ids = None
    if cfg.mode is ParserMode.INVENTORY and (cfg.component_embeddings or cfg.lexical_match):
        rows = [source_segments(s, vocab, cfg) for s in sources]
        slots = max(1, max(len(r) for row in rows for r in row))
        segments = torch.zeros(src.size(0), src.size(1), slots, dtype=torch.long)
        for i, row in enumerate(rows):
            for j, ids in enumerate(row):
                if ids:
                    segments[i, j, : len(ids)] = torch.as_tensor(ids)
    if cfg.copy_attention:
        copy_ids, _ = pad_batch([copy_targets(s, vocab, cfg) for s in sources], 0)
    return src, src_pad, segments, copy_ids


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), width), pad_id, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.as_tensor(s, dtype=torch.long)
    return ids, ids.eq(pad_id)


def encode_pairs(samples: Iterable[Sample], inventories: Mapping[str, Inventory], model: TrainedModel):
    pairs = []
    for s in samples:
        inv = inventories.get(s.domain)
        if inv is None and model.config.mode is ParserMode.INVENTORY:
            raise KeyError(f"no inventory for domain {s.domain!r}")
        pairs.append((build_source(s.utterance, inv, model.config, model.vocabulary),
                      build_target(s.frame, inv, model.config, model.vocabulary)))
    return pairs


def loss(model: TrainedModel, batch: Sequence[tuple[Sequence[int], Sequence[int]]]) -> torch.Tensor:
    """Mean negative log-likelihood over non-padding target positions."""
    if not batch:
        raise ShapeMismatch("empty batch")
    pad = model.vocabulary.pad_id
    src, src_pad, segments, copy_ids = _source_batch(model, [b[0] for b in batch])
    tgt, tgt_pad = pad_batch([b[1] for b in batch], pad)
    if tgt.size(1) < 2:
        raise ShapeMismatch("targets need at least <s> and one more token")
    if src.size(1) > model.config.max_source_len or tgt.size(1) - 1 > model.config.max_target_len:
        raise ShapeMismatch("batch exceeds configured sequence lengths")
    logp = model.network(src, src_pad, tgt[:, :-1], tgt_pad[:, :-1], segments, copy_ids)
    gold = tgt[:, 1:]
    return F.nll_loss(logp.reshape(-1, logp.size(-1)), gold.reshape(-1), ignore_index=pad)


# -- construction -------------------------------------------------------------

def collect_words(samples: Iterable[Sample], inventories: Iterable[Inventory] = ()) -> set[str]:
    words = set()
    for s in samples:
        words.update(utterance_words(s.utterance))
    for inv in inventories:
        for comp in inv:
            words.update(comp.span.split())
    return words


def init_model(config: ModelConfig, words: Iterable[str] = (), labels: Iterable[str] = ()) -> TrainedModel:
    """Fresh model over ``words`` (plus ``labels`` in copy-generate mode)."""
    vocab = Vocabulary(words, config.index_reserve,
                       labels=labels if config.mode is ParserMode.COPYGEN else ())
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        net = Seq2SeqTransformer(len(vocab), config.model_dim, config.heads, config.ffn_dim,
                                 config.layers, config.dropout,
                                 max_len=max(config.max_source_len, config.max_target_len) + 1,
                                 copy=config.copy_attention)
    net.to(config.torch_dtype)
    return TrainedModel(config, vocab, net)


def adapt_vocabulary(model: TrainedModel, inventories: Mapping[str, Inventory], seed: int) -> list[str]:
    """Append rows for ontology labels the model has never seen.

    Only copy-generate models grow; pointer models return ``[]``.
    """
    if model.config.mode is not ParserMode.COPYGEN:
        return []
    labels = [lab for inv in inventories.values() for lab in inv.labels]
    added = model.vocabulary.extend(labels)
    if added:
        gen = torch.Generator().manual_seed(seed)
        model.network.add_rows(len(added), gen)
    return added


def permuted_inventory(inventory: Inventory, order: Sequence[int]) -> Inventory:
    """Same labels, components renumbered in the given order of old positions."""
    comps = [inventory.components[i] for i in order]
    return Inventory(inventory.domain, tuple(
        InventoryComponent(new, c.kind, c.span, c.label) for new, c in enumerate(comps, start=1)))


def _shuffled_pairs(samples, inventories, model, pairs, prob: float, gen: torch.Generator):
    out = list(pairs)
    draws = torch.rand(len(samples), generator=gen).tolist()
    for i, (s, u) in enumerate(zip(samples, draws)):
        if u < prob:
            inv = inventories[s.domain]
            perm = permuted_inventory(inv, torch.randperm(len(inv), generator=gen).tolist())
            out[i] = (build_source(s.utterance, perm, model.config, model.vocabulary),
                      build_target(s.frame, perm, model.config, model.vocabulary))
    return out


def _batches(n: int, batch_size: int, lengths: Sequence[int], gen: torch.Generator) -> list[list[int]]:
    # shuffle, then sort within windows of 32 batches to limit padding
    order = torch.randperm(n, generator=gen).tolist()
    window = batch_size * 32
    batches = []
    for start in range(0, n, window):
        chunk = sorted(order[start:start + window], key=lambda i: lengths[i])
        batches += [chunk[i:i + batch_size] for i in range(0, len(chunk), batch_size)]
    perm = torch.randperm(len(batches), generator=gen).tolist()
    return [batches[i] for i in perm]


def train(samples: Sequence[Sample], inventories: Mapping[str, Inventory], model_config: ModelConfig,
          train_config: TrainConfig, init: TrainedModel | None = None, words: Iterable[str] | None = None,
          split: str = "train") -> TrainedModel:
    """Fit with Adam on teacher-forced log loss.

    ``init`` continues from an existing model (second-stage fine-tuning);
    copy-generate models then gain rows for unseen labels. Otherwise a fresh
    model is built whose word vocabulary is ``words`` (default: the training
    utterances and inventory spans).

    With ``train_config.inventory_shuffle = p`` (pointer mode only), each
    sample's inventory is renumbered in a random order with probability ``p``
    every epoch, so indices cannot be memorized per domain and have to be
    resolved through the inventory in the input.
    """
    if init is not None:
        model = init.copy()
        if model.config.mode is not model_config.mode:
            raise ValueError("cannot continue training across parser modes")
        if model.config != model_config:
            model.config = model_config
        adapt_vocabulary(model, inventories, train_config.seed)
    else:
        if words is None:
            words = collect_words(samples, inventories.values())
        # labels of held-out domains stay unseen until a later stage adds them
        seen = {s.domain for s in samples}
        labels = [lab for d, inv in inventories.items() if d in seen for lab in inv.labels]
        model = init_model(model_config, words, labels)

    samples = list(samples)
    pairs = encode_pairs(samples, inventories, model)
    if train_config.epochs == 0 or not pairs:
        return model
    shuffle_prob = train_config.inventory_shuffle if model.config.mode is ParserMode.INVENTORY else 0.0

    net = model.network
    opt = torch.optim.Adam(net.parameters(), lr=train_config.learning_rate,
                           betas=train_config.betas, eps=train_config.eps)
    gen = torch.Generator().manual_seed(train_config.seed)
    lengths = [len(s) + len(t) for s, t in pairs]
    start_epoch = 1 + max((r["epoch"] for r in model.training_log if r["split"] == split), default=0)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(train_config.seed)
        net.train()
        for epoch in range(start_epoch, start_epoch + train_config.epochs):
            total, count = 0.0, 0
            epoch_pairs = _shuffled_pairs(samples, inventories, model, pairs, shuffle_prob, gen) \
                if shuffle_prob > 0 else pairs
            for idx in _batches(len(pairs), train_config.batch_size, lengths, gen):
                batch = [epoch_pairs[i] for i in idx]
                value = loss(model, batch)
                if not torch.isfinite(value):
                    raise NonFiniteLoss(f"loss became {value.item()} at epoch {epoch}")
                opt.zero_grad()
                value.backward()
                if train_config.clip_norm is not None:
                    torch.nn.utils.clip_grad_norm_(net.parameters(), train_config.clip_norm)
                opt.step()
                total += value.item() * len(idx)
                count += len(idx)
            model.training_log.append({"epoch": epoch, "split": split, "loss": total / count})
            logger.debug("%s epoch %d loss %.4f", split, epoch, total / count)
    net.eval()
    return model


@torch.no_grad()
def evaluate_loss(model: TrainedModel, samples: Sequence[Sample], inventories: Mapping[str, Inventory],
                  batch_size: int = 64) -> float:
    """Mean per-token loss with dropout off."""
    pairs = encode_pairs(samples, inventories, model)
    was_training = model.network.training
    model.network.eval()
    total, count = 0.0, 0
    for i in range(0, len(pairs), batch_size):
        batch = pairs[i:i + batch_size]
        n_tok = sum(len(t) - 1 for _, t in batch)
        total += loss(model, batch).item() * n_tok
        count += n_tok
    model.network.train(was_training)
    return total / count if count else math.nan


# -- decoding -----------------------------------------------------------------

@torch.no_grad()
def greedy_decode(model: TrainedModel, sources: Sequence[Sequence[int]], max_steps: int | None = None) -> list[list[int]]:
    net = model.network
    vocab = model.vocabulary
    steps = model.config.max_target_len if max_steps is None else max_steps
    was_training = net.training
    net.eval()
    src, src_pad, segments, copy_ids = _source_batch(model, sources)
    memory = net.encode(src, src_pad, segments)
    out = torch.full((len(sources), 1), vocab.bos_id, dtype=torch.long)
    done = torch.zeros(len(sources), dtype=torch.bool)
    for _ in range(steps):
        logits = net.decode(memory, src_pad, out, copy_ids=copy_ids)[:, -1]
        nxt = logits.argmax(-1)
        nxt = torch.where(done, torch.full_like(nxt, vocab.pad_id), nxt)
        out = torch.cat([out, nxt.unsqueeze(1)], dim=1)
        done |= nxt.eq(vocab.eos_id)
        if bool(done.all()):
            break
    net.train(was_training)
    results = []
    for row in out[:, 1:].tolist():
        ids = []
        for i in row:
            if i in (vocab.eos_id, vocab.pad_id):
                break
            ids.append(i)
        results.append(ids)
    return results


def predict_many(model: TrainedModel, utterances: Sequence[str], inventories: Sequence[Inventory | None],
                 batch_size: int = 64) -> list[Frame | DecodeFailure]:
    results: list[Frame | DecodeFailure] = []
    order = sorted(range(len(utterances)), key=lambda i: len(utterances[i].split()))
    by_index: dict[int, Frame | DecodeFailure] = {}
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        srcs = [build_source(utterances[i], inventories[i], model.config, model.vocabulary) for i in idx]
        for i, ids in zip(idx, greedy_decode(model, srcs)):
            toks = model.vocabulary.decode(ids)
            by_index[i] = tokens_to_frame(toks, inventories[i], model.config.mode)
    results = [by_index[i] for i in range(len(utterances))]
    return results


def predict(model: TrainedModel, utterance: str, inventory: Inventory | None) -> Frame | DecodeFailure:
    """Greedy-decode one utterance into a frame (or a :class:`DecodeFailure`)."""
    return predict_many(model, [utterance], [inventory])[0]
