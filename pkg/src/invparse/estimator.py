"""scikit-learn style wrappers around the parser and the index conversion."""

from __future__ import annotations

import os

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import Sample
from .evaluate import exact_match
from .inventory import from_index_frame, to_index_frame
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.core import ModelConfig, ParserMode, TrainConfig, predict_many, train
from .validation import check_frame, check_inventories, check_samples, check_utterances


class InventoryParser(BaseEstimator):
    """Seq2seq frame parser in either formulation.

    ``mode="inventory"`` reads the domain inventory next to the utterance and
    emits index frames; ``mode="copygen"`` emits label tokens from an
    augmented vocabulary.

    With ``warm_start=True`` a second :meth:`fit` continues from the current
    parameters, which is how the target stage of two-stage fine-tuning is
    run. ``added_tokens_`` lists the vocabulary entries the last fit created
    (always empty in inventory mode once the model exists).

    Examples
    --------
    >>> parser = InventoryParser(epochs=0)
    >>> parser.fit(["wake me at 6pm"], ["[IN:CREATE_ALARM [SL:DATE_TIME 6pm ] ]"], domains="alarm")
    InventoryParser(epochs=0)
    >>> parser.inventories_["alarm"].labels
    ['IN:CREATE_ALARM', 'SL:DATE_TIME']
    """

    def __init__(self, mode="inventory", inventory_variant="index_type_span", layers=2, model_dim=64,
                 heads=4, ffn_dim=128, dropout=0.1, max_source_len=256, max_target_len=64,
                 source_order="inventory_first", component_embeddings=True, copy_attention=True,
                 lexical_match=False, batch_size=16, epochs=10,
                 learning_rate=1e-3, clip_norm=1.0, inventory_shuffle=0.0, seed=0, warm_start=False):
        self.mode = mode
        self.inventory_variant = inventory_variant
        self.layers = layers
        self.model_dim = model_dim
        self.heads = heads
        self.ffn_dim = ffn_dim
        self.dropout = dropout
        self.max_source_len = max_source_len
        self.max_target_len = max_target_len
        self.source_order = source_order
        self.component_embeddings = component_embeddings
        self.copy_attention = copy_attention
        self.lexical_match = lexical_match
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.inventory_shuffle = inventory_shuffle
        self.seed = seed
        self.warm_start = warm_start

    def model_config(self) -> ModelConfig:
        return ModelConfig(mode=self.mode, inventory_variant=self.inventory_variant, layers=self.layers,
                           model_dim=self.model_dim, heads=self.heads, ffn_dim=self.ffn_dim,
                           max_source_len=self.max_source_len, max_target_len=self.max_target_len,
                           dropout=self.dropout, seed=self.seed, source_order=self.source_order,
                           component_embeddings=self.component_embeddings, copy_attention=self.copy_attention,
                           lexical_match=self.lexical_match)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs, learning_rate=self.learning_rate,
                           clip_norm=self.clip_norm, seed=self.seed, inventory_shuffle=self.inventory_shuffle)

    def fit(self, X, y=None, domains=None, inventories=None, words=None, split=None):
        """Train on samples, or on utterances ``X`` with frames ``y``.

        ``inventories`` (mapping or iterable) overrides the inventories that
        would otherwise be derived from the labels seen in the data.
        """
        samples = check_samples(X, y, domains)
        warm = self.warm_start and hasattr(self, "model_")
        known = dict(self.inventories_) if warm else {}
        known.update(check_inventories(inventories, samples))
        before = self.model_.vocabulary.tokens if warm else []
        if split is None:
            split = "target" if warm else "source"
        self.model_ = train(samples, known, self.model_config(), self.train_config(),
                            init=self.model_ if warm else None, words=words, split=split)
        self.inventories_ = known
        self.added_tokens_ = self.model_.vocabulary.tokens[len(before):] if warm else []
        self.n_features_in_ = 1
        return self

    def predict(self, X, domains=None) -> list:
        """Frames, or ``DecodeFailure`` values for unparseable outputs."""
        check_is_fitted(self, "model_")
        utterances, names = check_utterances(X, domains)
        needs_inventory = ParserMode.parse(self.mode) is ParserMode.INVENTORY
        invs = []
        for d in names:
            if d not in self.inventories_ and needs_inventory:
                raise KeyError(f"no inventory for domain {d!r}; pass it to fit(inventories=...)")
            invs.append(self.inventories_.get(d))
        return predict_many(self.model_, utterances, invs)

    def score(self, X, y=None, domains=None) -> float:
        """Exact match on ``X`` (samples, or utterances with frames ``y``)."""
        samples = check_samples(X, y, domains)
        preds = self.predict(samples)
        return exact_match(preds, [s.frame for s in samples]).em

    def save(self, path: str | os.PathLike) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(self.model_, path)

    @classmethod
    def load(cls, path: str | os.PathLike, inventories=None) -> "InventoryParser":
        model = load_checkpoint(path)
        cfg = model.config
        est = cls(mode=cfg.mode.value, inventory_variant=cfg.inventory_variant.value, layers=cfg.layers,
                  model_dim=cfg.model_dim, heads=cfg.heads, ffn_dim=cfg.ffn_dim, dropout=cfg.dropout,
                  max_source_len=cfg.max_source_len, max_target_len=cfg.max_target_len,
                  source_order=cfg.source_order, component_embeddings=cfg.component_embeddings,
                  copy_attention=cfg.copy_attention, lexical_match=cfg.lexical_match, seed=cfg.seed)
        est.model_ = model
        est.inventories_ = check_inventories(inventories)
        est.added_tokens_ = []
        est.n_features_in_ = 1
        return est


class IndexFrameTransformer(TransformerMixin, BaseEstimator):
    """Maps label frames to index frames and back, per domain inventory."""

    def __init__(self, inventories=None):
        self.inventories = inventories

    def fit(self, X, y=None, domains=None):
        samples = check_samples(X, y, domains) if y is not None or _has_samples(X) else []
        self.inventories_ = check_inventories(self.inventories, samples)
        return self

    def transform(self, X, domains=None):
        check_is_fitted(self, "inventories_")
        frames, names = self._frames(X, domains)
        return [to_index_frame(f, self._inventory(d)) for f, d in zip(frames, names)]

    def inverse_transform(self, X, domains=None):
        check_is_fitted(self, "inventories_")
        frames, names = self._frames(X, domains)
        return [from_index_frame(f, self._inventory(d)) for f, d in zip(frames, names)]

    def _frames(self, X, domains):
        X = list(X)
        if _has_samples(X):
            return [s.frame for s in X], [s.domain for s in X]
        names = [domains] * len(X) if isinstance(domains, str) else list(domains or [])
        if len(names) != len(X):
            raise ValueError("domains must be one name or one per frame")
        return [check_frame(f) for f in X], names

    def _inventory(self, domain):
        try:
            return self.inventories_[domain]
        except KeyError:
            raise KeyError(f"no inventory for domain {domain!r}") from None


def _has_samples(X) -> bool:
    X = list(X)
    return bool(X) and all(isinstance(x, Sample) for x in X)
