"""scikit-learn style wrapper around training and generation."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .corpus import Document
from .evaluation import evaluate_corpus
from .inference import generate
from .training import train
from .validation import check_documents, check_tag_lists


class TagSequenceRecommender(BaseEstimator):
    """Generate tag lists for documents with an encoder-decoder model.

    ``X`` is a sequence of documents (strings or word lists) and ``y`` a
    sequence of tag lists (each tag a string or a word sequence). Arguments
    left as ``None`` take their value from ``preset``.

    >>> est = TagSequenceRecommender(max_epochs=1, d_model=16, heads=2)
    >>> est.fit(["a b c"], [["b c"]]).predict(["a b c"])  # doctest: +SKIP
    """

    def __init__(
        self,
        preset="desk",
        variant="L2A",
        pe="local",
        order="asc",
        d_model=None,
        heads=None,
        d_ff=None,
        max_epochs=None,
        batch_size=None,
        lr=None,
        beam=8,
        vote=None,
        max_len=32,
        seed=0,
    ):
        self.preset = preset
        self.variant = variant
        self.pe = pe
        self.order = order
        self.d_model = d_model
        self.heads = heads
        self.d_ff = d_ff
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beam = beam
        self.vote = vote
        self.max_len = max_len
        self.seed = seed

    def _run_config(self):
        return load_config(overrides=self.get_params())

    def fit(self, X, y, X_dev=None, y_dev=None):
        docs = check_documents(X)
        tags = check_tag_lists(y)
        check_consistent_length(docs, tags)
        cfg = self._run_config()
        train_docs = [Document(w, t, str(i)) for i, (w, t) in enumerate(zip(docs, tags))]
        dev_docs = None
        if X_dev is not None:
            dev = zip(check_documents(X_dev), check_tag_lists(y_dev))
            dev_docs = [Document(w, t, str(i)) for i, (w, t) in enumerate(dev)]
        result = train(train_docs, cfg.train, dev_docs)
        self.model_ = result.model
        self.decode_config_ = cfg.decode
        self.loss_log_ = result.log
        self.inventory_ = set(result.model.freq)
        return self

    def predict_nbest(self, X) -> list:
        check_is_fitted(self, "model_")
        return [generate(self.model_, words, self.decode_config_) for words in check_documents(X)]

    def predict(self, X) -> list:
        """Voted tag strings per document, most supported first."""
        return [[" ".join(t) for t in r.tags] for r in self.predict_nbest(X)]

    def score(self, X, y) -> float:
        """Micro-averaged rank-weighted F1."""
        gold = [Document(w, t, str(i)) for i, (w, t) in enumerate(zip(check_documents(X), check_tag_lists(y)))]
        pred = {str(i): tags for i, tags in enumerate(self.predict(X))}
        return evaluate_corpus(pred, gold, self.inventory_).w_f1

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(self.model_, path)

    @classmethod
    def load(cls, path, **decode_params):
        model = load_checkpoint(path)
        est = cls(variant=model.config.variant, pe=model.config.pe, order=model.config.order,
                  d_model=model.config.d_model, heads=model.config.heads, d_ff=model.config.d_ff,
                  seed=model.config.seed, **decode_params)
        est.model_ = model
        est.decode_config_ = est._run_config().decode
        est.loss_log_ = []
        est.inventory_ = set(model.freq)
        return est
