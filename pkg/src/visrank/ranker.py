"""scikit-learn compatible estimators for the ranking pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from visrank.letor import GRADES
from visrank.model import ArchitectureSpec, build_model, split_inputs
from visrank.text import minmax_by_query
from visrank.training import RankingSet, TrainConfig, fit_network, pair_indices


def check_qid(qid, n_samples):
    qid = np.asarray(qid)
    if qid.ndim != 1:
        raise ValueError("qid must be one-dimensional")
    if len(qid) != n_samples:
        raise ValueError(f"qid has {len(qid)} entries for {n_samples} samples")
    return qid


def check_grades(y):
    y = np.asarray(y)
    if y.ndim != 1 or not np.issubdtype(y.dtype, np.number):
        raise ValueError("grades must be a one-dimensional numeric array")
    bad = set(np.unique(y).tolist()) - GRADES
    if bad:
        raise ValueError(f"invalid grade(s) {sorted(bad)}")
    return y.astype(int)


class QueryFeatureScaler(TransformerMixin, BaseEstimator):
    """``log1p`` (negatives clamped to 0) followed by per-query min-max scaling.

    Stateless; ``qid`` must be passed to ``transform``.
    """

    def __init__(self, log=True):
        self.log = log

    def fit(self, X, y=None, qid=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, qid=None):
        check_is_fitted(self)
        X = check_array(X)
        if qid is None:
            raise ValueError("qid is required for per-query scaling")
        qid = check_qid(qid, X.shape[0])
        if self.log:
            X = np.log1p(np.clip(X, 0.0, None))
        return minmax_by_query(X, qid)

    def fit_transform(self, X, y=None, qid=None):
        return self.fit(X).transform(X, qid=qid)


class VisualRanker(BaseEstimator):
    """Pairwise-trained scoring network over visual and content features.

    ``X`` holds the visual block (``visual_dim`` columns, absent when
    ``head_kind='none'``) followed by ``content_dim`` content columns.

    Parameters
    ----------
    head_kind : {'none', 'vgg_style', 'resnet_style'}
        Visual transformation head. ``'none'`` trains on content only.
    visual_dim : int
        Width of the cached visual vectors.
    learning_rate : float or None
        Adam step size; None picks 1e-4 for vgg_style and 5e-5 for resnet_style.
    random_state : int
        Seeds initialisation, pair shuffling and dropout.

    Other parameters mirror :class:`ArchitectureSpec` and :class:`TrainConfig`.
    """

    def __init__(
        self,
        head_kind="none",
        visual_dim=0,
        visual_out_dim=30,
        content_dim=11,
        scoring_hidden=10,
        head_hidden=4096,
        dropout_scoring=0.1,
        dropout_head=0.5,
        learning_rate=None,
        batch_size=100,
        max_epochs=100,
        patience=5,
        margin=1.0,
        l2_lambda=1e-5,
        exclude_junk=False,
        random_state=0,
    ):
        self.head_kind = head_kind
        self.visual_dim = visual_dim
        self.visual_out_dim = visual_out_dim
        self.content_dim = content_dim
        self.scoring_hidden = scoring_hidden
        self.head_hidden = head_hidden
        self.dropout_scoring = dropout_scoring
        self.dropout_head = dropout_head
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.margin = margin
        self.l2_lambda = l2_lambda
        self.exclude_junk = exclude_junk
        self.random_state = random_state

    def _architecture(self):
        return ArchitectureSpec(
            head_kind=self.head_kind,
            input_dim=self.visual_dim if self.head_kind != "none" else 0,
            visual_out_dim=self.visual_out_dim,
            content_dim=self.content_dim,
            scoring_hidden=self.scoring_hidden,
            dropout_scoring=self.dropout_scoring,
            dropout_head=self.dropout_head,
            head_hidden=self.head_hidden,
        )

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            margin=self.margin,
            l2_lambda=self.l2_lambda,
            seed=self.random_state,
            exclude_junk=self.exclude_junk,
        )

    def _ranking_set(self, X, y, qid, doc_ids):
        X = check_array(X)
        y = check_grades(y)
        check_consistent_length(X, y)
        qid = check_qid(qid, X.shape[0])
        if doc_ids is None:
            doc_ids = np.array([f"{i:09d}" for i in range(X.shape[0])])
        visual, content = split_inputs(X, self.architecture_)
        return RankingSet(qid, np.asarray(doc_ids), y, content, visual)

    def fit(self, X, y, qid, eval_set=None, doc_ids=None):
        """Train on graded documents grouped by ``qid``.

        ``eval_set`` is an optional ``(X, y, qid)`` or ``(X, y, qid, doc_ids)``
        tuple used for NDCG@10 model selection and early stopping.
        """
        self.architecture_ = self._architecture()
        config = self._train_config()
        data = self._ranking_set(X, y, qid, doc_ids)
        val = None
        if eval_set is not None:
            Xv, yv, qv, *rest = eval_set
            val = self._ranking_set(Xv, yv, qv, rest[0] if rest else None)
        pairs = pair_indices(data.qid, data.grade, self.exclude_junk)
        network = build_model(self.architecture_, seed=self.random_state)
        self.network_, self.log_ = fit_network(network, data, pairs, config, val)
        self.n_features_in_ = data.content.shape[1] + (0 if data.visual is None else data.visual.shape[1])
        return self

    def predict(self, X):
        """Relevance scores (higher is better), dropout disabled."""
        check_is_fitted(self)
        visual, content = split_inputs(check_array(X), self.architecture_)
        return self.network_.predict(visual, content)
