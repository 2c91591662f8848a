"""Downstream evaluation: linear classification and link prediction.

The node classification protocol fits a one-vs-rest linear classifier
(hinge loss, L2 penalty 1e-4, 100 epochs of shuffled minibatch SGD) on a
stratified 80/20 split of the labeled nodes, five repeats with distinct
seeds, and reports macro and micro F1.  Link prediction featurizes node
pairs with the Hadamard product, fits the same classifier two-class, and
reports AUC over held-out links versus sampled non-links plus MRR over
two-hop candidate rankings of each held-out source node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


@dataclass
class ClassifierConfig:
    l2: float = 1e-4
    epochs: int = 100
    batch: int = 64
    lr_start: float = 0.5
    lr_end: float = 0.01
    seed: int = 0


class LinearClassifier:
    """One-vs-rest linear SVM trained with minibatch hinge-loss SGD.

    Features are standardized internally; the learned scale is folded into
    the stored weights so ``decision`` consumes raw features.
    """

    def __init__(self, cfg=None):
        self.cfg = cfg or ClassifierConfig()
        self.classes = None
        self.W = None
        self.b = None

    def fit(self, X, y_sets):
        X = np.asarray(X, dtype=np.float64)
        y_sets = [frozenset(s) for s in y_sets]
        if X.ndim != 2 or len(y_sets) != X.shape[0]:
            raise ValueError("X rows and label sets must align")
        self.classes = sorted(set().union(*y_sets)) if y_sets else []
        if len(self.classes) < 2:
            raise ValueError(
                f"need at least two classes, got {self.classes}")
        n, d = X.shape
        C = len(self.classes)
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        Xs = (X - mu) / sd
        T = np.full((n, C), -1.0)
        for i, s in enumerate(y_sets):
            for j, c in enumerate(self.classes):
                if c in s:
                    T[i, j] = 1.0
        rng = np.random.default_rng(self.cfg.seed)
        W = np.zeros((C, d))
        b = np.zeros(C)
        cfg = self.cfg
        steps = cfg.epochs * max(1, (n + cfg.batch - 1) // cfg.batch)
        t = 0
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for s0 in range(0, n, cfg.batch):
                idx = perm[s0:s0 + cfg.batch]
                eta = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * (t / steps)
                t += 1
                Xb, Tb = Xs[idx], T[idx]
                margins = Tb * (Xb @ W.T + b)
                viol = margins < 1.0
                contrib = (Tb * viol)                      # (B, C)
                gW = cfg.l2 * W - (contrib.T @ Xb) / len(idx)
                gb = -contrib.mean(axis=0)
                W -= eta * gW
                b -= eta * gb
        # fold standardization into the raw-feature decision function
        self.W = W / sd
        self.b = b - (W * (mu / sd)).sum(axis=1)
        return self

    def decision(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X @ self.W.T + self.b

    def predict(self, X, multi_label=False):
        D = self.decision(X)
        out = []
        for row in D:
            if multi_label:
                chosen = {self.classes[j] for j in np.flatnonzero(row > 0)}
                if not chosen:
                    chosen = {self.classes[int(np.argmax(row))]}
            else:
                chosen = {self.classes[int(np.argmax(row))]}
            out.append(chosen)
        return out


def train_linear_classifier(X, y_sets, cfg=None):
    """Functional form of :class:`LinearClassifier`; returns the model."""
    return LinearClassifier(cfg).fit(X, y_sets)


# ---------------------------------------------------------------------- #
# metric primitives


def f1_scores(pred_sets, gold_sets, labels=None):
    """(macro F1, micro F1) over predicted and gold label sets.

    Macro averages per-label F1 over ``labels`` (default: every label seen
    in gold or predictions); a label with no true and no predicted
    occurrences contributes zero.
    """
    if len(pred_sets) != len(gold_sets):
        raise ValueError("prediction and gold counts differ")
    if len(gold_sets) == 0:
        raise ValueError("empty evaluation set")
    pred_sets = [frozenset(s) for s in pred_sets]
    gold_sets = [frozenset(s) for s in gold_sets]
    if labels is None:
        labels = sorted(set().union(*pred_sets, *gold_sets))
    tp = {c: 0 for c in labels}
    fp = {c: 0 for c in labels}
    fn = {c: 0 for c in labels}
    for p, g in zip(pred_sets, gold_sets):
        for c in p & g:
            if c in tp:
                tp[c] += 1
        for c in p - g:
            if c in fp:
                fp[c] += 1
        for c in g - p:
            if c in fn:
                fn[c] += 1
    per = []
    for c in labels:
        denom = 2 * tp[c] + fp[c] + fn[c]
        per.append(2.0 * tp[c] / denom if denom else 0.0)
    macro = float(np.mean(per)) if per else 0.0
    TP = sum(tp.values())
    denom = 2 * TP + sum(fp.values()) + sum(fn.values())
    micro = 2.0 * TP / denom if denom else 0.0
    return macro, float(micro)


def auc(scores, labels):
    """Area under the ROC curve via the rank statistic; ties get half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mrr(ranks):
    """Mean reciprocal rank over per-query best ranks (1-based)."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("no ranking queries")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks are 1-based")
    return float(np.mean([1.0 / r for r in ranks]))


def hadamard_features(e_u, e_v):
    e_u = np.asarray(e_u, dtype=np.float64)
    e_v = np.asarray(e_v, dtype=np.float64)
    if e_u.shape != e_v.shape:
        raise ValueError("endpoint embeddings must share a shape")
    return e_u * e_v


# ---------------------------------------------------------------------- #
# reports


@dataclass
class EvalReport:
    task: str
    metrics: dict               # name -> list of per-repeat values
    seeds: list
    config_digest: str = ""
    method: str = ""
    flags: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def mean(self, name):
        return float(np.mean(self.metrics[name]))

    def std(self, name):
        return float(np.std(self.metrics[name]))

    def to_dict(self):
        return {
            "task": self.task,
            "method": self.method,
            "metrics": {k: list(map(float, v)) for k, v in self.metrics.items()},
            "summary": {k: {"mean": self.mean(k), "std": self.std(k)}
                        for k in self.metrics},
            "seeds": list(self.seeds),
            "config_digest": self.config_digest,
            "flags": list(self.flags),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(task=d["task"], metrics=d["metrics"], seeds=d["seeds"],
                   config_digest=d.get("config_digest", ""),
                   method=d.get("method", ""), flags=d.get("flags", []),
                   metadata=d.get("metadata", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------- #
# protocols


def _stratified_split(items_by_class, test_frac, rng):
    train, test = [], []
    for _, items in sorted(items_by_class.items()):
        idx = rng.permutation(len(items))
        k = min(max(1, int(round(test_frac * len(items)))), len(items) - 1)
        test.extend(items[i] for i in idx[:k])
        train.extend(items[i] for i in idx[k:])
    return train, test


def run_node_classification(emb, labels, seed, repeats=5, test_frac=0.2,
                            clf_cfg=None):
    """Five-repeat classification benchmark on labeled nodes.

    ``labels`` maps node id -> label set.  Stratifies single-label data
    when every class has at least 5 members, otherwise falls back to a
    random split and flags it.
    """
    if not labels:
        raise ValueError("no labeled nodes")
    nodes = sorted(labels)
    gold = [frozenset(labels[v]) for v in nodes]
    X = emb.array[nodes]
    all_classes = sorted(set().union(*gold))
    multi = any(len(s) > 1 for s in gold)
    support = {c: sum(1 for s in gold if c in s) for c in all_classes}
    stratify = (not multi) and all(v >= 5 for v in support.values())
    flags = [] if stratify else ["stratified_fallback"]
    by_class = {}
    if stratify:
        for i, s in enumerate(gold):
            by_class.setdefault(next(iter(s)), []).append(i)
    macro_l, micro_l, seeds = [], [], []
    for r in range(repeats):
        rep_seed = (int(seed), r)
        rng = np.random.default_rng(rep_seed)
        if stratify:
            train_idx, test_idx = _stratified_split(by_class, test_frac, rng)
        else:
            perm = rng.permutation(len(nodes))
            k = min(max(1, int(round(test_frac * len(nodes)))), len(nodes) - 1)
            test_idx, train_idx = perm[:k].tolist(), perm[k:].tolist()
        cfg = clf_cfg or ClassifierConfig()
        cfg = ClassifierConfig(l2=cfg.l2, epochs=cfg.epochs, batch=cfg.batch,
                               lr_start=cfg.lr_start, lr_end=cfg.lr_end,
                               seed=hash(rep_seed) & 0x7FFFFFFF)
        clf = LinearClassifier(cfg).fit(X[train_idx],
                                        [gold[i] for i in train_idx])
        pred = clf.predict(X[test_idx], multi_label=multi)
        ma, mi = f1_scores(pred, [gold[i] for i in test_idx],
                           labels=all_classes)
        macro_l.append(ma)
        micro_l.append(mi)
        seeds.append(list(rep_seed))
    return EvalReport(task="node_classification",
                      metrics={"macro_f1": macro_l, "micro_f1": micro_l},
                      seeds=seeds, flags=flags,
                      metadata={"repeats": repeats, "nodes": len(nodes),
                                "classes": len(all_classes),
                                "multi_label": multi})


def _link_key_set(g):
    keys = set()
    for l, (src, dst, _) in enumerate(g.links):
        for s, d in zip(src.tolist(), dst.tolist()):
            keys.add((s, d, l))
            if not g.directed[l]:
                keys.add((d, s, l))
    return keys


def _sample_nonlinks(g, counts_by_type, existing, rng, max_tries=100):
    """Schema-valid node pairs that are not links of ``g``."""
    out = []
    for l in sorted(counts_by_type):
        a, b = g.schema[l]
        alo, ahi = g.nodes_of_type(a)
        blo, bhi = g.nodes_of_type(b)
        for _ in range(counts_by_type[l]):
            for _ in range(max_tries):
                u = int(rng.integers(alo, ahi))
                v = int(rng.integers(blo, bhi))
                if u != v and (u, v, l) not in existing:
                    break
            out.append((u, v, l))
    return out


def run_link_prediction(emb, split, g, seed=0, repeats=5, clf_cfg=None):
    """Five-repeat link prediction benchmark against a link holdout.

    Trains on the split's training links versus sampled non-links, scores
    held-out links versus fresh non-links for AUC, and ranks each held-out
    source's two-hop candidates (computed on the full graph, ties broken
    by ascending node id) for MRR.
    """
    if not split.heldout:
        raise ValueError("split holds out no links")
    existing = _link_key_set(g)
    train_pos = []
    for l, (src, dst, _) in enumerate(split.train.links):
        train_pos.extend((int(s), int(d), l) for s, d in zip(src, dst))
    if not train_pos:
        raise ValueError("split has no training links")
    heldout = [(int(u), int(v), int(l)) for u, v, l in split.heldout]
    by_source = {}
    for u, v, _ in heldout:
        by_source.setdefault(u, set()).add(v)
    cand = {u: sorted(g.two_hop_candidates(u)) for u in sorted(by_source)}

    def counts(triples):
        c = {}
        for _, _, l in triples:
            c[l] = c.get(l, 0) + 1
        return c

    E = emb.array
    auc_l, mrr_l, seeds = [], [], []
    for r in range(repeats):
        rep_seed = (int(seed), r)
        rng = np.random.default_rng(rep_seed)
        train_neg = _sample_nonlinks(g, counts(train_pos), existing, rng)
        feats = np.vstack([E[u] * E[v] for u, v, _ in train_pos + train_neg])
        y = [{1}] * len(train_pos) + [{0}] * len(train_neg)
        base = clf_cfg or ClassifierConfig()
        cfg = ClassifierConfig(l2=base.l2, epochs=base.epochs, batch=base.batch,
                               lr_start=base.lr_start, lr_end=base.lr_end,
                               seed=hash(rep_seed) & 0x7FFFFFFF)
        clf = LinearClassifier(cfg).fit(feats, y)
        w_diff = clf.W[clf.classes.index(1)] - clf.W[clf.classes.index(0)]
        b_diff = clf.b[clf.classes.index(1)] - clf.b[clf.classes.index(0)]

        test_neg = _sample_nonlinks(g, counts(heldout), existing, rng)
        test = heldout + test_neg
        ts = np.vstack([E[u] * E[v] for u, v, _ in test]) @ w_diff + b_diff
        tl = np.array([1] * len(heldout) + [0] * len(test_neg))
        auc_l.append(auc(ts, tl))

        ranks = []
        for u in sorted(by_source):
            cs = cand[u]
            scores = (E[cs] * E[u][None, :]) @ w_diff + b_diff
            order = np.lexsort((cs, -scores))
            truth = by_source[u]
            for pos_idx, ci in enumerate(order, start=1):
                if cs[ci] in truth:
                    ranks.append(pos_idx)
                    break
        mrr_l.append(mrr(ranks))
        seeds.append(list(rep_seed))
    return EvalReport(task="link_prediction",
                      metrics={"auc": auc_l, "mrr": mrr_l},
                      seeds=seeds,
                      metadata={"repeats": repeats,
                                "heldout": len(heldout),
                                "queries": len(by_source),
                                "whole_in_train": list(split.whole_in_train)})
