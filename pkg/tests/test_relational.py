"""Triplet scorers: algebraic identities, gradients, corruption, training."""
import numpy as np
import pytest

from hetembed.relational import (KINDS, apply_constraints,
                                 batch_scores_and_grads, corrupt_triplet,
                                 init_relational, margin_loss,
                                 relational_loss, score_triplet,
                                 train_relational, training_triplets)
from hetembed.shallow import TrainSpec
from hetembed.synthetic import LinkTypeSpec, SyntheticSpec, generate_synthetic
from hetembed.tables import EmbeddingTable, RelationParams

from helpers import build_graph, fd_entry, rel_err


def as_z(row):
    return row[0::2] + 1j * row[1::2]


def test_transe_scores_hand_computed():
    u = np.array([1.0, 0.0])
    l = np.array([0.5, 1.0])
    v = np.array([0.0, 2.0])
    # u + l - v = (1.5, -1.0)
    assert score_triplet("transe", u, l, v) == pytest.approx(
        -np.sqrt(1.5 ** 2 + 1.0))
    assert score_triplet("transe", u, l, v, p=1) == pytest.approx(-2.5)


def test_distmult_score_hand_computed():
    u = np.array([1.0, 2.0])
    l = np.array([3.0, -1.0])
    v = np.array([2.0, 5.0])
    assert score_triplet("distmult", u, l, v) == pytest.approx(6.0 - 10.0)


def test_complex_score_hand_computed():
    u = np.array([1.0, 2.0])        # 1 + 2i
    l = np.array([0.0, 1.0])        # i
    v = np.array([3.0, -1.0])       # 3 - i
    want = ((1 + 2j) * 1j * np.conj(3 - 1j)).real
    assert score_triplet("complex", u, l, v) == pytest.approx(want)


def test_rotate_score_hand_computed():
    u = np.array([1.0, 1.0])                     # 1 + i
    l = np.array([0.0, 1.0])                     # rotation by 90 degrees
    v = np.array([0.0, 0.0])
    # u * l = -1 + i, squared distance to 0 is 2
    assert score_triplet("rotate", u, l, v) == pytest.approx(-2.0)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown relational kind"):
        score_triplet("rescal", np.ones(2), np.ones(2), np.ones(2))


def test_distmult_symmetry_is_bitwise():
    rng = np.random.default_rng(0)
    EU = rng.normal(size=(1000, 8))
    EL = rng.normal(size=(1000, 8))
    EV = rng.normal(size=(1000, 8))
    s1, _, _, _ = batch_scores_and_grads("distmult", EU, EL, EV,
                                         want_grads=False)
    s2, _, _, _ = batch_scores_and_grads("distmult", EV, EL, EU,
                                         want_grads=False)
    np.testing.assert_array_equal(s1, s2)


def test_complex_antisymmetry_pure_imaginary_relations():
    rng = np.random.default_rng(1)
    EU = rng.normal(size=(500, 8))
    EV = rng.normal(size=(500, 8))
    EL = rng.normal(size=(500, 8))
    EL[:, 0::2] = 0.0                # purely imaginary coordinates
    s1, _, _, _ = batch_scores_and_grads("complex", EU, EL, EV,
                                         want_grads=False)
    s2, _, _, _ = batch_scores_and_grads("complex", EV, EL, EU,
                                         want_grads=False)
    np.testing.assert_allclose(s1, -s2, atol=1e-12)


def test_rotate_identity_relation_is_squared_euclidean():
    rng = np.random.default_rng(2)
    EU = rng.normal(size=(500, 8))
    EV = rng.normal(size=(500, 8))
    EL = np.zeros((500, 8))
    EL[:, 0::2] = 1.0                # 1 + 0i everywhere
    s, _, _, _ = batch_scores_and_grads("rotate", EU, EL, EV,
                                        want_grads=False)
    np.testing.assert_allclose(s, -np.sum((EU - EV) ** 2, axis=1), atol=1e-12)


def dyadic(rng, shape, scale_bits=20):
    """Random values on the 2^-scale_bits grid; sums of a few stay exact."""
    lim = 1 << scale_bits
    return rng.integers(-lim, lim, size=shape) * (0.5 ** scale_bits)


@pytest.mark.parametrize("p", [1, 2])
def test_transe_translation_invariance_bitwise(p):
    rng = np.random.default_rng(3)
    EU = dyadic(rng, (200, 6))
    EL = dyadic(rng, (200, 6))
    EV = dyadic(rng, (200, 6))
    C = dyadic(rng, (200, 6))
    s1, _, _, _ = batch_scores_and_grads("transe", EU, EL, EV, p=p,
                                         want_grads=False)
    s2, _, _, _ = batch_scores_and_grads("transe", EU + C, EL, EV + C, p=p,
                                         want_grads=False)
    np.testing.assert_array_equal(s1, s2)


def test_rotate_rejects_off_circle_relations():
    u = np.array([1.0, 0.0])
    l = np.array([0.5, 0.5])         # modulus far from 1
    with pytest.raises(ValueError, match="apply_constraints"):
        score_triplet("rotate", u, l, u)
    # internal gradient probes may evaluate off the circle
    s, _, _, _ = batch_scores_and_grads("rotate", u[None], l[None], u[None],
                                        want_grads=False, validate=False)
    assert np.isfinite(s[0])


def test_margin_loss_hinge():
    assert margin_loss(2.0, 0.5, 1.0) == 0.0
    assert margin_loss(0.5, 0.2, 1.0) == pytest.approx(0.7)
    assert margin_loss(-1.0, 1.0, 2.0) == pytest.approx(4.0)


# ---------------------------------------------------------------------- #
# gradients


def directed_pair_graph():
    return build_graph([3, 3], [(0, 1)], [True],
                       [[(0, 3), (1, 4), (2, 5), (0, 4)]])


def loss_args(kind, g, rng, mode):
    width = 8 if kind in ("complex", "rotate") else 4
    emb = EmbeddingTable(g, rng.normal(size=(g.n_nodes, width)),
                         complex_pairs=width == 8)
    rel = RelationParams([0], rng.normal(size=(1, width)),
                         complex_pairs=width == 8)
    while True:
        u, v = int(rng.integers(0, 3)), int(rng.integers(3, 6))
        uc, vc = int(rng.integers(0, 3)), int(rng.integers(3, 6))
        loss, _, _ = relational_loss(kind, emb, rel, (u, 0, v), (uc, 0, vc),
                                     mode=mode)
        s_pos = score_triplet(kind, emb.array[u], rel.vectors[0],
                              emb.array[v]) if kind != "rotate" else None
        if mode == "margin" and abs(loss) < 1e-3:
            # hinge is flat or at its kink: redraw for a clean derivative
            emb.array[:] = rng.normal(size=emb.array.shape)
            continue
        return emb, rel, (u, 0, v), (uc, 0, vc)


@pytest.mark.parametrize("mode", ["margin", "ns"])
@pytest.mark.parametrize("kind", KINDS)
def test_relational_loss_gradients_match_fd(kind, mode):
    g = directed_pair_graph()
    rng = np.random.default_rng(hash((kind, mode)) & 0xFFFF)
    for _ in range(25):
        emb, rel, pos, neg = loss_args(kind, g, rng, mode)

        def f():
            return relational_loss(kind, emb, rel, pos, neg, mode=mode)[0]

        _, gn, gr = relational_loss(kind, emb, rel, pos, neg, mode=mode)
        for nid, grad in gn.items():
            for j in range(emb.width):
                fd = fd_entry(f, emb.array, (nid, j))
                assert rel_err(grad[j], fd, floor=1e-4) < 1e-4, \
                    f"{kind}/{mode} node {nid}[{j}]: {grad[j]} vs {fd}"
        for lid, grad in gr.items():
            for j in range(emb.width):
                fd = fd_entry(f, rel.vectors, (lid, j))
                assert rel_err(grad[j], fd, floor=1e-4) < 1e-4, \
                    f"{kind}/{mode} rel {lid}[{j}]: {grad[j]} vs {fd}"


def test_relational_loss_inactive_margin_returns_empty_grads():
    g = directed_pair_graph()
    emb = EmbeddingTable(g, np.zeros((6, 4)))
    emb.array[0] = [10.0, 0, 0, 0]
    emb.array[3] = [10.0, 0, 0, 0]
    rel = RelationParams([0], np.zeros((1, 4)))
    # s_pos = 0 at distance 0, s_neg strongly negative: hinge inactive
    emb.array[4] = [-10.0, 0, 0, 0]
    loss, gn, gr = relational_loss("transe", emb, rel, (0, 0, 3), (0, 0, 4))
    assert loss == 0.0 and gn == {} and gr == {}


def test_relational_loss_checks_link_type():
    g = directed_pair_graph()
    emb = EmbeddingTable(g, np.zeros((6, 4)))
    rel = RelationParams([0, 1], np.zeros((2, 4)))
    with pytest.raises(ValueError, match="keep the link type"):
        relational_loss("transe", emb, rel, (0, 0, 3), (1, 1, 4))


# ---------------------------------------------------------------------- #
# triplets and corruption


def test_training_triplets_directed_only():
    g = build_graph([2, 2], [(0, 1), (0, 1)], [True, False],
                    [[(0, 2), (1, 3)], [(0, 3)]])
    U, L, V = training_triplets(g)
    assert list(L) == [0, 0]
    assert list(U) == [0, 1] and list(V) == [2, 3]


def test_training_triplets_requires_directed_links():
    g = build_graph([2, 2], [(0, 1)], [False], [[(0, 2)]])
    with pytest.raises(ValueError, match="directed"):
        training_triplets(g)
    g2 = build_graph([2, 2], [(0, 1)], [True], [[]])
    with pytest.raises(ValueError, match="no links"):
        training_triplets(g2)


def test_corrupt_triplet_type_and_avoidance():
    g = directed_pair_graph()
    rng = np.random.default_rng(0)
    forbidden = frozenset({(0, 0, 3), (1, 0, 4), (2, 0, 5), (0, 0, 4)})
    heads = tails = 0
    for _ in range(300):
        u2, l2, v2 = corrupt_triplet((0, 0, 3), g, rng, forbidden=forbidden)
        assert l2 == 0
        assert (u2, l2, v2) not in forbidden
        if u2 != 0:
            heads += 1
            assert 0 <= u2 < 3 and v2 == 3  # replacement keeps the head type
        else:
            tails += 1
            assert 3 <= v2 < 6
    assert heads > 60 and tails > 60        # the coin actually flips


def test_corrupt_triplet_gives_up_after_max_tries():
    g = directed_pair_graph()
    rng = np.random.default_rng(1)
    everything = frozenset({(u, 0, v) for u in range(3) for v in range(3, 6)})
    # nothing admissible: the last draw comes back rather than looping
    cand = corrupt_triplet((0, 0, 3), g, rng, forbidden=everything,
                           max_tries=5)
    assert cand in everything


# ---------------------------------------------------------------------- #
# constraints


def test_constraints_per_kind():
    g = directed_pair_graph()
    rng = np.random.default_rng(4)

    emb = EmbeddingTable(g, 3.0 * rng.normal(size=(6, 4)))
    rel = RelationParams([0], rng.normal(size=(1, 4)))
    apply_constraints("transe", emb, rel)
    np.testing.assert_allclose(np.linalg.norm(emb.array, axis=1), 1.0,
                               atol=1e-12)

    emb = EmbeddingTable(g, np.vstack([3.0 * np.ones(4), 0.1 * np.ones(4),
                                       np.zeros((4, 4))]))
    apply_constraints("distmult", emb, rel)
    norms = np.linalg.norm(emb.array, axis=1)
    assert norms.max() <= 1.0 + 1e-12
    np.testing.assert_allclose(emb.array[1], 0.1 * np.ones(4))  # under the cap

    emb = EmbeddingTable(g, rng.normal(size=(6, 8)), complex_pairs=True)
    rel = RelationParams([0], np.array([[3.0, 4.0, 0.0, 0.0, 0.5, 0.0,
                                         0.0, -2.0]]), complex_pairs=True)
    apply_constraints("rotate", emb, rel)
    mod = np.sqrt(rel.vectors[0, 0::2] ** 2 + rel.vectors[0, 1::2] ** 2)
    np.testing.assert_allclose(mod, 1.0, atol=1e-12)
    assert rel.vectors[0, 4] == 1.0     # zero entry pinned to 1 + 0i


@pytest.mark.parametrize("kind", KINDS)
def test_constraints_idempotent(kind):
    g = directed_pair_graph()
    rng = np.random.default_rng(5)
    cfg = TrainSpec(dim=4, seed=0)
    emb, rel = init_relational(g, kind, cfg, rng)
    emb.array[:] = 2.0 * rng.normal(size=emb.array.shape)
    rel.vectors[:] = 2.0 * rng.normal(size=rel.vectors.shape)
    apply_constraints(kind, emb, rel)
    e1, r1 = emb.array.copy(), rel.vectors.copy()
    apply_constraints(kind, emb, rel)
    np.testing.assert_allclose(emb.array, e1, atol=1e-14)
    np.testing.assert_allclose(rel.vectors, r1, atol=1e-14)


def test_init_relational_shapes_and_feasibility():
    g = directed_pair_graph()
    cfg = TrainSpec(dim=5, seed=1)
    for kind in KINDS:
        emb, rel = init_relational(g, kind, cfg, np.random.default_rng(1))
        width = 10 if kind in ("complex", "rotate") else 5
        assert emb.width == width
        assert rel.vectors.shape == (1, width)
        if kind == "rotate":
            mod = np.sqrt(rel.vectors[0, 0::2] ** 2 + rel.vectors[0, 1::2] ** 2)
            np.testing.assert_allclose(mod, 1.0, atol=1e-12)
        if kind == "transe":
            np.testing.assert_allclose(np.linalg.norm(emb.array, axis=1), 1.0,
                                       atol=1e-12)


# ---------------------------------------------------------------------- #
# training


def directed_planted(seed=0):
    spec = SyntheticSpec(type_counts=(30, 30), communities=2, p_in=0.4,
                         p_out=0.05, link_types=(LinkTypeSpec(0, 1, True),))
    g, _ = generate_synthetic(spec, seed)
    return g


@pytest.mark.parametrize("kind", KINDS)
def test_training_separates_true_from_corrupted(kind):
    g = directed_planted()
    cfg = TrainSpec(dim=12, epochs=40, batch=32, seed=0, learning_rate=0.05)
    emb, rel = train_relational(g, kind, cfg)
    U, L, V = training_triplets(g)
    s_pos, _, _, _ = batch_scores_and_grads(
        kind, emb.array[U], rel.vectors[L], emb.array[V], want_grads=False)
    rng = np.random.default_rng(99)
    perm = rng.permutation(len(U))
    s_neg, _, _, _ = batch_scores_and_grads(
        kind, emb.array[U], rel.vectors[L], emb.array[V[perm]],
        want_grads=False)
    gap = float(s_pos.mean() - s_neg.mean())
    assert gap > 0.1, f"{kind}: trained score gap only {gap:.4f}"
    if kind == "transe":
        np.testing.assert_allclose(np.linalg.norm(emb.array, axis=1), 1.0,
                                   atol=1e-9)
    if kind == "rotate":
        mod = np.sqrt(rel.vectors[:, 0::2] ** 2 + rel.vectors[:, 1::2] ** 2)
        np.testing.assert_allclose(mod, 1.0, atol=1e-9)
    if kind in ("distmult", "complex"):
        assert np.linalg.norm(emb.array, axis=1).max() <= 1.0 + 1e-9


def test_train_relational_deterministic():
    g = directed_planted(seed=1)
    cfg = TrainSpec(dim=8, epochs=3, batch=32, seed=7)
    a, ra = train_relational(g, "distmult", cfg)
    b, rb = train_relational(g, "distmult", cfg)
    np.testing.assert_array_equal(a.array, b.array)
    np.testing.assert_array_equal(ra.vectors, rb.vectors)


def test_train_relational_bad_mode():
    g = directed_planted(seed=2)
    cfg = TrainSpec(dim=4, epochs=1, loss_mode="hinge2")
    with pytest.raises(ValueError, match="unknown loss mode"):
        train_relational(g, "transe", cfg)
