"""Substitution model: channels, samplers, exact leaf distributions."""

import itertools
import math

import numpy as np
import pytest

from cfnphylo.model import (
    SubstitutionModel,
    delta_from_weight,
    exact_leaf_distribution,
    read_alignment,
    read_fasta,
    rng_for,
    sample_markov,
    sample_random_cluster,
    transition_matrix,
    two_point_correlation,
    write_alignment,
)
from cfnphylo.trees import Phylogeny, build_homogeneous, random_regular_phylogeny


def two_leaf_tree(d=math.log(2.0)):
    upsilon = 1.0 / d
    return Phylogeny([(1, 2, 1)], {1: 1, 2: 2}, upsilon)


def rc_exact_distribution(tree):
    """Oracle: enumerate all open/closed edge subsets of the percolation."""
    edges = tree.edges()
    popen = [1 - 2 * delta_from_weight(w / tree.upsilon) for (_, _, w) in edges]
    out = {}
    for mask in itertools.product((0, 1), repeat=len(edges)):
        pm = 1.0
        for o, p in zip(mask, popen):
            pm *= p if o else (1 - p)
        parent = {v: v for v in tree.adj}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for o, (u, v, _) in zip(mask, edges):
            if o:
                parent[find(u)] = find(v)
        comps = {}
        for a in range(1, tree.n + 1):
            comps.setdefault(find(tree.vertex_of_label[a]), []).append(a - 1)
        groups = list(comps.values())
        for assign in itertools.product((1, -1), repeat=len(groups)):
            pattern = [0] * tree.n
            for grp, s in zip(groups, assign):
                for i in grp:
                    pattern[i] = s
            key = tuple(pattern)
            out[key] = out.get(key, 0.0) + pm * 0.5 ** len(groups)
    return out


def test_delta_values():
    assert delta_from_weight(0.0, 2) == 0.0
    assert delta_from_weight(math.log(2), 2) == pytest.approx(0.25)
    assert delta_from_weight(50.0, 4) == pytest.approx(0.25, abs=1e-9)
    with pytest.raises(ValueError):
        delta_from_weight(-0.1)


def test_substitution_model_invariants():
    for r in (2, 3, 4):
        m = SubstitutionModel(r)
        q = m.rate_matrix
        assert np.allclose(q.sum(axis=1), 0.0)
        assert np.allclose(m.stationary @ q, 0.0)


def test_transition_matrix_identity_and_rows():
    assert np.allclose(transition_matrix(0.0, 3).matrix, np.eye(3))
    for w in (0.1, 0.5, 2.0):
        for r in (2, 4):
            m = transition_matrix(w, r).matrix
            assert np.allclose(m.sum(axis=1), 1.0)


def test_channel_semigroup():
    rng = rng_for(11, 0)
    for _ in range(100):
        w1, w2 = rng.random(2) * 2
        r = int(rng.integers(2, 5))
        m1 = transition_matrix(w1, r).matrix
        m2 = transition_matrix(w2, r).matrix
        m12 = transition_matrix(w1 + w2, r).matrix
        assert np.abs(m1 @ m2 - m12).max() < 1e-12


def test_channel_matches_expm():
    from scipy.linalg import expm

    for w in (0.2, 0.7):
        for r in (2, 4):
            q = SubstitutionModel(r).rate_matrix
            assert np.abs(expm(w * q) - transition_matrix(w, r).matrix).max() < 1e-12


def test_sample_markov_empty_and_single_leaf():
    t = build_homogeneous(2, 0.2)
    assert sample_markov(t, 0, 1).k == 0
    single = build_homogeneous(0, 0.2)
    aln = sample_markov(single, 40000, 3)
    assert abs(aln.spins.mean()) < 3 / math.sqrt(40000) * 1.1 + 0.02


def test_sample_markov_two_leaf_correlation():
    t = two_leaf_tree(math.log(2.0))
    k = 100000
    aln = sample_markov(t, k, 5)
    same = (aln.spins[:, 0] == aln.spins[:, 1]).mean()
    # P[same] = (1 + e^{-d})/2 = 0.75
    se = math.sqrt(0.75 * 0.25 / k)
    assert abs(same - 0.75) < 3 * se


def test_sampler_determinism():
    t = build_homogeneous(2, 0.2)
    assert sample_markov(t, 64, 9) == sample_markov(t, 64, 9)
    assert sample_random_cluster(t, 64, 9) == sample_random_cluster(t, 64, 9)


def test_random_cluster_degenerate_weights():
    # near-zero weights: all edges open, one shared uniform spin
    t = Phylogeny([(1, 3, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1), (4, 6, 1)],
                  {1: 1, 2: 2, 3: 5, 4: 6}, upsilon=10000.0)
    aln = sample_random_cluster(t, 200, 1)
    assert (aln.spins == aln.spins[:, [0]]).all()
    # huge weights: i.i.d. uniform leaves
    t2 = Phylogeny([(u, v, 2000000) for (u, v, _) in t.edges()], t.vertex_of_label, 10000.0)
    aln2 = sample_random_cluster(t2, 50000, 2)
    corr = np.corrcoef(aln2.spins.T.astype(float))
    off = corr[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 0.03


def test_exact_leaf_distribution_small_cases():
    single = build_homogeneous(0, 0.2)
    d = exact_leaf_distribution(single)
    assert d[(1,)] == pytest.approx(0.5)
    assert d[(-1,)] == pytest.approx(0.5)
    two = two_leaf_tree(math.log(2.0))
    d2 = exact_leaf_distribution(two)
    assert d2[(1, 1)] == pytest.approx(0.375)
    assert sum(d2.values()) == pytest.approx(1.0, abs=1e-12)


def test_rc_matches_markov_exact_on_quartets():
    """Sampler equivalence at the distribution level, via the percolation
    enumeration oracle, on several quartet shapes and weight settings."""
    from cfnphylo.trees import enumerate_topologies

    for topo in enumerate_topologies(4, upsilon=10.0):
        for units in (1, 3, 6):
            t = Phylogeny(
                [(u, v, units) for (u, v, _) in topo.edges()],
                topo.vertex_of_label, 10.0,
            )
            dm = exact_leaf_distribution(t)
            dr = rc_exact_distribution(t)
            assert max(abs(dm[k] - dr[k]) for k in dm) < 1e-12


def test_root_invariance():
    rng = rng_for(12, 0)
    for _ in range(5):
        t = random_regular_phylogeny(6, 0.1, 0.4, 10.0, rng)
        dists = []
        for root in sorted(t.adj):
            d = exact_leaf_distribution(t, root=root)
            dists.append(d)
        base = dists[0]
        for other in dists[1:]:
            assert max(abs(base[k] - other[k]) for k in base) < 1e-12


def test_marginal_uniformity():
    rng = rng_for(13, 0)
    t = random_regular_phylogeny(5, 0.1, 0.4, 10.0, rng)
    d = exact_leaf_distribution(t)
    for a in range(5):
        plus = sum(p for k, p in d.items() if k[a] == 1)
        assert plus == pytest.approx(0.5, abs=1e-12)


def test_two_point_correlation():
    t = two_leaf_tree(math.log(2.0))
    assert two_point_correlation(t, 1, 2) == pytest.approx(0.5)
    t0 = build_homogeneous(2, 0.2)
    # cross-check against the exact distribution
    d = exact_leaf_distribution(t0)
    emp = sum(p * k[0] * k[3] for k, p in d.items())
    assert two_point_correlation(t0, 1, 4) == pytest.approx(emp, abs=1e-12)
    # and against Monte Carlo
    aln = sample_markov(t0, 200000, 17)
    mc = (aln.spins[:, 0] * aln.spins[:, 3]).mean()
    assert abs(mc - two_point_correlation(t0, 1, 4)) < 3 / math.sqrt(200000) + 0.003


def test_alignment_file_roundtrip(tmp_path):
    t = build_homogeneous(2, 0.2)
    aln = sample_markov(t, 37, 21)
    path = tmp_path / "a.aln"
    write_alignment(str(path), aln)
    back = read_alignment(str(path))
    assert back == aln
    assert path.read_text().splitlines()[0] == "37 4 2"


def test_alignment_general_r_roundtrip(tmp_path):
    t = build_homogeneous(2, 0.2)
    aln = sample_markov(t, 25, 3, r=4)
    path = tmp_path / "a4.aln"
    write_alignment(str(path), aln)
    assert read_alignment(str(path)) == aln


def test_fasta_import(tmp_path):
    path = tmp_path / "x.fasta"
    path.write_text(">1\nACGT\n>2\nAAGT\n>3\nTTGA\n")
    aln = read_fasta(str(path))
    assert aln.r == 4 and aln.k == 4 and aln.n == 3
    assert aln.states[:, 0].tolist() == [0, 1, 2, 3]
