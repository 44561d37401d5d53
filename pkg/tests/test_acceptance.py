"""Acceptance suite: every criterion runs at its stated tolerance and
prints one PASS/FAIL line (run with -s to see them).

Each test is standalone; the slowest pieces are criterion 7 (battery error
sweep) and criterion 8 (the k90 phase-transition runs).
"""

import dataclasses
import itertools
import math
import time

import numpy as np

from cfnphylo import instances as inst
from cfnphylo import experiments as xp
from cfnphylo.battery import (
    Battery,
    build_battery,
    empirical_error,
    estimate_means,
    validate_battery,
)
from cfnphylo.coloring import color_vertices
from cfnphylo.distances import (
    blowup_distance_exact,
    blowup_neighborhood_count_check,
    blowup_upper_bound,
    swap_moves,
    swap_apply,
)
from cfnphylo.likelihood import (
    brute_force_site_likelihood,
    exact_expected_gap,
    flow_bound,
    mc_expected_gap,
    site_likelihood,
)
from cfnphylo.model import (
    delta_from_weight,
    exact_leaf_distribution,
    rng_for,
    sample_markov,
    sample_random_cluster,
)
from cfnphylo.trees import (
    Phylogeny,
    build_homogeneous,
    enumerate_topologies,
    random_regular_phylogeny,
)


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# ----------------------------------------------------------------------


def test_criterion_01_pruning_vs_brute_force():
    start = time.perf_counter()
    rng = rng_for(101, 0)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 9))
        t = random_regular_phylogeny(n, 0.1, 0.4, 10.0, rng)
        for _ in range(20):
            pattern = (1 - 2 * rng.integers(0, 2, size=n)).tolist()
            a = site_likelihood(t, pattern)
            b = brute_force_site_likelihood(t, pattern)
            worst = max(worst, abs(a - b))
    wall = time.perf_counter() - start
    report(
        1,
        worst < 1e-12 and wall < 10.0,
        f"pruning vs brute force, 50 trees x 20 patterns: max |diff| = {worst:.2e}, "
        f"wall {wall:.1f}s (< 10 s)",
    )


def test_criterion_02_sampler_equivalence():
    from scipy.stats import chi2_contingency

    start = time.perf_counter()

    def rc_exact(tree):
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

    worst = 0.0
    for topo in enumerate_topologies(4, upsilon=10.0):
        for units in (1, 3, 6):
            t = Phylogeny(
                [(u, v, units) for (u, v, _) in topo.edges()],
                topo.vertex_of_label, 10.0,
            )
            dm = exact_leaf_distribution(t)
            dr = rc_exact(t)
            worst = max(worst, max(abs(dm[k] - dr[k]) for k in dm))

    # Monte Carlo chi-square agreement between the two samplers on h = 3
    t = build_homogeneous(3, 0.2)
    k = 10 ** 6
    am = sample_markov(t, k, 211)
    ac = sample_random_cluster(t, k, 212)

    def counts(aln):
        idx = (aln.states.astype(np.int64) * (2 ** np.arange(8))[None, :]).sum(axis=1)
        return np.bincount(idx, minlength=256)

    table = np.stack([counts(am), counts(ac)])
    keep = table.sum(axis=0) > 0
    _, pval, _, _ = chi2_contingency(table[:, keep])
    wall = time.perf_counter() - start
    report(
        2,
        worst < 1e-12 and pval > 0.001 and wall < 60.0,
        f"exact RC = exact Markov on 3 topologies x 3 weights (max diff {worst:.2e}); "
        f"chi-square p = {pval:.4f} (> 0.001) at k = 1e6; wall {wall:.1f}s (< 60 s)",
    )


def test_criterion_03_flow_bound():
    details = []
    ok = True
    # hand value: h = 1 at g = ln sqrt(2) gives exactly 2/3
    hand = flow_bound(build_homogeneous(1, math.log(math.sqrt(2.0))))
    ok &= abs(hand - 2.0 / 3.0) < 1e-12
    details.append(f"hand value 2/3: |diff| = {abs(hand - 2/3):.2e}")
    for g in (0.2, 0.3, 0.45):
        for h in (1, 2, 3):
            t = build_homogeneous(h, g)
            bound = flow_bound(t)
            exact = exact_expected_gap(t)
            ok &= exact >= bound - 1e-12
        for h in (4, 5):
            t = build_homogeneous(h, g)
            bound = flow_bound(t)
            mc, se = mc_expected_gap(t, 30000, 300 + h)
            ok &= mc >= bound - 3 * se
    details.append("exact gap >= bound on h <= 3; MC within 3 SE at h in {4,5}, g in {0.2,0.3,0.45}")
    report(3, ok, "; ".join(details))


def test_criterion_04_counting_identities():
    ok = True
    details = []
    for n, want in ((4, 3), (5, 15), (6, 105)):
        got = sum(1 for _ in enumerate_topologies(n))
        ok &= got == want
        details.append(f"(2*{n}-5)!! = {got}")
    for h in (2, 3, 4):
        t = build_homogeneous(h, 0.2)
        n = t.n
        moves = len(swap_moves(t))
        ok &= moves <= (2 * n - 2) * (n - 2)
    details.append("swap raw moves <= (2n-2)(n-2) for h in {2,3,4}")
    t4 = random_regular_phylogeny(4, 0.1, 0.4, 10.0, rng_for(104, 0))
    count, bound, within = blowup_neighborhood_count_check(t4, 1, g=0.4)
    ok &= within
    details.append(f"blow-up Delta=1 count {count} <= 12*g*Upsilon*n^2 = {bound:.0f}")
    report(4, ok, "; ".join(details))


def test_criterion_05_combinatorial_claims():
    start = time.perf_counter()
    rng = rng_for(105, 0)
    ok = True
    details = []

    # (a) #Y <= #R on 100 random instances
    for i in range(50):
        h = int(rng.integers(2, 7))
        t0 = build_homogeneous(h, 0.2)
        t1 = t0
        for _ in range(int(rng.integers(1, 4))):
            mv = swap_moves(t1)
            t1 = swap_apply(t1, mv[int(rng.integers(0, len(mv)))])
        col = color_vertices(t0, t1, 2)
        ok &= col.n_y <= col.n_r
    for i in range(50):
        n = int(rng.integers(6, 33))
        t0 = random_regular_phylogeny(n, 0.1, 0.3, 10.0, rng, root=True)
        t1 = random_regular_phylogeny(n, 0.1, 0.3, 10.0, rng)
        col = color_vertices(t0, t1, 2)
        ok &= col.n_y <= col.n_r
    details.append("#Y <= #R on 100 random instances")

    # (b) Delta_SW <= 2^(ell+2) #R on every h = 3 pair, up to simultaneous
    # relabeling (fix T0 canonical; swaps, metrics and colorings commute
    # with relabeling both trees)
    t0 = build_homogeneous(3, 0.2)
    ell = 2
    reps = {t0.metric_key(): (0, t0)}
    frontier = [t0]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for t in frontier:
            for mv in swap_moves(t):
                t2 = swap_apply(t, mv)
                key = t2.metric_key()
                if key not in reps:
                    reps[key] = (d, t2)
                    nxt.append(t2)
        frontier = nxt
    checked = 0
    for key, (dist, t1) in reps.items():
        if dist == 0:
            continue
        col = color_vertices(t0, t1, ell)
        ok &= dist <= 2 ** (ell + 2) * col.n_r
        checked += 1
    details.append(f"Delta_SW <= 2^(ell+2)*#R on all {checked} h=3 classes")

    # (c) blow-up symmetry + triangle inequality on 200 random triples
    for i in range(200):
        n = int(rng.integers(4, 6))
        a, b, c = (random_regular_phylogeny(n, 0.1, 0.3, 10.0, rng) for _ in range(3))
        dab = blowup_distance_exact(a, b)
        ok &= dab == blowup_distance_exact(b, a)
        ok &= dab <= blowup_distance_exact(a, c) + blowup_distance_exact(c, b)
    details.append("blow-up symmetric + triangle on 200 triples")

    # (d) constructive upper bound is sound wherever both run
    for i in range(25):
        a = random_regular_phylogeny(5, 0.1, 0.3, 10.0, rng, root=True)
        b = random_regular_phylogeny(5, 0.1, 0.3, 10.0, rng)
        ok &= blowup_upper_bound(a, b, ell=2) >= blowup_distance_exact(a, b)
    details.append("blowup_upper_bound >= exact on 25 pairs")

    wall = time.perf_counter() - start
    ok &= wall < 300.0
    report(5, ok, "; ".join(details) + f"; wall {wall:.0f}s (< 300 s)")


def _mutate(battery, **changes):
    panel = dataclasses.replace(battery.panels[0], **changes)
    return Battery(
        battery.t0, battery.t1, [panel], battery.ell, battery.wp, battery.gamma,
        battery.gamma_t, battery.root0, battery.rho_sharp, battery.mode,
    )


def test_criterion_06_battery_validity():
    from cfnphylo.trees import RestrictedSubtree, restrict

    ok = True
    details = []
    regimes = {}
    built = {}
    for name, ctor in (
        ("single-swap", lambda: inst.single_swap_homogeneous(4, 0.2)),
        ("many-r-cohanging", inst.many_r_cohanging),
        ("many-r-far", inst.many_r_far),
        ("many-r-close-equal", inst.many_r_close_equal),
        ("many-r-close-unequal", inst.many_r_close_unequal),
        ("overlap", inst.two_cluster_overlap),
    ):
        t0, t1, ell = ctor()
        battery, coloring, overlap, regime = build_battery(t0, t1, ell)
        rep = validate_battery(battery)
        ok &= rep.ok and battery.size >= 1
        regimes[name] = regime
        built[name] = battery
    details.append(f"pipeline valid on all 6 instances ({regimes['single-swap']}/"
                   f"{regimes['many-r-far']}/{regimes['overlap']} regimes)")

    # every single injected requirement violation is detected
    bat = built["single-swap"]
    far = built["many-r-far"]
    injections = []
    path_sub = restrict(bat.t0, [1], root=bat.root0)
    injections.append(("density 1(a)", _mutate(bat, sub_y0=path_sub)))
    injections.append(("matching 2(a)", _mutate(bat, sub_ysharp=bat.panels[0].sub_zsharp)))
    z = far.panels[0].sub_z0
    injections.append(
        ("co-hanging 2(b)", _mutate(far, sub_z0=RestrictedSubtree(
            z.tree, z.edges, z.vertices, z.leaf_labels, z.tree.vertex_of_label[4])))
    )
    injections.append(("proximity 2(c)", _mutate(bat, prox0="non-proximal",
                                                 proxsharp="non-proximal")))
    p = bat.panels[0]
    injections.append(("distance 2(d)", _mutate(bat, z0=p.y0, zsharp=p.ysharp,
                                                sub_z0=p.sub_y0, sub_zsharp=p.sub_ysharp)))
    injections.append(("alpha 2(d)", _mutate(bat, alpha=-p.alpha)))
    dup = Battery(bat.t0, bat.t1, [p, p], bat.ell, bat.wp, bat.gamma, bat.gamma_t,
                  bat.root0, bat.rho_sharp, bat.mode)
    injections.append(("global 3(a)", dup))
    caught = 0
    for label, bad in injections:
        if not validate_battery(bad).ok:
            caught += 1
        else:
            ok = False
            details.append(f"MISSED injection: {label}")
    details.append(f"{caught}/{len(injections)} injected violations detected")
    report(6, ok, "; ".join(details))


def test_criterion_07_exponential_distinguishing_power():
    start = time.perf_counter()
    t0, t1, ell = inst.single_swap_homogeneous(4, 0.2)
    battery, _, _, _ = build_battery(t0, t1, ell)
    assert validate_battery(battery).ok
    means1 = estimate_means(battery, 1)
    ks = [4, 8, 16, 32, 64]
    trials = 2000
    errs = []
    for k in ks:
        e0, e1 = empirical_error(
            battery, k, trials, 700 + k,
            means=(means1[0] * k, means1[1] * k), validate=False,
        )
        errs.append(max(e0, e1))
    a, b, r2 = xp.fit_error_decay(ks, errs, trials)
    wall = time.perf_counter() - start
    report(
        7,
        b > 0 and r2 >= 0.9 and wall < 600.0,
        f"ln(max err) = {a:.3f} - {b:.5f} k over k in {ks} (2000 trials each): "
        f"b > 0, R^2 = {r2:.3f} (>= 0.9); wall {wall:.0f}s (< 600 s)",
    )


K90_GRID = [8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768,
            1024, 1536, 2048, 3072, 4096, 6144, 8192, 12288, 16384]


def test_criterion_08_phase_transition_trend():
    start = time.perf_counter()
    trials_by_h = {2: 400, 3: 400, 4: 64, 5: 48}
    k90 = {}
    for g in (0.2, 0.6):
        for h in (2, 3, 4, 5):
            t0 = build_homogeneous(h, g)
            cands = xp.swap1_candidates(t0)
            seed = 1000 * h + int(g * 10)
            val, _ = xp.k90_sweep(
                t0, cands, K90_GRID, trials_by_h[h], seed, threads=2
            )
            k90[(h, g)] = val
    wall = time.perf_counter() - start
    ok = all(v is not None for v in k90.values())
    sub_ratio = k90[(5, 0.2)] / k90[(2, 0.2)]
    super_ratio = k90[(5, 0.6)] / k90[(2, 0.6)]
    n_ratio = 32 / 4
    ok &= sub_ratio < n_ratio
    ok &= super_ratio >= 2 * sub_ratio
    ok &= wall < 1800.0
    report(
        8,
        ok,
        f"k90 at g=0.2: {[k90[(h, 0.2)] for h in (2, 3, 4, 5)]} -> ratio "
        f"{sub_ratio:.2f} (< {n_ratio:.0f}, sub-linear); k90 at g=0.6: "
        f"{[k90[(h, 0.6)] for h in (2, 3, 4, 5)]} -> ratio {super_ratio:.2f} "
        f"(>= 2 x {sub_ratio:.2f}); wall {wall:.0f}s (< 1800 s)",
    )


def test_criterion_09_tv_distance_relation():
    ks = [1, 2, 4, 8, 16]
    trials = 400
    fam = xp.tv_pair_family(5, 10, 0.1, 0.3, 10.0, 109)
    b1s, b2s = [], []
    for i, (t0, t1, t2) in enumerate(fam):
        for dbl, alt, sink in ((1, t1, b1s), (2, t2, b2s)):
            tvs = [
                xp.estimate_tv_for_pair(t0, alt, k, trials, 109, i, dbl)[0]
                for k in ks
            ]
            b = xp.fit_tv_rate(ks, tvs, trials)
            if b is not None:
                sink.append(b)
    ok = len(b1s) >= 8 and len(b2s) >= 8 and np.mean(b2s) > np.mean(b1s)
    report(
        9,
        ok,
        f"fitted decay rates over 10 constructions: mean b(Delta=2) = "
        f"{np.mean(b2s):.4f} > mean b(Delta=1) = {np.mean(b1s):.4f}",
    )


def test_criterion_10_cli_determinism(tmp_path):
    from cfnphylo.cli import main

    def strip_wall(text):
        return "\n".join(line.rsplit(",", 1)[0] for line in text.splitlines())

    ok = True
    details = []
    # simulate: byte-identical files
    files = []
    for name in ("s1.aln", "s2.aln"):
        out = tmp_path / name
        assert main(["simulate", "--h", "3", "--g", "0.2", "--k", "500",
                     "--seed", "42", "--out", str(out)]) == 0
        files.append(out.read_bytes())
    ok &= files[0] == files[1]
    details.append("simulate byte-identical")
    # battery-power: identical CSV modulo the wall-time column
    csvs = []
    for name in ("b1.csv", "b2.csv"):
        out = tmp_path / name
        assert main(["battery-power", "--instance", "single-swap-h3",
                     "--k-grid", "4,8,16", "--trials", "200", "--seed", "5",
                     "--out", str(out)]) == 0
        csvs.append(strip_wall(out.read_text()))
    ok &= csvs[0] == csvs[1]
    details.append("battery-power CSV reproducible")
    # tv-curve reproducible
    csvs = []
    for name in ("tv1.csv", "tv2.csv"):
        out = tmp_path / name
        assert main(["tv-curve", "--n", "5", "--pairs", "1", "--k-grid", "1,2",
                     "--trials", "50", "--seed", "3", "--out", str(out)]) == 0
        csvs.append(strip_wall(out.read_text()))
    ok &= csvs[0] == csvs[1]
    details.append("tv-curve CSV reproducible")
    # phase-transition: thread count changes nothing but the config echo
    csvs = []
    for threads, name in ((1, "p1.csv"), (2, "p2.csv")):
        out = tmp_path / name
        assert main(["phase-transition", "--heights", "2", "--g-list", "0.2",
                     "--k-grid", "8,16,32,64,128", "--trials", "16", "--seed", "7",
                     "--threads", str(threads), "--out", str(out)]) == 0
        text = strip_wall(out.read_text())
        csvs.append(text.replace('""threads"":1', "T").replace('""threads"":2', "T"))
    ok &= csvs[0] == csvs[1]
    details.append("phase-transition identical across --threads 1/2")
    report(10, ok, "; ".join(details))
