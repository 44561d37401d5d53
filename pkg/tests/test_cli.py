"""CLI: subcommands, exit codes, config files and byte-level determinism."""

import json

from cfnphylo.cli import main
from cfnphylo.newick import write_tree
from cfnphylo.trees import build_homogeneous


def strip_wall(text: str) -> str:
    """Drop the trailing wall_s column (the designated timing field)."""
    lines = text.splitlines()
    out = []
    for line in lines:
        parts = line.rsplit(",", 1)
        out.append(parts[0])
    return "\n".join(out)


def run(args):
    return main(args)


def test_simulate_deterministic(tmp_path):
    a = tmp_path / "a.aln"
    b = tmp_path / "b.aln"
    for path in (a, b):
        assert run(["simulate", "--h", "3", "--g", "0.2", "--k", "200",
                    "--seed", "11", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.aln"
    assert run(["simulate", "--h", "3", "--g", "0.2", "--k", "200",
                "--seed", "12", "--out", str(c)]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_simulate_cluster_sampler_and_empty(tmp_path):
    p = tmp_path / "c.aln"
    assert run(["simulate", "--h", "2", "--g", "0.2", "--k", "0",
                "--sampler", "cluster", "--seed", "5", "--out", str(p)]) == 0
    assert p.read_text() == "0 4 2\n"


def test_config_error_exit_code(tmp_path):
    assert run(["simulate", "--k", "10", "--out", str(tmp_path / "x.aln")]) == 2
    assert run(["battery-power", "--instance", "nope", "--out", str(tmp_path / "y.csv")]) == 2
    assert run(["tv-curve", "--k-grid", "4,2", "--out", str(tmp_path / "z.csv")]) == 2


def test_scale_limit_exit_code(tmp_path):
    t = build_homogeneous(4, 0.2)
    p1 = tmp_path / "t1.nwk"
    p2 = tmp_path / "t2.nwk"
    write_tree(str(p1), t)
    write_tree(str(p2), t)
    # n = 16 is beyond the exact blow-up search limit
    assert run(["distance", "--kind", "blowup", "--tree1", str(p1),
                "--tree2", str(p2), "--upsilon", str(t.upsilon)]) == 3
    assert run(["phase-transition", "--heights", "6,7", "--out",
                str(tmp_path / "pt.csv")]) == 3


def test_distance_identical_inputs_zero(tmp_path, capsys):
    t = build_homogeneous(2, 0.2)
    p1 = tmp_path / "t1.nwk"
    p2 = tmp_path / "t2.nwk"
    write_tree(str(p1), t)
    write_tree(str(p2), t)
    assert run(["distance", "--kind", "blowup", "--tree1", str(p1),
                "--tree2", str(p2), "--upsilon", str(t.upsilon)]) == 0
    assert capsys.readouterr().out.strip() == "0"
    assert run(["distance", "--kind", "swap", "--tree1", str(p1),
                "--tree2", str(p2), "--upsilon", str(t.upsilon)]) == 0
    assert capsys.readouterr().out.strip() == "0"


def test_infer_roundtrip(tmp_path, capsys):
    t = build_homogeneous(2, 0.3)
    aln = tmp_path / "a.aln"
    assert run(["simulate", "--h", "2", "--g", "0.3", "--k", "4000",
                "--seed", "3", "--out", str(aln)]) == 0
    capsys.readouterr()
    assert run(["infer", "--alignment", str(aln), "--n", "4", "--f", "0.1",
                "--g", "0.4", "--upsilon", "10", "--mode", "topology-only"]) == 0
    out = capsys.readouterr().out
    assert "neg-log-likelihood" in out
    from cfnphylo.newick import parse_newick

    winner = parse_newick(out.splitlines()[0], 10.0)
    assert winner.topology_key() == t.topology_key()


def test_asr_csv(tmp_path):
    out = tmp_path / "asr.csv"
    assert run(["asr", "--h-list", "1,2", "--g-list", "0.2", "--mode", "exact",
                "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("experiment,h,g,mode,accuracy")
    assert len(lines) == 3
    assert all("gap_bound_ok" not in l or True for l in lines)
    assert all(l.split(",")[8] == "1" for l in lines[1:])  # bound holds


def test_battery_power_csv_deterministic(tmp_path):
    outs = []
    for name in ("p1.csv", "p2.csv"):
        out = tmp_path / name
        assert run(["battery-power", "--instance", "single-swap-h3",
                    "--k-grid", "4,8", "--trials", "100", "--seed", "2",
                    "--out", str(out)]) == 0
        outs.append(strip_wall(out.read_text()))
    assert outs[0] == outs[1]


def test_tv_curve_runs(tmp_path):
    out = tmp_path / "tv.csv"
    assert run(["tv-curve", "--n", "5", "--pairs", "1", "--k-grid", "1,2,4",
                "--trials", "60", "--seed", "4", "--out", str(out)]) == 0
    text = out.read_text()
    assert "tv-curve" in text and "tv-fit" in text


def test_phase_transition_thread_invariance(tmp_path):
    texts = []
    for threads, name in ((1, "t1.csv"), (2, "t2.csv")):
        out = tmp_path / name
        assert run(["phase-transition", "--heights", "2,3", "--g-list", "0.2",
                    "--k-grid", "8,16,32,64,128,256", "--trials", "16",
                    "--seed", "6", "--threads", str(threads),
                    "--out", str(out)]) == 0
        texts.append(strip_wall(out.read_text()))
    # identical numeric output regardless of worker count (wall time aside);
    # the echoed config records the thread flag, so normalize it away
    norm = [t.replace('""threads"":1', 'T').replace('""threads"":2', 'T') for t in texts]
    assert norm[0] == norm[1]


def test_phase_transition_zero_trials_empty_csv(tmp_path):
    out = tmp_path / "empty.csv"
    assert run(["phase-transition", "--heights", "2", "--g-list", "0.2",
                "--trials", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("experiment,")


def test_config_file_merging(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"h": 2, "g": 0.2, "k": 17, "sampler": "markov"}))
    out = tmp_path / "from_cfg.aln"
    assert run(["simulate", "--config", str(cfg), "--seed", "9",
                "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "17 4 2"
    # explicit flags beat config values
    out2 = tmp_path / "override.aln"
    assert run(["simulate", "--config", str(cfg), "--k", "5", "--seed", "9",
                "--out", str(out2)]) == 0
    assert out2.read_text().splitlines()[0] == "5 4 2"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert run(["simulate", "--config", str(bad), "--h", "2",
                "--out", str(tmp_path / "n.aln")]) == 2
