import json

import pytest

from shelm.cli import main
from shelm.retrieval import load_index
from shelm.stores import load_store, save_store


CLUSTERS = "red:1:0.05,blue:2:0.05,green:3:0.05,gold:4:0.05,wall:5:0.05,moss:6:0.05"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestStoreCommands:
    def test_gen_and_inspect(self, tmp_path, capsys):
        out = tmp_path / "s.semb"
        code, _, _ = run(capsys, "store", "gen", "--seed", "3", "--vocab-size", "24",
                         "--dim", "16", "--clusters", CLUSTERS, "--out", str(out))
        assert code == 0
        code, text, _ = run(capsys, "store", "inspect", "--store", str(out))
        assert code == 0
        info = json.loads(text)
        assert info["tokens"] == 24
        assert info["tables"]["retrieval_space"]["dim"] == 16
        assert [c["label"] for c in info["clusters"]][:2] == ["red", "blue"]

    def test_gen_is_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a.semb", tmp_path / "b.semb"
        for out in (a, b):
            code, _, _ = run(capsys, "store", "gen", "--seed", "9", "--vocab-size", "12",
                             "--dim", "8", "--clusters", CLUSTERS, "--out", str(out))
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_inspect_rejects_corrupt_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.semb"
        bad.write_bytes(b"JUNKJUNKJUNK")
        code, _, err = run(capsys, "store", "inspect", "--store", str(bad))
        assert code == 3
        assert "data error" in err

    def test_intersect(self, tmp_path, toy_store, capsys):
        p = tmp_path / "toy.semb"
        save_store(toy_store, p)
        out = tmp_path / "common.semb"
        code, text, _ = run(capsys, "store", "intersect", "--a", str(p), "--b", str(p),
                            "--out", str(out))
        assert code == 0
        assert load_store(out).vocabulary.tokens == toy_store.vocabulary.tokens

    def test_usage_error_exit_code(self, capsys):
        assert main(["store", "gen", "--seed", "1", "--vocab-size", "4",
                     "--dim", "4", "--clusters", "oops", "--out", "x.semb"]) == 2


class TestIndexCommand:
    def test_build_with_prompts(self, tmp_path, toy_store, capsys):
        store_path = tmp_path / "toy.semb"
        save_store(toy_store, store_path)
        prompts = tmp_path / "prompts.txt"
        prompts.write_text("a screenshot of\na render of\n")
        out = tmp_path / "index.semb"
        code, text, _ = run(capsys, "index", "build", "--store", str(store_path),
                            "--prompts", str(prompts), "--out", str(out))
        assert code == 0
        index = load_index(out)
        assert len(index) == len(toy_store.vocabulary)
        assert index.prompt_set.prompts == ("a screenshot of", "a render of")


def write_config(tmp_path, store_path, variant="markovian_ppo", seeds="21,22", extra=""):
    text = f"""
variant = {variant}
store = {store_path}
out_dir = runs/{variant}
seeds = {seeds}
env.kind = tmaze_memory
env.corridor_length = 2
env.n_concepts = 2
env.episode_limit = 3
env.seed = 0
ppo.n_workers = 1
ppo.rollout_length = 12
ppo.total_steps = 48
ppo.epochs = 1
ppo.minibatches = 1
encoder.layers = 1
encoder.heads = 2
encoder.model_dim = 16
encoder.ff_dim = 24
encoder.memory_len = 8
eval.every = 24
eval.episodes = 2
{extra}
"""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


class TestTrainEvalTrace:
    def test_train_eval_trace_pipeline(self, tmp_path, toy_store, capsys):
        store_path = tmp_path / "toy.semb"
        save_store(toy_store, store_path)
        cfg = write_config(tmp_path, store_path, variant="shelm")
        for idx in ("0", "1"):
            code, _, err = run(capsys, "train", "--config", str(cfg),
                               "--seed-index", idx, "--quiet")
            assert code == 0, err
        run_dir = tmp_path / "runs" / "shelm"
        code, text, _ = run(capsys, "eval", "--run-dir", str(run_dir))
        assert code == 0
        assert (run_dir / "eval" / "curves.csv").exists()
        assert (run_dir / "eval" / "summary.json").exists()
        code, text, _ = run(capsys, "trace", "--run-dir", str(run_dir),
                            "--episode", "0")
        assert code == 0
        assert "memory:" in text
        assert "variant=shelm" in text

    def test_train_determinism_via_cli(self, tmp_path, toy_store, capsys):
        store_path = tmp_path / "toy.semb"
        save_store(toy_store, store_path)
        cfg1 = write_config(tmp_path, store_path)
        code, _, _ = run(capsys, "train", "--config", str(cfg1), "--seed-index", "0",
                         "--quiet")
        assert code == 0
        first = (tmp_path / "runs" / "markovian_ppo" / "seed_21" / "metrics.csv").read_bytes()
        (tmp_path / "again").mkdir()
        cfg2 = tmp_path / "again" / "run.cfg"
        cfg2.write_text(cfg1.read_text().replace("out_dir = runs/markovian_ppo",
                                                 "out_dir = runs2/markovian_ppo"))
        store2 = tmp_path / "again" / "toy.semb"
        save_store(toy_store, store2)
        cfg2.write_text(cfg2.read_text().replace(str(store_path), str(store2)))
        code, _, _ = run(capsys, "train", "--config", str(cfg2), "--seed-index", "0",
                         "--quiet")
        assert code == 0
        second = (tmp_path / "again" / "runs2" / "markovian_ppo" / "seed_21"
                  / "metrics.csv").read_bytes()
        assert first == second

    def test_trace_missing_episode(self, tmp_path, toy_store, capsys):
        store_path = tmp_path / "toy.semb"
        save_store(toy_store, store_path)
        cfg = write_config(tmp_path, store_path, variant="shelm")
        code, _, _ = run(capsys, "train", "--config", str(cfg), "--seed-index", "0",
                         "--quiet")
        assert code == 0
        code, _, err = run(capsys, "trace", "--run-dir",
                           str(tmp_path / "runs" / "shelm"), "--episode", "9999")
        assert code == 3
        assert "not found" in err

    def test_eval_missing_run_dir(self, tmp_path, capsys):
        code, _, err = run(capsys, "eval", "--run-dir", str(tmp_path / "nothing"))
        assert code == 2

    def test_eval_iqm_matches_hand_value_on_30_seed_fixture(self, tmp_path, capsys):
        header = "step,variant,seed,eval_success,eval_return,policy_loss,value_loss,entropy,clip_fraction"
        run_dir = tmp_path / "runs"
        for i in range(1, 31):
            sub = run_dir / f"seed_{i}"
            sub.mkdir(parents=True)
            score = i / 30
            (sub / "metrics.csv").write_text(
                header + f"\n100,shelm,{i},{score:.6f},{score:.6f},0,0,0,0\n"
            )
        code, text, _ = run(capsys, "eval", "--run-dir", str(run_dir),
                            "--n-boot", "200")
        assert code == 0
        summary = json.loads(text.split("wrote")[0])
        # drop floor(30/4)=7 from each tail: mean of {8..23}/30 = 15.5/30
        assert summary["iqm_success"] == pytest.approx(15.5 / 30)

    def test_bad_config_key(self, tmp_path, toy_store, capsys):
        store_path = tmp_path / "toy.semb"
        save_store(toy_store, store_path)
        cfg = write_config(tmp_path, store_path, extra="ppo.warp_speed = 9")
        code, _, err = run(capsys, "train", "--config", str(cfg), "--seed-index", "0")
        assert code == 2
        assert "warp_speed" in err
