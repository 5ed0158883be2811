#!/usr/bin/env python3
"""End-to-end smoke test of the gascom_py extension module.

Builds the cdylib with cargo if needed, loads it, and runs a tiny
parse -> walk -> train -> evaluate -> checkpoint round trip.

Usage: python3 python/smoke_test.py
"""

import importlib.util
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    subprocess.run(
        ["cargo", "build", "-p", "gascom-py", "--release"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libgascom_py.so"
    if not built.exists():  # macOS
        built = ROOT / "target" / "release" / "libgascom_py.dylib"
    stage = pathlib.Path(tempfile.mkdtemp(prefix="gascom-py-"))
    target = stage / "gascom_py.so"
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("gascom_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    g = load_module()

    # tokenizer basics
    toks = g.tokenize_text("Hello, world! hello")
    assert len(toks) == 5, toks  # hello , world ! hello
    assert toks[0] == toks[4], "case-insensitive hashing"

    # hand-written corpus parses and walks
    corpus = g.Corpus.from_jsonl(
        '{"discussion_id":"d","nodes":['
        '{"id":"a","parent_id":null,"text":"root","label":null},'
        '{"id":"b","parent_id":"a","text":"reply one","label":"pos"},'
        '{"id":"c","parent_id":"b","text":"reply two","label":"neg"}]}\n'
    )
    assert corpus.num_discussions == 1 and corpus.num_labeled == 2, repr(corpus)
    walks = corpus.walk(strategy="parent-child")
    assert len(walks) == 2
    for target, strategy, nodes in walks:
        assert strategy == "parent-child"
        assert len(nodes) == 1, "parent-child selects exactly the parent"

    # synthetic corpus: deterministic and balanced
    synth = g.Corpus.synthetic(300, seed=11)
    assert synth.num_labeled == 300
    assert synth.to_jsonl() == g.Corpus.synthetic(300, seed=11).to_jsonl()

    # train, evaluate, round-trip the checkpoint
    model, history = g.train_model(
        synth, strategy="sim-rw", l=6, seed=11, epochs=8, d_model=16,
        heads=2, learning_rate=2e-3,
    )
    assert len(history) == 8
    metrics = model.evaluate(synth)
    assert metrics["accuracy"] >= 0.9, metrics
    assert set(metrics) >= {"accuracy", "macro_f1", "precision", "recall", "pr_auc"}

    pos, neg = model.predict(synth, "n3")
    assert abs(pos + neg - 1.0) < 1e-9

    with tempfile.TemporaryDirectory() as d:
        path = pathlib.Path(d) / "model.ckpt"
        model.save(path)
        loaded = g.Model.load(path, strategy="sim-rw", l=6, seed=11)
        again = loaded.evaluate(synth)
        assert again == metrics, (again, metrics)

    # context-free ablation stays near chance on the XOR task
    free_model, _ = g.train_model(
        synth, strategy="sim-rw", l=6, seed=11, epochs=8, d_model=16,
        heads=2, learning_rate=2e-3, context_free=True,
    )
    free_metrics = free_model.evaluate(synth)
    assert free_metrics["accuracy"] <= 0.65, free_metrics

    print("smoke test: all checks passed")
    print(f"  context accuracy      {metrics['accuracy']:.3f}")
    print(f"  context-free accuracy {free_metrics['accuracy']:.3f}")


if __name__ == "__main__":
    main()
