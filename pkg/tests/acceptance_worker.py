"""Subprocess workers for the end-to-end acceptance runs.

Usage: python tests/acceptance_worker.py seed <out_dir> <result_json> <seed>
       python tests/acceptance_worker.py bias <out_dir> <result_json>

Thread caps are exported before numpy loads so three parallel workers stay
on roughly one core each instead of oversubscribing the BLAS pool.
"""

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import json
import sys
import time

from kwasr.corpus import load_corpus
from kwasr.decoding import GenerationLimits, max_gen_tokens
from kwasr.experiment import (
    _corpus_path,
    _load_lexicon,
    _train_once,
    _train_texts,
    bias_exp,
    build_specs,
    eval_rows,
    load_config,
)
from kwasr.text import Tokenizer


def run_seed(out_dir: str, result_path: str, seed: int) -> None:
    config = load_config(os.path.join(out_dir, "config.json"))
    t0 = time.time()
    model, _, _ = _train_once(config, out_dir, "duplicated", tag=f"seed{seed}",
                              seed=seed)
    train_seconds = time.time() - t0
    tokenizer = Tokenizer()
    lex = _load_lexicon(out_dir)
    specs = build_specs(config, lex)
    dev = load_corpus(_corpus_path(out_dir, "y_dev"))
    dev_max = max_gen_tokens([u.transcription for u in dev], tokenizer, factor=1.0)
    limit = GenerationLimits(dev_max_tokens=dev_max, factor=config.eval.factor,
                             hard_cap=config.eval.hard_cap).effective
    test = load_corpus(_corpus_path(out_dir, "y_test"))
    rows = eval_rows(model, test, specs, lex, tokenizer, limit,
                     _train_texts(out_dir), rows=[False, True])
    payload = {
        "seed": seed,
        "rows": rows,
        "train_seconds": train_seconds,
        "param_count": model.param_count(),
        "homonym_groups": len(lex.homonym_groups),
    }
    with open(result_path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def run_bias(out_dir: str, result_path: str) -> None:
    config = load_config(os.path.join(out_dir, "config.json"))
    t0 = time.time()
    artifacts = bias_exp(config, out_dir)
    with open(result_path, "w", encoding="utf-8") as f:
        json.dump({"artifacts": artifacts, "seconds": time.time() - t0}, f)


def main(argv: list[str]) -> int:
    mode = argv[0]
    if mode == "seed":
        run_seed(argv[1], argv[2], int(argv[3]))
    elif mode == "bias":
        run_bias(argv[1], argv[2])
    else:
        raise SystemExit(f"unknown worker mode {mode!r}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
