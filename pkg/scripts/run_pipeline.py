"""Run every CLI stage on a fresh synthetic dataset: synth, score, train, predict, evaluate, compare, coherence, plot."""

import argparse
import sys
import time
from pathlib import Path

from emofuse import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("run"))
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--text-info", type=float, default=0.6)
    ap.add_argument("--audio-info", type=float, default=0.6)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()

    out = args.out
    m = out / "manifest.jsonl"
    reports = [out / f"eval_{mod}_{sp}.json" for mod in ("text", "audio", "fused") for sp in ("validation", "test")]
    steps = [
        ["synth", "--n", args.n, "--text-info", args.text_info, "--audio-info", args.audio_info],
        ["score", "--modality", "text", "--manifest", m],
        ["score", "--modality", "audio", "--manifest", m],
        ["train-fusion", "--manifest", m, "--epochs", args.epochs],
        ["predict", "--manifest", m, "--raw"],
        *[["evaluate", "--scores", out / f"scores_{mod}.csv", "--manifest", m] for mod in ("text", "audio", "fused")],
        ["compare", "--reports", *reports],
        ["coherence", "--text", out / "scores_text.csv", "--audio", out / "scores_audio.csv"],
        ["plot", "--eval", *reports, "--text", out / "scores_text.csv", "--audio", out / "scores_audio.csv"],
    ]
    t0 = time.perf_counter()
    for step in steps:
        print(f"$ emofuse {step[0]}", flush=True)
        code = cli.main([str(a) for a in step] + ["--out", str(out), "--seed", str(args.seed)])
        if code:
            sys.exit(code)
    print(f"done in {time.perf_counter() - t0:.0f}s; artifacts in {out}")


if __name__ == "__main__":
    main()
