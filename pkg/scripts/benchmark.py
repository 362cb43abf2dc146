"""Text-only, audio-only and fused test accuracy on synthetic datasets.

    python3 scripts/benchmark.py --seeds 1 2 7 --text-info 0.6 --audio-info 0.6
"""

import argparse
import tempfile
import time

from emofuse import fusion, pipeline, scorers
from emofuse.ingest import SyntheticSpec, make_synthetic_dataset


def run_once(seed, n, text_info, audio_info, epochs, workdir):
    recs = make_synthetic_dataset(SyntheticSpec(n, seed=seed, text_informativeness=text_info,
                                                audio_informativeness=audio_info), workdir)
    train = pipeline.by_split(recs, "train")
    text = scorers.score_text(scorers.train_text_baseline(train), recs)
    audio = scorers.score_audio(scorers.train_audio_baseline(train, base_dir=workdir), recs, workdir)
    state = pipeline.train_fusion_on_manifest(recs, workdir, fusion.FusionConfig(seed=seed),
                                              fusion.TrainHyper(epochs=epochs, seed=seed))
    fused, _ = pipeline.predict_on_manifest(state.model, recs, workdir)
    acc = {name: pipeline.split_accuracy(m, recs) for name, m in
           (("text", text), ("audio", audio), ("fused", fused))}
    return acc, state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--text-info", type=float, default=0.6)
    ap.add_argument("--audio-info", type=float, default=0.6)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()
    print("seed\ttext\taudio\tfused\tmargin\tbest_val\tbest_epoch\tseconds")
    for seed in args.seeds:
        t0 = time.perf_counter()
        with tempfile.TemporaryDirectory() as d:
            acc, state = run_once(seed, args.n, args.text_info, args.audio_info, args.epochs, d)
        margin = acc["fused"] - max(acc["text"], acc["audio"])
        print(f"{seed}\t{acc['text']:.3f}\t{acc['audio']:.3f}\t{acc['fused']:.3f}\t{margin:+.3f}\t"
              f"{state.best_val_accuracy:.3f}\t{state.best_epoch}\t{time.perf_counter() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main()
