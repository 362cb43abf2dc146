"""Finite-difference check of every fusion-model gradient, reported per parameter tensor."""

import argparse

import numpy as np

from emofuse import fusion


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d-model", type=int, default=8)
    ap.add_argument("--layers", type=int, default=1)
    ap.add_argument("--heads", type=int, default=2)
    ap.add_argument("--tokens", type=int, default=5)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--h", type=float, default=1e-5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = fusion.FusionConfig(d_model=args.d_model, n_layers=args.layers, n_heads=args.heads,
                              d_ff=2 * args.d_model, max_text_tokens=args.tokens, seed=args.seed)
    vocab = {"[PAD]": 0, "[UNK]": 1, **{f"w{i}": i + 2 for i in range(8)}}
    model = fusion.init_model(cfg, vocab)
    for k, v in model.params.items():
        model.params[k] = v + 0.3 * rng.standard_normal(v.shape)
    inputs = []
    for _ in range(args.batch):
        k = int(rng.integers(0, args.tokens + 1))
        ids = np.zeros(args.tokens, dtype=np.int64)
        ids[:k] = rng.integers(1, len(vocab), size=k)
        inputs.append(fusion.FusionInput(ids, np.arange(args.tokens) < k, rng.random((cfg.n_patches, cfg.patch_dim))))
    batch = fusion.Batch.stack(inputs)
    Y = np.eye(6)[rng.integers(0, 6, size=args.batch)]

    _, grads = fusion.backward(model, batch, Y)
    print(f"{'tensor':<12} {'size':>6} {'|grad|':>10} {'rel err':>10}")
    worst = 0.0
    for name, p in model.params.items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + args.h
            up = fusion.loss(model, batch, Y)
            p[idx] = old - args.h
            down = fusion.loss(model, batch, Y)
            p[idx] = old
            num[idx] = (up - down) / (2 * args.h)
        g = grads[name]
        rel = np.linalg.norm(num - g) / max(np.linalg.norm(num), np.linalg.norm(g), 1e-10)
        worst = max(worst, rel)
        print(f"{name:<12} {p.size:>6} {np.linalg.norm(g):>10.3e} {rel:>10.2e}")
    print(f"worst relative error {worst:.2e}")


if __name__ == "__main__":
    main()
