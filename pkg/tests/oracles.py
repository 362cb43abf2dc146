"""Brute-force reference computations, deliberately independent of the package code paths."""

import math

import numpy as np


def naive_dft(x):
    n = len(x)
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    return (np.exp(-2j * np.pi * k * t / n) * np.asarray(x)[None, :]).sum(axis=1)


def naive_stft(x, n_fft, hop, center):
    x = np.asarray(x, dtype=float)
    if center:
        pad = n_fft // 2
        # reflect without repeating the edge sample
        left = x[1:pad + 1][::-1]
        right = x[-pad - 1:-1][::-1]
        x = np.concatenate([left, x, right])
    win = np.array([0.5 - 0.5 * math.cos(2 * math.pi * i / n_fft) for i in range(n_fft)])
    cols = []
    start = 0
    while start + n_fft <= len(x):
        cols.append(naive_dft(x[start:start + n_fft] * win)[: n_fft // 2 + 1])
        start += hop
    return np.array(cols).T


def explicit_filterbank(n_mels, n_fft, sr, fmin, fmax):
    mel = lambda f: 2595.0 * math.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    lo_m, hi_m = mel(fmin), mel(fmax)
    pts = [inv(lo_m + (hi_m - lo_m) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        l, c, r = pts[m], pts[m + 1], pts[m + 2]
        for k in range(n_fft // 2 + 1):
            f = k * sr / n_fft
            if l < f <= c:
                fb[m, k] = (f - l) / (c - l)
            elif c < f < r:
                fb[m, k] = (r - f) / (r - c)
        fb[m] /= fb[m].sum()
    return fb


def naive_log_mel(x, n_fft, hop, center, n_mels, sr, fmin, fmax):
    X = naive_stft(x, n_fft, hop, center)
    return np.log(np.maximum(explicit_filterbank(n_mels, n_fft, sr, fmin, fmax) @ np.abs(X) ** 2, 1e-10))


def dct2_ortho(v):
    n = len(v)
    out = np.zeros(n)
    for k in range(n):
        s = sum(v[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * math.sqrt((1 if k == 0 else 2) / n)
    return out


def pearson_definition(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def mann_whitney(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def brute_median(xs):
    """Median from a plain sorted list."""
    s = sorted(xs)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def brute_mode(xs, width_num=1, width_den=20):
    """Histogram mode over [0,1], values read as the decimals they print as; ties to the lowest bin."""
    from fractions import Fraction
    w = Fraction(width_num, width_den)
    n_bins = int(1 / w)
    counts = [0] * n_bins
    for x in xs:
        fx = Fraction(repr(x))
        k = 0
        while k < n_bins - 1 and fx >= (k + 1) * w:
            k += 1
        counts[k] += 1
    best = max(counts)
    k = counts.index(best)
    return (k + 0.5) * (width_num / width_den)


def exact_mean(xs):
    from fractions import Fraction
    return float(sum(map(Fraction, xs))) / len(xs)
