"""Waveform I/O, STFT, mel filterbank, log-mel spectrograms, MFCCs and spectrogram images.

Conventions: periodic Hann window, HTK mel scale, natural-log power with a
1e-10 floor. Spectrogram rows are mel bands (lowest frequency first),
columns are frames.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SR = 16000
LOG_FLOOR = 1e-10
IMAGE_SIZE = 64


class AudioFormatError(ValueError):
    pass


class DSPConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SR

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 1024
    hop: int = 256
    window: str = "hann"
    center_pad: bool = True

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1):
            raise DSPConfigError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise DSPConfigError(f"hop must be in (0, n_fft], got {self.hop}")
        if self.window != "hann":
            raise DSPConfigError(f"unsupported window {self.window!r}")


@dataclass(frozen=True)
class MelParams:
    n_mels: int = 64
    fmin: float = 50.0
    fmax: float = 8000.0


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # [n_mels, n_frames]
    stft: StftParams
    mel: MelParams
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SpectroImage:
    pixels: np.ndarray  # [64, 64] in [0, 1]
    provenance: dict = field(default_factory=dict)


# -- WAV I/O -----------------------------------------------------------------

def load_wav(path: str | Path) -> Waveform:
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise AudioFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV not supported")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from None
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(data, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def save_wav(w: Waveform, path: str | Path) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(w.sample_rate))
        wf.writeframes(to_pcm16(w.samples).tobytes())


# -- STFT --------------------------------------------------------------------

def hann(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even form used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, n_fft: int, hop: int, center_pad: bool) -> np.ndarray:
    """Slice into overlapping frames, shape [n_frames, n_fft]."""
    if center_pad:
        pad = n_fft // 2
        if x.size <= pad:
            raise ValueError(f"signal of {x.size} samples too short to reflect-pad by {pad}")
        x = np.pad(x, pad, mode="reflect")
    if x.size < n_fft:
        raise ValueError(f"signal of {x.size} samples shorter than n_fft={n_fft}")
    n_frames = 1 + (x.size - n_fft) // hop
    return np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop][:n_frames]


def stft(w: Waveform, p: StftParams = StftParams()) -> np.ndarray:
    """One-sided STFT, shape [n_fft // 2 + 1, n_frames]."""
    frames = frame_signal(w.samples, p.n_fft, p.hop, p.center_pad)
    return np.fft.rfft(frames * hann(p.n_fft), axis=1).T


# -- mel ---------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """n_mels + 2 frequencies (Hz): left edge, centers, right edge."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-mel filters, each row normalized to unit sum. Shape [n_mels, n_fft//2+1]."""
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise DSPConfigError(f"need 0 <= fmin < fmax <= sr/2, got fmin={fmin}, fmax={fmax}")
    if n_mels < 1:
        raise DSPConfigError("n_mels must be >= 1")
    bin_hz = sample_rate / n_fft
    edges = mel_band_edges(n_mels, fmin, fmax)
    freqs = np.arange(n_fft // 2 + 1) * bin_hz
    fb = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        if hi - lo < bin_hz:
            raise DSPConfigError(
                f"mel filter {m} spans {hi - lo:.2f} Hz < one FFT bin ({bin_hz:.2f} Hz); "
                f"reduce n_mels or increase n_fft")
        up = (freqs - lo) / (c - lo)
        down = (hi - freqs) / (hi - c)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        total = fb[m].sum()
        if total <= 0:
            raise DSPConfigError(f"mel filter {m} covers no FFT bin")
        fb[m] /= total
    return fb


def log_mel_spectrogram(w: Waveform, p: StftParams = StftParams(), mel: MelParams = MelParams()) -> Spectrogram:
    X = stft(w, p)
    fb = mel_filterbank(mel.n_mels, p.n_fft, w.sample_rate, mel.fmin, mel.fmax)
    power = fb @ (X.real ** 2 + X.imag ** 2)
    return Spectrogram(np.log(np.maximum(power, LOG_FLOOR)), p, mel, w.sample_rate)


# -- cepstra and summary features ---------------------------------------------

def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix D, so that coefficients = D @ x and x = D.T @ coefficients."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    D = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    D[0] /= np.sqrt(2.0)
    return D


def mfcc(s: Spectrogram, n_coeffs: int = 13) -> np.ndarray:
    if not 1 <= n_coeffs <= s.n_mels:
        raise ValueError(f"n_coeffs must be in [1, {s.n_mels}]")
    return dct_matrix(s.n_mels)[:n_coeffs] @ s.values


N_SUMMARY = 40
N_MFCC = 13

SUMMARY_FEATURE_NAMES = (
    [f"mfcc{i}_mean" for i in range(N_MFCC)]
    + [f"mfcc{i}_std" for i in range(N_MFCC)]
    + ["centroid_mean", "centroid_std", "rms_mean", "rms_std", "zcr_mean", "zcr_std"]
    + [f"mel{i}_mean" for i in range(4)]
    + [f"mel{i}_std" for i in range(4)]
)


def summary_features(w: Waveform, p: StftParams = StftParams(), mel: MelParams = MelParams()) -> np.ndarray:
    """Fixed 40-dim clip descriptor, ordered as SUMMARY_FEATURE_NAMES.

    Frame statistics share the STFT framing. The centroid is magnitude-weighted
    (Hz) and 0 for silent frames; ZCR counts sign changes per adjacent sample pair.
    """
    X = stft(w, p)
    mag = np.abs(X)
    spec = log_mel_spectrogram(w, p, mel)
    cc = mfcc(spec, N_MFCC)

    freqs = np.arange(mag.shape[0]) * w.sample_rate / p.n_fft
    tot = mag.sum(axis=0)
    centroid = np.where(tot > 0, (freqs[:, None] * mag).sum(axis=0) / np.where(tot > 0, tot, 1.0), 0.0)

    frames = frame_signal(w.samples, p.n_fft, p.hop, p.center_pad)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    signs = np.signbit(frames)
    zcr = np.mean(signs[:, 1:] != signs[:, :-1], axis=1)
    # exact zeros are not crossings
    zcr = np.where(np.all(frames == 0, axis=1), 0.0, zcr)

    low = spec.values[:4]
    out = np.concatenate([
        cc.mean(axis=1), cc.std(axis=1),
        [centroid.mean(), centroid.std(), rms.mean(), rms.std(), zcr.mean(), zcr.std()],
        low.mean(axis=1), low.std(axis=1),
    ])
    assert out.size == N_SUMMARY
    return out


# -- image rendering -------------------------------------------------------------

def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] averaging matrix; output cell j covers [j*s, (j+1)*s) of the input, s = n_in/n_out."""
    s = n_in / n_out
    W = np.zeros((n_out, n_in))
    for j in range(n_out):
        a, b = j * s, (j + 1) * s
        for i in range(int(np.floor(a)), min(n_in, int(np.ceil(b)))):
            W[j, i] = min(b, i + 1) - max(a, i)
        W[j] /= W[j].sum()
    return W


def _linear_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] linear interpolation with half-pixel centers, edge-clamped."""
    W = np.zeros((n_out, n_in))
    for j in range(n_out):
        x = (j + 0.5) * n_in / n_out - 0.5
        x = min(max(x, 0.0), n_in - 1.0)
        i0 = int(np.floor(x))
        i1 = min(i0 + 1, n_in - 1)
        t = x - i0
        W[j, i0] += 1.0 - t
        W[j, i1] += t
    return W


def resample_weights(n_in: int, n_out: int) -> np.ndarray:
    if n_in == n_out:
        return np.eye(n_in)
    return _area_weights(n_in, n_out) if n_in > n_out else _linear_weights(n_in, n_out)


def render_image(values: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    norm = np.full_like(v, 0.5) if hi == lo else (v - lo) / (hi - lo)
    out = resample_weights(v.shape[0], size) @ norm @ resample_weights(v.shape[1], size).T
    return np.clip(out, 0.0, 1.0)


def render_spectro_image(s: Spectrogram) -> SpectroImage:
    prov = {
        "n_fft": s.stft.n_fft, "hop": s.stft.hop, "center_pad": s.stft.center_pad,
        "n_mels": s.mel.n_mels, "fmin": s.mel.fmin, "fmax": s.mel.fmax,
        "sample_rate": s.sample_rate, "n_frames": s.n_frames,
    }
    return SpectroImage(render_image(s.values), prov)


def wav_to_image(path: str | Path) -> SpectroImage:
    return render_spectro_image(log_mel_spectrogram(load_wav(path)))


def save_spectrogram_csv(s: Spectrogram, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{s.n_mels},{s.n_frames}\n")
        fh.write(",".join(format(x, ".12g") for x in s.values.ravel()) + "\n")


def load_spectrogram_values(path: str | Path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        n_mels, n_frames = (int(t) for t in fh.readline().split(","))
        vals = np.array([float(t) for t in fh.readline().split(",")]) if n_mels * n_frames else np.zeros(0)
    return vals.reshape(n_mels, n_frames)
