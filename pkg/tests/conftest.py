"""Shared fixtures: deterministic WAV writers and a synthetic 5-species
call corpus with a recording-level train/test split."""

from __future__ import annotations

import csv
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from callfinder.audio_io import AudioClip

SR = 22050


def write_wav_int16(path, samples, sr=SR):
    wavfile.write(path, sr, (np.clip(samples, -1, 1) * 32767).astype(np.int16))


def write_wav_float32(path, samples, sr=SR):
    wavfile.write(path, sr, np.asarray(samples, dtype=np.float32))


def write_wav_24bit(path, frames, sr=SR):
    """Minimal RIFF writer for 24-bit PCM; frames is (n, channels) in [-1, 1]."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n, channels = frames.shape

    def pack24(v):
        i = int(round(v * (2**23)))
        i = max(-(2**23), min(2**23 - 1, i))
        return struct.pack("<i", i)[:3]

    data = b"".join(
        pack24(frames[r, c]) for r in range(n) for c in range(channels)
    )
    block = channels * 3
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<I", 16)
    header += struct.pack("<HHIIHH", 1, channels, sr, sr * block, block, 24)
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)


def sine(freq, dur_s, sr=SR, amp=1.0, phase=0.0):
    t = np.arange(int(round(dur_s * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def make_clip(samples, sr=SR, source_id="test"):
    return AudioClip(np.asarray(samples, dtype=np.float64), sr, source_id)


# --- synthetic call corpus ---------------------------------------------------

SPECIES_PATTERNS = {
    "whistler": ("tone", 1200.0),
    "upsweeper": ("up", 700.0),
    "downsweeper": ("down", 2400.0),
    "twotone": ("twotone", 600.0),
    "triller": ("trill", 2800.0),
}
TARGET_SPECIES = "whistler"
CALLS_PER_RECORDING = 3
TRAIN_RECORDINGS = 3
TEST_RECORDINGS = 6
RECORDING_DUR_S = 10.0
CALL_TIMES_S = (1.2, 4.3, 7.4)


def synth_call(kind, base_freq, dur_s, pitch=1.0, sr=SR):
    n = int(round(dur_s * sr))
    t = np.arange(n) / sr
    f0 = base_freq * pitch
    if kind == "tone":
        y = np.sin(2 * np.pi * f0 * t)
    elif kind == "up":
        # Linear sweep one octave up over the call.
        y = np.sin(2 * np.pi * (f0 * t + (f0 / (2 * dur_s)) * t * t))
    elif kind == "down":
        y = np.sin(2 * np.pi * (f0 * t - (f0 / (4 * dur_s)) * t * t))
    elif kind == "twotone":
        note = (t * 6).astype(int) % 2
        freq = np.where(note == 0, f0, 2.2 * f0)
        y = np.sin(2 * np.pi * np.cumsum(freq) / sr)
    elif kind == "trill":
        y = np.sin(2 * np.pi * f0 * t) * (0.55 + 0.45 * np.sin(2 * np.pi * 12 * t))
    else:
        raise ValueError(kind)
    fade = min(int(0.02 * sr), n // 4)
    env = np.ones(n)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
    env[:fade] = ramp
    env[-fade:] = ramp[::-1]
    return y * env


def synth_recording(species, rec_idx, sr=SR):
    """One synthetic field recording with known call bounds.

    Per-recording pitch and amplitude stand in for individual variation;
    calls within one recording share them, as calls from one bird would.
    """
    kind, base_freq = SPECIES_PATTERNS[species]
    seed = zlib.crc32(f"{species}:{rec_idx}".encode())  # stable across runs
    rng = np.random.default_rng(seed)
    pitch = 1.0 + 0.04 * rng.uniform(-1, 1)
    amp = 0.16 + 0.06 * rng.uniform()
    n = int(RECORDING_DUR_S * sr)
    x = rng.normal(0.0, 0.002, n)
    bounds = []
    for t0 in CALL_TIMES_S:
        dur = 0.9 + 0.2 * rng.uniform()
        start = t0 + 0.1 * rng.uniform(-1, 1)
        call = amp * synth_call(kind, base_freq, dur, pitch=pitch, sr=sr)
        i0 = int(round(start * sr))
        x[i0 : i0 + call.size] += call
        bounds.append((i0 / sr, (i0 + call.size) / sr))
    return x, bounds


def _write_split(root: Path, rec_indices, csv_name):
    rows = []
    for species in SPECIES_PATTERNS:
        for rec_idx in rec_indices:
            name = f"{species}-{rec_idx:02d}.wav"
            samples, bounds = synth_recording(species, rec_idx)
            write_wav_float32(root / name, samples)
            for start, end in bounds:
                rows.append((name, start, end, species))
    with open(root / csv_name, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording", "start_s", "end_s", "label"])
        for row in rows:
            writer.writerow(row)
    return root / csv_name


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """dict with data_root, train/test annotation CSVs, and the species map."""
    root = tmp_path_factory.mktemp("corpus")
    train_csv = _write_split(root, range(TRAIN_RECORDINGS), "train.csv")
    test_csv = _write_split(
        root, range(TRAIN_RECORDINGS, TRAIN_RECORDINGS + TEST_RECORDINGS),
        "test.csv",
    )
    return {
        "data_root": root,
        "train_csv": train_csv,
        "test_csv": test_csv,
        "target": TARGET_SPECIES,
        "species": list(SPECIES_PATTERNS),
    }
