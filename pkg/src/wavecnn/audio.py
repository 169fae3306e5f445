"""WAV decoding, band-limited resampling and sliding-window framing.

Audio enters the toolkit through three steps: decode a RIFF/WAVE byte
stream to a mono float waveform, optionally resample it to the working
rate (16 kHz for all stock model configs), and cut it into fixed-length
windowed frames that match the network input layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AudioFormatError",
    "Waveform",
    "FramingPolicy",
    "Frame",
    "decode_wav",
    "read_wav",
    "write_wav",
    "resample",
    "frame_signal",
]

WINDOW_KINDS = ("rect", "hamming")

# Half-width of the sinc interpolation kernel, in zero crossings at the
# cutoff frequency. 16 lobes with a Kaiser window gives > 80 dB stopband.
_SINC_LOBES = 16
_KAISER_BETA = 8.6


class AudioFormatError(ValueError):
    """Malformed or unsupported WAV input."""


@dataclass
class Waveform:
    """Mono audio signal; amplitudes nominally in [-1, 1].

    Band-limited resampling may overshoot the nominal range slightly
    (Gibbs ringing); only finiteness is enforced.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform samples must be a non-empty 1D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FramingPolicy:
    """How a clip is cut into fixed-length network inputs.

    ``hop = round(frame_len * (1 - overlap_fraction))``; frames start at
    multiples of the hop and trailing remainders shorter than a frame are
    dropped. ``pad_short`` controls whether a clip shorter than one frame
    yields a single zero-padded frame or an error.
    """

    frame_len: int
    overlap_fraction: float = 0.0
    window_kind: str = "rect"
    pad_short: bool = True

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError(f"frame_len must be >= 1, got {self.frame_len}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"window_kind must be one of {WINDOW_KINDS}, got {self.window_kind!r}")
        if self.hop < 1:
            raise ValueError("hop must be >= 1; overlap too close to 1")

    @property
    def hop(self) -> int:
        return int(round(self.frame_len * (1.0 - self.overlap_fraction)))

    def window(self) -> np.ndarray:
        if self.window_kind == "hamming":
            return np.hamming(self.frame_len)
        return np.ones(self.frame_len)


@dataclass(frozen=True)
class Frame:
    """One windowed slice of a clip. ``source_offset`` is the sample index
    of the frame start in the original clip."""

    values: np.ndarray
    source_offset: int


def _parse_fmt_chunk(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise AudioFormatError("malformed header: fmt chunk shorter than 16 bytes")
    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", body, 0)
    return audio_format, n_channels, sample_rate, bits


def _decode_pcm(raw: bytes, audio_format: int, bits: int) -> np.ndarray:
    if audio_format == 1:  # integer PCM
        if bits == 8:
            return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        if bits == 16:
            return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        if bits == 24:
            b = np.frombuffer(raw[: len(raw) - len(raw) % 3], dtype=np.uint8).reshape(-1, 3)
            x = (
                b[:, 0].astype(np.int32)
                | (b[:, 1].astype(np.int32) << 8)
                | (b[:, 2].astype(np.int32) << 16)
            )
            x = np.where(x >= 1 << 23, x - (1 << 24), x)
            return x.astype(np.float64) / float(1 << 23)
        raise AudioFormatError(f"unsupported encoding: {bits}-bit integer PCM")
    if audio_format == 3:  # IEEE float
        if bits == 32:
            x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            return np.clip(x, -1.0, 1.0)
        raise AudioFormatError(f"unsupported encoding: {bits}-bit float PCM")
    raise AudioFormatError(f"unsupported encoding: WAVE format tag {audio_format}")


def decode_wav(data: bytes) -> Waveform:
    """Decode a RIFF/WAVE byte string to a mono :class:`Waveform`.

    Accepts PCM 8/16/24-bit integer and 32-bit float, mono or
    multichannel. Multichannel input is mixed down by channel averaging;
    samples are scaled to [-1, 1].
    """
    if len(data) < 12:
        raise AudioFormatError("malformed header: file shorter than RIFF preamble")
    magic = data[0:4]
    if magic != b"RIFF":
        raise AudioFormatError(f"malformed header: expected RIFF magic, got {magic!r}")
    if data[8:12] != b"WAVE":
        raise AudioFormatError(f"malformed header: expected WAVE form type, got {data[8:12]!r}")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = _parse_fmt_chunk(body)
        elif cid == b"data":
            if len(body) < size:
                raise AudioFormatError("malformed header: data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise AudioFormatError("malformed header: missing fmt chunk")
    if payload is None:
        raise AudioFormatError("malformed header: missing data chunk")
    audio_format, n_channels, sample_rate, bits = fmt
    if n_channels < 1:
        raise AudioFormatError("malformed header: zero channels")
    if len(payload) == 0:
        raise AudioFormatError("zero-length data chunk")

    samples = _decode_pcm(payload, audio_format, bits)
    if samples.size == 0:
        raise AudioFormatError("zero-length data chunk")
    if n_channels > 1:
        samples = samples[: samples.size - samples.size % n_channels]
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return Waveform(samples, sample_rate)


def read_wav(path) -> Waveform:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def write_wav(path, w: Waveform) -> None:
    """Write a waveform as 16-bit PCM mono. Deterministic byte output."""
    x = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2").tobytes()
    header = (
        b"RIFF"
        + struct.pack("<I", 36 + len(pcm))
        + b"WAVE"
        + b"fmt "
        + struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate_hz, w.sample_rate_hz * 2, 2, 16)
        + b"data"
        + struct.pack("<I", len(pcm))
    )
    with open(path, "wb") as fh:
        fh.write(header + pcm)


def _kaiser(x: np.ndarray) -> np.ndarray:
    # Kaiser window evaluated at |x| <= 1, zero outside.
    inside = np.abs(x) <= 1.0
    arg = np.where(inside, 1.0 - x * x, 0.0)
    return np.where(inside, np.i0(_KAISER_BETA * np.sqrt(arg)) / np.i0(_KAISER_BETA), 0.0)


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Band-limited (windowed-sinc) resampling to ``target_hz``.

    Output length is ``round(len(w) * target_hz / source_hz)``. The sinc
    kernel is cut off at the lower of the two Nyquist rates and shaped by
    a Kaiser window. Identity when the rates already match.
    """
    if int(target_hz) <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    target_hz = int(target_hz)
    if target_hz == w.sample_rate_hz:
        return w

    x = w.samples
    ratio = target_hz / w.sample_rate_hz
    n_out = int(round(len(x) * ratio))
    if n_out < 1:
        raise ValueError("resampled length would be zero")
    cutoff = min(1.0, ratio)  # fraction of the source Nyquist
    half = int(np.ceil(_SINC_LOBES / cutoff))

    out = np.empty(n_out, dtype=np.float64)
    # Chunk the output to bound the (n_out, 2*half+1) working set.
    chunk = max(1, int(4e6) // (2 * half + 1))
    taps = np.arange(-half, half + 1)
    for start in range(0, n_out, chunk):
        n = np.arange(start, min(start + chunk, n_out))
        t = n / ratio  # position in source samples
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + taps[None, :]
        u = t[:, None] - idx
        weights = cutoff * np.sinc(cutoff * u) * _kaiser(u / half)
        valid = (idx >= 0) & (idx < len(x))
        gathered = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
        out[n] = np.sum(gathered * weights, axis=1)
    return Waveform(out, target_hz)


def frame_signal(w: Waveform, p: FramingPolicy) -> list[Frame]:
    """Cut a waveform into windowed frames per the framing policy.

    Frames start at offsets 0, hop, 2*hop, ... while a full frame fits.
    A clip shorter than one frame yields a single zero-padded frame when
    ``pad_short`` is set, otherwise an error.
    """
    x = w.samples
    win = p.window()
    if len(x) < p.frame_len:
        if not p.pad_short:
            raise ValueError(
                f"clip too short: {len(x)} samples < frame_len {p.frame_len} (pad_short=False)"
            )
        padded = np.zeros(p.frame_len, dtype=np.float64)
        padded[: len(x)] = x
        return [Frame(padded * win, 0)]

    n_frames = (len(x) - p.frame_len) // p.hop + 1
    frames = []
    for i in range(n_frames):
        off = i * p.hop
        frames.append(Frame(x[off : off + p.frame_len] * win, off))
    return frames
