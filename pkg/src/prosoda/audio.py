"""PCM WAV input/output and fixed-hop framing."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 400  # 25 ms
HOP = 320  # 20 ms, one discrete unit per hop

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Base class for WAV decoding failures."""


class NotPCMError(WavError):
    pass


class ChannelCountError(WavError):
    pass


class SampleWidthError(WavError):
    pass


class TruncatedChunkError(WavError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D samples)")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameSeq:
    frames: np.ndarray  # (n_frames, frame_len)
    hop: int
    frame_len: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def n_frames_for(n_samples: int, frame_len: int = FRAME_LEN, hop: int = HOP) -> int:
    """Number of complete frames; the tail is never padded."""
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame(w: Waveform, frame_len: int = FRAME_LEN, hop: int = HOP) -> FrameSeq:
    """Slice ``w`` into frames starting at ``i * hop``."""
    if hop < 1:
        raise ValueError("hop must be at least 1 sample")
    if frame_len < hop:
        raise ValueError("frame_len must be >= hop")
    n = n_frames_for(len(w), frame_len, hop)
    if n == 0:
        frames = np.zeros((0, frame_len))
    else:
        windows = np.lib.stride_tricks.sliding_window_view(w.samples, frame_len)
        frames = windows[: (n - 1) * hop + 1 : hop].copy()
    return FrameSeq(frames=frames, hop=hop, frame_len=frame_len, sample_rate=w.sample_rate)


def _iter_chunks(data: bytes, offset: int):
    while offset < len(data):
        if offset + 8 > len(data):
            raise TruncatedChunkError(f"chunk header truncated at byte {offset}")
        cid, size = struct.unpack_from("<4sI", data, offset)
        body = offset + 8
        if body + size > len(data):
            raise TruncatedChunkError(
                f"chunk {cid!r} declares {size} bytes, only {len(data) - body} present"
            )
        yield cid, data[body : body + size]
        offset = body + size + (size & 1)


def read_wav(path) -> Waveform:
    """Decode a mono 16-bit PCM RIFF/WAVE file.

    Samples are scaled by 1/32768. Canonical 44-byte headers and
    WAVE_FORMAT_EXTENSIBLE headers with a PCM subformat are accepted.

    Raises
    ------
    FileNotFoundError
        ``path`` does not exist.
    NotPCMError, ChannelCountError, SampleWidthError, TruncatedChunkError
        Unsupported or damaged content.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise TruncatedChunkError("file shorter than RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise WavError("not a RIFF/WAVE container")

    fmt = None
    pcm = None
    for cid, body in _iter_chunks(data, 12):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            pcm = body
            break
    if fmt is None:
        raise WavError("missing fmt chunk")
    if pcm is None:
        raise WavError("missing data chunk")
    if len(fmt) < 16:
        raise TruncatedChunkError("fmt chunk shorter than 16 bytes")

    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise TruncatedChunkError("extensible fmt chunk shorter than 40 bytes")
        # the subformat GUID starts with the 16-bit format tag
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if tag != _WAVE_FORMAT_PCM:
        raise NotPCMError(f"unsupported encoding tag 0x{tag:04x}")
    if channels != 1:
        raise ChannelCountError(f"expected 1 channel, got {channels}")
    if bits != 16:
        raise SampleWidthError(f"expected 16-bit samples, got {bits}")
    if len(pcm) % 2:
        raise TruncatedChunkError("data chunk ends mid-sample")

    ints = np.frombuffer(pcm, dtype="<i2")
    return Waveform(ints.astype(np.float64) / 32768.0, rate)


def encode_pcm16(samples: np.ndarray) -> np.ndarray:
    """Clip to [-1, 1] and quantize with the same 1/32768 step the decoder uses.

    Full scale +1.0 saturates at 32767, so decode(encode(x)) is within one
    quantization step of ``x`` everywhere.
    """
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    """Write ``w`` as a canonical 44-byte-header 16-bit mono PCM file."""
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("waveform contains non-finite samples")
    pcm = encode_pcm16(w.samples).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        1,
        w.sample_rate,
        w.sample_rate * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    with open(os.fspath(path), "wb") as fh:
        fh.write(header)
        fh.write(pcm)
