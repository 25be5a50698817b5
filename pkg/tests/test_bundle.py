import dataclasses
import struct

import numpy as np
import pytest

from prosoda.audio import read_wav
from prosoda.bundle import BundleError, ModelBundle
from prosoda.corpus import read_manifest
from prosoda.pitch import BinGrid
from prosoda.synth import render


def test_round_trip_bitwise(tiny_bundle, tmp_path):
    p = tmp_path / "b.prsd"
    tiny_bundle.save(p)
    back = ModelBundle.load(p)
    assert back.to_bytes() == tiny_bundle.to_bytes()
    assert back.component_hashes() == tiny_bundle.component_hashes()
    assert back.speakers == tiny_bundle.speakers


def test_reload_preserves_inference(tiny_bundle, tiny_corpus):
    back = ModelBundle.from_bytes(tiny_bundle.to_bytes())
    r = next(r for r in read_manifest(tiny_corpus) if r.split == "eval")
    w = read_wav(r.audio_path)
    for mode in ("baseline", "proposed"):
        a = render(w, mode, tiny_bundle, r.speaker_id)
        b = render(w, mode, back, r.speaker_id)
        assert np.array_equal(a.waveform.samples, b.waveform.samples)
        assert np.array_equal(a.durations, b.durations)


def test_sections_and_layout(tiny_bundle):
    data = tiny_bundle.to_bytes()
    assert data[:4] == b"PRSD"
    version, count = struct.unpack_from("<II", data, 4)
    assert version == 1 and count == len(tiny_bundle.sections()) + 1
    assert {"codebook", "emotion", "duration", "pitch", "grid", "speaker_stats", "features"} <= set(tiny_bundle.sections())


def test_tamper_detected(tiny_bundle):
    data = bytearray(tiny_bundle.to_bytes())
    data[-20] ^= 0xFF
    with pytest.raises(BundleError, match="hash"):
        ModelBundle.from_bytes(bytes(data))
    with pytest.raises(BundleError):
        ModelBundle.from_bytes(b"NOPE" + bytes(data[4:]))
    with pytest.raises(BundleError):
        ModelBundle.from_bytes(bytes(data[: len(data) // 2]))


def test_invariants_checked(tiny_bundle):
    bad = dataclasses.replace(tiny_bundle, grid=BinGrid.uniform(16))
    with pytest.raises(BundleError):
        bad.check()
    with pytest.raises(BundleError):
        bad.to_bytes()
    other = dataclasses.replace(tiny_bundle.pitch, K=tiny_bundle.codebook.K + 1)
    with pytest.raises(BundleError):
        dataclasses.replace(tiny_bundle, pitch=other).check()
