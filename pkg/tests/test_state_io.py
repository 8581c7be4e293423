"""Engine state snapshots: exact round trips and corruption handling."""

import numpy as np
import pytest

from ovq import (
    OvqConfig,
    OvqState,
    ParseError,
    absorb_chunk,
    dictionary_readout,
    load_state,
    ovq_forward_chunk,
    save_state,
)

from helpers import unit_rows


def _streamed_state(rng, cfg, d, chunks=4):
    state = OvqState.fresh(cfg, d)
    for _ in range(chunks):
        absorb_chunk(state, unit_rows(rng, cfg.chunk_len, d), rng.standard_normal((cfg.chunk_len, d)))
    return state


class TestRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        cfg = OvqConfig(n_max=64, chunk_len=16, beta=4.0, seed=3)
        state = _streamed_state(rng, cfg, 8)
        path = tmp_path / "state.bin"
        save_state(state, path)
        back = load_state(path)
        assert back.config == cfg
        assert back.d == 8
        assert back.n_active == state.n_active
        assert back.tokens_seen == state.tokens_seen
        assert back.chunks_seen == state.chunks_seen
        assert np.array_equal(back.means_k, state.means_k)
        assert np.array_equal(back.means_v, state.means_v)
        assert np.array_equal(back.counts, state.counts)

    def test_float32_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        cfg = OvqConfig(n_max=32, chunk_len=8, dtype="float32")
        state = _streamed_state(rng, cfg, 6)
        path = tmp_path / "state32.bin"
        save_state(state, path)
        back = load_state(path)
        assert back.means_k.dtype == np.float32
        assert np.array_equal(back.means_k, state.means_k)

    def test_resumed_stream_matches_uninterrupted(self, tmp_path):
        rng = np.random.default_rng(2)
        cfg = OvqConfig(n_max=64, chunk_len=16, beta=8.0)
        chunks = [
            (unit_rows(rng, 16, 8), unit_rows(rng, 16, 8), rng.standard_normal((16, 8)))
            for _ in range(6)
        ]
        direct = OvqState.fresh(cfg, 8)
        for q, k, v in chunks:
            ovq_forward_chunk(direct, q, k, v)

        resumed = OvqState.fresh(cfg, 8)
        for q, k, v in chunks[:3]:
            ovq_forward_chunk(resumed, q, k, v)
        path = tmp_path / "mid.bin"
        save_state(resumed, path)
        resumed = load_state(path)
        outs = [ovq_forward_chunk(resumed, q, k, v)[0] for q, k, v in chunks[3:]]

        probe = unit_rows(rng, 4, 8)
        assert np.array_equal(dictionary_readout(direct, probe), dictionary_readout(resumed, probe))

    def test_ablation_and_planned_chunks_survive(self, tmp_path):
        rng = np.random.default_rng(3)
        cfg = OvqConfig(
            n_max=32, chunk_len=8, ablation="linear_growth", planned_chunks=5, seed=7
        )
        state = _streamed_state(rng, cfg, 4, chunks=2)
        path = tmp_path / "abl.bin"
        save_state(state, path)
        assert load_state(path).config == cfg


class TestCorruption:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"JUNKJUNKJUNK" * 20)
        with pytest.raises(ParseError):
            load_state(path)

    def test_truncated_body(self, tmp_path):
        rng = np.random.default_rng(4)
        state = _streamed_state(rng, OvqConfig(n_max=16, chunk_len=8), 4)
        path = tmp_path / "trunc.bin"
        save_state(state, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-17])
        with pytest.raises(ParseError):
            load_state(path)

    def test_header_too_short(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"OVQS")
        with pytest.raises(ParseError):
            load_state(path)
