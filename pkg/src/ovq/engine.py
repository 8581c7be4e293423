"""Streaming online-clustered attention layer.

State is a pair of centroid matrices (key side, value side) plus integer
assignment counts. Each chunk is processed in two phases, prediction first:

1. predict: every chunk row attends over the frozen dictionary (always
   visible, biased by log counts) concatenated with the raw in-chunk keys
   and values under a causal mask;
2. absorb: the schedule decides how many chunk keys seed brand-new
   centroids (lowest similarity to the existing dictionary wins), and the
   rest are folded into their nearest centroid with a running-mean step.

Dictionary capacity follows a plateauing schedule, floor(t * N / (t + N))
components after t tokens, so growth is fast early and asymptotes to the
hard cap N. Counts are kept as integers; their sum always equals the
number of tokens absorbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvalidStateError
from .reference import UNIT_NORM_ATOL, AttentionOutput, HeadSequence

ABLATIONS = ("none", "random_assign", "linear_growth", "constant_lr")
FAULTS = ("none", "count_skip", "mask_off_by_one", "growth_over_alloc")
DTYPES = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class OvqConfig:
    """Layer configuration.

    ``beta`` defaults to 8.0, chosen so exp(beta * cos) spans roughly three
    orders of magnitude over the [0.5, 1.0] similarity band; it is a
    tunable, not a calibrated constant. ``planned_chunks`` is only needed
    by the linear_growth ablation, which spreads the centroid budget evenly
    and therefore must know the expected chunk count up front.
    ``_fault`` is a verification-harness hook that deliberately breaks one
    internal step; leave it at "none" for real use.
    """

    n_max: int
    chunk_len: int = 128
    beta: float = 8.0
    normalize_centroids: bool = False
    ablation: str = "none"
    constant_lr_rate: float = 0.25
    sequential_merge: bool = False
    joint_assignment: bool = False
    seed: int = 0
    planned_chunks: int | None = None
    dtype: str = "float64"
    _fault: str = "none"

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigurationError(f"n_max must be >= 1, got {self.n_max}")
        if self.chunk_len < 1:
            raise ConfigurationError(f"chunk_len must be >= 1, got {self.chunk_len}")
        if not (self.beta >= 0.0):
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if self.ablation not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {self.ablation!r}")
        if self.ablation == "constant_lr" and not (0.0 < self.constant_lr_rate <= 1.0):
            raise ConfigurationError(
                f"constant learning rate must be in (0, 1], got {self.constant_lr_rate}"
            )
        if self.planned_chunks is not None and self.planned_chunks < 1:
            raise ConfigurationError("planned_chunks must be >= 1 when given")
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(DTYPES)}")
        if self._fault not in FAULTS:
            raise ConfigurationError(f"unknown fault {self._fault!r}")


@dataclass
class OvqState:
    """Mutable per-head streaming state. Single writer: chunks must be fed
    in sequence order by one owner. Rows at index >= n_active are zeros."""

    config: OvqConfig
    d: int
    means_k: np.ndarray   # [n_max, d]
    means_v: np.ndarray   # [n_max, d]
    counts: np.ndarray    # [n_max] int64
    n_active: int = 0
    tokens_seen: int = 0
    chunks_seen: int = 0

    @classmethod
    def fresh(cls, config: OvqConfig, d: int) -> "OvqState":
        if d < 1:
            raise ConfigurationError(f"d must be >= 1, got {d}")
        dt = DTYPES[config.dtype]
        return cls(
            config=config,
            d=d,
            means_k=np.zeros((config.n_max, d), dtype=dt),
            means_v=np.zeros((config.n_max, d), dtype=dt),
            counts=np.zeros(config.n_max, dtype=np.int64),
        )

    def scalars_stored(self) -> int:
        """Live state scalars: two centroid rows plus one count per
        active component."""
        return self.n_active * (2 * self.d + 1)


@dataclass(frozen=True)
class ChunkUpdateRecord:
    """What one absorbed chunk did to the state."""

    assignments: np.ndarray              # [L] centroid index per token
    new_centroid_positions: np.ndarray   # chunk positions that seeded centroids
    learning_rates: np.ndarray           # [L]; 1.0 for seeding tokens


def growth_count(t: int, n_max: int) -> int:
    """Dictionary capacity after t tokens: floor(t * n_max / (t + n_max)).

    Exact integer arithmetic; monotone nondecreasing in t and bounded by
    n_max.
    """
    if t < 0:
        raise ConfigurationError(f"t must be >= 0, got {t}")
    if n_max < 1:
        raise ConfigurationError(f"n_max must be >= 1, got {n_max}")
    if t == 0:
        return 0
    return (t * n_max) // (t + n_max)


def new_centroid_budget(
    chunk_index: int, config: OvqConfig, planned_chunks: int | None = None
) -> int:
    """Centroids to add after chunk ``chunk_index`` (1-based), i.e. the
    capacity step between L*(c-1) and L*c tokens. Under the linear_growth
    ablation the cap is instead spread evenly over ``planned_chunks``."""
    if chunk_index < 1:
        raise ConfigurationError(f"chunk_index must be >= 1, got {chunk_index}")
    if config.ablation == "linear_growth":
        planned = planned_chunks if planned_chunks is not None else config.planned_chunks
        if planned is None:
            raise ConfigurationError(
                "linear_growth needs planned_chunks (the expected chunk count)"
            )
        per = int(round(config.n_max / planned))
        allocated_after = min(per * chunk_index, config.n_max)
        allocated_before = min(per * (chunk_index - 1), config.n_max)
        return allocated_after - allocated_before
    lo = growth_count(config.chunk_len * (chunk_index - 1), config.n_max)
    hi = growth_count(config.chunk_len * chunk_index, config.n_max)
    return hi - lo


def planned_active_components(total_tokens: int, config: OvqConfig) -> int:
    """Active component count after streaming ``total_tokens`` tokens in
    chunks of ``config.chunk_len`` (last chunk may be short). Mirrors the
    engine's realized growth, including the first-chunk bootstrap."""
    if total_tokens < 0:
        raise ConfigurationError("total_tokens must be >= 0")
    active = 0
    tokens = 0
    chunk_index = 0
    while tokens < total_tokens:
        lc = min(config.chunk_len, total_tokens - tokens)
        chunk_index += 1
        n_new = _chunk_budget(tokens, lc, chunk_index, active, config)
        active += n_new
        tokens += lc
    return active


def _chunk_budget(
    tokens_before: int, lc: int, chunk_index: int, n_active: int, config: OvqConfig
) -> int:
    """Budget for one concrete chunk, evaluated at true token counts so a
    short final chunk never over-allocates."""
    if config.ablation == "linear_growth":
        n_new = new_centroid_budget(chunk_index, config)
    else:
        n_new = growth_count(tokens_before + lc, config.n_max) - growth_count(
            tokens_before, config.n_max
        )
    # A nonempty chunk facing an empty dictionary must seed at least one
    # centroid, otherwise its tokens have nowhere to go. This only fires
    # when the schedule rounds the first step to zero (tiny chunks or
    # n_max == 1).
    if n_active == 0 and n_new == 0 and lc >= 1:
        n_new = 1
    if config._fault == "growth_over_alloc":
        n_new += 1
    return max(0, min(n_new, lc, config.n_max - n_active))


def select_new_centroids(
    k_chunk: np.ndarray,
    state: OvqState,
    n_new: int,
    rng: np.random.Generator | None = None,
    v_chunk: np.ndarray | None = None,
) -> np.ndarray:
    """Pick which chunk positions seed new centroids.

    Default rule: the ``n_new`` keys whose best dot product against the
    existing dictionary is smallest (ties to the lower position), so the
    seeded centroids are spread away from what is already covered. With an
    empty dictionary the chunk bootstraps itself greedily: position 0
    seeds, then the position least similar to anything seeded so far is
    taken, repeating until the budget is filled. The random_assign
    ablation replaces all of this with a seeded uniform sample.
    """
    lc = k_chunk.shape[0]
    if n_new > lc:
        raise ConfigurationError(f"cannot select {n_new} centroids from {lc} positions")
    if n_new <= 0:
        return np.empty(0, dtype=np.int64)

    if state.config.ablation == "random_assign":
        if rng is None:
            rng = np.random.default_rng(state.config.seed)
        return np.sort(rng.choice(lc, size=n_new, replace=False)).astype(np.int64)

    use_joint = state.config.joint_assignment and v_chunk is not None
    points = np.concatenate([k_chunk, v_chunk], axis=1) if use_joint else k_chunk

    if state.n_active == 0:
        selected = [0]
        if n_new > 1:
            best = points @ points[0]
            best[0] = np.inf
            for _ in range(n_new - 1):
                pick = int(np.argmin(best))
                selected.append(pick)
                sims = points @ points[pick]
                best = np.maximum(best, sims)
                best[pick] = np.inf
        return np.array(sorted(selected), dtype=np.int64)

    centroids = _active_reference(state, use_joint)
    best_sim = np.max(points @ centroids.T, axis=1)
    order = np.argsort(best_sim, kind="stable")
    return np.sort(order[:n_new]).astype(np.int64)


def _active_reference(state: OvqState, use_joint: bool) -> np.ndarray:
    if use_joint:
        return np.concatenate(
            [state.means_k[: state.n_active], state.means_v[: state.n_active]], axis=1
        )
    return state.means_k[: state.n_active]


def _assign_to_active(state: OvqState, k_chunk, v_chunk) -> np.ndarray:
    use_joint = state.config.joint_assignment
    points = np.concatenate([k_chunk, v_chunk], axis=1) if use_joint else k_chunk
    sims = points @ _active_reference(state, use_joint).T
    return np.argmax(sims, axis=1).astype(np.int64)


def update_dictionary(
    state: OvqState,
    k_chunk: np.ndarray,
    v_chunk: np.ndarray,
    assignments: np.ndarray,
    new_centroid_positions: np.ndarray,
) -> ChunkUpdateRecord:
    """Fold one chunk into the state.

    Seeding tokens are installed verbatim as new rows with count 1. Every
    other token increments its centroid's count, and the centroid row
    moves by lr * (token - row) where lr = 1 / (count after this chunk's
    increments). All merge deltas for one centroid are applied against the
    same pre-merge row, which makes the result the exact running mean of
    everything the centroid has absorbed.

    ``sequential_merge`` applies the merge deltas one token at a time against
    the evolving row instead (same fixed lr); the two modes agree whenever
    a chunk assigns at most one token per centroid. The constant_lr
    ablation swaps the adaptive lr for a fixed rate. Rows the chunk never
    touches are left bitwise unchanged.
    """
    cfg = state.config
    lc = k_chunk.shape[0]
    n_new = len(new_centroid_positions)
    prev_active = state.n_active
    fresh = np.arange(prev_active, prev_active + n_new)

    if prev_active + n_new > cfg.n_max:
        raise InvalidStateError("new centroids would exceed n_max")
    if n_new != len(set(int(p) for p in new_centroid_positions)):
        raise InvalidStateError("new centroid positions must be distinct")
    if lc and int(np.max(assignments)) >= prev_active + n_new:
        raise InvalidStateError("assignment index beyond grown dictionary")
    if n_new and not np.array_equal(np.sort(assignments[new_centroid_positions]), fresh):
        raise InvalidStateError("seeding tokens must point at the fresh indices")

    dt = DTYPES[cfg.dtype]
    k_chunk = np.asarray(k_chunk, dtype=dt)
    v_chunk = np.asarray(v_chunk, dtype=dt)

    # Install seeds first: exact token rows, count 1.
    if n_new:
        seed_order = new_centroid_positions[np.argsort(assignments[new_centroid_positions])]
        state.means_k[fresh] = k_chunk[seed_order]
        state.means_v[fresh] = v_chunk[seed_order]
        state.counts[fresh] = 1
        state.n_active = prev_active + n_new

    merge_mask = np.ones(lc, dtype=bool)
    merge_mask[new_centroid_positions] = False
    merge_idx = np.flatnonzero(merge_mask)
    targets = assignments[merge_idx]

    lrs = np.ones(lc)
    touched = set(int(i) for i in fresh)

    if len(merge_idx):
        counts_pre = state.counts[targets].copy()
        if cfg._fault != "count_skip":
            np.add.at(state.counts, targets, 1)
        per_target = np.bincount(targets, minlength=state.n_active)
        if cfg.ablation == "constant_lr":
            merge_lrs = np.full(len(merge_idx), cfg.constant_lr_rate)
        else:
            merge_lrs = 1.0 / (counts_pre + per_target[targets]).astype(np.float64)
        lrs[merge_idx] = merge_lrs

        if cfg.sequential_merge:
            for j, tok in enumerate(merge_idx):
                tgt = targets[j]
                lr = dt(merge_lrs[j])
                state.means_k[tgt] += lr * (k_chunk[tok] - state.means_k[tgt])
                state.means_v[tgt] += lr * (v_chunk[tok] - state.means_v[tgt])
        else:
            mu_k_pre = state.means_k[targets].copy()
            mu_v_pre = state.means_v[targets].copy()
            lr_col = merge_lrs.astype(dt)[:, None]
            np.add.at(state.means_k, targets, lr_col * (k_chunk[merge_idx] - mu_k_pre))
            np.add.at(state.means_v, targets, lr_col * (v_chunk[merge_idx] - mu_v_pre))
        touched.update(int(t) for t in targets)

    if cfg.normalize_centroids and touched:
        rows = np.array(sorted(touched), dtype=np.int64)
        norms = np.linalg.norm(state.means_k[rows], axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        state.means_k[rows] = state.means_k[rows] / norms.astype(dt)

    return ChunkUpdateRecord(
        assignments=assignments.copy(),
        new_centroid_positions=np.asarray(new_centroid_positions, dtype=np.int64),
        learning_rates=lrs,
    )


def _chunk_rng(config: OvqConfig, chunk_index: int) -> np.random.Generator:
    # Stateless per-chunk stream so reloaded snapshots stay deterministic.
    return np.random.default_rng([config.seed, chunk_index])


def _predict_chunk(state: OvqState, q_chunk, k_chunk, v_chunk) -> np.ndarray:
    cfg = state.config
    na = state.n_active
    lc = q_chunk.shape[0]
    logits_dict = cfg.beta * (q_chunk @ state.means_k[:na].T) + np.log(
        state.counts[:na].astype(np.float64)
    )
    logits_chunk = cfg.beta * (q_chunk @ k_chunk.T)
    local = np.arange(lc)
    horizon = local[:, None] + (1 if cfg._fault == "mask_off_by_one" else 0)
    logits_chunk = np.where(horizon < local[None, :], -np.inf, logits_chunk)
    logits = np.concatenate([logits_dict, logits_chunk], axis=1)

    m = np.max(logits, axis=1, keepdims=True)
    w = np.exp(logits - m)
    w /= np.sum(w, axis=1, keepdims=True)
    return w @ np.concatenate([state.means_v[:na], v_chunk], axis=0)


def _validate_chunk(state: OvqState, q_chunk, k_chunk, v_chunk, check_queries: bool):
    lc = k_chunk.shape[0]
    if lc < 1:
        raise ConfigurationError("empty chunk")
    if lc > state.config.chunk_len:
        raise ConfigurationError(
            f"chunk of {lc} tokens exceeds chunk_len {state.config.chunk_len}"
        )
    for name, m in (("q", q_chunk), ("k", k_chunk), ("v", v_chunk)):
        if m is None:
            continue
        if m.ndim != 2 or m.shape[1] != state.d:
            raise ConfigurationError(f"{name} chunk must be [L, {state.d}]")
    norms = np.linalg.norm(k_chunk, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_ATOL):
        raise ConfigurationError("k chunk rows must be unit norm")
    if check_queries:
        norms = np.linalg.norm(q_chunk, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_ATOL):
            raise ConfigurationError("q chunk rows must be unit norm")


def absorb_chunk(state: OvqState, k_chunk, v_chunk) -> ChunkUpdateRecord:
    """State update alone (seed selection, assignment, dictionary merge),
    without computing predictions. Used when only the final memory matters."""
    dt = DTYPES[state.config.dtype]
    k_chunk = np.asarray(k_chunk, dtype=dt)
    v_chunk = np.asarray(v_chunk, dtype=dt)
    _validate_chunk(state, None, k_chunk, v_chunk, check_queries=False)
    lc = k_chunk.shape[0]
    chunk_index = state.chunks_seen + 1
    n_new = _chunk_budget(state.tokens_seen, lc, chunk_index, state.n_active, state.config)
    rng = _chunk_rng(state.config, chunk_index)
    new_pos = select_new_centroids(k_chunk, state, n_new, rng=rng, v_chunk=v_chunk)

    assignments = np.zeros(lc, dtype=np.int64)
    if state.n_active > 0:
        assignments = _assign_to_active(state, k_chunk, v_chunk)
    if len(new_pos):
        assignments[new_pos] = state.n_active + np.arange(len(new_pos))
    if state.n_active == 0:
        # Bootstrap: the freshly seeded rows are the only possible homes
        # for the rest of the first chunk.
        if not len(new_pos):
            raise InvalidStateError("empty dictionary with no centroid budget")
        others = np.setdiff1d(np.arange(lc), new_pos, assume_unique=False)
        if len(others):
            use_joint = state.config.joint_assignment
            pts = (
                np.concatenate([k_chunk, v_chunk], axis=1)[others]
                if use_joint
                else k_chunk[others]
            )
            seeds = (
                np.concatenate([k_chunk, v_chunk], axis=1)[new_pos]
                if use_joint
                else k_chunk[new_pos]
            )
            assignments[others] = np.argmax(pts @ seeds.T, axis=1)

    record = update_dictionary(state, k_chunk, v_chunk, assignments, new_pos)
    state.tokens_seen += lc
    state.chunks_seen += 1
    return record


def ovq_forward_chunk(
    state: OvqState, q_chunk, k_chunk, v_chunk
) -> tuple[np.ndarray, ChunkUpdateRecord]:
    """Predict this chunk's outputs from the current state, then absorb the
    chunk. Prediction strictly precedes the update, so outputs for a chunk
    never depend on its own dictionary contribution, and outputs for a
    prefix never change when more chunks follow."""
    dt = DTYPES[state.config.dtype]
    q_chunk = np.asarray(q_chunk, dtype=dt)
    k_chunk = np.asarray(k_chunk, dtype=dt)
    v_chunk = np.asarray(v_chunk, dtype=dt)
    _validate_chunk(state, q_chunk, k_chunk, v_chunk, check_queries=True)
    out = _predict_chunk(state, q_chunk, k_chunk, v_chunk)
    record = absorb_chunk(state, k_chunk, v_chunk)
    return out, record


def dictionary_readout(state: OvqState, queries: np.ndarray) -> np.ndarray:
    """Predict from the stored dictionary alone (no in-flight chunk):
    softmax(beta * q . D_k^T + log counts) over active rows times the value
    means. This is how probes query a finished stream."""
    if state.n_active == 0:
        raise InvalidStateError("readout from an empty dictionary")
    queries = np.atleast_2d(np.asarray(queries, dtype=DTYPES[state.config.dtype]))
    na = state.n_active
    logits = state.config.beta * (queries @ state.means_k[:na].T) + np.log(
        state.counts[:na].astype(np.float64)
    )
    m = np.max(logits, axis=1, keepdims=True)
    w = np.exp(logits - m)
    w /= np.sum(w, axis=1, keepdims=True)
    return w @ state.means_v[:na]


def ovq_forward_sequence(
    config: OvqConfig, seq: HeadSequence
) -> tuple[AttentionOutput, OvqState, list[tuple[int, int]]]:
    """Stream a whole sequence chunk by chunk.

    Returns the concatenated outputs, the final state, and a trace of
    (tokens seen, live state scalars) at every chunk boundary.
    """
    if config.ablation == "linear_growth" and config.planned_chunks is None:
        config = replace(config, planned_chunks=math.ceil(seq.T / config.chunk_len))
    state = OvqState.fresh(config, seq.d)
    outputs = []
    trace: list[tuple[int, int]] = []
    for start in range(0, seq.T, config.chunk_len):
        stop = min(start + config.chunk_len, seq.T)
        out, _ = ovq_forward_chunk(
            state, seq.q[start:stop], seq.k[start:stop], seq.v[start:stop]
        )
        outputs.append(out)
        trace.append((state.tokens_seen, state.scalars_stored()))
    return AttentionOutput(np.concatenate(outputs, axis=0)), state, trace
