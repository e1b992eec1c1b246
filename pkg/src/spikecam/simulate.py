"""Spike stream generation via the integrate-and-fire pixel model.

Each pixel accumulates digital intensity every clock tick and fires a
spike whenever the accumulator reaches the full-well threshold of 255,
subtracting the threshold on firing.  Optional noise sources model the
photon arrival statistics (shot), thermal dark current, per-pixel
response nonuniformity, and the tick-grid quantization of discharge
times.

The per-tick recurrence is vectorized in fixed-size tick blocks via a
cumulative-sum threshold-crossing rule that is bit-identical to the
sequential loop whenever no single tick deposits more than one full
well.  For long static scenes with shot noise on and quantization off,
the stream is instead constructed directly from the photon arrival
process (one gamma variate per output spike rather than one Poisson
variate per tick); the construction samples the same distribution over
streams and is dramatically faster at calibration-scale lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationData, identity_calibration
from .noise import NoiseConfig, make_rng, split_rng
from .streams import SpikeStream, frame_bytes, validate_image

__all__ = ["SimulationRequest", "simulate", "simulate_ideal"]

# Ticks per vectorized batch, shrunk so a batch never exceeds ~4M pixels
# worth of temporaries regardless of sensor size.
_BLOCK_TICKS = 1024
_BLOCK_BUDGET = 4_000_000

# Discharge times are floored here after jitter so a very bright pixel
# cannot produce a nonpositive discharge time.
_MIN_DISCHARGE = 1e-9

# The arrival-process path scatters spikes into a dense (length, pixels)
# boolean volume; above this element count it falls back to in-place
# bit updates to bound memory.
_DENSE_LIMIT = 1_500_000_000


@dataclass(frozen=True)
class SimulationRequest:
    """Everything needed to generate one spike stream.

    source is either a single (height, width) intensity frame held for
    the whole stream, or a (frames, height, width) sequence providing
    one frame per tick (the sequence must cover at least `length`
    ticks).  theta scales the source intensity to move the scene across
    illumination regimes.
    """

    source: np.ndarray
    theta: float = 1.0
    length: int = 1
    calib: CalibrationData | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig.none)

    def __post_init__(self) -> None:
        src = np.asarray(self.source, dtype=np.float64)
        if src.ndim == 2:
            src = validate_image(src, "source").copy()
        elif src.ndim == 3:
            if not np.isfinite(src).all():
                raise ValueError("source sequence must be finite")
            if (src < 0).any():
                raise ValueError("source sequence must be nonnegative")
            src = src.copy()
        else:
            raise ValueError(
                f"source must be 2-d (h, w) or 3-d (frames, h, w), got shape {src.shape}"
            )
        src.setflags(write=False)
        object.__setattr__(self, "source", src)

        theta = float(self.theta)
        if not (np.isfinite(theta) and theta > 0):
            raise ValueError(f"theta must be finite and positive, got {self.theta!r}")
        object.__setattr__(self, "theta", theta)

        length = int(self.length)
        if length < 1:
            raise ValueError(f"length must be >= 1, got {self.length!r}")
        object.__setattr__(self, "length", length)

        if src.ndim == 3 and src.shape[0] < length:
            raise ValueError(
                f"source sequence has {src.shape[0]} frames but length is {length}"
            )
        if self.calib is not None:
            self.calib.require_shape(self.frame_shape)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.source.shape[-2:]

    @property
    def is_static(self) -> bool:
        return self.source.ndim == 2


def simulate(
    req: SimulationRequest, rng: np.random.Generator | None = None
) -> SpikeStream:
    """Generate the spike stream for a request.

    With rng omitted, a fresh generator is seeded from the request's
    noise config, so identical requests produce bit-identical streams.
    """
    calib = req.calib
    if calib is None:
        h, w = req.frame_shape
        calib = identity_calibration(w, h)
    cfg = req.noise
    if rng is None:
        rng = make_rng(cfg.rng_seed)

    use_arrivals = (
        req.is_static
        and cfg.enable_shot
        and not cfg.enable_quantization
        and (cfg.enable_dark or not calib.L_d.any())
    )
    if use_arrivals:
        bits = _simulate_arrivals(req, calib, rng)
    else:
        bits = _simulate_ticks(req, calib, rng)
    h, w = req.frame_shape
    return SpikeStream.from_packed(bits, width=w, height=h, clock=calib.clock)


def simulate_ideal(
    image: np.ndarray, theta: float = 1.0, length: int = 1
) -> SpikeStream:
    """Noise-free stream: every pixel fires with exact period 255/(theta*L)."""
    req = SimulationRequest(
        source=image, theta=theta, length=length, noise=NoiseConfig.none()
    )
    return simulate(req)


# ----------------------------------------------------------------------
# general per-tick path


def _effective_gain(
    calib: CalibrationData, cfg: NoiseConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Flat per-pixel (gain, counts-per-spike) under the active flags.

    With nonuniformity disabled the sensor is ideal: unit gain and a
    full well of 255 counts everywhere.
    """
    threshold = calib.clock.max_intensity
    if cfg.enable_nonuniformity:
        return calib.R.ravel(), calib.Q_r.ravel()
    n = calib.R.size
    return np.ones(n), np.full(n, threshold)


def _simulate_ticks(
    req: SimulationRequest, calib: CalibrationData, rng: np.random.Generator
) -> np.ndarray:
    rng_shot, rng_dark, rng_quant = split_rng(rng, 3)
    cfg = req.noise
    h, w = req.frame_shape
    n_pixels = h * w
    threshold = calib.clock.max_intensity
    length = req.length

    gain, quantum = _effective_gain(calib, cfg)
    dark_rate = calib.L_d.ravel()
    lift = cfg.enable_dark or cfg.enable_nonuniformity
    merge_poisson = cfg.enable_shot and cfg.enable_dark

    if req.is_static:
        static_signal = req.theta * req.source.ravel()
        if merge_poisson:
            static_rate = static_signal + dark_rate
    else:
        frames = req.source.reshape(req.source.shape[0], n_pixels)

    block = max(1, min(_BLOCK_TICKS, _BLOCK_BUDGET // max(1, n_pixels)))
    acc = np.zeros(n_pixels)
    out = np.empty((length, frame_bytes(w, h)), dtype=np.uint8)

    for start in range(0, length, block):
        stop = min(start + block, length)
        b = stop - start

        # Per-tick deposited intensity for the block, shape (b, pixels).
        if merge_poisson:
            if req.is_static:
                counts = rng_shot.poisson(np.broadcast_to(static_rate, (b, n_pixels)))
            else:
                counts = rng_shot.poisson(
                    req.theta * frames[start:stop] + dark_rate
                )
            deposit = gain * counts
        else:
            if cfg.enable_shot:
                if req.is_static:
                    signal = rng_shot.poisson(
                        np.broadcast_to(static_signal, (b, n_pixels))
                    ).astype(np.float64)
                else:
                    signal = rng_shot.poisson(req.theta * frames[start:stop]).astype(
                        np.float64
                    )
            else:
                if req.is_static:
                    signal = np.broadcast_to(static_signal, (b, n_pixels))
                else:
                    signal = req.theta * frames[start:stop]
            if lift:
                if cfg.enable_dark:
                    dark = rng_dark.poisson(np.broadcast_to(dark_rate, (b, n_pixels)))
                else:
                    dark = dark_rate
                deposit = gain * (signal + dark)
            else:
                deposit = np.asarray(signal, dtype=np.float64)

        if cfg.enable_quantization:
            with np.errstate(divide="ignore"):
                discharge = threshold / deposit
            discharge += rng_quant.uniform(-1.0, 1.0, size=(b, n_pixels))
            np.maximum(discharge, _MIN_DISCHARGE, out=discharge)
            deposit = threshold / discharge

        if acc.max() < threshold and deposit.max() <= threshold:
            # Cumulative threshold crossings reproduce the sequential
            # rule exactly when no tick overfills the well.
            csum = np.cumsum(deposit, axis=0)
            csum += acc
            wells = np.floor_divide(csum, threshold)
            fires = np.empty((b, n_pixels), dtype=bool)
            fires[0] = wells[0] > 0
            np.not_equal(wells[1:], wells[:-1], out=fires[1:])
            acc = csum[-1] - threshold * wells[-1]
            assert acc.min() >= 0 and acc.max() < threshold
        else:
            fires = np.empty((b, n_pixels), dtype=bool)
            for i in range(b):
                acc += deposit[i]
                fired = acc >= threshold
                fires[i] = fired
                acc[fired] -= threshold
            assert acc.min() >= 0

        out[start:stop] = np.packbits(fires, axis=1, bitorder="little")

    return out


# ----------------------------------------------------------------------
# arrival-process path


def _simulate_arrivals(
    req: SimulationRequest, calib: CalibrationData, rng: np.random.Generator
) -> np.ndarray:
    """Construct the stream from photon arrival times.

    Without quantization the deposited charge is linear in the photon
    counts, so pixel p fires its m-th spike at the tick where its
    cumulative count first reaches ceil(m * quantum_p).  Conditioned on
    the total count over the stream, the arrival times of those specific
    photons are order statistics of uniforms, sampled here through
    partial sums of exponential gaps (gamma variates).  One spike per
    tick is enforced by pushing colliding spikes to the next free tick,
    matching the sequential carry rule.
    """
    stream_rng = split_rng(rng, 3)[0]
    cfg = req.noise
    h, w = req.frame_shape
    n_pixels = h * w
    length = req.length

    _, quantum = _effective_gain(calib, cfg)
    rate = req.theta * req.source.ravel()
    if cfg.enable_dark:
        rate = rate + calib.L_d.ravel()

    totals = stream_rng.poisson(rate * float(length))
    spikes = np.minimum(
        np.floor(totals / np.maximum(quantum, _MIN_DISCHARGE)), length
    ).astype(np.int64)

    row_bytes = frame_bytes(w, h)
    use_dense = length * n_pixels <= _DENSE_LIMIT
    if use_dense:
        dense = np.zeros(length * n_pixels, dtype=bool)
        out = None
    else:
        out = np.zeros((length, row_bytes), dtype=np.uint8)

    # Pixels are processed in batches bounded by total spike count so
    # the flat per-spike temporaries stay small.
    batch_budget = 25_000_000
    prior = np.concatenate(([0], np.cumsum(spikes)[:-1]))
    boundaries = np.flatnonzero(np.diff(prior // batch_budget)) + 1
    starts = np.concatenate(([0], boundaries, [n_pixels]))

    for lo, hi in zip(starts[:-1], starts[1:]):
        m_counts = spikes[lo:hi]
        total_m = int(m_counts.sum())
        if total_m == 0:
            continue
        ends = np.cumsum(m_counts)
        seg_start = ends - m_counts
        seg_id = np.repeat(np.arange(hi - lo), m_counts)
        m_index = np.arange(1, total_m + 1) - np.repeat(seg_start, m_counts)

        q_rep = quantum[lo:hi][seg_id]
        j_here = np.ceil(m_index * q_rep)
        j_prev = np.empty_like(j_here)
        j_prev[0] = 0.0
        j_prev[1:] = j_here[:-1]
        j_prev[seg_start[m_counts > 0]] = 0.0
        gaps = stream_rng.standard_gamma(j_here - j_prev)

        # Within-pixel cumulative sums over the flat layout.  Indexing
        # with ends - 1 is safe for empty segments because the value is
        # discarded by the m_counts > 0 guard.
        csum = np.cumsum(gaps)
        offset = np.where(seg_start > 0, csum[seg_start - 1], 0.0)
        partial = csum - np.repeat(offset, m_counts)
        upto_last = np.where(m_counts > 0, csum[ends - 1], 0.0) - offset

        tail_shape = (
            np.maximum(totals[lo:hi] - np.ceil(m_counts * quantum[lo:hi]), 0.0) + 1.0
        )
        grand = upto_last + stream_rng.standard_gamma(tail_shape)

        positions = partial * (float(length) / np.repeat(grand, m_counts))
        # floor(pos) equals ceil(pos) - 1 for the almost-surely
        # non-integer positions in (0, length).
        ticks = positions.astype(np.int64)
        np.clip(ticks, 0, length - 1, out=ticks)

        # Segmented running max of (tick - spike_index) enforces the
        # one-spike-per-tick carry rule without a Python loop.
        m0 = m_index - 1
        span = length + int(m_counts.max()) + 2
        seg_off = np.repeat(np.arange(hi - lo, dtype=np.int64) * span, m_counts)
        shifted = (ticks - m0) + seg_off
        np.maximum.accumulate(shifted, out=shifted)
        ticks = shifted - seg_off
        ticks += m0
        keep = ticks < length
        final_ticks = ticks[keep]
        final_pix = (seg_id[keep] + lo).astype(np.int64)

        if use_dense:
            dense[final_ticks * n_pixels + final_pix] = True
        else:
            byte = final_pix >> 3
            mask = np.left_shift(1, final_pix & 7).astype(np.uint8)
            np.bitwise_or.at(out, (final_ticks, byte), mask)

    if use_dense:
        dense = dense.reshape(length, n_pixels)
        out = np.empty((length, row_bytes), dtype=np.uint8)
        step = max(1, _BLOCK_BUDGET // max(1, n_pixels))
        for s in range(0, length, step):
            out[s : s + step] = np.packbits(
                dense[s : s + step], axis=1, bitorder="little"
            )
    return out
