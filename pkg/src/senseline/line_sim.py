"""Transient simulation of the per-classifier sensing lines.

Each binary classifier owns one capacitive sensing line. A classification
cycle has two phases: precharge, which resets the line to vdd/2 with every
device gated off, and classify, which applies the feature-derived top-gate
biases so p-type devices pump charge in from VDD while n-type devices drain
it to ground. The line voltage integrates the signed feature-weight
products; a non-inverting buffer snaps the final voltage to a rail and that
is the classifier's vote.

Integration is explicit Euler on dv/dt = I_net(v) / c_line with the voltage
clamped to [0, vdd]. simulate_digit walks devices one by one (reference
path); simulate_batch evaluates many digits at once by exploiting that all
devices on a line share the same channel-voltage clamp factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import device as dev
from .quantizer import QuantSpec, level_to_vtg, quantize_features

PRECHARGE = "PRECHARGE"
CLASSIFY = "CLASSIFY"


@dataclass
class LineConfig:
    """One sensing line: its devices, capacitance, and cycle timing."""

    pair: tuple[int, int]
    devices: list[dev.DeviceInstance]
    c_line: float = 10e-15
    t_precharge: float = 2e-9
    t_classify: float = 2e-9
    dt: float = 10e-12

    def __post_init__(self):
        if self.c_line <= 0:
            raise ValueError("c_line must be positive")
        if self.dt <= 0 or self.t_classify / self.dt < 10:
            raise ValueError("t_classify must span at least 10 integration steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_classify / self.dt))


@dataclass
class SensingLineState:
    """Line voltage plus charge/energy bookkeeping during one cycle.

    trace_t/trace_v sample the classify phase, with t = 0 at the instant
    precharge releases the line at vdd/2.
    """

    v_sen: float
    phase: str
    q_delivered_vdd: float = 0.0
    t: float = 0.0
    trace_t: list[float] = field(default_factory=list)
    trace_v: list[float] = field(default_factory=list)


@dataclass
class LineResult:
    v_final: float
    vote: int
    energy: float
    q_delivered_vdd: float
    trace: np.ndarray | None = None  # (n, 2) columns t, v_sen


@dataclass
class ClassificationTrace:
    """Outcome of pushing one digit through all 45 lines."""

    votes: np.ndarray           # (45,) of +/-1, classifier order
    tally: np.ndarray           # (10,) votes per class, sums to 45
    predicted: int
    energy: float               # joules, MAC array + line precharge only
    line_finals: np.ndarray     # (45,) final line voltages
    line_traces: list[np.ndarray] | None = None


def precharge_energy(cfg: LineConfig, params: dev.DeviceParams) -> float:
    # Worst-case refill of the half-swing each cycle.
    return cfg.c_line * (params.vdd / 2) ** 2


def precharge(cfg: LineConfig, params: dev.DeviceParams = dev.DeviceParams()) -> SensingLineState:
    """Ideal instantaneous precharge: line at exactly vdd/2, devices off."""
    state = SensingLineState(v_sen=params.vdd / 2, phase=PRECHARGE)
    state.trace_t.append(0.0)
    state.trace_v.append(state.v_sen)
    return state


def step(state: SensingLineState, cfg: LineConfig, feature_levels: np.ndarray,
         quant: QuantSpec, params: dev.DeviceParams = dev.DeviceParams()) -> SensingLineState:
    """One explicit-Euler step of the classify phase (mutates state).

    P devices conduct rail-to-line, N devices line-to-ground, each gated by
    the top-gate voltage of its feature's quantized level.
    """
    if state.phase != CLASSIFY:
        raise ValueError(f"step requires phase {CLASSIFY}, line is in {state.phase}")
    v = state.v_sen
    i_in = 0.0
    i_out = 0.0
    for d in cfg.devices:
        v_tg = level_to_vtg(int(feature_levels[d.feature_index]), d.dtype, quant)
        if d.dtype == "P":
            i_in += dev.channel_current(v_tg, d.v_bg, params.vdd, v, params)
        else:
            i_out += dev.channel_current(v_tg, d.v_bg, v, 0.0, params)
    v_new = v + (cfg.dt / cfg.c_line) * (i_in - i_out)
    if not math.isfinite(v_new):
        raise FloatingPointError("line voltage became non-finite")
    state.v_sen = min(params.vdd, max(0.0, v_new))
    state.q_delivered_vdd += i_in * cfg.dt
    state.t += cfg.dt
    state.trace_t.append(state.t)
    state.trace_v.append(state.v_sen)
    return state


def buffer_decide(v_sen: float, vdd: float):
    """Ideal comparator at vdd/2; returns (+/-1 vote, rail voltage).

    Equality resolves to +1 (the decision boundary belongs to the positive
    class). Draws zero input current.
    """
    if not 0 <= v_sen <= vdd:
        raise ValueError(f"v_sen = {v_sen} outside [0, {vdd}]")
    return (1, vdd) if v_sen >= vdd / 2 else (-1, 0.0)


def classify_line(cfg: LineConfig, feature_levels: np.ndarray, quant: QuantSpec,
                  params: dev.DeviceParams = dev.DeviceParams(),
                  record_trace: bool = False) -> LineResult:
    """Run one full precharge + classify cycle on a single line."""
    state = precharge(cfg, params)
    state.phase = CLASSIFY
    for _ in range(cfg.n_steps):
        step(state, cfg, feature_levels, quant, params)
    vote, _ = buffer_decide(state.v_sen, params.vdd)
    energy = params.vdd * state.q_delivered_vdd + precharge_energy(cfg, params)
    trace = None
    if record_trace:
        trace = np.column_stack([state.trace_t, state.trace_v])
    return LineResult(state.v_sen, vote, energy, state.q_delivered_vdd, trace)


def tally_votes(pairs: list[tuple[int, int]], votes: np.ndarray):
    """votes (..., 45) of +/-1 -> (tallies (..., 10), predictions)."""
    votes = np.atleast_2d(votes)
    n = votes.shape[0]
    tallies = np.zeros((n, 10), dtype=int)
    for k, (a, b) in enumerate(pairs):
        winner = np.where(votes[:, k] > 0, a, b)
        tallies[np.arange(n), winner] += 1
    preds = np.argmax(tallies, axis=1)  # argmax takes the smallest digit on ties
    return tallies, preds


def simulate_digit(lines: list[LineConfig], quant: QuantSpec, params: dev.DeviceParams,
                   x: np.ndarray, record_traces: bool = False) -> ClassificationTrace:
    """Classify one normalized 64-feature input through every line.

    The input is quantized once; the 45 lines are evaluated independently
    and their energies summed. Deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (64,):
        raise ValueError(f"expected a (64,) feature vector, got shape {x.shape}")
    levels = quantize_features(x, quant)
    votes = np.zeros(len(lines), dtype=int)
    finals = np.zeros(len(lines))
    energy = 0.0
    traces = [] if record_traces else None
    for k, cfg in enumerate(lines):
        res = classify_line(cfg, levels, quant, params, record_trace=record_traces)
        votes[k] = res.vote
        finals[k] = res.v_final
        energy += res.energy
        if record_traces:
            traces.append(res.trace)
    tallies, preds = tally_votes([c.pair for c in lines], votes)
    return ClassificationTrace(votes=votes, tally=tallies[0], predicted=int(preds[0]),
                               energy=energy, line_finals=finals, line_traces=traces)


@dataclass
class BatchResult:
    votes: np.ndarray        # (n, 45)
    tallies: np.ndarray      # (n, 10)
    predictions: np.ndarray  # (n,)
    energies: np.ndarray     # (n,)
    line_finals: np.ndarray  # (n, 45)


def simulate_batch(lines: list[LineConfig], quant: QuantSpec, params: dev.DeviceParams,
                   X: np.ndarray) -> BatchResult:
    """Transient-evaluate a batch of normalized inputs over all lines.

    Exploits that every device on a line sees the same channel voltage, so
    each line reduces to a p-side and an n-side aggregate drive current per
    digit. Requires homogeneous timing and capacitance across lines (which
    is how systems are assembled); results match the per-device path.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    base = lines[0]
    for cfg in lines:
        if (cfg.c_line, cfg.t_classify, cfg.dt) != (base.c_line, base.t_classify, base.dt):
            raise ValueError("simulate_batch requires homogeneous line timing/capacitance")
    levels = quantize_features(X, quant)

    p_sum = np.zeros((n, len(lines)))
    n_sum = np.zeros((n, len(lines)))
    for k, cfg in enumerate(lines):
        for dtype, acc in (("P", p_sum), ("N", n_sum)):
            group = [d for d in cfg.devices if d.dtype == dtype]
            if not group:
                continue
            fidx = np.array([d.feature_index for d in group])
            g_bg = np.array([dev.gate_drive_bg(d.v_bg, dtype, params) for d in group])
            v_tg = level_to_vtg(levels[:, fidx], dtype, quant)
            g_tg = dev.gate_drive_tg(v_tg, dtype, params)
            acc[:, k] = params.i_on * (g_tg * g_bg).sum(axis=1)

    vdd = params.vdd
    v = np.full((n, len(lines)), vdd / 2)
    q = np.zeros((n, len(lines)))
    scale = base.dt / base.c_line
    for _ in range(base.n_steps):
        i_in = p_sum * np.clip((vdd - v) / params.v_dsat, -1.0, 1.0)
        i_out = n_sum * np.clip(v / params.v_dsat, -1.0, 1.0)
        q += i_in * base.dt
        v = np.clip(v + scale * (i_in - i_out), 0.0, vdd)

    votes = np.where(v >= vdd / 2, 1, -1)
    tallies, preds = tally_votes([c.pair for c in lines], votes)
    e_pre = sum(precharge_energy(cfg, params) for cfg in lines)
    energies = vdd * q.sum(axis=1) + e_pre
    return BatchResult(votes=votes, tallies=tallies, predictions=preds,
                       energies=energies, line_finals=v)
