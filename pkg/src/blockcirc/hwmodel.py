"""Analytic performance/power model of a radix-2 FFT compute engine.

The engine is parameterized by p_par butterfly units per level and a
pipeline depth of d levels per stage group. A size-k FFT runs its log2(k)
levels in groups of d; each group streams its per-level butterflies through
the pipeline at up to p_par per cycle, reading operands when entering the
group and writing results when leaving it, so deeper pipelines trade
control complexity for fewer memory trips. Real-input transforms skip the
conjugate-symmetric half of the work; the credit is taken from the FFT
engine's measured multiply ratios rather than assumed.

Throughput is accounted in dense-equivalent operations (the work an
uncompressed model would do), so compressed and uncompressed designs
compare on the same unit.

The shipped constants are calibration values chosen to land the documented
low-frequency FPGA behavior; they are not measurements of any silicon.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass

from . import layers as ly
from .errors import InfeasibleConfig, InvalidSize, InvalidValue
from .fftcore import real_mult_ratio
from .training import Network

ACCESSES_PER_BUTTERFLY = 4   # two operand reads entering a group, two writes leaving
ACCESSES_PER_SPECMUL = 6     # two complex reads plus one complex write


@dataclass(frozen=True)
class HwConfig:
    p_par: int
    d: int
    clock_hz: float = 200e6
    pipelining: str = "inter-level"

    def __post_init__(self):
        if self.p_par < 1 or self.d < 1:
            raise InvalidValue("p_par and d must be >= 1")
        if self.clock_hz <= 0:
            raise InvalidValue("clock must be positive")
        if self.pipelining not in ("inter-level", "intra-level"):
            raise InvalidValue(f"unknown pipelining mode {self.pipelining!r}")


@dataclass(frozen=True)
class CostParams:
    static_power_w: float
    energy_per_butterfly_j: float
    mem_access_energy_j: float
    mem_bandwidth_limit: float       # word accesses per cycle
    resource_limit: int              # max p_par * d butterfly units

    def __post_init__(self):
        if min(self.static_power_w, self.mem_access_energy_j) < 0:
            raise InvalidValue("energies and static power must be >= 0")
        if self.energy_per_butterfly_j <= 0:
            raise InvalidValue("butterfly energy must be positive")
        if self.mem_bandwidth_limit <= 0 or self.resource_limit <= 0:
            raise InvalidValue("bandwidth and resource limits must be positive")


@dataclass(frozen=True)
class FftWork:
    """count transforms of one size; real_data enables the symmetry credit."""

    size: int
    count: int
    real_data: bool = True
    inverse: bool = False


@dataclass(frozen=True)
class Workload:
    ffts: tuple
    specmul_ops: int = 0          # complex multiplies on the peripheral block
    dense_equiv_ops: int = 0      # per-inference dense-model operations


@dataclass
class CostReport:
    cycles: int
    throughput_gops: float
    power_w: float
    efficiency_gops_per_w: float
    butterflies: int
    mem_accesses: int
    feasible: bool = True
    fallback_used: bool = False


@dataclass(frozen=True)
class MetricSpec:
    kind: str = "efficiency"      # efficiency | perf-capped | weighted
    power_budget_w: float | None = None
    alpha: float = 1.0
    beta: float = 1.0


def _effective_butterflies_per_level(item: FftWork) -> int:
    if item.size < 2 or item.size & (item.size - 1):
        raise InvalidSize(f"workload FFT size {item.size} is not a power of two >= 2")
    full = item.size // 2
    if not item.real_data:
        return full
    ratio = real_mult_ratio(item.size, inverse=item.inverse)
    return max(1, math.ceil(ratio * full))


def workload_of(net: Network) -> Workload:
    """FFT/multiply stream of one inference.

    Weight spectra are precomputed, so per block pair the engine runs one
    input transform and one bin-wise multiply, plus one inverse transform
    per output block; convolution layers are counted through their
    patch-matrix reformulation."""
    ffts = []
    specmuls = 0
    dense = 0
    shape = tuple(net.input_shape)
    for s in net.stages:
        if isinstance(s, ly.FcLayer):
            W = s.W
            if W.k >= 2 and not (W.k & (W.k - 1)):
                ffts.append(FftWork(W.k, W.p * W.q, real_data=True))
                ffts.append(FftWork(W.k, W.p, real_data=True, inverse=True))
                specmuls += W.p * W.q * (W.k // 2 + 1)
            dense += 2 * W.rows * W.cols
            shape = (W.rows,)
        elif isinstance(s, ly.ConvLayer):
            wo, ho = shape[0] - s.r + 1, shape[1] - s.r + 1
            S = wo * ho
            k = s.k
            if k >= 2 and not (k & (k - 1)):
                pf = s.r * s.r * s.in_channels // k
                qf = s.out_channels // k
                ffts.append(FftWork(k, S * pf * qf, real_data=True))
                ffts.append(FftWork(k, S * qf, real_data=True, inverse=True))
                specmuls += S * pf * qf * (k // 2 + 1)
            dense += 2 * S * s.r * s.r * s.in_channels * s.out_channels
            shape = (wo, ho, s.out_channels)
        elif isinstance(s, ly.MaxPool):
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(s, ly.Flatten):
            shape = (int(math.prod(shape)),)
    return Workload(ffts=tuple(ffts), specmul_ops=specmuls, dense_equiv_ops=dense)


def _evaluate(cfg: HwConfig, params: CostParams, wl: Workload) -> CostReport:
    if cfg.p_par * cfg.d > params.resource_limit:
        raise InfeasibleConfig(
            f"p*d = {cfg.p_par * cfg.d} exceeds resource limit {params.resource_limit}")
    cycles = 0
    butterflies = 0
    accesses = 0
    for item in wl.ffts:
        levels = int(math.log2(item.size))
        b = _effective_butterflies_per_level(item)
        d_eff = min(cfg.d, levels)
        groups = math.ceil(levels / d_eff)
        compute = math.ceil(b / cfg.p_par)
        memory = math.ceil(ACCESSES_PER_BUTTERFLY * b / params.mem_bandwidth_limit)
        fill = d_eff if cfg.pipelining == "inter-level" else 2 * d_eff
        cycles += item.count * (groups * max(compute, memory) + fill)
        butterflies += item.count * b * levels
        accesses += item.count * ACCESSES_PER_BUTTERFLY * b * groups
    accesses += ACCESSES_PER_SPECMUL * wl.specmul_ops
    if cycles == 0:
        return CostReport(cycles=0, throughput_gops=0.0,
                          power_w=params.static_power_w,
                          efficiency_gops_per_w=0.0,
                          butterflies=0, mem_accesses=accesses)
    seconds = cycles / cfg.clock_hz
    gops = wl.dense_equiv_ops / seconds / 1e9
    power = (params.static_power_w
             + params.energy_per_butterfly_j * butterflies / seconds
             + params.mem_access_energy_j * accesses / seconds)
    return CostReport(cycles=cycles, throughput_gops=gops, power_w=power,
                      efficiency_gops_per_w=gops / power,
                      butterflies=butterflies, mem_accesses=accesses)


def estimate_perf(cfg: HwConfig, params: CostParams, wl: Workload) -> CostReport:
    """Cycle count and equivalent-GOPS throughput (power fields included)."""
    return _evaluate(cfg, params, wl)


def estimate_power(cfg: HwConfig, params: CostParams, wl: Workload) -> float:
    """Static plus butterfly-rate and memory-rate dynamic power, in watts."""
    return _evaluate(cfg, params, wl).power_w


def metric(perf: float, power: float, mode: MetricSpec | str = "efficiency") -> float:
    """Scalar figure of merit; -inf marks configurations over a power cap."""
    if isinstance(mode, str):
        mode = MetricSpec(kind=mode)
    if power <= 0:
        raise InvalidValue("power must be positive")
    if mode.kind == "efficiency":
        return perf / power
    if mode.kind == "perf-capped":
        if mode.power_budget_w is None:
            raise InvalidValue("perf-capped metric needs a power budget")
        return perf if power <= mode.power_budget_w else float("-inf")
    if mode.kind == "weighted":
        return perf**mode.alpha / power**mode.beta
    raise InvalidValue(f"unknown metric kind {mode.kind!r}")


def _score(cfg: HwConfig, params: CostParams, wl: Workload, mode) -> tuple:
    try:
        rep = _evaluate(cfg, params, wl)
    except InfeasibleConfig:
        return (float("-inf"), 0, 0, 0)
    if callable(mode):
        val = mode(cfg, rep)
    else:
        val = metric(rep.throughput_gops, rep.power_w, mode)
    # higher metric wins; ties prefer fewer resources, then smaller p, d
    return (val, -cfg.p_par * cfg.d, -cfg.p_par, -cfg.d)


def _plateau_bound(wl: Workload, params: CostParams) -> int:
    """Smallest p beyond which no group can finish earlier: every FFT is
    memory-bound or single-pass, so cycles, energy and metric are all flat."""
    bound = 1
    for item in wl.ffts:
        b = _effective_butterflies_per_level(item)
        memory = math.ceil(ACCESSES_PER_BUTTERFLY * b / params.mem_bandwidth_limit)
        bound = max(bound, math.ceil(b / memory))
    return bound


def _ternary_max(f, lo: int, hi: int) -> int:
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if f(m1) < f(m2):
            lo = m1 + 1
        else:
            hi = m2
    return max(range(lo, hi + 1), key=f)


def optimize_design(params: CostParams, wl: Workload, p_range, d_range,
                    mode: MetricSpec | str = "efficiency",
                    clock_hz: float = 200e6,
                    pipelining: str = "inter-level"):
    """Pick (p, d) maximizing the metric: ternary search on p at the
    smallest depth, then on d at the chosen p.

    Ternary search assumes a unimodal metric, which ceiling effects can
    break, so the result is verified against an exhaustive scan of the
    (small) range; on disagreement the scan's argmax is returned and the
    report carries fallback_used=True. Ties always resolve toward fewer
    resources. Raises InfeasibleConfig when nothing in range is feasible.
    """
    p_lo, p_hi = int(p_range[0]), int(p_range[-1])
    d_lo, d_hi = int(d_range[0]), int(d_range[-1])
    if p_lo < 1 or d_lo < 1 or p_hi < p_lo or d_hi < d_lo:
        raise InvalidValue("ranges must be nonempty and start at >= 1")

    cache = {}

    def score_at(p: int, d: int) -> tuple:
        if (p, d) not in cache:
            cfg = HwConfig(p_par=p, d=d, clock_hz=clock_hz, pipelining=pipelining)
            cache[(p, d)] = _score(cfg, params, wl, mode)
        return cache[(p, d)]

    # upper bound for p: range, resources at the shallowest depth, and the
    # bandwidth plateau past which the metric cannot change
    p_ub = min(p_hi, max(p_lo, params.resource_limit // d_lo),
               max(p_lo, _plateau_bound(wl, params)))
    p_star = _ternary_max(lambda p: score_at(p, d_lo), p_lo, p_ub)
    d_star = _ternary_max(lambda d: score_at(p_star, d), d_lo, d_hi)
    ternary_pick = (p_star, d_star)

    grid_pick = max(((p, d) for p in range(p_lo, p_hi + 1)
                     for d in range(d_lo, d_hi + 1)),
                    key=lambda pd: score_at(*pd))
    if score_at(*grid_pick)[0] == float("-inf"):
        raise InfeasibleConfig("no feasible configuration in the search range")

    fallback = score_at(*ternary_pick) < score_at(*grid_pick)
    best = grid_pick if fallback else ternary_pick
    cfg = HwConfig(p_par=best[0], d=best[1], clock_hz=clock_hz, pipelining=pipelining)
    rep = _evaluate(cfg, params, wl)
    rep.fallback_used = fallback
    return cfg, rep


def design_sweep(params: CostParams, wl: Workload, p_range, d_range,
                 mode: MetricSpec | str = "efficiency",
                 clock_hz: float = 200e6) -> list:
    """Rows for the exploration CSV: one entry per (p, d) in range."""
    cfg_best, rep_best = optimize_design(params, wl, p_range, d_range, mode,
                                         clock_hz=clock_hz)
    rows = []
    for p in range(int(p_range[0]), int(p_range[-1]) + 1):
        for d in range(int(d_range[0]), int(d_range[-1]) + 1):
            try:
                rep = _evaluate(HwConfig(p_par=p, d=d, clock_hz=clock_hz), params, wl)
                rows.append({"p": p, "d": d, "cycles": rep.cycles,
                             "gops": rep.throughput_gops, "power_w": rep.power_w,
                             "gops_per_w": rep.efficiency_gops_per_w,
                             "feasible": True,
                             "fallback_used": rep_best.fallback_used})
            except InfeasibleConfig:
                rows.append({"p": p, "d": d, "cycles": 0, "gops": 0.0,
                             "power_w": 0.0, "gops_per_w": 0.0, "feasible": False,
                             "fallback_used": rep_best.fallback_used})
    return rows, cfg_best, rep_best


# ----------------------------------------------------------------- defaults


def load_cost_params(path=None):
    """CostParams plus clock from a json file; shipped calibration defaults
    when no path is given."""
    if path is None:
        text = importlib.resources.files("blockcirc").joinpath(
            "data/fpga_costs.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    raw = json.loads(text)
    params = CostParams(
        static_power_w=raw["static_power_w"],
        energy_per_butterfly_j=raw["energy_per_butterfly_j"],
        mem_access_energy_j=raw["mem_access_energy_j"],
        mem_bandwidth_limit=raw["mem_bandwidth_limit"],
        resource_limit=raw["resource_limit"],
    )
    return params, float(raw.get("clock_hz", 200e6))
