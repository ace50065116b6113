"""Alternating two-network training loop.

One outer iteration: hold the density net fixed and run Adam steps on the
displacement net's potential energy; collect density/sensitivity batches at
equilibrium; filter; build volume-feasible density targets with the OC
update; fit the density net to the targets with one Adam step per batch
(moving mean squared error). A solution-space mode conditions both networks
on an extra parameter coordinate and trains across its range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import density as density_mod
from . import elasticity, networks
from .autodiff import Tape, backward
from .density import DensityField, Material, hole_mask, sensitivity, simp_modulus, squash
from .elasticity import PointLoad, build_energy_terms
from .filtering import FilterSpec, default_radius, filter_sensitivities
from .networks import (
    FourierFeature,
    MlpArchitecture,
    NetworkParams,
    Relu,
    Siren,
    init_density_head,
    init_network,
    make_param_leaves,
)
from .oc import OcParams, oc_targets, volume_estimate
from .problems import ProblemSpec
from .sampling import SampleBatch, batch_seed, sample_parameters, stratified_batch

# seed stream ids
_SIM, _COLLECT, _WORK, _QDRAW, _SHUFFLE = 11, 13, 17, 19, 23


@dataclass(frozen=True)
class SolutionSpaceSpec:
    kind: str  # "volume_range" | "force_location"
    lo: float
    hi: float
    q_count: int = 25
    density_hidden: int = 128  # keeps full-grid inference interactive on one core
    batches_per_q: int = 2
    segment_start: tuple[float, ...] | None = None  # force_location only
    segment_end: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError(f"empty parameter range [{self.lo}, {self.hi}]")
        if self.kind == "volume_range" and not (0.0 < self.lo < self.hi < 1.0):
            raise ValueError("volume range must satisfy 0 < lo < hi < 1")
        if self.kind == "force_location" and (self.segment_start is None or self.segment_end is None):
            raise ValueError("force_location needs a segment")
        if self.kind not in ("volume_range", "force_location"):
            raise ValueError(f"unknown solution-space kind {self.kind!r}")

    def target_volume(self, q: float, problem: ProblemSpec) -> float:
        return float(q) if self.kind == "volume_range" else problem.target_volume

    def loads_for(self, q: float, problem: ProblemSpec):
        if self.kind != "force_location":
            return problem.loads
        t = float(q)
        s, e = np.asarray(self.segment_start), np.asarray(self.segment_end)
        loc = tuple(s + t * (e - s))
        base = problem.loads[0]
        return (PointLoad(loc, base.force),) + tuple(problem.loads[1:])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    sim_learning_rate: float = 1e-3
    outer_iterations: int | None = None  # default 200 in 2D, 100 in 3D
    sim_steps: int = 20
    warmup_steps: int = 1000
    density_batches: int = 50
    seed: int = 0
    activation: str = "siren"  # siren | relu | fourier
    omega0: float = 60.0
    # lower first-layer frequency for the displacement net: at 60 the
    # equilibrium solve gets stuck in poor minima on some seeds
    sim_omega0: float = 30.0
    hidden_dim: int | None = None  # default 60 in 2D, 180 in 3D
    filter_radius: float | None = None  # default 2.5 x cell diagonal
    filter_epsilon: float = 1e-3
    ablation: str = "none"  # none | no_filter | naive_gradient
    oc: OcParams = field(default_factory=OcParams)
    volume_penalty: float = 100.0  # naive-gradient baseline only

    def __post_init__(self):
        if self.learning_rate <= 0 or self.sim_learning_rate <= 0:
            raise ValueError(f"bad training configuration {self}")
        if self.sim_steps <= 0 or self.density_batches <= 0:
            raise ValueError(f"bad training configuration {self}")
        if self.ablation not in ("none", "no_filter", "naive_gradient"):
            raise ValueError(f"unknown ablation mode {self.ablation!r}")
        if self.activation not in ("siren", "relu", "fourier"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def resolved_outer_iterations(self, dim: int) -> int:
        if self.outer_iterations is not None:
            return self.outer_iterations
        return 200 if dim == 2 else 100


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, tensors) -> "AdamState":
        return cls([np.zeros_like(t) for t in tensors], [np.zeros_like(t) for t in tensors])

    def copy(self) -> "AdamState":
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v],
                         self.step, self.beta1, self.beta2, self.eps)


def adam_step(tensors, grads, state: AdamState, lr: float):
    """Standard bias-corrected Adam update, in place on the tensors."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for t, g, m, v in zip(tensors, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in Adam step")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return tensors


@dataclass
class TrainResult:
    problem: ProblemSpec
    config: TrainConfig
    disp_net: NetworkParams
    dens_net: NetworkParams
    history: list[dict]
    space: SolutionSpaceSpec | None = None

    def density_field(self) -> DensityField:
        q_range = None if self.space is None else (self.space.lo, self.space.hi)
        return DensityField(self.dens_net, self.problem.domain,
                            holes=self.problem.domain.excluded, q_range=q_range)


def make_networks(problem: ProblemSpec, config: TrainConfig,
                  space: SolutionSpaceSpec | None = None):
    dim = problem.dim
    hidden = config.hidden_dim or (60 if dim == 2 else 180)
    q_dim = 1 if space is not None else 0
    if config.activation == "siren":
        act = Siren(config.omega0)
        sim_act = Siren(config.sim_omega0)
    elif config.activation == "relu":
        act = sim_act = Relu()
    else:
        act = sim_act = FourierFeature()
    disp_arch = MlpArchitecture(dim + q_dim, hidden, dim, activation=sim_act)
    dens_hidden = space.density_hidden if space is not None else hidden
    dens_arch = MlpArchitecture(dim + q_dim, dens_hidden, 1, activation=act)
    disp_net = init_network(disp_arch, config.seed * 2 + 1)
    dens_net = init_network(dens_arch, config.seed * 2 + 2)
    head_volume = problem.target_volume
    if space is not None and space.kind == "volume_range":
        head_volume = 0.5 * (space.lo + space.hi)
    dens_net = init_density_head(dens_net, head_volume)
    return disp_net, dens_net


# -- simulation (displacement solve) ---------------------------------------


class _Sim:
    """Displacement-solve state shared by warm start and inner loops."""

    def __init__(self, problem, config, disp_net, space=None):
        self.problem = problem
        self.config = config
        self.disp_net = disp_net
        self.space = space
        self.adam = AdamState.for_params(disp_net.parameter_tensors())
        self.counter = 0
        self.lr_scale = 1.0
        self.loss_trace: list[float] = []
        # With zero prescribed displacements the energy is quadratic in a
        # global output amplitude, so each step can rescale the output layer
        # to the exact 1-d minimizer. Adam alone would take ~|u|/lr steps to
        # grow O(1) network outputs to the physical displacement scale.
        self._calibrate = not np.any(problem.bcs.prescribed(problem.domain.dim))

    def q_input(self, q_phys: float, n: int) -> np.ndarray:
        lo, hi = self.space.lo, self.space.hi
        qn = 2.0 * (q_phys - lo) / (hi - lo) - 1.0
        return np.full((n, 1), qn)

    def step(self, dens_field: DensityField, qs: np.ndarray | None = None) -> float:
        problem, config = self.problem, self.config
        batch = stratified_batch(problem.domain, problem.grid_dims,
                                 batch_seed(config.seed, _SIM, self.counter))
        tape = Tape()
        leaves = make_param_leaves(tape, self.disp_net)
        if qs is None:
            rho = dens_field(batch.positions)
            young = simp_modulus(rho, problem.material)
            internal, work = build_energy_terms(
                tape, self.disp_net, leaves, batch, young,
                problem.loads, problem.material, problem.bcs, problem.domain,
                work_seed=batch_seed(config.seed, _WORK, self.counter)[0])
        else:
            internal = work = None
            for qi, q_phys in enumerate(qs):
                qcol = self.q_input(q_phys, batch.n)
                rho = dens_field(batch.positions, q=np.full(batch.n, q_phys))
                young = simp_modulus(rho, problem.material)
                loads = self.space.loads_for(q_phys, problem)
                iq, wq = build_energy_terms(
                    tape, self.disp_net, leaves, batch, young,
                    loads, problem.material, problem.bcs, problem.domain, q=qcol,
                    work_seed=config.seed + 7919 * self.counter + qi)
                internal = iq if internal is None else tape.add(internal, iq)
                work = wq if work is None else tape.add(work, wq)
            internal = tape.scale(internal, 1.0 / len(qs))
            work = tape.scale(work, 1.0 / len(qs))
        amp = 1.0
        if self._calibrate and internal.value > 0.0:
            a = float(work.value) / (2.0 * float(internal.value))
            if np.isfinite(a) and a != 0.0:
                amp = a
        loss = tape.sub(tape.scale(internal, amp * amp), tape.scale(work, amp))
        if not np.isfinite(loss.value):
            raise FloatingPointError("non-finite simulation loss")
        backward(loss, tape)
        grads = [l.grad if l.grad is not None else np.zeros(l.shape) for l in leaves]
        adam_step(self.disp_net.parameter_tensors(), grads, self.adam,
                  config.sim_learning_rate * self.lr_scale)
        if amp != 1.0:
            self.disp_net.weights[-1] *= amp
            self.disp_net.biases[-1] *= amp
        val = float(loss.value)
        self.loss_trace.append(val)
        self.counter += 1
        return val

    def run(self, steps: int, dens_field: DensityField, qs=None, divergence_guard=False):
        start = None
        for _ in range(steps):
            val = self.step(dens_field, qs=qs)
            if start is None:
                start = abs(val) + 1e-12
            elif divergence_guard and val > 10.0 * start and val > 0:
                raise RuntimeError(f"simulation diverged: loss {val} vs initial {start}")


def solve_equilibrium(problem: ProblemSpec, config: TrainConfig, disp_net: NetworkParams,
                      dens_field: DensityField, steps: int) -> tuple[NetworkParams, list[float]]:
    """Standalone forward solve: `steps` Adam steps on the potential energy.

    Uses cosine learning-rate decay to a tenth of the base rate, which damps
    the Monte Carlo noise floor near equilibrium."""
    sim = _Sim(problem, config, disp_net, None)
    for k in range(steps):
        sim.lr_scale = 0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * k / steps))
        sim.step(dens_field)
    return sim.disp_net, sim.loss_trace


# -- density batch collection ----------------------------------------------


def collect_density_batches(problem: ProblemSpec, config: TrainConfig, disp_net, dens_field,
                            n_batches: int, counter_base: int,
                            q_phys: float | None = None, space=None) -> list[SampleBatch]:
    """Fresh stratified batches with density and sensitivity columns, plus a
    per-batch compliance estimate stashed in batch.extra."""
    material = problem.material
    out = []
    for b in range(n_batches):
        batch = stratified_batch(problem.domain, problem.grid_dims,
                                 batch_seed(config.seed, _COLLECT, counter_base + b))
        if q_phys is None:
            rho = dens_field(batch.positions)
            _, grad_u = elasticity.displacement(batch.positions, disp_net, problem.bcs,
                                                problem.domain)
        else:
            qcol = np.full(batch.n, q_phys)
            rho = dens_field(batch.positions, q=qcol)
            lo, hi = space.lo, space.hi
            qn = np.full((batch.n, 1), 2.0 * (q_phys - lo) / (hi - lo) - 1.0)
            _, grad_u = elasticity.displacement(batch.positions, disp_net, problem.bcs,
                                                problem.domain, q=qn)
        ehat = elasticity.unit_compliance_from_grad(grad_u, material.poisson)
        batch.density = rho
        batch.sensitivity = sensitivity(rho, ehat, material)
        batch.hole_mask = hole_mask(batch.positions, problem.domain.excluded)
        young = simp_modulus(rho, material)
        batch.extra["compliance"] = float(batch.weight * np.sum(young * ehat))
        if q_phys is not None:
            batch.extra["q"] = float(q_phys)
        out.append(batch)
    return out


def apply_filter(batches, problem, config) -> None:
    """Fill the filtered column (identity in the no_filter ablation)."""
    if config.ablation == "no_filter":
        for b in batches:
            b.filtered = b.sensitivity.copy()
        return
    radius = config.filter_radius or default_radius(problem.domain, problem.grid_dims)
    spec = FilterSpec(radius, config.filter_epsilon)
    for b in batches:
        b.filtered = filter_sensitivities(b, spec, problem.domain)


def compute_targets(batches, target_volume, oc_params) -> float:
    """Pooled OC targets across batches; writes the target column, returns
    the multiplier."""
    rho = [b.density for b in batches]
    s_f = [b.filtered for b in batches]
    frozen = [b.hole_mask for b in batches]
    pooled, lam = oc_targets(rho, s_f, target_volume, oc_params, frozen_mask=frozen)
    i = 0
    for b in batches:
        b.target = pooled[i:i + b.n]
        i += b.n
    return lam


# -- density fitting --------------------------------------------------------


def _density_tape(dens_net, domain, positions, qn=None):
    tape = Tape()
    leaves = make_param_leaves(tape, dens_net)
    xn = domain.normalize(positions)
    inputs = xn if qn is None else np.concatenate([xn, qn], axis=1)
    raw = networks.build_forward(tape, dens_net, leaves, inputs)
    rho = tape.sigmoid(tape.scale(tape.take_col(raw, 0), density_mod.SIGMOID_SCALE))
    return tape, leaves, rho


def mmse_fit(dens_net: NetworkParams, domain, batches, adam: AdamState, lr: float,
             q_of=None) -> list[float]:
    """One Adam step per batch on the batch's squared error to its targets;
    each batch is consumed exactly once. Hole samples are excluded from the
    fit (their density is overridden anyway). Returns per-batch losses."""
    losses = []
    for b in batches:
        keep = ~b.hole_mask if b.hole_mask is not None else np.ones(b.n, dtype=bool)
        positions = b.positions[keep]
        target = b.target[keep]
        qn = None if q_of is None else q_of(b, keep)
        tape, leaves, rho = _density_tape(dens_net, domain, positions, qn)
        err = tape.sub(rho, tape.constant(target))
        loss = tape.mean(tape.power(err, 2.0))
        backward(loss, tape)
        grads = [l.grad if l.grad is not None else np.zeros(l.shape) for l in leaves]
        adam_step(dens_net.parameter_tensors(), grads, adam, lr)
        losses.append(float(loss.value))
    return losses


def _pooled_mse(dens_field: DensityField, batches, space=None) -> float:
    num, count = 0.0, 0
    for b in batches:
        keep = ~b.hole_mask if b.hole_mask is not None else np.ones(b.n, dtype=bool)
        if space is None:
            rho = dens_field(b.positions[keep])
        else:
            rho = dens_field(b.positions[keep], q=np.full(keep.sum(), b.extra["q"]))
        num += float(np.sum((rho - b.target[keep]) ** 2))
        count += int(keep.sum())
    return num / max(count, 1)


# -- main loops --------------------------------------------------------------


def optimize(problem: ProblemSpec, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Single-problem topology optimization (the default training loop)."""
    if config.ablation == "naive_gradient":
        return naive_baseline(problem, config)
    disp_net, dens_net = make_networks(problem, config)
    dens_field = DensityField(dens_net, problem.domain, holes=problem.domain.excluded)
    sim = _Sim(problem, config, disp_net)
    dens_adam = AdamState.for_params(dens_net.parameter_tensors())
    history: list[dict] = []

    sim.run(config.warmup_steps, dens_field)
    n_opt = config.resolved_outer_iterations(problem.dim)
    for it in range(n_opt):
        sim.run(config.sim_steps, dens_field, divergence_guard=False)
        batches = collect_density_batches(problem, config, disp_net, dens_field,
                                          config.density_batches,
                                          counter_base=it * config.density_batches)
        apply_filter(batches, problem, config)
        lam = compute_targets(batches, problem.target_volume, config.oc)
        mse_before = _pooled_mse(dens_field, batches)
        mmse_losses = mmse_fit(dens_net, problem.domain, batches, dens_adam, config.learning_rate)
        mse_after = _pooled_mse(dens_field, batches)
        record = {
            "iteration": it,
            "sim_loss": sim.loss_trace[-1],
            "compliance": float(np.mean([b.extra["compliance"] for b in batches])),
            "volume": volume_estimate([b.density for b in batches]),
            "oc_lambda": lam,
            "mmse_first": mmse_losses[0],
            "mmse_last": mmse_losses[-1],
            "mse_before": mse_before,
            "mse_after": mse_after,
        }
        history.append(record)
    return TrainResult(problem, config, disp_net, dens_net, history)


def naive_baseline(problem: ProblemSpec, config: TrainConfig) -> TrainResult:
    """Ablation: push the density-space gradient straight through the
    density network with a soft volume penalty, one update per iteration
    (no filtering, no OC, no MMSE)."""
    config = replace(config, ablation="naive_gradient")
    disp_net, dens_net = make_networks(problem, config)
    dens_field = DensityField(dens_net, problem.domain, holes=problem.domain.excluded)
    sim = _Sim(problem, config, disp_net)
    dens_adam = AdamState.for_params(dens_net.parameter_tensors())
    history: list[dict] = []

    sim.run(config.warmup_steps, dens_field)
    n_opt = config.resolved_outer_iterations(problem.dim)
    for it in range(n_opt):
        sim.run(config.sim_steps, dens_field)
        (batch,) = collect_density_batches(problem, config, disp_net, dens_field, 1,
                                           counter_base=it)
        keep = ~batch.hole_mask
        tape, leaves, rho = _density_tape(dens_net, problem.domain, batch.positions[keep])
        # d L_comp / d theta = (w * s) . (d rho / d theta), plus volume penalty
        graded = tape.sum(tape.mul(tape.constant(batch.weight * batch.sensitivity[keep]), rho))
        vol_gap = tape.sub(tape.mean(rho), tape.constant(np.asarray(problem.target_volume)))
        loss = tape.add(graded, tape.scale(tape.power(vol_gap, 2.0), config.volume_penalty))
        rho_before = rho.value.copy()
        backward(loss, tape)
        grads = [l.grad if l.grad is not None else np.zeros(l.shape) for l in leaves]
        adam_step(dens_net.parameter_tensors(), grads, dens_adam, config.learning_rate)
        rho_after = dens_field(batch.positions[keep])
        delta = rho_after - rho_before
        want = -batch.sensitivity[keep]
        denom = np.linalg.norm(delta) * np.linalg.norm(want)
        cos = float(delta @ want / denom) if denom > 0 else 0.0
        history.append({
            "iteration": it,
            "sim_loss": sim.loss_trace[-1],
            "compliance": batch.extra["compliance"],
            "volume": float(batch.density.mean()),
            "update_alignment": cos,
        })
    return TrainResult(problem, config, disp_net, dens_net, history)


def train_solution_space(problem: ProblemSpec, space: SolutionSpaceSpec,
                         config: TrainConfig = TrainConfig()) -> TrainResult:
    """Self-supervised solution-space training: both networks take the
    parameter q as an extra (normalized) input; per-q OC targets keep each
    sampled constraint feasible; the density fit shuffles the pooled
    (batch, q) pairs."""
    disp_net, dens_net = make_networks(problem, config, space)
    q_range = (space.lo, space.hi)
    dens_field = DensityField(dens_net, problem.domain,
                              holes=problem.domain.excluded, q_range=q_range)
    sim = _Sim(problem, config, disp_net, space)
    dens_adam = AdamState.for_params(dens_net.parameter_tensors())
    rng = np.random.default_rng(batch_seed(config.seed, _SHUFFLE, 0))
    history: list[dict] = []

    warm_qs = sample_parameters(space.lo, space.hi, space.q_count,
                                batch_seed(config.seed, _QDRAW, 0))
    sim.run(config.warmup_steps, dens_field, qs=warm_qs)
    n_opt = config.resolved_outer_iterations(problem.dim)
    n_bq = max(1, space.batches_per_q)
    for it in range(n_opt):
        qs = sample_parameters(space.lo, space.hi, space.q_count,
                               batch_seed(config.seed, _QDRAW, it + 1))
        sim.run(config.sim_steps, dens_field, qs=qs)
        all_batches = []
        lam_per_q = []
        for qi, q_phys in enumerate(qs):
            batches = collect_density_batches(
                problem, config, disp_net, dens_field, n_bq,
                counter_base=(it * space.q_count + qi) * n_bq,
                q_phys=q_phys, space=space)
            apply_filter(batches, problem, config)
            lam = compute_targets(batches, space.target_volume(q_phys, problem), config.oc)
            lam_per_q.append(lam)
            all_batches.extend(batches)
        order = rng.permutation(len(all_batches))
        shuffled = [all_batches[i] for i in order]

        def q_of(batch, keep):
            lo, hi = space.lo, space.hi
            qn = 2.0 * (batch.extra["q"] - lo) / (hi - lo) - 1.0
            return np.full((int(keep.sum()), 1), qn)

        mse_before = _pooled_mse(dens_field, shuffled, space=space)
        mmse_fit(dens_net, problem.domain, shuffled, dens_adam, config.learning_rate, q_of=q_of)
        mse_after = _pooled_mse(dens_field, shuffled, space=space)
        history.append({
            "iteration": it,
            "sim_loss": sim.loss_trace[-1],
            "compliance": float(np.mean([b.extra["compliance"] for b in all_batches])),
            "volume": volume_estimate([b.density for b in all_batches]),
            "oc_lambda": float(np.nanmean(lam_per_q)),
            "mse_before": mse_before,
            "mse_after": mse_after,
        })
    return TrainResult(problem, config, disp_net, dens_net, history, space=space)
