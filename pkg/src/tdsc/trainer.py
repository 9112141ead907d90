"""Full-batch training loop, segmentation, and the ablation / noise-robustness sweeps."""

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import affinity as aff
from .baselines import LsrConfig, lsr_cluster
from .clustering import SpectralConfig, spectral_clustering
from .data import add_noise
from .errors import InvalidConfig, NonFiniteLoss
from .losses import LossWeights, commutator_diagnostic, total_loss, total_loss_grads
from .metrics import accuracy, nmi
from .model import Adam, NetworkDims, backward, forward, init_params, sgd_step

log = logging.getLogger(__name__)

TMA_GRAD_POLICIES = ("current_only", "none")


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 512
    output_dim: int = 64
    T: int = 500
    eta: float = 0.001
    lambda1: float = 0.2
    lambda2: float = 20.0
    eps: float = 0.01
    s: int = 2
    # None disables the temporal mask (every off-diagonal entry admissible)
    tau: int | None = 50
    alpha0: float = 0.9
    kappa: float = 1.0
    sinkhorn_iters: int = 10
    sinkhorn_tol: float = 1e-6
    k: int = 3
    seed: int = 0
    log_every: int = 25
    tma_enabled: bool = True
    tma_grad: str = "current_only"
    tma_init_normalized: bool = True
    eval_during_training: bool = True
    optimizer: str = "adam"
    kmeans_restarts: int = 10
    drop_rho: bool = False
    drop_se: bool = False
    drop_temporal: bool = False

    def validate(self):
        if self.T < 1:
            raise InvalidConfig("T must be >= 1")
        if self.eta < 0:
            raise InvalidConfig("eta must be >= 0")
        if self.hidden_dim < 1 or self.output_dim < 1:
            raise InvalidConfig("network dimensions must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.eps <= 0 or self.kappa <= 0:
            raise InvalidConfig("need lambda1, lambda2 >= 0 and eps, kappa > 0")
        if self.tau is not None and self.tau < 1:
            raise InvalidConfig("tau must be >= 1 (use none to disable masking)")
        if not 0 < self.alpha0 <= 1:
            raise InvalidConfig("alpha0 must lie in (0, 1]")
        if self.s < 0 or self.k < 1 or self.log_every < 1 or self.sinkhorn_iters < 1:
            raise InvalidConfig("s >= 0, k >= 1, log_every >= 1, sinkhorn_iters >= 1 required")
        if self.tma_grad not in TMA_GRAD_POLICIES:
            raise InvalidConfig(f"tma_grad must be one of {TMA_GRAD_POLICIES}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig("optimizer must be 'sgd' or 'adam'")
        if self.drop_rho and self.drop_se and self.drop_temporal:
            raise InvalidConfig("cannot drop every loss term")
        return self

    @property
    def weights(self):
        return LossWeights(
            lambda1=0.0 if self.drop_se else self.lambda1,
            lambda2=0.0 if self.drop_temporal else self.lambda2,
            eps=self.eps,
            use_rho=not self.drop_rho,
        )

    def dims(self, input_dim):
        return NetworkDims(input_dim, self.hidden_dim, self.output_dim)


@dataclass
class StepResult:
    loss: object
    grads: object
    c: np.ndarray
    alpha: float
    z: np.ndarray


class Objective:
    """One evaluation of the loss and its parameter gradient for a fixed sequence."""

    def __init__(self, cfg, x):
        self.cfg = cfg
        self.x = np.asarray(x, dtype=np.float64)
        n = self.x.shape[1]
        self.mask = aff.TemporalMask(n, cfg.tau).matrix()
        self.laplacian = aff.graph_laplacian(aff.temporal_weights(n, cfg.s))
        self.weights = cfg.weights

    def coefficients(self, y, return_trace=False):
        s = aff.similarity(y)
        k = aff.mask_and_lift(s, self.mask, self.cfg.kappa)
        c, trace = aff.sinkhorn_project(k, self.cfg.sinkhorn_iters, self.cfg.sinkhorn_tol,
                                        return_trace=True)
        return (c, k, trace) if return_trace else c

    def mixed_c_bar(self, c_bar_prev, c, alpha):
        c_bar = (1.0 - alpha) * c_bar_prev + alpha * c
        np.fill_diagonal(c_bar, 0.0)
        return c_bar

    def loss(self, params, c_bar_prev, alpha):
        fs = forward(params, self.x)
        c_bar = self.mixed_c_bar(c_bar_prev, self.coefficients(fs.y), alpha)
        return total_loss(fs.z, c_bar, self.laplacian, self.weights).total

    def step(self, params, c_bar_prev, alpha):
        fs = forward(params, self.x)
        c, k, trace = self.coefficients(fs.y, return_trace=True)
        c_bar = self.mixed_c_bar(c_bar_prev, c, alpha)
        breakdown = total_loss(fs.z, c_bar, self.laplacian, self.weights)
        grad_z, grad_cbar = total_loss_grads(fs.z, c_bar, self.laplacian, self.weights)
        grad_y = None
        if self.cfg.tma_grad == "current_only" and alpha > 0:
            grad_c = alpha * grad_cbar
            np.fill_diagonal(grad_c, 0.0)
            grad_k = aff.sinkhorn_backward(trace, grad_c)
            grad_s = aff.mask_and_lift_backward(k, grad_k, self.cfg.kappa)
            grad_y = aff.similarity_backward(fs.y, grad_s)
        grads = backward(params, fs, grad_z, grad_y)
        return StepResult(breakdown, grads, c, alpha, fs.z)


@dataclass
class TrainedState:
    params: object
    affinity: aff.AffinityState
    config: TrainConfig
    history: list = field(default_factory=list)

    @property
    def loss_history(self):
        return [h["total"] for h in self.history]

    @property
    def metric_history(self):
        return [(h.get("acc"), h.get("nmi")) for h in self.history]


@dataclass
class SegmentationResult:
    labels: np.ndarray
    affinity: np.ndarray
    acc: float | None = None
    nmi: float | None = None


def _spectral_cfg(cfg, k=None):
    return SpectralConfig(k=k or cfg.k, kmeans_restarts=cfg.kmeans_restarts, seed=cfg.seed)


def _check_sequence(cfg, seq):
    if seq.n < max(3, cfg.s + 1):
        raise InvalidConfig(f"sequence has {seq.n} frames; need at least {max(3, cfg.s + 1)}")


def train(cfg, seq, callback=None, checkpoint=None, checkpoint_every=0):
    """Run ``cfg.T`` full-batch gradient steps; return the trained state.

    ``callback(record)`` is invoked for every logged step. If ``checkpoint_every``
    is positive, ``checkpoint(t, params)`` receives the updated parameters every
    that many steps.
    """
    cfg.validate()
    _check_sequence(cfg, seq)
    obj = Objective(cfg, seq.features)
    params = init_params(cfg.dims(seq.dim), cfg.seed)
    state = aff.AffinityState.start(seq.n, cfg.s, cfg.alpha0, cfg.T, cfg.tma_enabled,
                                    cfg.tma_init_normalized)
    opt = Adam(cfg.eta) if cfg.optimizer == "adam" else None
    sc = _spectral_cfg(cfg)
    history = []

    for t in range(1, cfg.T + 1):
        alpha = state.next_alpha()
        res = obj.step(params, state.c_bar, alpha)
        if not math.isfinite(res.loss.total):
            raise NonFiniteLoss(t, params)
        state = aff.tma_update(state, res.c, alpha)

        if t == 1 or t % cfg.log_every == 0 or t == cfg.T:
            rec = {"t": t, **res.loss.as_dict(), "alpha": alpha}
            rec["commutator"] = (
                commutator_diagnostic(res.z, state.c_bar, obj.laplacian, obj.weights)
                if obj.weights.lambda1 > 0 else None
            )
            if cfg.eval_during_training and seq.labels is not None:
                labels = spectral_clustering(aff.symmetrize(state.c_bar), sc)
                rec["acc"] = accuracy(labels, seq.labels)
                rec["nmi"] = nmi(labels, seq.labels)
            history.append(rec)
            if callback is not None:
                callback(rec)

        params = opt.step(params, res.grads) if opt else sgd_step(params, res.grads, cfg.eta)
        if checkpoint is not None and checkpoint_every > 0 and t % checkpoint_every == 0:
            checkpoint(t, params)

    return TrainedState(params, state, cfg, history)


def represent(state, x):
    """Unit-norm learned representations Z~ of ``x`` under the trained network."""
    return forward(state.params, x).z


def segment(state, k=None, gt=None):
    a = aff.symmetrize(state.affinity.c_bar)
    labels = spectral_clustering(a, _spectral_cfg(state.config, k))
    res = SegmentationResult(labels, a)
    if gt is not None:
        res.acc = accuracy(labels, gt)
        res.nmi = nmi(labels, gt)
    return res


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _train_and_score(args):
    cfg, seq = args
    state = train(cfg, seq)
    res = segment(state, gt=seq.labels)
    return res.acc, res.nmi


# Row order of the loss-term ablation: (rho, se, temporal) switched on.
ABLATION_ROWS = [
    (True, True, False),
    (False, True, True),
    (True, False, True),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, True),
]


def run_ablation(cfg, seq, seeds=(0, 1, 2, 3, 4), rows=ABLATION_ROWS, jobs=1):
    """Train every loss-term combination for each seed; mean/std ACC and NMI per row."""
    if seq.labels is None:
        raise InvalidConfig("ablation needs ground-truth labels")
    jobs_list = []
    for use_rho, use_se, use_tmp in rows:
        variant = replace(cfg, drop_rho=not use_rho, drop_se=not use_se,
                          drop_temporal=not use_tmp).validate()
        jobs_list.extend((replace(variant, seed=s), seq) for s in seeds)
    scores = _pmap(_train_and_score, jobs_list, jobs)
    out = []
    for i, (use_rho, use_se, use_tmp) in enumerate(rows):
        chunk = np.array(scores[i * len(seeds):(i + 1) * len(seeds)], dtype=float)
        out.append({
            "rho": use_rho, "se": use_se, "temporal": use_tmp,
            "acc_mean": chunk[:, 0].mean(), "acc_std": chunk[:, 0].std(),
            "nmi_mean": chunk[:, 1].mean(), "nmi_std": chunk[:, 1].std(),
            "acc_runs": chunk[:, 0].tolist(),
        })
    return out


def _robustness_cell(args):
    cfg, seq, sigma, lsr_cfg = args
    noisy = add_noise(seq, sigma, seed=cfg.seed)
    raw = lsr_cluster(noisy.features, cfg.k, lsr_cfg, gt=seq.labels, seed=cfg.seed)
    state = train(cfg, noisy)
    z = represent(state, noisy.features)
    learned = lsr_cluster(z, cfg.k, lsr_cfg, gt=seq.labels, seed=cfg.seed)
    tdsc = segment(state, gt=seq.labels)
    return (accuracy(raw.labels, seq.labels), accuracy(learned.labels, seq.labels), tdsc.acc)


def run_robustness(cfg, seq, sigmas=(0.0, 0.05, 0.1), seeds=(0, 1, 2, 3, 4),
                   lsr_cfg=LsrConfig(), jobs=1):
    """Per noise level: LSR on raw features, LSR on learned Z~, and TDSC itself."""
    if seq.labels is None:
        raise InvalidConfig("robustness sweep needs ground-truth labels")
    cfg.validate()
    tasks = [(replace(cfg, seed=s), seq, sigma, lsr_cfg) for sigma, s in itertools.product(sigmas, seeds)]
    cells = _pmap(_robustness_cell, tasks, jobs)
    out = []
    for i, sigma in enumerate(sigmas):
        chunk = np.array(cells[i * len(seeds):(i + 1) * len(seeds)], dtype=float)
        row = {"sigma": float(sigma)}
        for j, name in enumerate(("raw_lsr", "learned_lsr", "tdsc")):
            row[f"{name}_mean"] = chunk[:, j].mean()
            row[f"{name}_std"] = chunk[:, j].std()
            row[f"{name}_runs"] = chunk[:, j].tolist()
        out.append(row)
    return out


def config_items(cfg):
    return asdict(cfg)


def config_field_names():
    return [f.name for f in fields(TrainConfig)]


def gradcheck_instance(seed, h=1e-5, flip_sign=False, input_dim=5, n=10, cfg=None):
    """Max-abs gap between the analytic and central-difference parameter gradients.

    Small network, unrolled Sinkhorn with a fixed sweep count, first TMA step.
    ``flip_sign`` negates the analytic gradient (a negative control).
    Returns (max_abs_error, max_abs_gradient).
    """
    from .model import NetworkParams
    from .numerics import finite_diff_grad

    cfg = cfg or TrainConfig(hidden_dim=8, output_dim=4, tau=4, s=2, eps=0.01, T=10,
                             sinkhorn_tol=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((input_dim, n))
    obj = Objective(cfg, x)
    dims = cfg.dims(input_dim)
    params = init_params(dims, seed)
    state = aff.AffinityState.start(n, cfg.s, cfg.alpha0, cfg.T, cfg.tma_enabled,
                                    cfg.tma_init_normalized)
    alpha = state.next_alpha()
    analytic = obj.step(params, state.c_bar, alpha).grads.flatten()
    if flip_sign:
        analytic = -analytic
    numeric = finite_diff_grad(
        lambda v: obj.loss(NetworkParams.unflatten(v, dims), state.c_bar, alpha), params.flatten(), h
    )
    return float(np.abs(analytic - numeric).max()), float(np.abs(numeric).max())


def tail_std(accs, frac=0.2):
    """Standard deviation of the last ``frac`` share of a logged ACC curve."""
    accs = [a for a in accs if a is not None]
    if not accs:
        return float("nan")
    m = max(1, int(round(frac * len(accs))))
    return float(np.std(accs[-m:]))


TMA_STUDY_ROWS = [
    ("tma+mask", {}),
    ("no_tma", {"tma_enabled": False}),
    ("no_mask", {"tau": None}),
]


def _study_cell(args):
    cfg, seq = args
    state = train(cfg, seq)
    res = segment(state, gt=seq.labels)
    return res.acc, res.nmi, tail_std([h.get("acc") for h in state.history])


def run_tma_study(cfg, seq, seeds=(0, 1, 2, 3, 4), rows=TMA_STUDY_ROWS, jobs=1):
    """TMA on/off and masking on/off: final ACC and late-training ACC spread per seed."""
    if seq.labels is None:
        raise InvalidConfig("the TMA study needs ground-truth labels")
    cfg = replace(cfg, eval_during_training=True).validate()
    tasks = [(replace(cfg, seed=s, **delta).validate(), seq) for _, delta in rows for s in seeds]
    cells = _pmap(_study_cell, tasks, jobs)
    out = []
    for i, (name, _) in enumerate(rows):
        chunk = np.array(cells[i * len(seeds):(i + 1) * len(seeds)], dtype=float)
        out.append({
            "variant": name,
            "acc_mean": chunk[:, 0].mean(), "acc_std": chunk[:, 0].std(),
            "nmi_mean": chunk[:, 1].mean(), "nmi_std": chunk[:, 1].std(),
            "tail_std_mean": chunk[:, 2].mean(),
            "acc_runs": chunk[:, 0].tolist(), "tail_std_runs": chunk[:, 2].tolist(),
        })
    return out
