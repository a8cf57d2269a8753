"""Reliability metrics, the practical shot search, error mitigation, and experiment drivers.

A stochastic kernel classifier (SKC) reuses a trained ``(beta, b)`` but
evaluates the kernel with ``N`` shots per entry. Its reliability is the
fraction of trials in which it reproduces the labels of the matching exact
kernel classifier (EKC).
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, bounds, conic
from .data import load_csv, make_train_test
from .exceptions import InputError, MitigationError, ScheduleExhausted
from .qkernel import DepolarizingChannel, EmbeddingSpec, depolarize, kernel_matrix_exact
from .robust import EstParams, NormKind, RobustParams, train_robust
from .sampler import CircuitKind, ShotPlan, draw_kernel_matrix, trial_rng
from .svm import SvmModel, accuracy, sgn, solve_primal

CSV_COLUMNS = ("variant", "N", "reliability", "acc_mean", "acc_min", "acc_max", "RA", "m_sv",
               "total_shots")


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int = 200
    master_seed: int = 0
    shot_plan: ShotPlan = ShotPlan(CircuitKind.GATES, 1)

    def __post_init__(self):
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise InputError("n_trials must be a positive integer")

    def with_shots(self, N: int) -> "TrialPlan":
        return TrialPlan(self.n_trials, self.master_seed, ShotPlan(self.shot_plan.kind, N))


def derive_seed(master_seed: int, *tags) -> int:
    """Deterministic 64-bit seed for a named sub-stream of ``master_seed``."""
    key = [int.from_bytes(str(t).encode()[:8].ljust(8, b"\0"), "little") for t in tags]
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ReliabilityReport:
    variant: str
    N: int
    per_point_reliability: np.ndarray
    dataset_reliability: float
    delta_threshold: float
    accuracy_mean: float
    accuracy_min: float
    accuracy_max: float
    RA: float = float("nan")
    m_sv: int = 0
    total_shots: int = 0
    n_trials: int = 0
    reliability_ekc: float = float("nan")
    ref_accuracy: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def mean_point_reliability(self) -> float:
        return float(np.mean(self.per_point_reliability))

    def csv_row(self) -> list:
        return [self.variant, self.N, _fmt(self.dataset_reliability), _fmt(self.accuracy_mean),
                _fmt(self.accuracy_min), _fmt(self.accuracy_max), _fmt(self.RA), self.m_sv,
                self.total_shots]


def _fmt(v: float) -> str:
    return repr(float(v))


# metrics

def empirical_reliability(labels_by_trial, ref_labels, delta: float = 0.0):
    """Per-point agreement frequency and the fraction of points reliable at level ``1 - delta``."""
    L = np.atleast_2d(np.asarray(labels_by_trial))
    ref = np.asarray(ref_labels).reshape(-1)
    if L.shape[1] != ref.shape[0]:
        raise InputError("trial labels and reference labels have different lengths")
    if not 0.0 <= delta < 1.0:
        raise InputError("delta must lie in [0, 1)")
    per_point = np.mean(L == ref[None, :], axis=0)
    dataset = float(np.mean(per_point >= 1.0 - delta - 1e-12))
    return per_point, dataset


def relative_accuracy(acc_h: float, acc_f: float) -> float:
    if not acc_f > 0:
        raise InputError("reference accuracy must be positive")
    return float(acc_h) / float(acc_f)


def mitigate_m_mean(K_hat, d: int, lam2: float | None = None,
                    unit_diagonal: bool | None = None) -> np.ndarray:
    """Undo uniform depolarizing noise using the mean of the sampled diagonal.

    Without ``lam2`` the strength is estimated from ``K_hat``'s own diagonal
    and the result is a symmetric matrix with unit diagonal. Passing ``lam2``
    applies an earlier estimate, e.g. to a rectangular classification kernel,
    and leaves the diagonal alone unless ``unit_diagonal`` is set.
    """
    K = np.asarray(K_hat, dtype=float)
    if unit_diagonal is None:
        unit_diagonal = lam2 is None
    if lam2 is None:
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise InputError("M-MEAN estimation needs a square matrix with its diagonal")
        lam2 = estimate_lambda2(K, d)
    if lam2 >= 1.0:
        raise MitigationError(f"estimated depolarizing strength {lam2:.4g} leaves no signal")
    out = (K - lam2 / d) / (1.0 - lam2)
    if unit_diagonal:
        out = 0.5 * (out + out.T)
        np.fill_diagonal(out, 1.0)
    return out


def estimate_lambda2(K_hat, d: int) -> float:
    diag = np.diag(np.asarray(K_hat, dtype=float))
    lam2 = (1.0 - float(np.mean(diag))) / (1.0 - 1.0 / d)
    if lam2 >= 1.0:
        raise MitigationError(f"estimated depolarizing strength {lam2:.4g} leaves no signal")
    return min(max(lam2, 0.0), 1.0)


# stochastic evaluation

def stochastic_decisions(models, K_eval, plan: ShotPlan, seed: int, n_trials: int,
                         transform=None) -> list:
    """Decision values of every model on ``n_trials`` shared kernel instantiations.

    Returns one ``(n_trials, M)`` array per model. Trial ``t`` draws the whole
    evaluation matrix from ``trial_rng(seed, plan, t)``, so all models see the
    same instantiation and adding trials leaves earlier ones untouched.
    """
    K_eval = np.asarray(K_eval, dtype=float)
    betas = np.stack([m.beta for m in models], axis=1)
    bs = np.array([m.b for m in models])
    out = np.empty((len(models), n_trials, K_eval.shape[0]))
    for t in range(n_trials):
        Kn = draw_kernel_matrix(K_eval, plan, trial_rng(seed, plan, t), same_set=False).entries
        if transform is not None:
            Kn = transform(Kn)
        out[:, t, :] = (Kn @ betas + bs).T
    return list(out)


def evaluate_stochastic(model: SvmModel, variant: str, decisions: np.ndarray, K_eval_exact,
                        y, N: int, delta: float = 0.0, ref_acc: float | None = None,
                        ekc_labels=None) -> ReliabilityReport:
    """Summarize one model's trials against its exact counterpart."""
    y = np.asarray(y)
    labels = sgn(decisions)
    ref = sgn(np.asarray(K_eval_exact) @ model.beta + model.b)
    per_point, dataset = empirical_reliability(labels, ref, delta)
    accs = np.mean(labels == y[None, :], axis=1)
    rep = ReliabilityReport(variant, int(N), per_point, dataset, delta, float(accs.mean()),
                            float(accs.min()), float(accs.max()), m_sv=model.m_sv,
                            total_shots=model.m_sv * int(N), n_trials=labels.shape[0])
    rep.extra["exact_accuracy"] = accuracy(ref, y)
    if ref_acc is not None:
        rep.ref_accuracy = ref_acc
        rep.RA = relative_accuracy(rep.accuracy_mean, ref_acc)
    if ekc_labels is not None:
        rep.reliability_ekc = empirical_reliability(labels, ekc_labels, delta)[1]
    return rep


# practical shot count

def empirical_violation(model: SvmModel, K_eval, y, eps_gamma: float, plan: TrialPlan,
                        columns=None) -> float:
    """Fraction of trials whose classification error exceeds ``eps_gamma``."""
    K_eval = np.asarray(K_eval, dtype=float)
    y = np.asarray(y)
    S = model.support_indices if columns is None else columns
    Ks = K_eval[:, S]
    beta_s = model.beta[S]
    seed = derive_seed(plan.master_seed, "npractical")
    bad = 0
    for t in range(plan.n_trials):
        Kn = draw_kernel_matrix(Ks, plan.shot_plan, trial_rng(seed, plan.shot_plan, t),
                                same_set=False).entries
        err = np.mean(sgn(Kn @ beta_s + model.b) != y)
        bad += err > eps_gamma + 1e-12
    return bad / plan.n_trials


def n_practical(K_eval, y, model: SvmModel, gamma: float, delta_target: float, plan: TrialPlan,
                schedule: str = "doubling", n_step: int | None = None, n_max: int = 2**26,
                trace: list | None = None) -> int:
    """Smallest shot count on the schedule whose violation frequency is at most ``delta_target``.

    The target is ``eps_0(f^(N)) <= eps_gamma(f*)``. ``doubling`` brackets the
    answer between consecutive multiples of two of ``N_start`` and bisects;
    ``additive`` steps by ``n_step`` as a plain linear scan.
    """
    if not 0.0 < delta_target < 1.0:
        raise InputError("delta_target must lie in (0, 1)")
    K_eval = np.asarray(K_eval, dtype=float)
    y = np.asarray(y)
    margins = y * (K_eval @ model.beta + model.b)
    eps_gamma = float(np.mean(margins < gamma))
    n0 = plan.shot_plan.shots
    cache = {}

    def fails(N: int) -> bool:
        if N not in cache:
            d = empirical_violation(model, K_eval, y, eps_gamma, plan.with_shots(N))
            cache[N] = d
            if trace is not None:
                trace.append((N, d))
        return cache[N] > delta_target

    if schedule == "additive":
        step = n_step or n0
        N = n0
        while N <= n_max:
            if not fails(N):
                return N
            N += step
        raise ScheduleExhausted(f"no passing N up to {n_max}", cache[max(cache)])
    if schedule != "doubling":
        raise InputError(f"unknown schedule {schedule!r}")
    if not fails(n0):
        return n0
    lo, hi = n0, 2 * n0
    while fails(hi):
        lo, hi = hi, 2 * hi
        if hi > n_max:
            raise ScheduleExhausted(f"no passing N up to {n_max}", cache[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fails(mid):
            lo = mid
        else:
            hi = mid
    return hi


# experiment configuration

PRESET_EMBEDDING = {"circles": "angle", "havlicek": "iqp", "moons": "iqp+angle",
                    "checkerboard": "iqp"}


@dataclass
class RunConfig:
    dataset: str = "circles"
    m_train: int = 40
    m_test: int = 360
    data_seed: int = 0
    dataset_params: dict = field(default_factory=dict)
    embedding: str = ""
    n_qubits: int = 2
    variants: list = field(default_factory=lambda: ["nominal", "shofar"])
    C: float = 1000.0
    shots: list = field(default_factory=lambda: [2**k for k in range(4, 15)])
    circuit: str = "GATES"
    n_trials: int = 200
    master_seed: int = 0
    eval_set: str = "train"
    delta1: float = 0.01
    delta2: float = 0.01
    delta1p: float = 0.01
    delta2p: float = 0.01
    delta_conf: float = 0.1
    shots_train: int = 0
    shots_train_grid: list = field(default_factory=lambda: [10, 100, 200, 400])
    delta_threshold: float = 0.0
    lam: float = 0.05
    gamma: float = 0.0
    delta_target: float = 0.01
    n_start: int = 16
    schedule: str = "doubling"
    epsilon: float = 0.1
    out_dir: str = "out"
    train_csv: str = ""
    test_csv: str = ""
    model_path: str = ""

    @property
    def embedding_spec(self) -> EmbeddingSpec:
        kind = self.embedding or PRESET_EMBEDDING.get(self.dataset, "angle")
        return EmbeddingSpec(kind, self.n_qubits)

    @property
    def kind(self) -> CircuitKind:
        return CircuitKind.parse(self.circuit)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def keys(cls) -> set:
        return {f.name for f in fields(cls)}


@dataclass
class Problem:
    """Data and exact kernels shared by the drivers."""

    train: object
    test: object
    spec: EmbeddingSpec
    K_train: np.ndarray
    K_eval: np.ndarray
    y_train: np.ndarray
    y_eval: np.ndarray


def load_or_make_data(cfg: RunConfig):
    if cfg.train_csv:
        train = load_csv(cfg.train_csv)
        test = load_csv(cfg.test_csv) if cfg.test_csv else train
        return train, test
    return make_train_test(cfg.dataset, cfg.m_train, cfg.m_test, seed=cfg.data_seed,
                           **cfg.dataset_params)


def build_problem(cfg: RunConfig, eval_set: str | None = None) -> Problem:
    train, test = load_or_make_data(cfg)
    spec = cfg.embedding_spec
    if train.dim != spec.input_dim:
        raise InputError(f"dataset dimension {train.dim} does not match {spec.id}")
    K_train = kernel_matrix_exact(spec, train.points)
    which = eval_set or cfg.eval_set
    if which == "train":
        K_eval, y_eval = K_train, train.labels
    elif which == "test":
        K_eval, y_eval = kernel_matrix_exact(spec, test.points, train.points), test.labels
    else:
        raise InputError("eval_set must be 'train' or 'test'")
    return Problem(train, test, spec, K_train, K_eval, train.labels, y_eval)


def estimated_training_matrix(cfg: RunConfig, K_train, T: int, K_source=None,
                              sampled_diagonal: bool = False) -> np.ndarray:
    src = K_train if K_source is None else K_source
    seed = derive_seed(cfg.master_seed, "train", T)
    return draw_kernel_matrix(src, ShotPlan(cfg.kind, T), seed=seed, same_set=True,
                              sampled_diagonal=sampled_diagonal).entries


def est_params(cfg: RunConfig, m: int) -> EstParams:
    if cfg.shots_train:
        return EstParams.from_shots(cfg.shots_train, m, cfg.kind, cfg.delta1p, cfg.delta2p)
    return EstParams.from_conf(cfg.delta_conf, m, cfg.kind, cfg.delta1p, cfg.delta2p)


def train_variant(variant: str, cfg: RunConfig, K_train, K_hat, y, N: int) -> SvmModel:
    if variant == "nominal":
        return solve_primal(K_train, y, cfg.C)
    norm = NormKind.L1 if variant.startswith("l1-") else NormKind.L2
    p = RobustParams(N, cfg.delta1, cfg.delta2, norm, cfg.kind)
    if variant.endswith("-est"):
        return train_robust(K_hat, y, cfg.C, p, est_params(cfg, len(y)))
    return train_robust(K_train, y, cfg.C, p)


def run_reliability_sweep(cfg: RunConfig, problem: Problem | None = None) -> list:
    """Reliability and accuracy of every variant at every shot count.

    Nominal models train once on the exact matrix; robust models are retrained
    at each ``N`` because their penalty depends on it. ``-est`` variants train
    on one fixed ``T``-shot estimate of the training matrix.
    """
    _check_variants(cfg.variants)
    pb = problem or build_problem(cfg)
    y = pb.y_train
    K_hat = None
    if any(v.endswith("-est") for v in cfg.variants):
        T = est_params(cfg, len(y)).shots_train
        K_hat = estimated_training_matrix(cfg, pb.K_train, T)
    ekc = solve_primal(pb.K_train, y, cfg.C)
    ekc_labels = sgn(pb.K_eval @ ekc.beta + ekc.b)
    ekc_acc = accuracy(ekc_labels, pb.y_eval)
    seed = derive_seed(cfg.master_seed, "classify")
    reports = []
    for N in sorted(cfg.shots):
        plan = ShotPlan(cfg.kind, N)
        models = [ekc if v == "nominal" else train_variant(v, cfg, pb.K_train, K_hat, y, N)
                  for v in cfg.variants]
        decs = stochastic_decisions(models, pb.K_eval, plan, seed, cfg.n_trials)
        for v, model, dec in zip(cfg.variants, models, decs):
            rep = evaluate_stochastic(model, v, dec, pb.K_eval, pb.y_eval, N, cfg.delta_threshold,
                                      ekc_acc, ekc_labels)
            rep.extra["ekc_accuracy"] = ekc_acc
            reports.append(rep)
    return reports


def _check_variants(variants) -> None:
    from .svm import VARIANTS
    bad = [v for v in variants if v not in VARIANTS]
    if bad or not variants:
        raise InputError(f"unknown or empty variant list {bad or variants}; choose from {VARIANTS}")


def smallest_reliable_N(reports, variant: str, level: float = 1.0, against: str = "own"):
    """Smallest swept ``N`` at which ``variant`` reaches dataset reliability ``level``."""
    key = "reliability_ekc" if against == "ekc" else "dataset_reliability"
    hits = sorted(r.N for r in reports if r.variant == variant and getattr(r, key) >= level)
    return hits[0] if hits else None


def run_noise_study(cfg: RunConfig, problem: Problem | None = None) -> list:
    """The five-classifier depolarizing-noise comparison, evaluated on the training set.

    Training uses one ``T``-shot estimate of the depolarized matrix with its
    diagonal sampled. Nominal classifiers train on its spectrally shifted
    version (unmitigated, U) or on the shifted M-MEAN-mitigated one (M);
    robust ones train ShofaR-Est on the unshifted matrices. Noisy classifiers
    evaluate the depolarized kernel with ``N`` shots (mitigated with the
    training estimate of lambda^2 for M variants); their ideal counterparts
    use the exact kernel with the same ``(beta, b)``.
    """
    pb = problem or build_problem(cfg, "train")
    y = pb.y_train
    d = pb.spec.dim
    ch = DepolarizingChannel(cfg.lam, d)
    K_dev = depolarize(pb.K_train, ch)
    e = est_params(cfg, len(y))
    K_hat = estimated_training_matrix(cfg, pb.K_train, e.shots_train, K_source=K_dev,
                                      sampled_diagonal=True)
    lam2 = estimate_lambda2(K_hat, d)
    K_miti = mitigate_m_mean(K_hat, d, lam2=lam2, unit_diagonal=True)
    ekc = solve_primal(pb.K_train, y, cfg.C)
    ekc_acc = accuracy(sgn(pb.K_train @ ekc.beta + ekc.b), y)
    u_nom = solve_primal(conic.spectral_shift(K_hat), y, cfg.C)
    m_nom = solve_primal(conic.spectral_shift(K_miti), y, cfg.C)
    K_dev_eval = depolarize(pb.K_eval, ch)
    seed = derive_seed(cfg.master_seed, "classify-noise")
    mitigate = lambda Kn: mitigate_m_mean(Kn, d, lam2=lam2)  # noqa: E731
    reports = []
    for N in sorted(cfg.shots):
        plan = ShotPlan(cfg.kind, N)
        p = RobustParams(N, cfg.delta1, cfg.delta2, NormKind.L2, cfg.kind)
        u_rob = train_robust(K_hat, y, cfg.C, p, e)
        m_rob = train_robust(K_miti, y, cfg.C, p, e)
        raw = stochastic_decisions([u_nom, u_rob], K_dev_eval, plan, seed, cfg.n_trials)
        miti = stochastic_decisions([m_nom, m_rob], K_dev_eval, plan, seed, cfg.n_trials,
                                    transform=mitigate)
        for name, model, dec in (("U-SKC", u_nom, raw[0]), ("U-RSKC", u_rob, raw[1]),
                                 ("M-SKC", m_nom, miti[0]), ("M-RSKC", m_rob, miti[1])):
            rep = evaluate_stochastic(model, name, dec, pb.K_eval, pb.y_eval, N,
                                      cfg.delta_threshold, ekc_acc)
            # RA of the ideal counterpart relative to the reference EKC
            rep.extra["ideal_RA"] = relative_accuracy(rep.extra["exact_accuracy"], ekc_acc)
            rep.extra.update(lam2_hat=lam2, shots_train=e.shots_train)
            reports.append(rep)
    return reports


def run_training_shots_study(cfg: RunConfig, problem: Problem | None = None) -> list:
    """Nominal SVMs trained on ``T``-shot estimates, evaluated on the test set.

    ``T = 0`` in the grid stands for the exact training matrix.
    """
    pb = problem or build_problem(cfg, "test")
    y = pb.y_train
    seed = derive_seed(cfg.master_seed, "classify")
    reports = []
    for T in cfg.shots_train_grid:
        if T:
            K_hat = conic.spectral_shift(estimated_training_matrix(cfg, pb.K_train, T))
        else:
            K_hat = pb.K_train
        model = solve_primal(K_hat, y, cfg.C)
        ekc_acc = accuracy(sgn(pb.K_eval @ model.beta + model.b), pb.y_eval)
        label = f"T={T}" if T else "T=inf"
        for N in sorted(cfg.shots):
            plan = ShotPlan(cfg.kind, N)
            dec = stochastic_decisions([model], pb.K_eval, plan, seed, cfg.n_trials)[0]
            rep = evaluate_stochastic(model, label, dec, pb.K_eval, pb.y_eval, N,
                                      cfg.delta_threshold, ekc_acc)
            rep.extra.update(shots_train=T, ekc_accuracy=ekc_acc)
            reports.append(rep)
    return reports


# output

def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_csv(reports, path) -> None:
    Path(path).write_text(reports_to_csv(reports))


def write_manifest(path, cfg: RunConfig, command: str, started: float, extra: dict | None = None):
    rec = {
        "command": command,
        "config": cfg.to_dict(),
        "master_seed": cfg.master_seed,
        "data_seed": cfg.data_seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        rec.update(extra)
    Path(path).write_text(json.dumps(rec, indent=1, sort_keys=True, default=str) + "\n")
    return rec


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def bound_summary(model: SvmModel, K_eval, y, circuit, delta: float, epsilon: float = 0.1,
                  gamma: float | None = None) -> dict:
    margins = np.asarray(y) * (np.asarray(K_eval) @ model.beta + model.b)
    g = gamma or bounds.gamma_star(margins)
    if g <= 0:
        g = float("nan")
    M = len(y)
    out = {"gamma": g, "beta_norm2": model.beta_norm2, "m_sv": model.m_sv, "M": M}
    if g == g:
        out["n_sg"] = bounds.n_sg(model.beta_norm2, g, circuit, M, delta)
        out["n_sg_worstcase"] = bounds.n_sg_worstcase(max(model.m_sv, 1), model.C, g, circuit, M,
                                                      delta)
    out["n_margin_risk"] = bounds.n_margin_risk(model.beta_norm2, circuit, model.m, delta)
    out["n_precise"] = bounds.n_precise(max(model.m_sv, 1), M, epsilon, circuit, delta)
    out["shots_for_conf"] = bounds.shots_for_conf(epsilon, delta / model.m, circuit)
    return out
