"""Monte-Carlo harness: data generators, scenarios and FWER / power metrics."""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .contrasts import ContrastSpec, make_contrast
from .correction import Case
from .engine import RunConfig, derive_stream, resolve_case, run_cases
from .exceptions import InsufficientData, InvalidInput, VarianceUndefined
from .linalg import sqrt_psd, symmetrize
from .moments import GroupedSample, MeanEstimator
from .mtp import asymptotic_bonferroni, asymptotic_multiple, bonferroni_naive, report_from_run
from .statistics import block_statistics
from .survival import SurvivalSample, rmst_theta

TRUTH_ATOL = 1e-12
SURVIVAL_NOTE = "simplified exponential event/censoring generator"
ANOVA_DISTRIBUTIONS = {
    # name: (sampler, mean of the raw draw)
    "normal": (lambda rng, size: rng.standard_normal(size), 0.0),
    "lognormal": (lambda rng, size: np.exp(rng.standard_normal(size)), math.exp(0.5)),
    "chisq3": (lambda rng, size: rng.chisquare(3, size), 3.0),
    "t3": (lambda rng, size: rng.standard_t(3, size), 0.0),
}
MANOVA_DISTRIBUTIONS = {
    # centred and unit-variance error components
    "exp": lambda rng, size: rng.standard_exponential(size) - 1.0,
    "normal": lambda rng, size: rng.standard_normal(size),
    "t9": lambda rng, size: math.sqrt(7.0 / 9.0) * rng.standard_t(9, size),
}
PERMUTATION_METHODS = {"case1": Case.CASE1, "case2": Case.CASE2, "case3": Case.CASE3, "auto": "auto"}
OTHER_METHODS = ("bonferroni", "asymptotic", "asymptotic-bonferroni")


def equicorrelation_cov(d: int = 4) -> np.ndarray:
    """Diagonal ``3, 4, 5, ...`` with all off-diagonal entries 1."""
    return np.ones((d, d)) + np.diag(np.arange(2.0, d + 2.0))


def autoregressive_cov(d: int = 4, rho: float = 0.65) -> np.ndarray:
    """``rho^|a-b| sqrt((a+1)(b+1))`` for 1-based ``a, b``."""
    a = np.arange(1, d + 1)
    return rho ** np.abs(a[:, None] - a[None, :]) * np.sqrt(np.outer(a + 1, a + 1))


def heterogeneous_covariances(k: int, d: int) -> List[np.ndarray]:
    """First half of the groups equicorrelated, second half autoregressive."""
    half = k // 2
    return [equicorrelation_cov(d)] * half + [autoregressive_cov(d)] * (k - half)


@dataclass(frozen=True)
class Scenario:
    name: str
    application: str = "anova"  # anova | manova | rmst
    k: int = 2
    d: int = 1
    sizes: Tuple[int, ...] = (10, 10)
    distribution: str = "normal"
    scales: Optional[Tuple[float, ...]] = None  # anova: sigma_i
    covariance: str = "heterogeneous"  # manova: heterogeneous | identity
    mu: Optional[Tuple[float, ...]] = None  # anova/manova group means; length k or k*d
    rates: Optional[Tuple[float, ...]] = None  # rmst: event rates
    censoring: Optional[Tuple[float, ...]] = None  # rmst: censoring rates, 0 = none
    tau: float = 1.0
    contrast: str = "dunnett"
    kernel: str = "student"
    methods: Tuple[str, ...] = ("auto",)
    n_sim: int = 1000
    B: int = 499
    alpha: float = 0.05
    seed: int = 1
    eps: float = 0.1
    rn_exponent: float = 0.25
    gamma_pi: str = "original"
    asymptotic_draws: int = 1999

    def __post_init__(self):
        if self.application not in ("anova", "manova", "rmst"):
            raise InvalidInput(f"application must be anova, manova or rmst; got {self.application!r}")
        if len(self.sizes) != self.k:
            raise InvalidInput(f"{len(self.sizes)} sample sizes given for k={self.k}")
        if self.n_sim < 100:
            raise InvalidInput("n_sim must be at least 100")
        if self.application != "manova" and self.d != 1:
            raise InvalidInput(f"{self.application} scenarios are univariate (d=1)")
        if self.application == "anova" and self.distribution not in ANOVA_DISTRIBUTIONS:
            raise InvalidInput(f"unknown distribution {self.distribution!r}; choose from {sorted(ANOVA_DISTRIBUTIONS)}")
        if self.application == "manova" and self.distribution not in MANOVA_DISTRIBUTIONS:
            raise InvalidInput(f"unknown distribution {self.distribution!r}; choose from {sorted(MANOVA_DISTRIBUTIONS)}")
        if self.scales is not None and len(self.scales) != self.k:
            raise InvalidInput("need one scale per group")
        if self.mu is not None and len(self.mu) not in (self.k, self.k * self.d):
            raise InvalidInput("mu needs k or k*d entries")
        if self.application == "rmst":
            if self.rates is None or len(self.rates) != self.k:
                raise InvalidInput("rmst scenarios need one event rate per group")
            if any(r <= 0 for r in self.rates):
                raise InvalidInput("event rates must be positive")
            if self.censoring is not None and len(self.censoring) != self.k:
                raise InvalidInput("need one censoring rate per group")
        for m in self.methods:
            if m not in PERMUTATION_METHODS and m not in OTHER_METHODS:
                raise InvalidInput(f"unknown method {m!r}")
        RunConfig(B=self.B, alpha=self.alpha, eps=self.eps, rn_exponent=self.rn_exponent, kernel=self.kernel,
                  gamma_pi=self.gamma_pi)

    @property
    def spec(self) -> ContrastSpec:
        return make_contrast(self.contrast, self.k, self.d)

    def mean_vector(self) -> np.ndarray:
        """True parameter vector: group means (length ``k*d``) or RMSTs."""
        if self.application == "rmst":
            rates = np.asarray(self.rates, dtype=float)
            return (1.0 - np.exp(-rates * self.tau)) / rates
        mu = np.zeros(self.k * self.d) if self.mu is None else np.asarray(self.mu, dtype=float)
        return np.repeat(mu, self.d) if mu.size == self.k else mu

    def false_hypotheses(self) -> np.ndarray:
        spec = self.spec
        theta = spec.H @ self.mean_vector()
        return np.array([np.max(np.abs(theta[a:b])) > TRUTH_ATOL for a, b, _ in spec.blocks])


def generate_anova(sc: Scenario, rng: np.random.Generator) -> GroupedSample:
    """``X = sigma_i (eta - m) + mu_i`` with ``m`` the mean of ``eta``."""
    sampler, m = ANOVA_DISTRIBUTIONS[sc.distribution]
    scales = np.ones(sc.k) if sc.scales is None else np.asarray(sc.scales, dtype=float)
    mu = sc.mean_vector()
    return GroupedSample(tuple(scales[i] * (sampler(rng, ni) - m) + mu[i] for i, ni in enumerate(sc.sizes)))


def generate_manova(sc: Scenario, rng: np.random.Generator, covariances: Optional[List[np.ndarray]] = None) -> GroupedSample:
    """``X = Gamma_i^{1/2} Z + mu_i`` with i.i.d. standardised components of ``Z``."""
    if covariances is None:
        covariances = (heterogeneous_covariances(sc.k, sc.d) if sc.covariance == "heterogeneous"
                       else [np.eye(sc.d)] * sc.k)
    roots = [sqrt_psd(symmetrize(c)) for c in covariances]
    sampler = MANOVA_DISTRIBUTIONS[sc.distribution]
    mu = sc.mean_vector().reshape(sc.k, sc.d)
    return GroupedSample(tuple(sampler(rng, (ni, sc.d)) @ roots[i] + mu[i] for i, ni in enumerate(sc.sizes)))


def generate_survival(sc: Scenario, rng: np.random.Generator) -> SurvivalSample:
    """Exponential event times censored by independent exponential times (rate 0 = no censoring)."""
    cens = np.zeros(sc.k) if sc.censoring is None else np.asarray(sc.censoring, dtype=float)
    groups = []
    for i, ni in enumerate(sc.sizes):
        T = rng.exponential(1.0 / sc.rates[i], ni)
        C = rng.exponential(1.0 / cens[i], ni) if cens[i] > 0 else np.full(ni, np.inf)
        groups.append((np.minimum(T, C), (T <= C).astype(int)))
    return SurvivalSample(tuple(groups), sc.tau)


GENERATORS = {"anova": generate_anova, "manova": generate_manova, "rmst": generate_survival}


@dataclass
class MetricResult:
    scenario: str
    method: str
    n_sim: int
    n_false: int
    fwer: Optional[float]
    fwer_se: Optional[float]
    fw_power: Optional[float]
    fw_power_se: Optional[float]
    global_power: Optional[float]
    global_power_se: Optional[float]
    failures: int = 0
    notes: str = ""

    COLUMNS = ("scenario", "method", "n_sim", "n_false", "fwer", "fwer_se", "fw_power", "fw_power_se",
               "global_power", "global_power_se", "failures", "notes")

    def as_row(self) -> List[str]:
        def fmt(v):
            if v is None:
                return "NA"
            return f"{v:.6g}" if isinstance(v, float) else str(v)
        return [fmt(getattr(self, c)) for c in self.COLUMNS]


def metrics_tsv(rows: Sequence[MetricResult]) -> str:
    """Header plus one tab-separated line per metric row."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(MetricResult.COLUMNS)
    for r in rows:
        w.writerow(r.as_row())
    return buf.getvalue()


def _rate(x: np.ndarray):
    if x.size == 0:
        return None, None
    p = float(np.mean(x))
    return p, math.sqrt(p * (1 - p) / x.size)


def summarize(name: str, method: str, rejections: np.ndarray, false_mask: np.ndarray, failures: int = 0) -> MetricResult:
    """Metrics from an ``N x L`` boolean rejection matrix.

    FWER counts rejections of true hypotheses; family-wise power needs every
    false hypothesis rejected and is reported as missing when none is false.
    """
    rej = np.asarray(rejections, dtype=bool)
    n_false = int(false_mask.sum())
    fwer, fwer_se = _rate(rej[:, ~false_mask].any(axis=1)) if (~false_mask).any() else (None, None)
    notes = []
    if n_false:
        fw, fw_se = _rate(rej[:, false_mask].all(axis=1))
        gp, gp_se = _rate(rej.any(axis=1))
    else:
        fw = fw_se = gp = gp_se = None
        notes.append("no false hypothesis: power not applicable")
    if failures:
        notes.append(f"{failures} dataset(s) failed and were excluded")
    return MetricResult(name, method, rej.shape[0], n_false, fwer, fwer_se, fw, fw_se, gp, gp_se, failures,
                        "; ".join(notes))


def analyse_dataset(sc: Scenario, sample, run_seed: int) -> Dict[str, np.ndarray]:
    """Rejection vectors of every requested method on one dataset."""
    spec = sc.spec
    cfg = RunConfig(B=sc.B, alpha=sc.alpha, seed=run_seed, eps=sc.eps, rn_exponent=sc.rn_exponent,
                    kernel=sc.kernel, gamma_pi=sc.gamma_pi, workers=1, chunk_size=sc.B)
    perm_methods = [m for m in sc.methods if m in PERMUTATION_METHODS]
    needs_perm = perm_methods or "bonferroni" in sc.methods
    out = {}
    if needs_perm:
        modes = [PERMUTATION_METHODS[m] for m in perm_methods] or ["auto"]
        runs = run_cases(sample, spec, cfg, modes)
        for m in perm_methods:
            out[m] = report_from_run(runs[resolve_case(sample, spec, PERMUTATION_METHODS[m])], sc.alpha).reject
        if "bonferroni" in sc.methods:
            any_run = next(iter(runs.values()))
            out["bonferroni"] = bonferroni_naive(any_run.W_obs, any_run.W_perm_naive, sc.alpha).reject
    if "asymptotic" in sc.methods or "asymptotic-bonferroni" in sc.methods:
        theta, sigma = observed_theta_sigma(spec, sample)
        W = block_statistics(spec, np.sqrt(sample.n) * theta[None, :], sigma, sc.kernel)[0]
        if "asymptotic" in sc.methods:
            rng = derive_stream(run_seed, 0, 9)
            out["asymptotic"] = asymptotic_multiple(W, sigma, spec, sc.alpha, sc.kernel, sc.asymptotic_draws, rng).reject
        if "asymptotic-bonferroni" in sc.methods:
            out["asymptotic-bonferroni"] = asymptotic_bonferroni(W, sc.alpha, spec.r_ell, sc.kernel).reject
    return out


def observed_theta_sigma(spec: ContrastSpec, sample):
    if isinstance(sample, SurvivalSample):
        theta, gamma = rmst_theta(spec, sample)
    else:
        mu, gamma = MeanEstimator(sample).observed()
        theta = spec.H @ mu
    return theta, symmetrize(spec.H @ gamma @ spec.H.T)


def simulate_dataset(sc: Scenario, j: int):
    """Dataset ``j`` (1-based) and the seed of its permutation run."""
    rng = derive_stream(sc.seed, j)
    sample = GENERATORS[sc.application](sc, rng)
    return sample, int(rng.integers(0, 2**63))


def run_scenario(sc: Scenario, workers: int = 1) -> List[MetricResult]:
    """Analyse ``sc.n_sim`` independent datasets; one :class:`MetricResult` per method."""
    false_mask = sc.false_hypotheses()

    def one(j):
        sample, run_seed = simulate_dataset(sc, j)
        try:
            return analyse_dataset(sc, sample, run_seed)
        except (VarianceUndefined, InsufficientData) as exc:  # e.g. no event before tau
            return exc

    idx = range(1, sc.n_sim + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(j) for j in idx]
    ok = [r for r in results if isinstance(r, dict)]
    failures = len(results) - len(ok)
    rows = [summarize(sc.name, m, np.array([r[m] for r in ok]).reshape(len(ok), -1) if ok
                      else np.zeros((0, false_mask.size), bool), false_mask, failures)
            for m in sc.methods]
    if sc.application == "rmst":
        for row in rows:
            row.notes = "; ".join(filter(None, [SURVIVAL_NOTE, row.notes]))
    return rows


# scenario files: line-oriented "key = value"; lists comma-separated; '#' starts a comment

_TUPLE_FLOAT = {"scales", "mu", "rates", "censoring"}
_TUPLE_STR = {"methods"}


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    kinds = {f.name: f.type for f in fields(Scenario)}
    values: Dict[str, object] = {"name": name}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"{name}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise InvalidInput(f"{name}:{lineno}: unknown key {key!r}")
        try:
            if key == "sizes":
                values[key] = tuple(int(v) for v in value.split(","))
            elif key in _TUPLE_FLOAT:
                values[key] = tuple(float(v) for v in value.split(","))
            elif key in _TUPLE_STR:
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in ("k", "d", "n_sim", "B", "seed", "asymptotic_draws"):
                values[key] = int(value)
            elif key in ("alpha", "eps", "rn_exponent", "tau"):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise InvalidInput(f"{name}:{lineno}: malformed value for {key!r}: {value!r}") from None
    try:
        return Scenario(**values)
    except TypeError as exc:
        raise InvalidInput(f"{name}: {exc}") from None


def bundled_scenarios() -> List[str]:
    root = resources.files("covperm") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def load_scenario(name_or_path) -> Scenario:
    """Load a scenario file by path or by bundled name."""
    path = Path(name_or_path)
    if path.is_file():
        return parse_scenario(path.read_text(), path.stem)
    res = resources.files("covperm") / "scenarios" / f"{name_or_path}.txt"
    if res.is_file():
        return parse_scenario(res.read_text(), str(name_or_path))
    raise InvalidInput(f"no scenario file or bundled scenario named {name_or_path!r}")


def with_overrides(sc: Scenario, **kwargs) -> Scenario:
    return replace(sc, **{k: v for k, v in kwargs.items() if v is not None})
