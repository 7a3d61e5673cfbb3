"""Monte-Carlo harness for error-rate and power studies.

Reproduces the standard simulation grid at either paper scale or a desk
scale: synthetic data from normal, kurtotic (Student t) or binary
(Bernoulli) distributions, optional nuisance sets on one or both sides,
optional PCA reduction, and optional planted signal that is either
concentrated in one canonical component ("sparse") or spread over half of
the smaller variable set ("dense").

Per-realization seeds are derived by counter from the master seed, so
results are bit-identical regardless of how realizations are scheduled
across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm as _norm

from . import linalg
from .errors import InvalidOptions, TooManyComponents, UnknownScenario
from .infer import InferenceOptions, permcca

# Desk-scale defaults used when a run is not asked to reproduce paper scale.
DESK_REPS = 200
DESK_PERMS = 500

# Shared-factor amplitudes.  A factor of amplitude a added to one column on
# each side yields a population canonical correlation of a^2 / (a^2 + 1):
# sqrt(2/3) targets 0.4 for the sparse signal, sqrt(1/3) targets 0.25 for
# each of the dense components.
SPARSE_AMPLITUDE = math.sqrt(2.0 / 3.0)
DENSE_AMPLITUDE = math.sqrt(1.0 / 3.0)

STUDENT_DF_GRID = (2, 4, 6, 8, 10)
SAMPLE_SIZE_GRID = tuple(range(100, 1001, 100))


def shared_factor_correlation(amplitude):
    """Population canonical correlation induced by one shared unit-variance factor."""
    a2 = amplitude * amplitude
    return a2 / (a2 + 1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario.

    ``n_nuis_left`` / ``n_nuis_right`` count nuisance variables *excluding*
    the intercept, which is always added to both sides.  ``df=None`` for the
    Student distribution and ``n_obs=None`` mark sweep scenarios that must
    be expanded into concrete variants before running.
    """

    scenario_id: str = ""
    n_obs: int | None = 100
    n_left: int = 16
    n_right: int = 20
    n_nuis_left: int = 0
    n_nuis_right: int = 0
    nuisance: str = "none"          # none | partial | bipartial
    pca: int | None = None
    distribution: str = "normal"    # normal | student | bernoulli
    df: float | None = None
    bernoulli_q: float = 0.20
    signal: str = "none"            # none | sparse | dense
    n_perms: int = 2000
    n_reps: int = 2000

    def __post_init__(self):
        if self.nuisance not in ("none", "partial", "bipartial"):
            raise InvalidOptions(f"unknown nuisance design {self.nuisance!r}")
        if self.distribution not in ("normal", "student", "bernoulli"):
            raise InvalidOptions(f"unknown distribution {self.distribution!r}")
        if self.signal not in ("none", "sparse", "dense"):
            raise InvalidOptions(f"unknown signal kind {self.signal!r}")


def _spec(scenario_id, **kw):
    return ScenarioSpec(scenario_id=scenario_id, **kw)


SCENARIOS = {
    "I": _spec("I"),
    "II": _spec("II", pca=10),
    "III": _spec("III", distribution="student"),
    "IV": _spec("IV", distribution="student", pca=10),
    "V": _spec("V", distribution="bernoulli"),
    "VI": _spec("VI", distribution="bernoulli", pca=10),
    "VII": _spec("VII", nuisance="partial", n_nuis_left=15, n_nuis_right=15),
    "VIII": _spec("VIII", nuisance="partial", n_nuis_left=15, n_nuis_right=15, pca=10),
    "IX": _spec("IX", nuisance="partial", n_nuis_left=15, n_nuis_right=15,
                distribution="student"),
    "X": _spec("X", nuisance="partial", n_nuis_left=15, n_nuis_right=15,
               distribution="student", pca=10),
    "XI": _spec("XI", nuisance="partial", n_nuis_left=15, n_nuis_right=15,
                distribution="bernoulli"),
    "XII": _spec("XII", nuisance="partial", n_nuis_left=15, n_nuis_right=15,
                 distribution="bernoulli", pca=10),
    "XIII": _spec("XIII", nuisance="bipartial", n_nuis_left=15, n_nuis_right=15),
    "XIV": _spec("XIV", nuisance="bipartial", n_nuis_left=15, n_nuis_right=15, pca=10),
    "XV": _spec("XV", nuisance="partial", n_nuis_left=20, n_nuis_right=20,
                n_obs=None, n_perms=1000, n_reps=1000),
    "XVI": _spec("XVI", nuisance="partial", n_nuis_left=20, n_nuis_right=20,
                 n_obs=None, pca=10, n_perms=1000, n_reps=1000),
    "XVII": _spec("XVII", signal="sparse"),
    "XVIII": _spec("XVIII", signal="dense"),
}


def get_scenario(scenario_id):
    key = str(scenario_id).strip().upper()
    try:
        return SCENARIOS[key]
    except KeyError:
        raise UnknownScenario(
            f"unknown scenario {scenario_id!r}; known: {', '.join(SCENARIOS)}"
        ) from None


def expand_scenario(spec):
    """Concrete variants of a spec (degrees-of-freedom / sample-size sweeps)."""
    out = [spec]
    if spec.distribution == "student" and spec.df is None:
        out = [replace(s, df=float(nu)) for s in out for nu in STUDENT_DF_GRID]
    if spec.n_obs is None:
        out = [replace(s, n_obs=n) for s in out for n in SAMPLE_SIZE_GRID]
    return out


def _variant_label(spec):
    parts = []
    if spec.distribution == "student":
        parts.append(f"df={spec.df:g}")
    if spec.scenario_id in ("XV", "XVI") or spec.n_obs != 100:
        parts.append(f"n={spec.n_obs}")
    return ",".join(parts)


@dataclass(frozen=True)
class Strategy:
    """One cell of the methods grid evaluated by the studies."""

    stepwise: bool = True
    null_space: bool = True
    resid_method: str = "huh-jhun"   # simple | huh-jhun | theil
    stat: str = "wilks"              # wilks | roy
    correction: str = "closure"      # unc | closure | maxdist

    def __post_init__(self):
        if self.resid_method not in ("simple", "huh-jhun", "theil"):
            raise InvalidOptions(f"unknown residualization {self.resid_method!r}")
        if self.correction not in ("unc", "closure", "maxdist"):
            raise InvalidOptions(f"unknown correction {self.correction!r}")


def gen_scenario_data(spec, seed):
    """Synthetic data for one realization: returns ``(y, x, z, w)``.

    Cells of ``y`` and ``x`` are independent draws from the scenario
    distribution (Student draws are deliberately not variance-standardized;
    the point is raw kurtosis).  Nuisance columns are standard normal with a
    leading intercept column; ``w`` is None except for bipartial designs.
    Signal adds shared latent factors: one strong factor on the first column
    pair (sparse) or ``min(P, Q) // 2`` weaker ones on distinct column pairs
    (dense).  Draw order is fixed: y, x, z, w, factors.
    """
    if spec.n_obs is None or (spec.distribution == "student" and spec.df is None):
        raise InvalidOptions("sweep scenario must be expanded before data generation")
    rng = np.random.default_rng(seed)
    n = spec.n_obs

    def draw(rows, cols):
        if spec.distribution == "normal":
            return rng.standard_normal((rows, cols))
        if spec.distribution == "student":
            return rng.standard_t(spec.df, size=(rows, cols))
        return (rng.random((rows, cols)) < spec.bernoulli_q).astype(np.float64)

    y = draw(n, spec.n_left)
    x = draw(n, spec.n_right)

    intercept = np.ones((n, 1))
    z = np.hstack([intercept, rng.standard_normal((n, spec.n_nuis_left))]) \
        if spec.nuisance != "none" else intercept
    w = None
    if spec.nuisance == "bipartial":
        w = np.hstack([intercept, rng.standard_normal((n, spec.n_nuis_right))])

    if spec.signal == "sparse":
        f = rng.standard_normal(n)
        y[:, 0] += SPARSE_AMPLITUDE * f
        x[:, 0] += SPARSE_AMPLITUDE * f
    elif spec.signal == "dense":
        for i in range(min(spec.n_left, spec.n_right) // 2):
            f = rng.standard_normal(n)
            y[:, i] += DENSE_AMPLITUDE * f
            x[:, i] += DENSE_AMPLITUDE * f
    return y, x, z, w


def apply_pca(m, n_components):
    """First principal-component score columns of a centered/residualized matrix."""
    m = np.asarray(m, dtype=np.float64)
    c = int(n_components)
    if c < 1 or c > min(m.shape):
        raise TooManyComponents(
            f"cannot keep {n_components} components of a {m.shape[0]}x{m.shape[1]} matrix"
        )
    left, d, _ = linalg.svd(m)
    return left[:, :c] * d[:c]


def wilson_ci(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise InvalidOptions("need at least one trial")
    z = 1.959964 if level == 0.95 else float(_norm.ppf(0.5 + level / 2.0))
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


@dataclass(frozen=True)
class ErrorRateReport:
    """Aggregated rejection rates with Wilson confidence intervals."""

    spec: ScenarioSpec
    strategy: Strategy
    master_seed: int
    n_reps: int
    n_perms: int
    alpha: float
    rejections: np.ndarray          # (K,) counts
    fwer_count: int

    @property
    def n_components(self):
        return self.rejections.shape[0]

    def rate(self, k):
        """Rejection rate and CI for 1-based component k."""
        c = int(self.rejections[k - 1])
        lo, hi = wilson_ci(c, self.n_reps)
        return c / self.n_reps, lo, hi

    @property
    def fwer(self):
        lo, hi = wilson_ci(self.fwer_count, self.n_reps)
        return self.fwer_count / self.n_reps, lo, hi

    def config_items(self):
        s, t = self.spec, self.strategy
        return [
            ("scenario", s.scenario_id or "custom"),
            ("variant", _variant_label(s)),
            ("n", s.n_obs), ("p", s.n_left), ("q", s.n_right),
            ("nuisance", s.nuisance),
            ("r", s.n_nuis_left), ("s", s.n_nuis_right),
            ("pca", s.pca if s.pca else "none"),
            ("distribution", s.distribution),
            ("df", "" if s.df is None else f"{s.df:g}"),
            ("bernoulli_q", f"{s.bernoulli_q:g}"),
            ("signal", s.signal),
            ("stepwise", t.stepwise), ("null_space", t.null_space),
            ("resid_method", t.resid_method), ("stat", t.stat),
            ("correction", t.correction),
            ("perms", self.n_perms), ("reps", self.n_reps),
            ("alpha", f"{self.alpha:g}"), ("seed", self.master_seed),
            ("sparse_amplitude", f"{SPARSE_AMPLITUDE:.17g}"),
            ("dense_amplitude", f"{DENSE_AMPLITUDE:.17g}"),
        ]

    def to_csv(self):
        lines = [f"# {key}={value}" for key, value in self.config_items()]
        lines.append("k,rejections,rate,ci_lo,ci_hi")
        for k in range(1, self.n_components + 1):
            rate, lo, hi = self.rate(k)
            lines.append(f"{k},{int(self.rejections[k - 1])},{rate:.17g},{lo:.17g},{hi:.17g}")
        rate, lo, hi = self.fwer
        lines.append(f"fwer,{self.fwer_count},{rate:.17g},{lo:.17g},{hi:.17g}")
        return "\n".join(lines) + "\n"

    def format_table(self):
        rows = [f"{'k':>6} {'rate %':>8} {'95% CI':>18}"]
        for k in range(1, self.n_components + 1):
            rate, lo, hi = self.rate(k)
            rows.append(f"{k:>6} {100 * rate:>8.2f} ({100 * lo:>6.2f}, {100 * hi:>6.2f})")
        rate, lo, hi = self.fwer
        rows.append(f"{'fwer':>6} {100 * rate:>8.2f} ({100 * lo:>6.2f}, {100 * hi:>6.2f})")
        return "\n".join(rows)


def _rep_rejections(spec, strategy, master_seed, rep, n_perms, alpha):
    """Rejection indicators for one realization (runs inside workers)."""
    data_seed = np.random.SeedSequence([int(master_seed), rep, 0])
    perm_seed = np.random.SeedSequence([int(master_seed), rep, 1])
    y, x, z, w = gen_scenario_data(spec, data_seed)
    opts = InferenceOptions(
        stat=strategy.stat,
        n_perms=n_perms,
        seed=perm_seed,
        stepwise=strategy.stepwise,
        augment_null_space=strategy.null_space,
        compute_max_pvalues=strategy.correction == "maxdist",
        resid_method=strategy.resid_method,
        pca_y=spec.pca,
        pca_x=spec.pca,
    )
    res = permcca(y, x, z, w, partial=spec.nuisance != "bipartial", opts=opts)
    p = {"unc": res.p_unc, "closure": res.p_fwer, "maxdist": res.p_max}[strategy.correction]
    return p <= alpha


def run_scenario(spec, strategy, master_seed, n_reps=None, n_perms=None,
                 workers=1, alpha=0.05):
    """Run one concrete scenario cell and aggregate the error/power rates.

    ``n_reps`` / ``n_perms`` override the spec (the spec carries paper
    scale).  Realizations are independent and seeded by index, so any
    ``workers`` count produces the identical report.
    """
    if spec.n_obs is None or (spec.distribution == "student" and spec.df is None):
        raise InvalidOptions("sweep scenario must be expanded before running")
    reps = int(n_reps if n_reps is not None else spec.n_reps)
    perms = int(n_perms if n_perms is not None else spec.n_perms)

    args = [(spec, strategy, master_seed, rep, perms, alpha) for rep in range(reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(_rep_star, args, chunksize=max(1, reps // (8 * workers))))
    else:
        flags = [_rep_rejections(*a) for a in args]

    flags = np.asarray(flags, dtype=bool)
    return ErrorRateReport(
        spec=spec,
        strategy=strategy,
        master_seed=int(master_seed),
        n_reps=reps,
        n_perms=perms,
        alpha=alpha,
        rejections=flags.sum(axis=0).astype(np.int64),
        fwer_count=int(flags.any(axis=1).sum()),
    )


def _rep_star(args):
    return _rep_rejections(*args)
