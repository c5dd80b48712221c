"""
Finite-difference verification of every analytic gradient.

Each component draws small random instances, evaluates its analytic gradient
and compares it with central differences (h = 1e-4, float64):

    rel = max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12)

Instances lying within reach of a kink (a near-tie between the best two
windows of a shapelet, or a covariance entry near 0 under |.|) are redrawn;
the subgradient there is not what finite differences measure.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from logic.encoder import EncoderConfig, ShapeletTransformer, init_params
from logic.errors import ConfigError, GradientCheckError
from logic.normalization import BatchNormState, batchnorm
from logic.objective import AccumulatorBank, LossConfig, alignment_terms, info_nce_batch, total_loss
from logic.train import objective_and_grad

STEP = 1e-4
TOLERANCE = 1e-4
DEFAULT_INSTANCES = 20
MAX_REDRAWS = 200

# Minimum distance from a kink for an instance to be used
SELECTION_MARGIN = 1e-2
COVARIANCE_MARGIN = 1e-3


def numerical_grad(f, x, h=STEP):
    """Central differences of scalar f with respect to every entry of x"""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = f(x)
        flat[i] = orig - h
        minus = f(x)
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


class Redraw(Exception):
    """The drawn instance is too close to a non-differentiable point"""


def _encoder_margin(cache):
    return min(float(mc.margin.min()) for scale in cache.caches for mc in scale)


def _bank_margin(bank):
    smallest = np.inf
    for acc in bank.accumulators.values():
        if acc.c:
            upper = np.abs(acc.c_hat[np.triu_indices(acc.n_features, k=1)])
            if upper.size:
                smallest = min(smallest, float(upper.min()))
    return smallest


def _clone_bank(bank):
    clone = AccumulatorBank(bank.n_scales, bank.block_size, bank.alpha, bank.n_views)
    for key, acc in bank.accumulators.items():
        clone.accumulators[key].c_accu = acc.c_accu.copy()
        clone.accumulators[key].c = acc.c
    return clone


def _committed_margin(zp, zpp, bank, cfg):
    """Smallest |off-diagonal C_hat| once this batch is absorbed"""
    scratch = _clone_bank(bank)
    alignment_terms(zp, zpp, scratch, cfg, commit=True)
    return _bank_margin(scratch)


def _random_views(rng, b=4, f=6):
    return rng.standard_normal((b, f)), rng.standard_normal((b, f))


def _random_encoder(rng, measures, max_scales=3, max_v=2):
    d = int(rng.integers(1, 4))
    t = int(rng.integers(12, 25))
    r = int(rng.integers(1, max_scales + 1))
    v = int(rng.integers(1, max_v + 1))
    cfg = EncoderConfig(n_scales=r, measures=measures, repr_dim=r * len(measures) * v,
                        l_min_frac=0.2, l_max_frac=0.6, series_length=t, n_dims=d).validate()
    params = init_params(cfg, rng)
    return cfg, params, rng.standard_normal((4, d, t))


# ------------------------------------------------------------ components --

def _check_encoder(measure):
    def check(rng):
        cfg, params, batch = _random_encoder(rng, (measure,))
        transformer = ShapeletTransformer(cfg, params)
        _, cache = transformer.forward(batch)
        if _encoder_margin(cache) < SELECTION_MARGIN:
            raise Redraw()
        upstream = rng.standard_normal((len(batch), cfg.repr_dim))
        analytic = transformer.backward(cache, upstream).flatten()

        def f(vector):
            return float(np.sum(upstream * ShapeletTransformer(cfg, params.unflatten(vector)).transform(batch)))

        return analytic, numerical_grad(f, params.flatten())
    return check


def _check_info_nce(rng):
    anchors, candidates = _random_views(rng)
    tau = 0.1
    _, d_a, d_c = info_nce_batch(anchors, candidates, tau)
    numeric_a = numerical_grad(lambda a: info_nce_batch(a, candidates, tau)[0], anchors)
    numeric_c = numerical_grad(lambda c: info_nce_batch(anchors, c, tau)[0], candidates)
    return np.concatenate([d_a.ravel(), d_c.ravel()]), np.concatenate([numeric_a.ravel(), numeric_c.ravel()])


def _contrastive_check(only, symmetric=False):
    def check(rng):
        n_scales = int(rng.integers(1, 4))
        zp, zpp = _random_views(rng, f=2 * n_scales)
        cfg = LossConfig(tau=0.1, symmetric=symmetric, disable_alignment=True,
                         disable_coarse=only == "fine", disable_fine=only == "coarse")
        bank = AccumulatorBank(n_scales, 2)
        _, gp, gpp = total_loss(zp, zpp, bank, cfg, commit=False)
        numeric_p = numerical_grad(lambda z: total_loss(z, zpp, bank, cfg, commit=False)[0].total, zp)
        numeric_pp = numerical_grad(lambda z: total_loss(zp, z, bank, cfg, commit=False)[0].total, zpp)
        return np.concatenate([gp.ravel(), gpp.ravel()]), np.concatenate([numeric_p.ravel(), numeric_pp.ravel()])
    return check


def _warm_bank(rng, n_scales, block, alpha, b=4):
    """Accumulators holding one earlier batch of history"""
    bank = AccumulatorBank(n_scales, block, alpha)
    for acc in bank.accumulators.values():
        acc.update(rng.standard_normal((b, block)))
    return bank


def _check_alignment(rng):
    n_scales, block = 2, 3
    zp, zpp = _random_views(rng, f=n_scales * block)
    cfg = LossConfig(tau=0.1, lam=1.0, lambda_s=1.0)
    bank = _warm_bank(rng, n_scales, block, cfg.alpha)
    if _committed_margin(zp, zpp, bank, cfg) < COVARIANCE_MARGIN:
        raise Redraw()
    *_, gp, gpp = alignment_terms(zp, zpp, bank, cfg, commit=False)
    numeric_p = numerical_grad(lambda z: alignment_terms(z, zpp, bank, cfg, commit=False)[2], zp)
    numeric_pp = numerical_grad(lambda z: alignment_terms(zp, z, bank, cfg, commit=False)[2], zpp)
    return np.concatenate([gp.ravel(), gpp.ravel()]), np.concatenate([numeric_p.ravel(), numeric_pp.ravel()])


def _check_total(rng):
    n_scales, block = 2, 3
    zp, zpp = _random_views(rng, f=n_scales * block)
    cfg = LossConfig(tau=0.1, lam=0.5, lambda_s=1.0)
    bank = _warm_bank(rng, n_scales, block, cfg.alpha)
    if _committed_margin(zp, zpp, bank, cfg) < COVARIANCE_MARGIN:
        raise Redraw()
    _, gp, gpp = total_loss(zp, zpp, bank, cfg, commit=False)
    numeric_p = numerical_grad(lambda z: total_loss(z, zpp, bank, cfg, commit=False)[0].total, zp)
    numeric_pp = numerical_grad(lambda z: total_loss(zp, z, bank, cfg, commit=False)[0].total, zpp)
    return np.concatenate([gp.ravel(), gpp.ravel()]), np.concatenate([numeric_p.ravel(), numeric_pp.ravel()])


def _check_full_objective(rng):
    """Total loss through batchnorm and the encoder, w.r.t. every shapelet"""
    cfg, params, xp = _random_encoder(rng, ("euclidean", "cosine", "cross_correlation"))
    xpp = xp + 0.3 * rng.standard_normal(xp.shape)
    loss_cfg = LossConfig(tau=0.1, lam=0.5, lambda_s=1.0)
    transformer = ShapeletTransformer(cfg, params)
    bank = _warm_bank(rng, cfg.n_scales, cfg.block_size, loss_cfg.alpha)
    bn_state = BatchNormState(cfg.repr_dim)

    _, cache_p = transformer.forward(xp)
    _, cache_pp = transformer.forward(xpp)
    if min(_encoder_margin(cache_p), _encoder_margin(cache_pp)) < SELECTION_MARGIN:
        raise Redraw()
    zp = batchnorm(transformer.transform(xp), bn_state, update=False)[0]
    zpp = batchnorm(transformer.transform(xpp), bn_state, update=False)[0]
    if _committed_margin(zp, zpp, bank, loss_cfg) < COVARIANCE_MARGIN:
        raise Redraw()

    _, grads = objective_and_grad(transformer, xp, xpp, bn_state, bank, loss_cfg, commit=False)

    def f(vector):
        candidate = ShapeletTransformer(cfg, params.unflatten(vector))
        zp = batchnorm(candidate.transform(xp), bn_state, update=False)[0]
        zpp = batchnorm(candidate.transform(xpp), bn_state, update=False)[0]
        return total_loss(zp, zpp, bank, loss_cfg, commit=False)[0].total

    return grads.flatten(), numerical_grad(f, params.flatten())


COMPONENTS: Dict[str, Callable] = {
    "encoder.euclidean": _check_encoder("euclidean"),
    "encoder.cosine": _check_encoder("cosine"),
    "encoder.cross_correlation": _check_encoder("cross_correlation"),
    "objective.info_nce": _check_info_nce,
    "objective.coarse": _contrastive_check("coarse"),
    "objective.fine": _contrastive_check("fine"),
    "objective.symmetric": _contrastive_check("both", symmetric=True),
    "objective.alignment": _check_alignment,
    "objective.total": _check_total,
    "objective.full_shapelets": _check_full_objective,
}


@dataclass
class ComponentResult:
    name: str
    max_relative_error: float
    instances: int
    redraws: int
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class GradcheckReport:
    seed: int
    tolerance: float
    results: List[ComponentResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r.name for r in self.results if not r.passed]

    def to_dict(self):
        return {"seed": self.seed, "tolerance": self.tolerance, "passed": self.passed,
                "components": [r.to_dict() for r in self.results]}

    def raise_on_failure(self):
        if not self.passed:
            raise GradientCheckError(f"gradient check failed for: {', '.join(self.failures)}")


def check_component(name, seed=0, instances=DEFAULT_INSTANCES, tolerance=TOLERANCE, inject_fault=False):
    """Worst relative error of one component over `instances` draws"""
    if name not in COMPONENTS:
        raise ConfigError(f"unknown gradcheck component {name!r}; choose from {sorted(COMPONENTS)}")
    rng = np.random.default_rng([seed, sorted(COMPONENTS).index(name)])
    worst, done, redraws = 0.0, 0, 0
    while done < instances:
        try:
            analytic, numeric = COMPONENTS[name](rng)
        except Redraw:
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise GradientCheckError(f"{name}: could not draw a kink-free instance")
            continue
        if inject_fault:
            analytic = -analytic
        worst = max(worst, relative_error(analytic, numeric))
        done += 1
    return ComponentResult(name, worst, instances, redraws, worst < tolerance)


def run_gradcheck(seed=0, instances=DEFAULT_INSTANCES, tolerance=TOLERANCE,
                  components=None, inject_fault: Optional[str] = None, app=None):
    """Check every (or the named) component; `inject_fault` negates the
    analytic gradient of one component"""
    names = list(COMPONENTS) if components is None else list(components)
    if inject_fault is not None and inject_fault not in COMPONENTS:
        raise ConfigError(f"unknown gradcheck component {inject_fault!r}")
    report = GradcheckReport(seed=seed, tolerance=tolerance)
    for name in names:
        result = check_component(name, seed, instances, tolerance, inject_fault=name == inject_fault)
        report.results.append(result)
        if app is not None:
            marker = "✅" if result.passed else "❌"
            app.log_message(f"{marker} {name}: max relative error {result.max_relative_error:.3e} "
                            f"over {result.instances} instances")
    return report
