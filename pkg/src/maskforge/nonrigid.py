"""Non-rigid mask editing: a control-grid deformation generator trained
adversarially against a structural-graph discriminator.

The generator is a coarse grid of (dx, dy) displacements, bilinearly
upsampled and applied as a backward warp. The discriminator is a small
perceptron over graph feature vectors, trained by exact backprop; the
generator's parameters (at most grid_w x grid_h x 2 of them) are updated
by simultaneous-perturbation finite differences on the total loss, since
thresholded warps and graph extraction are not differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np

from .edges import canny
from .errors import DimensionMismatchError, MaskForgeError
from .graphs import (FEATURE_DIM, build_graph, extract_keypoints, graph_features,
                     structure_loss)
from .masks import TopologySignature, as_mask, topology
from .warp import warp_by_displacement


@dataclass
class DeformationField:
    """Control grid of forward displacements in pixels; bilinearly upsampled
    to full resolution. Displacement magnitudes are norm-clamped to `cap`."""

    displacements: np.ndarray  # (grid_h, grid_w, 2) -> (dx, dy)
    cap: float

    @property
    def grid_h(self) -> int:
        return self.displacements.shape[0]

    @property
    def grid_w(self) -> int:
        return self.displacements.shape[1]

    def clamped(self) -> "DeformationField":
        """Copy with per-control-point Euclidean norms clamped to cap."""
        d = self.displacements.astype(np.float64).copy()
        norms = np.hypot(d[..., 0], d[..., 1])
        over = norms > self.cap
        if over.any():
            scale = np.ones_like(norms)
            scale[over] = self.cap / norms[over]
            d *= scale[..., None]
        return DeformationField(d, self.cap)

    def scaled(self, factor: float) -> "DeformationField":
        return DeformationField(self.displacements * factor, self.cap)

    def dense(self, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
        """Upsample to per-pixel (dx, dy) grids of shape (h, w)."""
        u0, u1, fu, v0, v1, fv = _dense_basis(self.grid_h, self.grid_w, h, w)
        out = []
        for c in (0, 1):
            g = self.displacements[..., c]
            top = g[v0, u0] * (1 - fu) + g[v0, u1] * fu
            bot = g[v1, u0] * (1 - fu) + g[v1, u1] * fu
            out.append(top * (1 - fv) + bot * fv)
        return out[0], out[1]

    def to_json_dict(self) -> dict:
        return {"cap": self.cap, "grid_h": self.grid_h, "grid_w": self.grid_w,
                "displacements": self.displacements.ravel().tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "DeformationField":
        arr = np.asarray(d["displacements"], dtype=np.float64).reshape(
            d["grid_h"], d["grid_w"], 2)
        return cls(arr, float(d["cap"]))


@lru_cache(maxsize=16)
def _dense_basis(gh: int, gw: int, h: int, w: int):
    """Field-independent bilinear upsampling indices for a control grid."""
    ys, xs = np.mgrid[0:h, 0:w]
    u = xs * ((gw - 1) / max(w - 1, 1))
    v = ys * ((gh - 1) / max(h - 1, 1))
    u0 = np.minimum(np.floor(u).astype(int), gw - 2) if gw > 1 else np.zeros_like(xs)
    v0 = np.minimum(np.floor(v).astype(int), gh - 2) if gh > 1 else np.zeros_like(ys)
    fu = (u - u0) if gw > 1 else np.zeros_like(u, dtype=float)
    fv = (v - v0) if gh > 1 else np.zeros_like(v, dtype=float)
    u1 = np.minimum(u0 + 1, gw - 1)
    v1 = np.minimum(v0 + 1, gh - 1)
    for arr in (u0, u1, fu, v0, v1, fv):
        arr.setflags(write=False)
    return u0, u1, fu, v0, v1, fv


def zero_field(grid_h: int, grid_w: int, cap: float) -> DeformationField:
    return DeformationField(np.zeros((grid_h, grid_w, 2)), cap)


def default_cap(h: int, w: int, frac: float = 0.15) -> float:
    return frac * min(h, w)


def apply_deformation(mask: np.ndarray, field: DeformationField) -> np.ndarray:
    """Backward-warp a mask by the upsampled displacement field."""
    mask = as_mask(mask)
    h, w = mask.shape
    clamped = field.clamped()
    dx, dy = clamped.dense(h, w)
    warped = warp_by_displacement(mask.astype(np.float64), dx, dy, fill=0.0)
    return (warped > 0.5).astype(np.uint8)


def content_loss(g: np.ndarray, s: np.ndarray) -> float:
    """Mean per-pixel absolute difference between two masks, in [0, 1]."""
    g = as_mask(g)
    s = as_mask(s)
    if g.shape != s.shape:
        raise DimensionMismatchError(f"mask shapes differ: {g.shape} vs {s.shape}")
    return float(np.abs(g.astype(np.int16) - s.astype(np.int16)).mean())


# ---------------------------------------------------------------------------
# discriminator


@dataclass
class DiscriminatorState:
    """35 -> hidden -> 1 perceptron, tanh hidden and sigmoid output."""

    w1: np.ndarray  # (FEATURE_DIM, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "DiscriminatorState":
        return DiscriminatorState(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)


def init_discriminator(seed: int, hidden: int = 32, scale: float = 0.5) -> DiscriminatorState:
    rng = np.random.default_rng(seed)
    return DiscriminatorState(
        w1=rng.normal(0.0, scale, size=(FEATURE_DIM, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, scale, size=hidden),
        b2=0.0,
    )


def _check_features(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != FEATURE_DIM:
        raise DimensionMismatchError(f"feature dimension {f.shape[-1]} != {FEATURE_DIM}")
    return f.reshape(-1, FEATURE_DIM)


def _logits(d: DiscriminatorState, feats: np.ndarray) -> np.ndarray:
    hidden = np.tanh(feats @ d.w1 + d.b1)
    return hidden @ d.w2 + d.b2


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500))),
                    np.exp(np.clip(z, -500, 500)) / (1.0 + np.exp(np.clip(z, -500, 500))))


def _log_sigmoid(z):
    # log sigma(z) = -softplus(-z), numerically stable
    return -np.logaddexp(0.0, -z)


def disc_forward(d: DiscriminatorState, f: np.ndarray) -> float:
    """sigmoid(w2 . tanh(w1^T f + b1) + b2) for a single feature vector."""
    feats = _check_features(f)
    if feats.shape[0] != 1:
        raise MaskForgeError("disc_forward takes one feature vector; use disc_forward_batch")
    return float(_sigmoid(_logits(d, feats))[0])


def disc_forward_batch(d: DiscriminatorState, feats: np.ndarray) -> np.ndarray:
    return _sigmoid(_logits(d, _check_features(feats)))


def disc_loss(d: DiscriminatorState, real_batch, gen_batch) -> float:
    """mean log D(real) + mean log(1 - D(gen)); the discriminator ascends this."""
    real = _check_features(np.atleast_2d(real_batch))
    gen = _check_features(np.atleast_2d(gen_batch))
    if real.shape[0] == 0 or gen.shape[0] == 0:
        raise MaskForgeError("disc_loss requires non-empty batches")
    zr = _logits(d, real)
    zg = _logits(d, gen)
    return float(_log_sigmoid(zr).mean() + _log_sigmoid(-zg).mean())


def gen_adversarial_loss(d: DiscriminatorState, gen_batch) -> float:
    """mean log(1 - D(gen)); the generator descends the total containing it."""
    gen = _check_features(np.atleast_2d(gen_batch))
    if gen.shape[0] == 0:
        raise MaskForgeError("gen_adversarial_loss requires a non-empty batch")
    return float(_log_sigmoid(-_logits(d, gen)).mean())


def disc_gradients(d: DiscriminatorState, real_batch, gen_batch):
    """Exact gradients of disc_loss with respect to (w1, b1, w2, b2)."""
    real = _check_features(np.atleast_2d(real_batch))
    gen = _check_features(np.atleast_2d(gen_batch))
    gw1 = np.zeros_like(d.w1)
    gb1 = np.zeros_like(d.b1)
    gw2 = np.zeros_like(d.w2)
    gb2 = 0.0
    for feats, sign in ((real, 1.0), (gen, -1.0)):
        n = feats.shape[0]
        hidden = np.tanh(feats @ d.w1 + d.b1)      # (n, h)
        z = hidden @ d.w2 + d.b2                   # (n,)
        sig = _sigmoid(z)
        # d/dz of log sigma(z) is (1 - sigma); of log(1 - sigma) is -sigma
        dz = (1.0 - sig) if sign > 0 else -sig
        dz = dz / n
        gw2 += hidden.T @ dz
        gb2 += dz.sum()
        dh = np.outer(dz, d.w2) * (1.0 - hidden ** 2)  # (n, h)
        gw1 += feats.T @ dh
        gb1 += dh.sum(axis=0)
    return gw1, gb1, gw2, float(gb2)


def disc_step(d: DiscriminatorState, real_batch, gen_batch, lr: float) -> DiscriminatorState:
    """One gradient-ascent step on disc_loss; returns a new state."""
    gw1, gb1, gw2, gb2 = disc_gradients(d, real_batch, gen_batch)
    return DiscriminatorState(d.w1 + lr * gw1, d.b1 + lr * gb1,
                              d.w2 + lr * gw2, d.b2 + lr * gb2)


# ---------------------------------------------------------------------------
# losses and topology projection


@dataclass(frozen=True)
class LossReport:
    gan: float
    content: float
    structure: float
    total: float
    lambda1: float
    lambda2: float


def total_loss(gan: float, content: float, structure: float,
               lambda1: float = 0.8, lambda2: float = 0.5) -> LossReport:
    """Combine the three loss terms: total = gan + l1*content + l2*structure."""
    if lambda1 < 0 or lambda2 < 0:
        raise MaskForgeError("balancing factors must be non-negative")
    return LossReport(gan=gan, content=content, structure=structure,
                      total=gan + lambda1 * content + lambda2 * structure,
                      lambda1=lambda1, lambda2=lambda2)


def _project_with_factor(source: np.ndarray, edited: np.ndarray,
                         field: DeformationField, max_halvings: int = 8
                         ) -> tuple[np.ndarray, float]:
    topo_src = topology(source)
    if topology(edited) == topo_src:
        return edited, 1.0
    factor = 1.0
    for _ in range(max_halvings):
        factor *= 0.5
        candidate = apply_deformation(source, field.scaled(factor))
        if topology(candidate) == topo_src:
            return candidate, factor
    return source.copy(), 0.0


def project_topology(source: np.ndarray, edited: np.ndarray,
                     field: DeformationField, max_halvings: int = 8) -> np.ndarray:
    """Return `edited` if it preserves the source topology; otherwise halve
    the field up to `max_halvings` times and return the first match, falling
    back to the source itself."""
    source = as_mask(source)
    if source.max() == 0:
        raise MaskForgeError("source mask is empty")
    out, _ = _project_with_factor(source, as_mask(edited), field, max_halvings)
    return out


# ---------------------------------------------------------------------------
# prompt-seeded deformation templates


def _template_pattern(name: str, gh: int, gw: int) -> np.ndarray:
    v, u = np.mgrid[0:gh, 0:gw]
    u = 2.0 * u / max(gw - 1, 1) - 1.0   # [-1, 1]
    v = 2.0 * v / max(gh - 1, 1) - 1.0
    d = np.zeros((gh, gw, 2))
    if name == "bulge":
        r2 = u * u + v * v
        d[..., 0] = u * np.exp(-r2) * 1.4
        d[..., 1] = v * np.exp(-r2) * 1.4
    elif name == "pinch":
        r2 = u * u + v * v
        d[..., 0] = -u * np.exp(-r2) * 1.4
        d[..., 1] = -v * np.exp(-r2) * 1.4
    elif name == "rounder":
        d[..., 0] = -(u ** 3)
        d[..., 1] = -(v ** 3)
    elif name == "square":
        d[..., 0] = u ** 3
        d[..., 1] = v ** 3
    elif name == "wave":
        d[..., 0] = np.sin(np.pi * v)
        d[..., 1] = 0.0
    elif name == "stretch":
        d[..., 0] = 0.9 * u
        d[..., 1] = -0.6 * v
    elif name == "twist":
        d[..., 0] = -v * 0.9
        d[..., 1] = u * 0.9
    else:
        raise MaskForgeError(f"unknown template {name!r}")
    return d


TEMPLATE_KEYWORDS = ("rounder", "square", "bulge", "pinch", "wave", "stretch", "twist")


def template_from_prompt(prompt: str) -> str | None:
    low = prompt.lower()
    for key in TEMPLATE_KEYWORDS:
        if key in low:
            return key
    return None


def seed_field(prompt: str, grid_h: int, grid_w: int, cap: float,
               amplitude: float, rng: np.random.Generator) -> DeformationField:
    """Initial deformation for one variant: a prompt-selected template plus
    per-variant jitter, clamped to the cap."""
    name = template_from_prompt(prompt)
    if name is None:
        base = rng.normal(0.0, 0.6, size=(grid_h, grid_w, 2))
    else:
        base = _template_pattern(name, grid_h, grid_w)
    jitter = rng.normal(0.0, 0.25, size=(grid_h, grid_w, 2))
    return DeformationField((base + jitter) * amplitude, cap).clamped()


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.8
    lambda2: float = 0.5
    k_d: int = 2
    disc_lr: float = 1e-2
    disc_warmup_steps: int = 40
    gen_lr: float = 0.2
    grid_w: int = 5
    grid_h: int = 5
    displacement_cap_frac: float = 0.15
    variants_per_source: int = 5
    gen_steps: int = 200
    probe_pairs: int = 4
    spsa_delta: float = 0.5
    n_v: int = 64
    hidden: int = 32
    disc_init_scale: float = 0.1
    template_amplitude_frac: float = 0.6
    canny_low: float = 0.1
    canny_high: float = 0.3
    canny_sigma: float = 1.0
    dp_tolerance: float = 1.0
    seed: int = 0

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class GeneratorState:
    field: DeformationField
    noise_seed: int
    prompt: str
    step: int
    source_index: int
    variant: int


@dataclass(frozen=True)
class TraceRow:
    step: int
    source_index: int
    variant: int
    report: LossReport


@dataclass
class TrainResult:
    generators: list[GeneratorState]
    discriminator: DiscriminatorState
    trace: list[TraceRow]
    emitted: list[tuple[int, int, np.ndarray]]  # (source_index, variant, mask)


class _SourceContext:
    """Cached per-source data: graph, allocation, features, topology."""

    def __init__(self, mask: np.ndarray, cfg: TrainConfig):
        self.mask = as_mask(mask)
        if self.mask.max() == 0:
            raise MaskForgeError("source mask is empty")
        self.topo = topology(self.mask)
        edge_map = canny(self.mask, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
        points = extract_keypoints(edge_map, cfg.n_v, dp_tolerance=cfg.dp_tolerance)
        self.allocation = [len(p) for p in points]
        self.graph = build_graph(points)
        self.features = graph_features(self.graph, self.topo)
        self.cap = default_cap(*self.mask.shape, frac=cfg.displacement_cap_frac)


def _candidate_eval(ctx: _SourceContext, field: DeformationField, disc: DiscriminatorState,
                    real_term: float, cfg: TrainConfig
                    ) -> tuple[float, LossReport | None, np.ndarray | None]:
    """(total, report, features) of a candidate field; total = inf when the
    candidate breaks topology or graph correspondence.

    `real_term` is the mean log D(real) over the real batch, constant while
    the discriminator is frozen during a generator step.
    """
    edited = apply_deformation(ctx.mask, field)
    if edited.max() == 0 or topology(edited) != ctx.topo:
        return math.inf, None, None
    edge_map = canny(edited, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
    try:
        points = extract_keypoints(edge_map, cfg.n_v, dp_tolerance=cfg.dp_tolerance,
                                   allocation=ctx.allocation)
        graph = build_graph(points)
        s_loss = structure_loss(graph, ctx.graph)
    except MaskForgeError:
        return math.inf, None, None
    feats = graph_features(graph, ctx.topo)
    gan = real_term + gen_adversarial_loss(disc, feats)
    c_loss = content_loss(edited, ctx.mask)
    report = total_loss(gan, c_loss, s_loss, cfg.lambda1, cfg.lambda2)
    return report.total, report, feats


def train(sources: list[np.ndarray], prompts: list[str], cfg: TrainConfig) -> TrainResult:
    """Alternating adversarial optimization over all (source, variant) pairs.

    Each global step runs k_d discriminator ascent steps on the pooled real
    and generated graph features, then one SPSA descent step per deformation
    field. Updates that break topology or graph correspondence are rejected,
    and every emitted mask is topology-projected. Fully deterministic for a
    fixed config.
    """
    if not sources:
        raise MaskForgeError("need at least one source mask")
    if len(prompts) < len(sources):
        prompts = list(prompts) + [""] * (len(sources) - len(prompts))

    contexts = [_SourceContext(m, cfg) for m in sources]
    real_feats = np.stack([c.features for c in contexts])

    root = np.random.SeedSequence(cfg.seed)
    disc_seed, gen_seed = root.spawn(2)
    disc = init_discriminator(disc_seed.generate_state(1)[0], hidden=cfg.hidden,
                              scale=cfg.disc_init_scale)

    n_jobs = len(contexts) * cfg.variants_per_source
    job_rngs = [np.random.default_rng(s) for s in gen_seed.spawn(n_jobs)]
    jobs = []
    for si, ctx in enumerate(contexts):
        for v in range(cfg.variants_per_source):
            rng = job_rngs[si * cfg.variants_per_source + v]
            amplitude = cfg.template_amplitude_frac * ctx.cap
            field = seed_field(prompts[si], cfg.grid_h, cfg.grid_w, ctx.cap, amplitude, rng)
            # start from a topology-safe field
            edited = apply_deformation(ctx.mask, field)
            _, factor = _project_with_factor(ctx.mask, edited, field)
            field = field.scaled(factor)
            feats = _candidate_eval(ctx, field, disc, 0.0, cfg)[2]
            jobs.append({"si": si, "v": v, "rng": rng, "field": field,
                         "report": None, "feats": ctx.features if feats is None else feats})

    # let the discriminator see the initial populations before the generator moves
    warm_feats = np.stack([j["feats"] for j in jobs])
    for _ in range(cfg.disc_warmup_steps):
        disc = disc_step(disc, real_feats, warm_feats, cfg.disc_lr)

    trace: list[TraceRow] = []
    for step in range(1, cfg.gen_steps + 1):
        gen_feats = np.stack([j["feats"] for j in jobs])
        for _ in range(cfg.k_d):
            disc = disc_step(disc, real_feats, gen_feats, cfg.disc_lr)
        real_term = float(_log_sigmoid(_logits(disc, real_feats)).mean())

        for job in jobs:
            ctx = contexts[job["si"]]
            rng = job["rng"]
            theta = job["field"].displacements
            grad = np.zeros_like(theta)
            used = 0
            for _ in range(cfg.probe_pairs):
                delta = rng.choice((-1.0, 1.0), size=theta.shape)
                f_plus = DeformationField(theta + cfg.spsa_delta * delta, ctx.cap).clamped()
                f_minus = DeformationField(theta - cfg.spsa_delta * delta, ctx.cap).clamped()
                lp, _, _ = _candidate_eval(ctx, f_plus, disc, real_term, cfg)
                lm, _, _ = _candidate_eval(ctx, f_minus, disc, real_term, cfg)
                if math.isfinite(lp) and math.isfinite(lm):
                    grad += (lp - lm) / (2.0 * cfg.spsa_delta) * delta
                    used += 1
            if used > 0 and cfg.gen_lr > 0:
                new_field = DeformationField(theta - cfg.gen_lr * np.sign(grad), ctx.cap).clamped()
            else:
                new_field = job["field"]
            total, report, feats = _candidate_eval(ctx, new_field, disc, real_term, cfg)
            if not math.isfinite(total):
                # reject the update; fall back to the current field
                new_field = job["field"]
                total, report, feats = _candidate_eval(ctx, new_field, disc, real_term, cfg)
            if not math.isfinite(total):
                raise MaskForgeError(
                    f"non-finite loss for source {job['si']} variant {job['v']} at step {step}")
            job["field"] = new_field
            job["report"] = report
            job["feats"] = feats
            trace.append(TraceRow(step=step, source_index=job["si"], variant=job["v"],
                                  report=report))

    generators: list[GeneratorState] = []
    emitted: list[tuple[int, int, np.ndarray]] = []
    for job in jobs:
        ctx = contexts[job["si"]]
        edited = apply_deformation(ctx.mask, job["field"])
        final, factor = _project_with_factor(ctx.mask, edited, job["field"])
        final_field = job["field"].scaled(factor)
        generators.append(GeneratorState(field=final_field, noise_seed=cfg.seed,
                                         prompt=prompts[job["si"]], step=cfg.gen_steps,
                                         source_index=job["si"], variant=job["v"]))
        emitted.append((job["si"], job["v"], final))
    return TrainResult(generators=generators, discriminator=disc, trace=trace, emitted=emitted)


def trace_to_csv_rows(trace: list[TraceRow]) -> list[str]:
    """CSV lines (with header) for a loss trace."""
    rows = ["step,source,variant,gan,content,structure,total"]
    for r in trace:
        rows.append(f"{r.step},{r.source_index},{r.variant},"
                    f"{r.report.gan:.9g},{r.report.content:.9g},"
                    f"{r.report.structure:.9g},{r.report.total:.9g}")
    return rows
