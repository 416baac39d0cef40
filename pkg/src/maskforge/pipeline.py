"""Two-stage dataset pipeline: edit source masks, export condition bundles,
invoke a generation backend, and write a reproducible manifest.

Bundle layout under the output directory:
    <id>.mask.png, <id>.canny.png, <id>.prompt.txt, <id>.image.png
plus `manifest.json` binding every entry to its provenance, SHA-256
digests, and the full configuration snapshot. The "stub" backend paints
deterministic procedural textures; the "external" backend leaves entries
pending for an out-of-process adapter (see backend_status.json handshake).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .edges import canny
from .errors import EmptyResultError, MaskForgeError
from .masks import as_mask, load_mask, save_mask, topology
from .nonrigid import TrainConfig, train
from .rigid import RigidRanges, RigidTransform, rigid_edit, sample_rigid
from .schedule import NoiseSchedule, forward_noise, make_schedule

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
BACKEND_STATUS_NAME = "backend_status.json"


@dataclass(frozen=True)
class ConditionBundle:
    """Mask + Canny map + prompt triple conditioning image generation."""

    id: str
    mask: np.ndarray
    canny_map: np.ndarray
    prompt: str
    source_id: str
    edit: dict


@dataclass(frozen=True)
class PipelineConfig:
    source_mask_dir: str
    out_dir: str
    dataset_name: str = "maskforge-synthetic"
    prompt_dir: str | None = None
    default_prompt: str = "an object silhouette"
    seed: int = 0
    rigid_variants: int = 1
    nonrigid_variants: int = 1
    backend: str = "stub"  # stub | external | none
    canny_low: float = 0.1
    canny_high: float = 0.3
    canny_sigma: float = 1.0
    rigid_ranges: RigidRanges = dc_field(default_factory=RigidRanges)
    train: TrainConfig = dc_field(default_factory=TrainConfig)
    rigid_retries: int = 25

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["rigid_ranges"] = self.rigid_ranges.to_json_dict()
        d["train"] = self.train.to_json_dict()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "rigid_ranges" in d:
            d["rigid_ranges"] = RigidRanges.from_json_dict(d["rigid_ranges"])
        if "train" in d:
            d["train"] = TrainConfig.from_json_dict(d["train"])
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def export_conditions(mask: np.ndarray, prompt: str, out_dir, bundle_id: str,
                      source_id: str = "", edit: dict | None = None,
                      low: float = 0.1, high: float = 0.3, sigma: float = 1.0) -> ConditionBundle:
    """Write a bundle's mask, Canny map, and prompt files; returns the bundle."""
    mask = as_mask(mask)
    if mask.max() == 0:
        raise MaskForgeError(f"bundle {bundle_id}: mask is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    canny_map = canny(mask, low, high, sigma)
    save_mask(mask, out / f"{bundle_id}.mask.png")
    save_mask(canny_map, out / f"{bundle_id}.canny.png")
    (out / f"{bundle_id}.prompt.txt").write_bytes(prompt.encode("utf-8"))
    return ConditionBundle(id=bundle_id, mask=mask, canny_map=canny_map, prompt=prompt,
                           source_id=source_id, edit=edit or {})


def _texture(shape: tuple[int, int], schedule: NoiseSchedule, seed: int, t: int,
             smooth: float) -> np.ndarray:
    """Smooth [0,1] texture: a diffused base pattern, then normalized."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    base = 0.5 + 0.5 * np.sin(2.0 * np.pi * (xs + ys) / max(h, w))
    noisy = forward_noise(base, t, schedule, seed)
    tex = ndimage.gaussian_filter(noisy, smooth, mode="wrap")
    lo, hi = tex.min(), tex.max()
    if hi - lo < 1e-12:
        return np.zeros(shape)
    return (tex - lo) / (hi - lo)


def stub_generate(bundle: ConditionBundle, seed: int) -> np.ndarray:
    """Deterministic procedural RGB image for a bundle.

    Foreground and background carry distinct textures; the green channel
    encodes foreground likelihood, so thresholding it at 128 recovers the
    bundle mask exactly.
    """
    mask = bundle.mask.astype(bool)
    h, w = mask.shape
    mix = int.from_bytes(hashlib.sha256(bundle.id.encode()).digest()[:4], "big")
    rng_seed = (seed ^ mix) & 0x7FFFFFFF
    schedule = make_schedule(1000)
    tex_fg = _texture((h, w), schedule, rng_seed, t=300, smooth=2.0)
    tex_bg = _texture((h, w), schedule, rng_seed + 1, t=600, smooth=4.0)

    img = np.zeros((h, w, 3), dtype=np.uint8)
    r = np.where(mask, 150 + 70 * tex_fg, 40 + 60 * tex_bg)
    g = np.where(mask, 165 + 40 * tex_fg, 45 + 40 * tex_bg)
    b = np.where(mask, 90 + 50 * tex_fg, 120 + 70 * tex_bg)
    img[..., 0] = np.clip(r, 0, 255).astype(np.uint8)
    img[..., 1] = np.clip(g, 0, 255).astype(np.uint8)
    img[..., 2] = np.clip(b, 0, 255).astype(np.uint8)
    return img


def recover_mask_from_stub(image: np.ndarray) -> np.ndarray:
    """Invert the stub's foreground-likelihood channel back to a mask."""
    return (np.asarray(image)[..., 1] >= 128).astype(np.uint8)


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(image, mode="RGB").save(Path(path), format="PNG")


def _atomic_write_json(doc: dict, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _load_sources(config: PipelineConfig) -> list[tuple[str, np.ndarray, str]]:
    src_dir = Path(config.source_mask_dir)
    paths = sorted(p for p in src_dir.iterdir()
                   if p.suffix.lower() in (".png", ".pgm")) if src_dir.is_dir() else []
    if not paths:
        raise MaskForgeError(f"no source masks found in {src_dir}")
    out = []
    for p in paths:
        mask = load_mask(p)
        prompt = config.default_prompt
        if config.prompt_dir:
            cand = Path(config.prompt_dir) / f"{p.stem}.txt"
            if cand.is_file():
                prompt = cand.read_text(encoding="utf-8").strip()
        out.append((p.stem, mask, prompt))
    return out


def _rigid_entries(stem: str, mask: np.ndarray, prompt: str, config: PipelineConfig,
                   seed_rng: np.random.Generator) -> list[tuple[str, np.ndarray, dict]]:
    made = []
    for k in range(config.rigid_variants):
        edited = None
        params: dict = {}
        for _ in range(config.rigid_retries):
            t = sample_rigid(int(seed_rng.integers(0, 2**31 - 1)), config.rigid_ranges)
            try:
                edited = rigid_edit(mask, t)
                params = t.to_json_dict()
                break
            except EmptyResultError:
                continue
        if edited is None:
            raise MaskForgeError(f"{stem}: no in-frame rigid transform found "
                                 f"after {config.rigid_retries} attempts")
        made.append((f"{stem}_r{k:02d}", edited, {"kind": "rigid", "params": params}))
    return made


def run(config: PipelineConfig) -> dict:
    """Execute the two-stage pipeline and write `manifest.json` atomically.

    Returns the manifest document. Deterministic for a fixed config and the
    stub backend; backend failures degrade single entries to mask-only.
    """
    if config.backend not in ("stub", "external", "none"):
        raise MaskForgeError(f"unknown backend {config.backend!r}")
    sources = _load_sources(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(config.seed)
    rigid_seed, image_seed = root.spawn(2)
    rigid_rngs = [np.random.default_rng(s) for s in rigid_seed.spawn(len(sources))]
    image_seed_base = int(image_seed.generate_state(1)[0]) & 0x7FFFFFFF

    pending: list[tuple[str, str, np.ndarray, str, dict]] = []  # (id, source, mask, prompt, edit)
    for i, (stem, mask, prompt) in enumerate(sources):
        for bundle_id, edited, edit in _rigid_entries(stem, mask, prompt, config, rigid_rngs[i]):
            pending.append((bundle_id, stem, edited, prompt, edit))

    if config.nonrigid_variants > 0:
        train_cfg = TrainConfig.from_json_dict(
            {**config.train.to_json_dict(),
             "variants_per_source": config.nonrigid_variants,
             "seed": config.train.seed if config.train.seed != 0 else config.seed})
        result = train([m for _, m, _ in sources], [p for _, _, p in sources], train_cfg)
        for si, v, emitted in result.emitted:
            stem, _, prompt = sources[si]
            gen = result.generators[si * train_cfg.variants_per_source + v]
            edit = {"kind": "nonrigid", "params": gen.field.to_json_dict(),
                    "train_steps": gen.step}
            pending.append((f"{stem}_n{v:02d}", stem, emitted, prompt, edit))
        trace_path = out_dir / "loss_trace.csv"
        from .nonrigid import trace_to_csv_rows
        trace_path.write_text("\n".join(trace_to_csv_rows(result.trace)) + "\n", encoding="utf-8")

    entries = []
    source_topo = {stem: topology(mask).as_tuple() for stem, mask, _ in sources}
    for bundle_id, stem, mask, prompt, edit in pending:
        bundle = export_conditions(mask, prompt, out_dir, bundle_id, source_id=stem, edit=edit,
                                   low=config.canny_low, high=config.canny_high,
                                   sigma=config.canny_sigma)
        image_name = f"{bundle_id}.image.png"
        status, error, image_path = "pending", None, image_name
        if config.backend == "stub":
            try:
                image = stub_generate(bundle, image_seed_base)
                save_image(image, out_dir / image_name)
                status = "ok"
            except Exception as exc:  # backend failure degrades the entry
                status, error, image_path = "error", str(exc), None
        elif config.backend == "none":
            status, image_path = "none", None
        files = {"mask": f"{bundle_id}.mask.png", "canny": f"{bundle_id}.canny.png",
                 "prompt": f"{bundle_id}.prompt.txt", "image": image_path if status == "ok" else
                 (image_name if config.backend == "external" else None)}
        digests = {k: sha256_file(out_dir / v) for k, v in files.items()
                   if v and (out_dir / v).is_file()}
        entries.append({
            "id": bundle_id,
            "source_id": stem,
            "edit": edit,
            "files": files,
            "digests": digests,
            "backend": config.backend,
            "status": status,
            "error": error,
            "topology": {"source": list(source_topo[stem]),
                         "emitted": list(topology(mask).as_tuple())},
        })

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "dataset": config.dataset_name,
        "config": config.to_json_dict(),
        "entries": entries,
    }
    _atomic_write_json(manifest, out_dir / MANIFEST_NAME)
    return manifest


def validate_manifest(manifest_path) -> dict:
    """Load a manifest and verify every referenced file exists and matches
    its recorded digest. Returns the manifest document."""
    path = Path(manifest_path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise MaskForgeError(f"unsupported manifest schema: {doc.get('schema_version')}")
    base = path.parent
    ids = set()
    for entry in doc.get("entries", []):
        if entry["id"] in ids:
            raise MaskForgeError(f"duplicate bundle id {entry['id']}")
        ids.add(entry["id"])
        for kind, rel in entry["files"].items():
            if rel is None:
                continue
            f = base / rel
            if kind == "image" and entry["status"] not in ("ok",):
                continue
            if not f.is_file():
                raise MaskForgeError(f"{entry['id']}: missing file {rel}")
            recorded = entry["digests"].get(kind)
            if recorded and sha256_file(f) != recorded:
                raise MaskForgeError(f"{entry['id']}: digest mismatch for {rel}")
    return doc


def distribution_report(features_a, features_b) -> float:
    """Cosine similarity between the centroids of two embedding sets."""
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if b.ndim == 1:
        b = b[None, :]
    if a.size == 0 or b.size == 0:
        raise MaskForgeError("embedding sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise MaskForgeError(f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    na, nb = np.linalg.norm(ca), np.linalg.norm(cb)
    if na == 0.0 or nb == 0.0:
        raise MaskForgeError("zero-norm centroid")
    return float(np.dot(ca, cb) / (na * nb))


def load_embeddings(path) -> np.ndarray:
    """Read embeddings from .npy or .csv (one vector per row)."""
    p = Path(path)
    if not p.is_file():
        raise MaskForgeError(f"embedding file not found: {p}")
    if p.suffix.lower() == ".npy":
        return np.load(p)
    return np.loadtxt(p, delimiter=",", ndmin=2)
