"""Dataset manifests, synthetic corpus, single experiments and grid sweeps."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .audio_io import AudioClip, BPLabel, PreprocessConfig, load_wav, preprocess, write_wav
from .clustering import (
    BPClass,
    bp_class_from_label,
    class_memberships,
    ffi_cluster,
    fuse,
    kmeans_batch,
    majority_class_map,
    assign_all,
    replay,
    soft_memberships,
)
from .features import FEATURE_NAMES, FeatureConfig, FeatureVector, NoVoicedFrames, Standardizer, extract_feature_vector, impute_formants
from .metrics import EvaluationReport, davies_bouldin, dunn_index, homogeneity_completeness, jaccard_similarity, silhouette
from .optimizer import FFIConfig

log = logging.getLogger(__name__)

MANIFEST_HEADER = ["clip_path", "systolic", "diastolic", "age", "sex"]
METHODS = ("ffi_fusion", "kmeans_only", "ffi_only", "tlo_only")
METRIC_FIELDS = ("davies_bouldin", "homogeneity", "completeness", "jaccard", "silhouette", "dunn", "accuracy")


class InsufficientData(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRow:
    clip_path: Path
    label: BPLabel
    age: int
    sex: str

    @property
    def bp_class(self) -> BPClass:
        return bp_class_from_label(self.label)


def read_manifest(path: str | Path) -> list[ManifestRow]:
    """Parse a manifest CSV; clip paths are resolved relative to the manifest's folder."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != MANIFEST_HEADER:
            raise ValueError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            clip = Path(rec["clip_path"])
            if not clip.is_absolute():
                clip = path.parent / clip
            if not clip.exists():
                raise FileNotFoundError(f"{path}:{lineno}: {clip} does not exist")
            sex = rec["sex"].strip().upper()
            if sex not in ("M", "F"):
                raise ValueError(f"{path}:{lineno}: sex must be M or F")
            rows.append(ManifestRow(clip, BPLabel(float(rec["systolic"]), float(rec["diastolic"])), int(rec["age"]), sex))
    return rows


def write_manifest(path: str | Path, rows: Sequence[tuple[str, float, float, int, str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for clip, sys_, dia, age, sex in rows:
            w.writerow([clip, f"{sys_:.1f}", f"{dia:.1f}", age, sex])


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass
class VoiceParams:
    pitch_hz: float
    formant1_hz: float
    formant2_hz: float
    loudness: float


# label bands sit strictly inside each class's threshold region
BP_BANDS = {
    BPClass.LOW: ((80.0, 88.0), (50.0, 58.0)),
    BPClass.NORMAL: ((100.0, 130.0), (65.0, 85.0)),
    BPClass.HIGH: ((145.0, 175.0), (92.0, 110.0)),
}

DEFAULT_VOICES = {
    "LOW": VoiceParams(110.0, 550.0, 1000.0, 0.5),
    "NORMAL": VoiceParams(150.0, 700.0, 1250.0, 0.7),
    "HIGH": VoiceParams(200.0, 850.0, 1500.0, 0.9),
}


@dataclass
class SyntheticSpec:
    clips_per_class: int = 10
    duration_s: float = 1.0
    sample_rate_hz: int = 16000
    voices: dict[str, VoiceParams] = field(default_factory=lambda: dict(DEFAULT_VOICES))
    pitch_jitter_hz: float = 6.0
    formant_jitter_hz: float = 40.0
    vibrato_depth: float = 0.02
    noise_level: float = 0.02
    seed: int = 0

    def __post_init__(self):
        self.voices = {k: v if isinstance(v, VoiceParams) else VoiceParams(**v) for k, v in self.voices.items()}
        if sorted(self.voices) != sorted(c.name for c in BPClass):
            raise ValueError("voices must define LOW, NORMAL and HIGH")
        if self.clips_per_class < 1 or self.duration_s <= 0:
            raise ValueError("clips_per_class >= 1 and duration_s > 0 required")

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        return cls(**obj)


def resonator(freq_hz: float, bw_hz: float, fs: float) -> np.ndarray:
    r = math.exp(-math.pi * bw_hz / fs)
    return np.array([1.0, -2.0 * r * math.cos(2 * math.pi * freq_hz / fs), r * r])


def synthesize_voice(
    voice: VoiceParams,
    duration_s: float,
    fs: int,
    rng: np.random.Generator,
    vibrato_depth: float = 0.02,
    noise_level: float = 0.02,
    bandwidths: tuple[float, float] = (80.0, 100.0),
) -> np.ndarray:
    """Pitch-modulated pulse train through two resonances, plus white noise."""
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    vib_rate = rng.uniform(4.0, 6.0)
    f0 = voice.pitch_hz * (1.0 + vibrato_depth * np.sin(2 * np.pi * vib_rate * t))
    phase = np.cumsum(f0) / fs
    # one unit pulse at each cycle boundary
    excitation = np.diff(np.floor(phase), prepend=0.0)
    a = np.convolve(resonator(voice.formant1_hz, bandwidths[0], fs), resonator(voice.formant2_hz, bandwidths[1], fs))
    x = lfilter([1.0], a, excitation)
    x = x / np.max(np.abs(x)) * voice.loudness
    x = x + noise_level * rng.standard_normal(n)
    peak = np.max(np.abs(x))
    return x / peak * 0.95 if peak > 0.95 else x


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """Write WAV clips plus `manifest.csv` into `out_dir`; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    rows = []
    for cls in BPClass:
        base = spec.voices[cls.name]
        (s_lo, s_hi), (d_lo, d_hi) = BP_BANDS[cls]
        for i in range(spec.clips_per_class):
            voice = VoiceParams(
                pitch_hz=base.pitch_hz + rng.uniform(-1, 1) * spec.pitch_jitter_hz,
                formant1_hz=base.formant1_hz + rng.uniform(-1, 1) * spec.formant_jitter_hz,
                formant2_hz=base.formant2_hz + rng.uniform(-1, 1) * spec.formant_jitter_hz,
                loudness=base.loudness,
            )
            x = synthesize_voice(voice, spec.duration_s, spec.sample_rate_hz, rng, spec.vibrato_depth, spec.noise_level)
            name = f"{cls.name.lower()}_{i:03d}.wav"
            write_wav(out / name, x, spec.sample_rate_hz)
            systolic = round(rng.uniform(s_lo, s_hi), 1)
            diastolic = round(rng.uniform(d_lo, d_hi), 1)
            age = int(rng.integers(20, 66))
            sex = "M" if rng.random() < 0.5 else "F"
            rows.append((name, systolic, diastolic, age, sex))
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class OptimizerSettings:
    population_size: int = 20
    max_iterations: int = 60
    objective_tolerance: float = 0.0
    a4_epsilon: float = 0.1


@dataclass
class ExperimentConfig:
    training_percent: int = 90
    epochs: int = 10
    seed: int = 0
    k: int = 3
    method: str = "ffi_fusion"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        for name, typ in (("preprocess", PreprocessConfig), ("features", FeatureConfig), ("optimizer", OptimizerSettings)):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, typ(**value))
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0 < self.training_percent < 100:
            raise ValueError("training_percent must be in (0, 100)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.k != 3:
            raise ValueError("the BP pipeline uses k = 3")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def ffi_config(self, mode: str = "ffi") -> FFIConfig:
        o = self.optimizer
        return FFIConfig(
            population_size=o.population_size,
            max_iterations=o.max_iterations,
            objective_tolerance=o.objective_tolerance,
            a4_epsilon=o.a4_epsilon,
            rng_seed=self.seed,
            mode=mode,
        )


# ---------------------------------------------------------------------------
# corpus features and splits


@dataclass
class CorpusFeatures:
    vectors: list[FeatureVector]
    classes: np.ndarray
    excluded: list[str]

    @property
    def matrix(self) -> np.ndarray:
        return np.array([v.values for v in self.vectors])


def extract_corpus(manifest: Sequence[ManifestRow], pre: PreprocessConfig, feat: FeatureConfig) -> CorpusFeatures:
    vectors, classes, excluded = [], [], []
    for row in manifest:
        clip = load_wav(row.clip_path)
        clip = preprocess(AudioClip(clip.samples, clip.sample_rate_hz, clip.id, row.label), pre)
        try:
            vectors.append(extract_feature_vector(clip, feat))
        except NoVoicedFrames:
            log.warning("excluding %s: no voiced frames", row.clip_path)
            excluded.append(str(row.clip_path))
            continue
        classes.append(int(row.bp_class))
    return CorpusFeatures(vectors, np.array(classes, dtype=np.int64), excluded)


def stratified_split(classes: Sequence[int], training_percent: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; each class contributes round(n_c * pct / 100) training samples."""
    classes = np.asarray(classes)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(classes):
        idx = np.flatnonzero(classes == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(math.floor(idx.size * training_percent / 100.0 + 0.5))
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


# ---------------------------------------------------------------------------
# training and evaluation


def _fit_kmeans(x_train, y_train, cfg: ExperimentConfig):
    model = kmeans_batch(x_train, cfg.k, seed=cfg.seed)
    replay(model, x_train, cfg.epochs)
    model.class_map = majority_class_map(assign_all(model.centroids, x_train), y_train, cfg.k)
    return model


def _fit_ffi(x_train, y_train, cfg: ExperimentConfig, mode: str):
    model = ffi_cluster(x_train, y_train, cfg.k, cfg.ffi_config(mode))
    replay(model, x_train, cfg.epochs)
    model.class_map = majority_class_map(assign_all(model.centroids, x_train), y_train, cfg.k)
    return model


def predict(cfg: ExperimentConfig, x_train: np.ndarray, y_train: np.ndarray, x_eval: np.ndarray) -> np.ndarray:
    """Train the configured method and return class predictions for `x_eval`."""
    if cfg.method == "kmeans_only":
        model = _fit_kmeans(x_train, y_train, cfg)
        return model.class_map[assign_all(model.centroids, x_eval)]
    if cfg.method in ("ffi_only", "tlo_only"):
        model = _fit_ffi(x_train, y_train, cfg, "tlo" if cfg.method == "tlo_only" else "ffi")
        return model.class_map[assign_all(model.centroids, x_eval)]
    km = _fit_kmeans(x_train, y_train, cfg)
    ff = _fit_ffi(x_train, y_train, cfg, "ffi")
    m1 = class_memberships(soft_memberships(km, x_eval), km.class_map)
    m2 = class_memberships(soft_memberships(ff, x_eval), ff.class_map)
    return fuse(m1, m2)[1]


def evaluate(x_all: np.ndarray, pred_all: np.ndarray, truth_test: np.ndarray, pred_test: np.ndarray) -> dict[str, float]:
    """External scores on the held-out split; geometric indices over the whole corpus."""
    h, c = homogeneity_completeness(truth_test, pred_test)
    used = np.unique(pred_all)
    centroids = np.zeros((int(pred_all.max()) + 1, x_all.shape[1]))
    for j in used:
        centroids[j] = x_all[pred_all == j].mean(axis=0)
    return {
        "davies_bouldin": davies_bouldin(x_all, pred_all, centroids),
        "homogeneity": h,
        "completeness": c,
        "jaccard": jaccard_similarity(truth_test, pred_test) if truth_test.size >= 2 else 1.0,
        "silhouette": silhouette(x_all, pred_all),
        "dunn": dunn_index(x_all, pred_all),
        "accuracy": float(np.mean(pred_test == truth_test)),
    }


def run_experiment(
    manifest: Sequence[ManifestRow] | str | Path,
    cfg: ExperimentConfig,
    corpus: Optional[CorpusFeatures] = None,
) -> EvaluationReport:
    if not isinstance(manifest, (list, tuple)):
        manifest = read_manifest(manifest)
    if corpus is None:
        corpus = extract_corpus(manifest, cfg.preprocess, cfg.features)
    y = corpus.classes
    if y.size < cfg.k:
        raise InsufficientData(f"{y.size} usable clips, need at least {cfg.k}")
    train, test = stratified_split(y, cfg.training_percent, cfg.seed)
    if train.size < cfg.k or test.size == 0:
        raise InsufficientData(f"split gives {train.size} training / {test.size} test samples")

    # formant gaps filled from training means, then z-scored on the training split
    vectors = impute_formants(corpus.vectors, [corpus.vectors[i] for i in train])
    raw = np.array([v.values for v in vectors])
    scaler = Standardizer.fit(raw[train])
    x = scaler.transform(raw)

    pred_all = predict(cfg, x[train], y[train], x)
    scores = evaluate(x, pred_all, y[test], pred_all[test])
    return EvaluationReport(
        **scores,
        seed=cfg.seed,
        training_percent=cfg.training_percent,
        epochs=cfg.epochs,
        method=cfg.method,
        n_train=int(train.size),
        n_test=int(test.size),
        excluded_clips=len(corpus.excluded),
    )


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepGrid:
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    training_percent: list[int] = field(default_factory=lambda: [40, 50, 60, 70, 80, 90])
    epochs: list[int] = field(default_factory=lambda: [10, 20, 30, 40, 50])
    methods: list[str] = field(default_factory=lambda: ["ffi_fusion"])

    @classmethod
    def from_dict(cls, obj: dict) -> "SweepGrid":
        obj = dict(obj)
        base = obj.pop("base", {})
        base = base if isinstance(base, ExperimentConfig) else ExperimentConfig.from_dict(base)
        return cls(base=base, **obj)

    def cells(self) -> list[ExperimentConfig]:
        return [
            replace(self.base, method=m, training_percent=tp, epochs=ep)
            for m, tp, ep in itertools.product(self.methods, self.training_percent, self.epochs)
        ]


def cell_id(cfg: ExperimentConfig) -> str:
    return f"{cfg.method}-tp{cfg.training_percent}-ep{cfg.epochs}-seed{cfg.seed}"


@dataclass
class SweepResult:
    reports: list[EvaluationReport]
    failures: dict[str, str]


def sweep(manifest: Sequence[ManifestRow] | str | Path, grid: SweepGrid) -> SweepResult:
    """Run every grid cell; a failing cell is logged and skipped."""
    if not isinstance(manifest, (list, tuple)):
        manifest = read_manifest(manifest)
    cells = grid.cells()
    if not cells:
        raise ValueError("empty grid")
    cache: dict[str, CorpusFeatures] = {}
    reports, failures = [], {}
    for cfg in cells:
        key = json.dumps([asdict(cfg.preprocess), asdict(cfg.features)], sort_keys=True)
        try:
            if key not in cache:
                cache[key] = extract_corpus(manifest, cfg.preprocess, cfg.features)
            reports.append(run_experiment(manifest, cfg, cache[key]))
        except Exception as exc:  # one bad cell must not abort the sweep
            log.error("cell %s failed: %s", cell_id(cfg), exc)
            failures[cell_id(cfg)] = f"{type(exc).__name__}: {exc}"
    return SweepResult(reports, failures)


def write_reports_csv(path: str | Path, reports: Sequence[EvaluationReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EvaluationReport.csv_header())
        for r in reports:
            w.writerow(r.csv_row())


def plot_series(reports: Sequence[EvaluationReport], metric: str) -> dict[tuple[str, int], list[tuple[int, float]]]:
    """(method, training %) -> sorted (epochs, value) points for one metric."""
    series: dict[tuple[str, int], list[tuple[int, float]]] = {}
    for r in reports:
        series.setdefault((r.method, r.training_percent), []).append((r.epochs, getattr(r, metric)))
    return {key: sorted(pts) for key, pts in sorted(series.items())}


def write_plots(out_dir: str | Path, reports: Sequence[EvaluationReport]) -> list[Path]:
    """One SVG per metric: value against epochs, a line per (method, training %)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "ffibp", "svg.fonttype": "none"}):
        for metric in METRIC_FIELDS:
            fig, ax = plt.subplots(figsize=(6, 4))
            for (method, tp), pts in plot_series(reports, metric).items():
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker="o", label=f"{method} {tp}%")
            ax.set_xlabel("epochs")
            ax.set_ylabel(metric)
            ax.legend(fontsize="small")
            path = out / f"{metric}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths


def write_sweep_outputs(out_dir: str | Path, result: SweepResult, plots: bool = False) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    write_reports_csv(csv_path, result.reports)
    (out / "failures.json").write_text(json.dumps(result.failures, indent=2, sort_keys=True) + "\n")
    if plots:
        write_plots(out / "plots", result.reports)
    return csv_path
