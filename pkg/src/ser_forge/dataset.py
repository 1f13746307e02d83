"""CREMA-D manifest handling, speaker-independent splits, toy corpus, batching."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform
from .errors import ManifestError, SplitError

EMOTIONS = ("angry", "disgust", "fear", "happy", "neutral", "sad")
EMOTION_TO_INDEX = {e: i for i, e in enumerate(EMOTIONS)}
# CREMA-D file-name emotion codes
CODE_TO_EMOTION = {
    "ANG": "angry",
    "DIS": "disgust",
    "FEA": "fear",
    "HAP": "happy",
    "NEU": "neutral",
    "SAD": "sad",
}
CREMA_EXPECTED_CLIPS = 7442


@dataclass(frozen=True)
class SampleMeta:
    path: str
    actor_id: int
    sentence_code: str
    emotion: str
    intensity_code: str

    @property
    def label(self) -> int:
        return EMOTION_TO_INDEX[self.emotion]


def parse_crema_filename(name: str) -> SampleMeta:
    """Parse `ActorID_Sentence_Emotion_Intensity.wav` into metadata."""
    base = os.path.basename(name)
    stem = base[:-4] if base.lower().endswith(".wav") else base
    parts = stem.split("_")
    if len(parts) != 4:
        raise ManifestError(f"cannot parse {base!r}: expected 4 underscore-separated fields")
    actor, sentence, code, intensity = parts
    try:
        actor_id = int(actor)
    except ValueError:
        raise ManifestError(f"cannot parse {base!r}: actor id {actor!r} is not an integer") from None
    if code not in CODE_TO_EMOTION:
        raise ManifestError(f"cannot parse {base!r}: unknown emotion code {code!r}")
    return SampleMeta(name, actor_id, sentence, CODE_TO_EMOTION[code], intensity)


@dataclass
class SplitAssignment:
    seed: int
    train_actors: list[int]
    val_actors: list[int]
    test_actors: list[int]
    train: list[SampleMeta] = field(default_factory=list)
    val: list[SampleMeta] = field(default_factory=list)
    test: list[SampleMeta] = field(default_factory=list)

    def __post_init__(self):
        sets = [set(self.train_actors), set(self.val_actors), set(self.test_actors)]
        for i in range(3):
            for j in range(i + 1, 3):
                if sets[i] & sets[j]:
                    raise SplitError(f"actor overlap between splits: {sorted(sets[i] & sets[j])}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "train_actors": sorted(self.train_actors),
                "val_actors": sorted(self.val_actors),
                "test_actors": sorted(self.test_actors),
            },
            indent=2,
        )


def speaker_independent_split(
    metas: list[SampleMeta],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Assign whole actors to train/val/test, targeting sample-count ratios.

    Greedy packing: actors in seeded-shuffled order each go to the split
    with the largest remaining sample deficit.
    """
    actors = sorted({m.actor_id for m in metas})
    if len(actors) < 3:
        raise SplitError(f"need at least 3 actors for a 3-way split, got {len(actors)}")
    counts = {a: 0 for a in actors}
    for m in metas:
        counts[m.actor_id] += 1
    total = len(metas)

    rng = np.random.default_rng(seed)
    order = [actors[i] for i in rng.permutation(len(actors))]
    targets = [r * total for r in ratios]
    filled = [0.0, 0.0, 0.0]
    assignment: list[list[int]] = [[], [], []]
    for actor in order:
        deficits = [targets[i] - filled[i] for i in range(3)]
        pick = int(np.argmax(deficits))
        assignment[pick].append(actor)
        filled[pick] += counts[actor]
    # guarantee non-empty splits
    for i in range(3):
        if not assignment[i]:
            donor = int(np.argmax([len(a) for a in assignment]))
            assignment[i].append(assignment[donor].pop())

    split = SplitAssignment(seed, assignment[0], assignment[1], assignment[2])
    by_split = {a: s for s, acts in zip((split.train, split.val, split.test), assignment) for a in acts}
    for m in metas:
        by_split[m.actor_id].append(m)
    return split


# -- synthetic toy corpus -------------------------------------------------

# (fundamental Hz, AM rate Hz, noise level, harmonic weight): one recipe per
# pseudo-emotion, far apart in log-mel space.
TOY_RECIPES = (
    (130.0, 2.0, 0.01, 0.0),
    (220.0, 5.0, 0.03, 0.6),
    (370.0, 9.0, 0.01, 0.0),
    (620.0, 16.0, 0.05, 0.5),
    (1050.0, 28.0, 0.02, 0.0),
    (1760.0, 48.0, 0.10, 0.4),
)
TOY_SECONDS = 2.0
TOY_RATE = 16000
TOY_N_ACTORS = 30


@dataclass
class LabeledWaveform:
    waveform: Waveform
    label: int
    actor_id: int
    meta: SampleMeta | None = None


def synthesize_toy_dataset(n_per_class: int, rng: np.random.Generator) -> list[LabeledWaveform]:
    """Six separable pseudo-emotion classes of AM tones with noise and jitter.

    Synthetic actor ids cycle so the speaker splitter is exercised.
    Deterministic given the generator state.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    t = np.arange(int(TOY_SECONDS * TOY_RATE)) / TOY_RATE
    samples: list[LabeledWaveform] = []
    idx = 0
    for label, (f0, am_rate, noise, harmonic) in enumerate(TOY_RECIPES):
        for _ in range(n_per_class):
            f = f0 * (1.0 + rng.uniform(-0.02, 0.02))
            phase = rng.uniform(0, 2 * np.pi)
            am_phase = rng.uniform(0, 2 * np.pi)
            tone = np.sin(2 * np.pi * f * t + phase)
            if harmonic:
                tone = tone + harmonic * np.sin(2 * np.pi * 2 * f * t + phase)
            am = 0.55 + 0.45 * np.sin(2 * np.pi * am_rate * t + am_phase)
            sig = am * tone + noise * rng.standard_normal(len(t))
            sig = sig / np.max(np.abs(sig))
            actor_id = 9000 + (idx % TOY_N_ACTORS)
            meta = SampleMeta(f"toy://{idx:05d}", actor_id, "TOY", EMOTIONS[label], "XX")
            samples.append(LabeledWaveform(Waveform(sig.astype(np.float32), TOY_RATE), label, actor_id, meta))
            idx += 1
    return samples


# -- batching -------------------------------------------------------------


def make_batches(
    n_samples: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True
) -> list[np.ndarray]:
    """Index batches with a per-epoch reshuffle; the final short batch is kept."""
    if n_samples == 0:
        raise SplitError("cannot batch an empty split")
    if shuffle:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, epoch))))
        order = rng.permutation(n_samples)
    else:
        order = np.arange(n_samples)
    return [order[i : i + batch_size] for i in range(0, n_samples, batch_size)]


# -- manifest I/O ---------------------------------------------------------

MANIFEST_FIELDS = ("path", "actor_id", "sentence", "emotion", "intensity")


def build_manifest(data_dir: str) -> tuple[list[SampleMeta], list[str]]:
    """Scan a directory of WAVs; returns (metas, unparseable names)."""
    metas, bad = [], []
    for name in sorted(os.listdir(data_dir)):
        if not name.lower().endswith(".wav"):
            continue
        try:
            meta = parse_crema_filename(name)
        except ManifestError:
            bad.append(name)
            continue
        metas.append(
            SampleMeta(os.path.join(data_dir, name), meta.actor_id, meta.sentence_code, meta.emotion, meta.intensity_code)
        )
    return metas, bad


def write_manifest(metas: list[SampleMeta], path: str):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_FIELDS)
        for m in metas:
            writer.writerow([m.path, m.actor_id, m.sentence_code, m.emotion, m.intensity_code])


def read_manifest(path: str) -> list[SampleMeta]:
    metas = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            if row["emotion"] not in EMOTION_TO_INDEX:
                raise ManifestError(f"manifest row with unknown emotion {row['emotion']!r}")
            metas.append(
                SampleMeta(row["path"], int(row["actor_id"]), row["sentence"], row["emotion"], row["intensity"])
            )
    return metas
