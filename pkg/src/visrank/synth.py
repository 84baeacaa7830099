"""Seeded synthetic ranking fixtures with tunable content and visual signal.

Every document gets a latent quality per modality::

    latent = strength * grade_level + (1 - strength) * noise

where ``grade_level`` maps -2, 0, 1, 2, 3, 4 to 0, 0.2, ..., 1 and ``noise`` is
uniform on [0, 1]. The content latent drives how often query terms occur in
the body and title; the visual latent sets the mean brightness of the page
image, around which blocks of the image are shifted up and down in equal
measure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from visrank._io import atomic_write
from visrank.letor import GRADES, format_qrels

# share of each grade among TREC Web Track 2013-14 judgments
TREC_GRADE_SHARE = {4: 40, 3: 409, 2: 2534, 1: 6832, 0: 18301, -2: 790}
GRADE_LEVEL = {g: i / (len(GRADES) - 1) for i, g in enumerate(sorted(GRADES))}
VOCAB_SIZE = 2000
BLOCKS = 4


@dataclass(frozen=True)
class SyntheticSpec:
    n_queries: int = 60
    docs_per_query: int = 40
    grade_distribution: dict = field(default_factory=lambda: dict(TREC_GRADE_SHARE))
    visual_strength: float = 0.8
    content_strength: float = 0.4
    seed: int = 0
    image_size: int = 32

    def __post_init__(self):
        if self.n_queries < 1 or self.docs_per_query < 1:
            raise ValueError("n_queries and docs_per_query must be positive")
        for s in (self.visual_strength, self.content_strength):
            if not 0 <= s <= 1:
                raise ValueError("signal strengths must lie in [0, 1]")
        if set(self.grade_distribution) - GRADES or sum(self.grade_distribution.values()) <= 0:
            raise ValueError("grade_distribution must weight valid grades")
        if self.image_size < BLOCKS or self.image_size % BLOCKS:
            raise ValueError(f"image_size must be a positive multiple of {BLOCKS}")


@dataclass
class Fixture:
    queries: dict[str, str]
    corpus: dict[str, tuple[str, str]]
    qrels: dict[tuple[str, str], int]
    pagerank: dict[str, float]
    images: dict[str, np.ndarray]
    latent_visual: dict[str, float]


def _image(rng, brightness, size):
    """Gray RGB image whose block offsets cancel, so its mean is ``brightness``."""
    n_blocks = BLOCKS * BLOCKS
    amplitude = rng.uniform(0.0, 0.12)
    signs = np.where(rng.permutation(n_blocks) < n_blocks // 2, 1.0, -1.0)
    cells = (brightness + amplitude * signs).reshape(BLOCKS, BLOCKS)
    step = size // BLOCKS
    plane = np.kron(cells, np.ones((step, step)))
    gray = np.rint(255.0 * np.clip(plane, 0.0, 1.0)).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def generate(spec: SyntheticSpec) -> Fixture:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    grades = np.array(sorted(spec.grade_distribution))
    probs = np.array([spec.grade_distribution[g] for g in grades], dtype=np.float64)
    probs /= probs.sum()
    vocab = np.array([f"w{i:04d}" for i in range(VOCAB_SIZE)])

    fx = Fixture({}, {}, {}, {}, {}, {})
    for qi in range(spec.n_queries):
        qid = str(201 + qi)
        terms = [f"q{qi:03d}t{j}" for j in range(2)]
        fx.queries[qid] = " ".join(terms)
        for j in range(spec.docs_per_query):
            doc_id = f"clueweb12-{qi:04d}-{j:05d}"
            grade = int(rng.choice(grades, p=probs))
            level = GRADE_LEVEL[grade]
            c = spec.content_strength * level + (1 - spec.content_strength) * rng.random()
            v = spec.visual_strength * level + (1 - spec.visual_strength) * rng.random()

            body = list(rng.choice(vocab, size=int(rng.integers(80, 200))))
            hits = int(rng.binomial(10, c))
            for pos, term in zip(rng.integers(0, len(body) + 1, size=hits), rng.choice(terms, size=hits)):
                body.insert(int(pos), str(term))
            title = list(rng.choice(vocab, size=int(rng.integers(3, 9))))
            if rng.random() < c:
                title.insert(int(rng.integers(0, len(title) + 1)), terms[int(rng.integers(0, 2))])

            fx.corpus[doc_id] = (" ".join(title), " ".join(body))
            fx.qrels[(qid, doc_id)] = grade
            fx.pagerank[doc_id] = float(rng.lognormal(np.log(1e-6), 1.0))
            fx.images[doc_id] = _image(rng, 0.15 + 0.7 * v, spec.image_size)
            fx.latent_visual[doc_id] = v
    return fx


def png_bytes(pixels: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def write_fixture(fx: Fixture, out_dir) -> dict[str, Path]:
    """Write corpus, queries, qrels, pagerank and PNG images under ``out_dir``."""
    out = Path(out_dir)
    paths = {
        "corpus": out / "corpus.tsv",
        "queries": out / "queries.tsv",
        "qrels": out / "qrels.txt",
        "pagerank": out / "pagerank.tsv",
        "images": out / "images",
    }
    atomic_write(paths["corpus"], "".join(f"{d}\t{t}\t{c}\n" for d, (t, c) in fx.corpus.items()))
    atomic_write(paths["queries"], "".join(f"{q}\t{text}\n" for q, text in fx.queries.items()))
    atomic_write(paths["qrels"], format_qrels(fx.qrels))
    atomic_write(paths["pagerank"], "".join(f"{d}\t{s!r}\n" for d, s in fx.pagerank.items()))
    paths["images"].mkdir(parents=True, exist_ok=True)
    for doc_id, pixels in fx.images.items():
        atomic_write(paths["images"] / f"{doc_id}.png", png_bytes(pixels))
    return paths
