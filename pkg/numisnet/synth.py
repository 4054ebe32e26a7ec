"""
Synthetic coin corpus

Each coin is a textured disk on a noisy background carrying one procedural
glyph per present concept, paired with an auction-style description in one
of four languages. Ground truth is recorded separately from the text so the
weak-label chain can be checked end to end.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from .dataset import Manifest, Sample, write_manifest
from .errors import ConfigError, DataError, ManifestError
from .imaging import LAYOUTS, RawImage, save_image
from .text import LANGUAGES, NEGATIVE, POSITIVE, LexiconTables, lexicon_for, load_lexicon

logger = logging.getLogger(__name__)

CONCEPTS = ("horse", "cornucopia", "patera", "eagle", "shield")
GROUND_TRUTH_COLUMNS = ("id", "concept", "present", "x0", "y0", "x1", "y1")

Box = Tuple[int, int, int, int]
Seed = Union[int, Sequence[int]]
PathLike = Union[str, Path]

BACKGROUND = 96
DISK = (176, 141, 87)
OBVERSE_DISK = (160, 130, 84)
# glyph side as a fraction of the coin side
GLYPH_RANGE = (0.20, 0.26)

GlyphDrawer = Callable[[ImageDraw.ImageDraw, int, Tuple[int, int, int]], None]


class GlyphRegistry:
    """Maps a concept name to the function drawing its shape family"""

    def __init__(self):
        self._drawers: Dict[str, GlyphDrawer] = {}
        self._colors: Dict[str, Tuple[int, int, int]] = {}

    def register(self, concept: str, color: Tuple[int, int, int]):
        def decorator(drawer: GlyphDrawer) -> GlyphDrawer:
            self._drawers[concept] = drawer
            self._colors[concept] = color
            return drawer
        return decorator

    def __contains__(self, concept: str) -> bool:
        return concept in self._drawers

    def render(self, concept: str, size: int) -> Image.Image:
        """Glyph on a transparent size x size RGBA layer"""
        if concept not in self._drawers:
            raise ConfigError(f"no glyph registered for concept '{concept}'")
        layer = Image.new("RGBA", (size, size), (0, 0, 0, 0))
        self._drawers[concept](ImageDraw.Draw(layer), size, self._colors[concept])
        return layer

    def concepts(self) -> List[str]:
        return list(self._drawers)


glyphs = GlyphRegistry()


def _rgba(color: Tuple[int, int, int]) -> Tuple[int, int, int, int]:
    return color + (255,)


@glyphs.register("horse", (58, 38, 22))
def draw_horse(draw: ImageDraw.ImageDraw, g: int, color: Tuple[int, int, int]):
    c = _rgba(color)
    w = max(2, g // 14)
    draw.ellipse([0.18 * g, 0.36 * g, 0.72 * g, 0.60 * g], fill=c)
    for x in (0.24, 0.34, 0.56, 0.66):
        draw.line([(x * g, 0.55 * g), (x * g, 0.88 * g)], fill=c, width=w)
    draw.line([(0.66 * g, 0.44 * g), (0.80 * g, 0.18 * g)], fill=c, width=w + 1)
    draw.polygon([(0.76 * g, 0.12 * g), (0.92 * g, 0.22 * g), (0.80 * g, 0.28 * g)], fill=c)
    draw.line([(0.20 * g, 0.44 * g), (0.08 * g, 0.70 * g)], fill=c, width=w)


@glyphs.register("cornucopia", (214, 178, 52))
def draw_cornucopia(draw: ImageDraw.ImageDraw, g: int, color: Tuple[int, int, int]):
    c = _rgba(color)
    for i in range(8):
        t = 0.55 * i
        r = 0.13 * g * (1.0 - 0.1 * i)
        cx = 0.5 * g + 0.26 * g * math.cos(t) * (1.0 - 0.08 * i)
        cy = 0.5 * g + 0.26 * g * math.sin(t) * (1.0 - 0.08 * i)
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=c, outline=(90, 60, 20, 255))
    for dx, dy in ((-0.08, -0.06), (0.0, -0.12), (0.08, -0.05)):
        cx, cy = 0.76 * g + dx * g, 0.46 * g + dy * g
        draw.ellipse([cx - 0.04 * g, cy - 0.04 * g, cx + 0.04 * g, cy + 0.04 * g],
                     fill=(120, 170, 60, 255))


@glyphs.register("patera", (44, 86, 132))
def draw_patera(draw: ImageDraw.ImageDraw, g: int, color: Tuple[int, int, int]):
    c = _rgba(color)
    w = max(2, g // 12)
    draw.ellipse([0.10 * g, 0.36 * g, 0.72 * g, 0.64 * g], fill=c)
    draw.ellipse([0.22 * g, 0.42 * g, 0.60 * g, 0.58 * g], outline=(230, 230, 230, 255),
                 width=max(1, w // 2))
    draw.line([(0.70 * g, 0.50 * g), (0.94 * g, 0.50 * g)], fill=c, width=w)
    draw.ellipse([0.88 * g, 0.44 * g, 0.98 * g, 0.56 * g], fill=c)


@glyphs.register("eagle", (24, 24, 28))
def draw_eagle(draw: ImageDraw.ImageDraw, g: int, color: Tuple[int, int, int]):
    c = _rgba(color)
    w = max(1, g // 20)
    draw.polygon([(0.50 * g, 0.45 * g), (0.06 * g, 0.14 * g), (0.18 * g, 0.50 * g)], fill=c)
    draw.polygon([(0.50 * g, 0.45 * g), (0.94 * g, 0.14 * g), (0.82 * g, 0.50 * g)], fill=c)
    for i in range(4):
        x = (0.12 + 0.07 * i) * g
        draw.line([(x, (0.28 + 0.05 * i) * g), (x - 0.04 * g, (0.40 + 0.05 * i) * g)],
                  fill=(200, 200, 200, 255), width=w)
        draw.line([(g - x, (0.28 + 0.05 * i) * g), (g - x + 0.04 * g, (0.40 + 0.05 * i) * g)],
                  fill=(200, 200, 200, 255), width=w)
    draw.ellipse([0.42 * g, 0.20 * g, 0.58 * g, 0.36 * g], fill=c)
    draw.polygon([(0.42 * g, 0.50 * g), (0.58 * g, 0.50 * g), (0.50 * g, 0.90 * g)], fill=c)


@glyphs.register("shield", (150, 36, 40))
def draw_shield(draw: ImageDraw.ImageDraw, g: int, color: Tuple[int, int, int]):
    c = _rgba(color)
    outline = [(0.50 * g, 0.06 * g), (0.88 * g, 0.22 * g), (0.84 * g, 0.62 * g),
               (0.50 * g, 0.94 * g), (0.16 * g, 0.62 * g), (0.12 * g, 0.22 * g)]
    draw.polygon(outline, fill=c)
    for y in (0.34, 0.50, 0.66):
        draw.line([(0.22 * g, y * g), (0.78 * g, y * g)], fill=(235, 215, 160, 255),
                  width=max(1, g // 18))
    draw.ellipse([0.42 * g, 0.42 * g, 0.58 * g, 0.58 * g], fill=(235, 215, 160, 255))


# Description templates; {motif} names the depicted concepts
_TEMPLATES = {
    "en": ["{ruler}, {denom}. Obv: laureate bust right. "
           "Rev: {figure} {holding} {motif}. {grade}.",
           "{denom} of {ruler}. Reverse with {motif}. {grade}, {tone}."],
    "fr": ["{ruler}, {denom}. Droit : buste lauré à droite. "
           "Revers : {figure} tenant {motif}. {grade}.",
           "{denom} de {ruler}. Au revers, {motif}. {grade}, {tone}."],
    "es": ["{ruler}, {denom}. Anverso: busto laureado a derecha. "
           "Reverso: {figure} con {motif}. {grade}.",
           "{denom} de {ruler}. En el reverso, {motif}. {grade}, {tone}."],
    "de": ["{ruler}, {denom}. Vs: Büste mit Lorbeerkranz nach rechts. "
           "Rs: {figure} mit {motif}. {grade}.",
           "{denom} des {ruler}. Rückseite mit {motif}. {grade}, {tone}."],
}

_EMPTY_MOTIF = {
    "en": ["legend within wreath", "star above crescent", "altar"],
    "fr": ["légende dans une couronne", "étoile au-dessus d'un croissant", "autel"],
    "es": ["leyenda dentro de corona", "estrella sobre creciente", "altar"],
    "de": ["Umschrift im Kranz", "Stern über Mondsichel", "Altar"],
}

_JOIN = {"en": "and", "fr": "et", "es": "y", "de": "und"}

_VOCABULARY = {
    "en": {"figure": ["Victory standing left", "Felicitas standing", "Pax seated left",
                      "emperor standing"],
           "holding": ["holding", "with"],
           "denom": ["denarius", "sestertius", "antoninianus"],
           "grade": ["Very fine", "Good very fine", "Extremely fine"],
           "tone": ["attractive toning", "dark patina", "rare"]},
    "fr": {"figure": ["Victoire debout à gauche", "Félicité debout", "Paix assise à gauche",
                      "empereur debout"],
           "denom": ["denier", "sesterce", "antoninien"],
           "grade": ["TTB", "Très beau", "Superbe"],
           "tone": ["belle patine", "jolie patine sombre", "rare"]},
    "es": {"figure": ["Victoria de pie a izquierda", "Felicitas de pie", "Pax sentada a izquierda",
                      "emperador de pie"],
           "denom": ["denario", "sestercio", "antoniniano"],
           "grade": ["MBC", "MBC+", "EBC"],
           "tone": ["bonita pátina oscura", "pátina verde", "escasa"]},
    "de": {"figure": ["Victoria stehend nach links", "Felicitas stehend", "Pax sitzend nach links",
                      "Kaiser stehend"],
           "denom": ["Denar", "Sesterz", "Antoninian"],
           "grade": ["Sehr schön", "Fast vorzüglich", "Vorzüglich"],
           "tone": ["schöne Patina", "dunkle Patina", "selten"]},
}

_RULERS = ["Hadrian", "Trajan", "Antoninus Pius", "Gordian III", "Philip I", "Gallienus",
           "Probus", "Severus Alexander"]


@dataclass
class SynthSpec:
    n_samples: int = 1000
    concepts: Tuple[str, ...] = CONCEPTS
    positive_rate: float = 0.3
    label_noise_rate: float = 0.0
    image_side: int = 128
    seed: int = 0
    layout: str = "single"

    def __post_init__(self):
        self.concepts = tuple(self.concepts)
        if self.n_samples < 10:
            raise ConfigError(f"synth.n_samples must be at least 10, got {self.n_samples}")
        for name in ("positive_rate", "label_noise_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"synth.{name} must lie in [0, 1], got {value}")
        if not self.concepts:
            raise ConfigError("synth.concepts must name at least one concept")
        unknown = [c for c in self.concepts if c not in glyphs]
        if unknown:
            raise ConfigError(f"no glyph for concept(s) {', '.join(unknown)}")
        if self.image_side < 32:
            raise ConfigError(f"synth.image_side must be at least 32, got {self.image_side}")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"synth.layout must be one of {', '.join(LAYOUTS)}")


@dataclass
class Coin:
    image: RawImage
    text: str
    truth: Dict[str, bool]
    boxes: Dict[str, Box] = field(default_factory=dict)
    language: str = "en"


@dataclass
class GroundTruth:
    present: bool
    box: Optional[Box] = None


@dataclass
class CorpusSummary:
    out_dir: Path
    n_samples: int
    positives: Dict[str, int]
    noisy: List[str]


def _concept_word(tables: LexiconTables, concept: str, language: str,
                  rng: np.random.Generator) -> str:
    """Primary lexicon word, sometimes followed by a synonym"""
    lexicon = lexicon_for(concept, tables)
    primary = lexicon.keywords_for(language, ("base", "translation"))
    if not primary:
        raise ConfigError(f"lexicon has no {language} word for '{concept}'")
    word = primary[0]
    others = lexicon.keywords_for(language, ("synonym",))
    if others and rng.random() < 0.25:
        word = f"{word} ({others[int(rng.integers(len(others)))]})"
    return word


def describe(concepts: Sequence[str], language: str, rng: np.random.Generator,
             tables: LexiconTables) -> str:
    """Auction-style description naming exactly the given concepts"""
    if language not in _TEMPLATES:
        raise ConfigError(f"no description templates for language '{language}'")
    vocab = _VOCABULARY[language]
    if concepts:
        words = [_concept_word(tables, c, language, rng) for c in concepts]
        motif = words[0] if len(words) == 1 else (
            ", ".join(words[:-1]) + f" {_JOIN[language]} " + words[-1])
    else:
        options = _EMPTY_MOTIF[language]
        motif = options[int(rng.integers(len(options)))]
    templates = _TEMPLATES[language]
    template = templates[int(rng.integers(len(templates)))]

    def pick(key: str) -> str:
        options = vocab.get(key, ["with"])
        return options[int(rng.integers(len(options)))]

    return template.format(
        ruler=_RULERS[int(rng.integers(len(_RULERS)))], denom=pick("denom"),
        figure=pick("figure"), holding=pick("holding"), motif=motif,
        grade=pick("grade"), tone=pick("tone"),
    )


def _disk(side: int, color: Tuple[int, int, int], rng: np.random.Generator) -> Image.Image:
    canvas = Image.new("RGB", (side, side), (BACKGROUND,) * 3)
    draw = ImageDraw.Draw(canvas)
    margin = int(round(side * 0.04 + rng.uniform(0, side * 0.02)))
    draw.ellipse([margin, margin, side - 1 - margin, side - 1 - margin], fill=color,
                 outline=(110, 86, 50), width=max(1, side // 64))
    return canvas


def _obverse(side: int, rng: np.random.Generator) -> Image.Image:
    canvas = _disk(side, OBVERSE_DISK, rng)
    draw = ImageDraw.Draw(canvas)
    bust = (120, 96, 60)
    draw.ellipse([0.36 * side, 0.22 * side, 0.62 * side, 0.52 * side], fill=bust)
    draw.pieslice([0.22 * side, 0.48 * side, 0.78 * side, 1.02 * side], 180, 360, fill=bust)
    return canvas


def _add_noise(canvas: Image.Image, rng: np.random.Generator, sigma: float = 8.0) -> np.ndarray:
    pixels = np.asarray(canvas, dtype=np.float64)
    pixels = pixels + rng.normal(0.0, sigma, size=pixels.shape)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def _slots(side: int) -> Tuple[List[Tuple[int, int]], int]:
    """3 x 3 slot centres and the placement jitter that keeps neighbouring glyphs apart"""
    step = int(0.29 * side)
    centre = side // 2
    grid = [centre - step, centre, centre + step]
    jitter = max(0, (step - int(GLYPH_RANGE[1] * side)) // 2)
    return [(cx, cy) for cy in grid for cx in grid], jitter


def generate_coin(seed: Seed, present_concepts: Sequence[str], side: int = 128,
                  layout: str = "single", concepts: Sequence[str] = CONCEPTS,
                  tables: Optional[LexiconTables] = None,
                  text_concepts: Optional[Sequence[str]] = None,
                  language: Optional[str] = None) -> Coin:
    """Render one coin and its description

    text_concepts overrides the concepts the description names (label
    noise); it defaults to the depicted ones.
    """
    rng = np.random.default_rng(seed)
    tables = tables or load_lexicon()
    present = [c for c in concepts if c in set(present_concepts)]
    unknown = set(present_concepts) - set(concepts)
    if unknown:
        raise ConfigError(f"unknown concept(s) {', '.join(sorted(unknown))}")

    canvas = _disk(side, DISK, rng)
    boxes: Dict[str, Box] = {}
    slots, jitter = _slots(side)
    chosen = rng.permutation(len(slots))[:len(present)]
    for concept, slot in zip(present, chosen):
        g = int(side * rng.uniform(*GLYPH_RANGE))
        layer = glyphs.render(concept, g)
        layer = layer.rotate(float(rng.uniform(-25.0, 25.0)), resample=Image.Resampling.BILINEAR)
        cx, cy = slots[slot]
        x = int(np.clip(cx - g // 2 + rng.integers(-jitter, jitter + 1), 0, side - g))
        y = int(np.clip(cy - g // 2 + rng.integers(-jitter, jitter + 1), 0, side - g))
        canvas.paste(layer, (x, y), layer)
        bbox = layer.getchannel("A").getbbox()
        if bbox is not None:
            boxes[concept] = (x + bbox[0], y + bbox[1], x + bbox[2], y + bbox[3])

    reverse = _add_noise(canvas, rng)
    if layout == "left-right":
        pixels = np.concatenate([_add_noise(_obverse(side, rng), rng), reverse], axis=1)
        boxes = {c: (b[0] + side, b[1], b[2] + side, b[3]) for c, b in boxes.items()}
    else:
        pixels = reverse

    language = language or LANGUAGES[int(rng.integers(len(LANGUAGES)))]
    named = present if text_concepts is None else [c for c in concepts if c in set(text_concepts)]
    text = describe(named, language, rng, tables)
    truth = {c: c in present for c in concepts}
    return Coin(image=RawImage(pixels), text=text, truth=truth, boxes=boxes, language=language)


def _exact_count(rate: float, n: int) -> int:
    return int(math.floor(rate * n + 0.5))


def plan_presence(spec: SynthSpec) -> List[List[str]]:
    """Depicted concepts per sample, round(rate * n) positives per concept"""
    present: List[List[str]] = [[] for _ in range(spec.n_samples)]
    count = _exact_count(spec.positive_rate, spec.n_samples)
    for c_index, concept in enumerate(spec.concepts):
        rng = np.random.default_rng([spec.seed, 101, c_index + 1])
        for i in sorted(rng.permutation(spec.n_samples)[:count]):
            present[int(i)].append(concept)
    return present


def plan_noise(spec: SynthSpec, present: List[List[str]]) -> Dict[int, List[str]]:
    """Text concepts of the noisy samples; each differs in exactly one concept"""
    rng = np.random.default_rng([spec.seed, 202, 1])
    count = _exact_count(spec.label_noise_rate, spec.n_samples)
    noisy: Dict[int, List[str]] = {}
    for i in sorted(int(i) for i in rng.permutation(spec.n_samples)[:count]):
        shown = list(present[i])
        absent = [c for c in spec.concepts if c not in shown]
        if shown and absent:
            shown[int(rng.integers(len(shown)))] = absent[int(rng.integers(len(absent)))]
        elif absent:
            shown.append(absent[int(rng.integers(len(absent)))])
        else:
            shown.pop(int(rng.integers(len(shown))))
        noisy[i] = shown
    return noisy


def coin_id(index: int) -> str:
    return f"coin_{index:05d}"


def generate_corpus(spec: SynthSpec, out_dir: PathLike, tables: Optional[LexiconTables] = None,
                    jobs: int = 1) -> CorpusSummary:
    """Write images, descriptions, ground truth and per-concept manifests"""
    out_dir = Path(out_dir)
    tables = tables or load_lexicon()
    for concept in spec.concepts:
        lexicon_for(concept, tables)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "texts").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create corpus directory {out_dir}: {e}")

    present = plan_presence(spec)
    noisy = plan_noise(spec, present)

    def build(index: int) -> Coin:
        coin = generate_coin([spec.seed, index], present[index], side=spec.image_side,
                             layout=spec.layout, concepts=spec.concepts, tables=tables,
                             text_concepts=noisy.get(index))
        name = coin_id(index)
        try:
            save_image(coin.image, out_dir / "images" / f"{name}.png")
            (out_dir / "texts" / f"{name}.txt").write_text(coin.text + "\n", encoding="utf-8")
        except OSError as e:
            raise DataError(f"cannot write sample {name}: {e}")
        return coin

    indices = range(spec.n_samples)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            coins = list(pool.map(build, indices))
    else:
        coins = [build(i) for i in indices]

    write_ground_truth(out_dir / "ground_truth.tsv", coins, spec.concepts)
    for concept in spec.concepts:
        samples = [Sample(id=coin_id(i), image_path=f"images/{coin_id(i)}.png",
                          text_path=f"texts/{coin_id(i)}.txt", concept=concept,
                          label=POSITIVE if coin.truth[concept] else NEGATIVE)
                   for i, coin in enumerate(coins)]
        write_manifest(out_dir / f"manifest_{concept}.tsv", Manifest(samples=samples))

    positives = {c: sum(coin.truth[c] for coin in coins) for c in spec.concepts}
    logger.info("Generated %d coins in %s (%d with noisy descriptions)",
                spec.n_samples, out_dir, len(noisy))
    return CorpusSummary(out_dir=out_dir, n_samples=spec.n_samples, positives=positives,
                         noisy=[coin_id(i) for i in sorted(noisy)])


def write_ground_truth(path: PathLike, coins: Sequence[Coin], concepts: Sequence[str]):
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(GROUND_TRUTH_COLUMNS)
        for i, coin in enumerate(coins):
            for concept in concepts:
                box = coin.boxes.get(concept)
                writer.writerow([coin_id(i), concept, int(coin.truth[concept])]
                                + (list(box) if box else ["", "", "", ""]))


def read_ground_truth(path: PathLike) -> Dict[Tuple[str, str], GroundTruth]:
    """(id, concept) -> presence and glyph box"""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"cannot read ground truth {path}: {e}")
    truth = {}
    with handle:
        reader = csv.reader(handle, delimiter="\t")
        if tuple(next(reader, ())) != GROUND_TRUTH_COLUMNS:
            raise ManifestError(f"{path}: unexpected ground-truth header", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(GROUND_TRUTH_COLUMNS) or row[2] not in ("0", "1"):
                raise ManifestError(f"{path}: malformed ground-truth row", line=lineno)
            box = tuple(int(v) for v in row[3:]) if row[3] else None
            truth[(row[0], row[1])] = GroundTruth(present=row[2] == "1", box=box)
    return truth
