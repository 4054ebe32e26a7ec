"""
Weak labels from unstructured lot descriptions

Descriptions are reduced to token sets, concepts are matched through a static
multilingual lexicon, and a sample is positive for a concept as soon as any
lexicon keyword occurs in its text.
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union

from .errors import ConfigError

logger = logging.getLogger(__name__)

TokenSet = FrozenSet[str]

LANGUAGES = ("en", "fr", "es", "de")
KINDS = ("base", "translation", "plural", "synonym")
POSITIVE = "pos"
NEGATIVE = "neg"

_WORD = re.compile(r"[^\W\d_]+")

KeywordTable = Mapping[str, Iterable[Tuple[str, str]]]


def normalize_text(raw: str) -> TokenSet:
    """Lowercase, split on anything that is not a letter, deduplicate"""
    return frozenset(_WORD.findall(raw.lower()))


def word_frequency(corpus: Iterable[TokenSet]) -> List[Tuple[str, int]]:
    """Number of documents containing each word, most frequent first"""
    counts: Counter = Counter()
    for tokens in corpus:
        counts.update(set(tokens))
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


@dataclass(frozen=True)
class LexiconEntry:
    keyword: str
    language: str
    kind: str


@dataclass(frozen=True)
class Lexicon:
    """Every keyword that marks a concept as present"""
    concept: str
    entries: FrozenSet[LexiconEntry] = field(default_factory=frozenset)

    @property
    def keywords(self) -> FrozenSet[str]:
        return frozenset(entry.keyword for entry in self.entries)

    def keywords_for(self, language: str, kinds: Iterable[str] = KINDS) -> List[str]:
        wanted = set(kinds)
        return sorted({entry.keyword for entry in self.entries
                       if entry.language == language and entry.kind in wanted})


@dataclass
class LexiconTables:
    """Lexicon file contents grouped by entry kind, keyed by concept"""
    base: Dict[str, Set[Tuple[str, str]]] = field(default_factory=dict)
    translations: Dict[str, Set[Tuple[str, str]]] = field(default_factory=dict)
    plurals: Dict[str, Set[Tuple[str, str]]] = field(default_factory=dict)
    synonyms: Dict[str, Set[Tuple[str, str]]] = field(default_factory=dict)
    order: List[str] = field(default_factory=list)

    def table(self, kind: str) -> Dict[str, Set[Tuple[str, str]]]:
        return {
            "base": self.base,
            "translation": self.translations,
            "plural": self.plurals,
            "synonym": self.synonyms,
        }[kind]

    def concepts(self) -> List[str]:
        return list(self.order)


def default_lexicon_path() -> Path:
    return Path(str(resources.files("numisnet") / "data" / "lexicon.tsv"))


def load_lexicon(path: Optional[Union[str, Path]] = None) -> LexiconTables:
    """Parse a concept / keyword / language / kind TSV file"""
    path = Path(path) if path else default_lexicon_path()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read lexicon {path}: {e}")

    tables = LexiconTables()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ConfigError(f"{path}:{lineno}: expected 4 tab-separated fields")
        concept, keyword, language, kind = (p.strip() for p in parts)
        if language not in LANGUAGES:
            raise ConfigError(f"{path}:{lineno}: unknown language '{language}'")
        if kind not in KINDS:
            raise ConfigError(f"{path}:{lineno}: unknown kind '{kind}'")
        keyword = keyword.lower()
        if normalize_text(keyword) != {keyword}:
            raise ConfigError(f"{path}:{lineno}: keyword '{keyword}' is not a single word")
        if concept not in tables.order:
            tables.order.append(concept)
        tables.table(kind).setdefault(concept, set()).add((keyword, language))
    logger.debug("Loaded lexicon %s with concepts %s", path, tables.order)
    return tables


def plural_of(keyword: str) -> str:
    return keyword + "s"


def _pairs(items: Iterable[Union[str, Tuple[str, str]]]) -> Set[Tuple[str, str]]:
    pairs = set()
    for item in items:
        if isinstance(item, str):
            pairs.add((item.lower(), "en"))
        else:
            pairs.add((item[0].lower(), item[1]))
    return pairs


def expand_lexicon(concept: str, base_keywords: Iterable[Union[str, Tuple[str, str]]],
                   translation_table: KeywordTable, synonym_table: KeywordTable,
                   plural_table: Optional[KeywordTable] = None) -> Lexicon:
    """Base keywords plus translations, synonyms and their plurals

    Bare strings in base_keywords are taken as English.
    """
    base = _pairs(base_keywords)
    if not base:
        raise ConfigError(f"no base keywords for concept '{concept}'")
    entries = {LexiconEntry(kw, lang, "base") for kw, lang in base}
    entries |= {LexiconEntry(kw.lower(), lang, "translation")
                for kw, lang in translation_table.get(concept, ())}
    entries |= {LexiconEntry(kw.lower(), lang, "synonym")
                for kw, lang in synonym_table.get(concept, ())}
    for entry in list(entries):
        entries.add(LexiconEntry(plural_of(entry.keyword), entry.language, "plural"))
    if plural_table:
        entries |= {LexiconEntry(kw.lower(), lang, "plural")
                    for kw, lang in plural_table.get(concept, ())}
    return Lexicon(concept=concept, entries=frozenset(entries))


def lexicon_for(concept: str, tables: LexiconTables) -> Lexicon:
    """Expanded lexicon of a configured concept"""
    if concept not in tables.base:
        raise ConfigError(
            f"unknown concept '{concept}' (lexicon has: {', '.join(tables.concepts())})")
    return expand_lexicon(concept, tables.base[concept], tables.translations,
                          tables.synonyms, tables.plurals)


def assign_label(tokens: TokenSet, lexicon: Lexicon) -> str:
    return POSITIVE if tokens & lexicon.keywords else NEGATIVE


def read_tokens(path: Union[str, Path]) -> TokenSet:
    return normalize_text(Path(path).read_text(encoding="utf-8"))
