"""Rule-generated diacritized Hebrew for fixtures, smoke runs and overfit checks.

Sentences are drawn from a small pointed lexicon whose unpointed skeletons are
unique, so the correct labels are a function of the letters alone.
"""

from __future__ import annotations

import random
import unicodedata
from pathlib import Path

LEXICON = (
    "שָׁלוֹם", "בַּיִת", "סֵפֶר", "יֶלֶד", "יַלְדָּה", "מַיִם", "לֶחֶם", "שֶׁמֶשׁ",
    "יָרֵחַ", "כֶּלֶב", "חָתוּל", "עִיר", "אֶרֶץ", "דֶּרֶךְ", "מִכְתָּב", "תַּלְמִיד",
    "מוֹרֶה", "שִׂמְחָה", "שָׂדֶה", "עֵץ", "פֶּרַח", "גַּן", "אוֹר", "לַיְלָה",
    "בֹּקֶר", "עֶרֶב", "יוֹם", "שָׁנָה", "שָׁבוּעַ", "אִישׁ", "אִשָּׁה", "אָב",
    "אֵם", "אָח", "אָחוֹת", "הוּא", "הִיא", "אֲנִי", "אַתָּה", "אֲנַחְנוּ",
    "הֵם", "גָּדוֹל", "קָטָן", "טוֹב", "יָפֶה", "חָדָשׁ", "יָשָׁן", "הָלַךְ",
    "אָכַל", "שָׁתָה", "כָּתַב", "קָרָא", "רָאָה", "שָׁמַע", "אָהַב", "עַל",
    "אֶל", "עִם", "שֶׁל", "כִּי", "גַּם", "לֹא", "כֵּן", "מָה", "מִי", "אֵיפֹה",
    "פֹּה", "שָׁם", "עַכְשָׁו", "תּוֹדָה", "בְּבַקָּשָׁה", "מַחְשֵׁב", "טֶלֶפוֹן",
    "מְכוֹנִית", "רְחוֹב", "חֲבֵרִים", "מִשְׁפָּחָה", "עֲבוֹדָה", "שָׂפָה", "עִבְרִית",
    "סִפּוּר", "קֻפְסָה", "צִפּוֹר", "חֻלְצָה", "זְמַן", "נָהָר",
)

_POINTS = set(range(0x05B0, 0x05C8))


def _shuffle_marks(word: str, rng: random.Random) -> str:
    """Same word with each letter's points in a random (non-canonical) order."""
    out, cluster = [], []
    for ch in unicodedata.normalize("NFD", word):
        if ord(ch) in _POINTS and out:
            cluster.append(ch)
            continue
        rng.shuffle(cluster)
        out.extend(cluster)
        cluster = []
        out.append(ch)
    rng.shuffle(cluster)
    out.extend(cluster)
    return "".join(out)


def sentence(rng: random.Random, min_words: int = 3, max_words: int = 9, extras: bool = False) -> str:
    words = [rng.choice(LEXICON) for _ in range(rng.randint(min_words, max_words))]
    if extras:
        for i, w in enumerate(words):
            roll = rng.random()
            if roll < 0.05:
                words[i] = str(rng.randint(1, 2024))
            elif roll < 0.08:
                words[i] = rng.choice(("ok", "CPU", "Tel-Aviv"))
            elif roll < 0.15:
                words[i] = _shuffle_marks(w, rng)
            elif roll < 0.18:
                words[i] = w + "־" + rng.choice(LEXICON)  # maqaf compound
            elif roll < 0.22:
                words[i] = w + ","
    return " ".join(words) + rng.choice(".!?.")


def corpus_lines(n: int, seed: int = 0, sentences_per_line: tuple[int, int] = (1, 3),
                 extras: bool = True, **kwargs) -> list[str]:
    rng = random.Random(seed)
    return [
        " ".join(sentence(rng, extras=extras, **kwargs) for _ in range(rng.randint(*sentences_per_line)))
        for _ in range(n)
    ]


def write_corpus(root: str | Path, genres: dict[str, int], lines_per_doc: int = 5, seed: int = 0) -> list[Path]:
    """Write ``<root>/<genre>/doc_NNN.txt`` files; returns the paths."""
    root = Path(root)
    paths = []
    for g, (genre, n_docs) in enumerate(sorted(genres.items())):
        (root / genre).mkdir(parents=True, exist_ok=True)
        for i in range(n_docs):
            path = root / genre / f"doc_{i:03d}.txt"
            lines = corpus_lines(lines_per_doc, seed=seed * 1_000_003 + g * 10_007 + i)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            paths.append(path)
    return paths
