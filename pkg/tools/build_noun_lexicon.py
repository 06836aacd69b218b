"""Regenerate src/reflectkit/data/nouns.txt.

Offline helper, not imported by the package. Needs ``wordfreq``,
``lemminflect`` and ``textblob`` (only for its bundled tag lexicon):

    pip install wordfreq lemminflect
    pip install --no-deps textblob
    python tools/build_noun_lexicon.py --size 5000

The most frequent ``--size`` words whose most likely part of speech in the
Brill tag lexicon is a singular common noun (NN) are kept, together with
their plural forms when those are tagged NNS, plus any NNS-tagged word met
in the same frequency range. Words mainly used as verbs or
adjectives ("run", "red", "saw") therefore stay out even though they can
be nouns.
"""
from __future__ import annotations

import argparse
import importlib.util
from pathlib import Path

from lemminflect import getInflection
from wordfreq import top_n_list

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "reflectkit" / "data"


def brill_tags() -> dict[str, str]:
    spec = importlib.util.find_spec("textblob")
    if spec is None or not spec.submodule_search_locations:
        raise SystemExit("textblob is not installed (pip install --no-deps textblob)")
    path = Path(spec.submodule_search_locations[0]) / "en" / "en-lexicon.txt"
    tags = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith(";") or " " not in line:
            continue
        word, tag = line.split(" ", 1)
        tags.setdefault(word, tag.split()[0])
    return tags


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=5000)
    parser.add_argument("--out", type=Path, default=DATA / "nouns.txt")
    args = parser.parse_args()

    stop = set((DATA / "function_words.txt").read_text().split())
    tags = brill_tags()

    lemmas: list[str] = []
    plurals: set[str] = set()
    for word in top_n_list("en", 60000):
        if len(lemmas) >= args.size:
            break
        if not word.isalpha() or len(word) < 2 or word in stop:
            continue
        if tags.get(word) == "NN":
            lemmas.append(word)
        elif tags.get(word) == "NNS":
            # irregular plurals such as "people" that no lemma inflects to
            plurals.add(word)

    words = set(lemmas) | plurals
    for lemma in lemmas:
        for plural in getInflection(lemma, tag="NNS") or ():
            if tags.get(plural) == "NNS":
                words.add(plural.lower())

    args.out.write_text("\n".join(sorted(words)) + "\n", encoding="utf-8")
    print(f"wrote {len(words)} words ({len(lemmas)} singular nouns) to {args.out}")


if __name__ == "__main__":
    main()
