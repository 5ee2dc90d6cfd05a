"""Bundled language profiles: stopword frequency sets for en, de, fr, es, it.

Each asset is one lowercase token per line. The sets are pairwise almost
disjoint (shared fraction under 20%), which is what makes hit counting a
usable discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

UNDETERMINED = "und"


@dataclass(frozen=True)
class LanguageProfile:
    language_code: str
    stopwords: frozenset[str]


@lru_cache(maxsize=1)
def load_profiles() -> tuple[LanguageProfile, ...]:
    """Load every bundled profile, sorted by language code."""
    profiles = []
    assets = resources.files(__package__) / "stopwords"
    for entry in sorted(assets.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".txt"):
            continue
        code = entry.name[:-4]
        words = frozenset(
            line.strip() for line in entry.read_text(encoding="utf-8").splitlines() if line.strip()
        )
        profiles.append(LanguageProfile(language_code=code, stopwords=words))
    return tuple(profiles)


def profile_codes() -> tuple[str, ...]:
    return tuple(p.language_code for p in load_profiles())


def detect_language(tokens: list[str]) -> str:
    """Code of the profile with the most stopword hits over the token multiset.

    Ties break toward the alphabetically-first code; zero hits anywhere gives
    the undetermined marker.
    """
    best_code = UNDETERMINED
    best_hits = 0
    for profile in load_profiles():
        hits = sum(1 for token in tokens if token in profile.stopwords)
        if hits > best_hits:
            best_code, best_hits = profile.language_code, hits
    return best_code
