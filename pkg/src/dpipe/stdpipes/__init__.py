"""Standard pipe library and the supporting corpus/profile utilities."""

from ..registry import PipeRegistry
from .corpus import generate_corpus, make_langdetect_spec, write_corpus_ndjson
from .profiles import LanguageProfile, detect_language, load_profiles, profile_codes
from .transforms import (
    BadIntegrationMode,
    ModelStub,
    UnknownKeyColumn,
    record_fingerprint,
    standard_factories,
    tokenize,
)

__all__ = [
    "BadIntegrationMode",
    "LanguageProfile",
    "ModelStub",
    "UnknownKeyColumn",
    "detect_language",
    "generate_corpus",
    "load_profiles",
    "make_langdetect_spec",
    "profile_codes",
    "record_fingerprint",
    "standard_factories",
    "standard_registry",
    "tokenize",
    "write_corpus_ndjson",
]


def standard_registry() -> PipeRegistry:
    """A fresh registry populated with every standard pipe."""
    registry = PipeRegistry()
    for factory in standard_factories():
        registry.register(factory)
    return registry
