"""Lexical URL features and the allowlist + model judgment.

Features are computed over the longest hostname label excluding the
public-suffix TLD. UF8 is reserved: its published description does not
describe a URL property, so it is pinned to 0 and excluded from model
training.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

FEATURE_NAMES = ["uf1", "uf2", "uf3", "uf4", "uf5", "uf6", "uf7", "uf8",
                 "uf9", "uf10"]
TRAINED_FEATURES = [n for n in FEATURE_NAMES if n != "uf8"]

_VOWELS = set("aeiou")


class UrlError(ValueError):
    pass


@dataclass(frozen=True)
class UrlFeatureVector:
    uf1: float   # entropy bits of the longest subdomain
    uf2: float   # its length
    uf3: float   # vowel fraction
    uf4: float   # consonant fraction
    uf5: float   # adjacent repeated character fraction
    uf6: float   # characters occurring more than once, as a fraction
    uf7: float   # numeric character fraction
    uf8: float   # reserved, always 0
    uf9: float   # gibberish score in [0, 1]
    uf10: float  # TLD category code

    def as_list(self) -> list[float]:
        return [getattr(self, n) for n in FEATURE_NAMES]

    def trainable(self) -> list[float]:
        return [getattr(self, n) for n in TRAINED_FEATURES]


def _load_tld_table() -> dict[str, int]:
    table: dict[str, int] = {}
    text = resources.files("npmsift.data").joinpath(
        "tld_categories.txt").read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tld, _, code = line.partition(" ")
        table[tld] = int(code)
    return table


_TLD_TABLE: dict[str, int] | None = None


def tld_table() -> dict[str, int]:
    global _TLD_TABLE
    if _TLD_TABLE is None:
        _TLD_TABLE = _load_tld_table()
    return _TLD_TABLE


_HOST_RE = re.compile(r"^[a-z0-9]([a-z0-9.-]*[a-z0-9])?$")


def split_host(url: str) -> tuple[list[str], str]:
    """(labels excluding the public suffix, suffix). Two-level suffixes
    from the table win over one-level."""
    try:
        parsed = urlsplit(url if "//" in url else "//" + url)
        host = (parsed.hostname or "").strip(".").lower()
    except ValueError as exc:
        raise UrlError(f"unparseable url {url!r}: {exc}") from exc
    if not host or not _HOST_RE.match(host):
        raise UrlError(f"no valid hostname in {url!r}")
    labels = host.split(".")
    table = tld_table()
    if len(labels) >= 3 and ".".join(labels[-2:]) in table:
        return labels[:-2], ".".join(labels[-2:])
    if len(labels) >= 2:
        return labels[:-1], labels[-1]
    return labels, ""


def registered_domain(url: str) -> str:
    rest, suffix = split_host(url)
    if not rest:
        return suffix
    return f"{rest[-1]}.{suffix}" if suffix else rest[-1]


def longest_subdomain(url: str) -> str:
    rest, suffix = split_host(url)
    if not rest:
        return suffix
    return max(rest, key=len)


def char_entropy(text: str) -> float:
    if not text:
        return 0.0
    counts = Counter(text)
    total = len(text)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


class GibberishScorer:
    """Character-bigram log-likelihood under a word-list model, squashed
    to [0, 1]; higher means less English-like."""

    _BOUNDARY = "^"

    def __init__(self, words: list[str]):
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789-" + self._BOUNDARY
        self.alphabet = alphabet
        counts: dict[str, Counter] = {c: Counter() for c in alphabet}
        for word in words:
            cleaned = "".join(c for c in word.lower() if c in alphabet)
            if not cleaned:
                continue
            seq = self._BOUNDARY + cleaned + self._BOUNDARY
            for a, b in zip(seq, seq[1:]):
                counts[a][b] += 1
        self.logprob: dict[str, dict[str, float]] = {}
        v = len(alphabet)
        for a, counter in counts.items():
            total = sum(counter.values())
            self.logprob[a] = {
                b: math.log((counter.get(b, 0) + 1) / (total + v))
                for b in alphabet}
        lls = [self.mean_loglik(w) for w in words if w.strip()]
        self.center = sum(lls) / len(lls)
        var = sum((x - self.center) ** 2 for x in lls) / len(lls)
        self.scale = math.sqrt(var) or 1.0

    def mean_loglik(self, text: str) -> float:
        cleaned = "".join(c for c in text.lower() if c in self.alphabet
                          and c != self._BOUNDARY)
        if not cleaned:
            return self.center
        seq = self._BOUNDARY + cleaned + self._BOUNDARY
        ll = 0.0
        for a, b in zip(seq, seq[1:]):
            ll += self.logprob[a][b]
        return ll / (len(seq) - 1)

    def score(self, text: str) -> float:
        z = (self.center - self.mean_loglik(text)) / self.scale
        return 1.0 / (1.0 + math.exp(-z))


_SCORER: GibberishScorer | None = None


def default_scorer() -> GibberishScorer:
    global _SCORER
    if _SCORER is None:
        text = resources.files("npmsift.data").joinpath(
            "wordlist.txt").read_text(encoding="utf-8")
        _SCORER = GibberishScorer(text.split())
    return _SCORER


def extract_url_features(url: str,
                         scorer: GibberishScorer | None = None
                         ) -> UrlFeatureVector:
    """Pure function of the URL text (given a fixed scorer)."""
    scorer = scorer or default_scorer()
    label = longest_subdomain(url)
    _, suffix = split_host(url)
    n = len(label)
    letters = [c for c in label if c.isalpha()]
    vowels = sum(1 for c in letters if c in _VOWELS)
    consonants = len(letters) - vowels
    digits = sum(1 for c in label if c.isdigit())
    adjacent = sum(1 for a, b in zip(label, label[1:]) if a == b)
    counts = Counter(label)
    repeated = sum(c for c in counts.values() if c > 1)
    tld_code = tld_table().get(suffix, 3)
    return UrlFeatureVector(
        uf1=char_entropy(label),
        uf2=float(n),
        uf3=vowels / n if n else 0.0,
        uf4=consonants / n if n else 0.0,
        uf5=adjacent / (n - 1) if n > 1 else 0.0,
        uf6=repeated / n if n else 0.0,
        uf7=digits / n if n else 0.0,
        uf8=0.0,
        uf9=scorer.score(label),
        uf10=float(tld_code),
    )


def load_allowlist(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("npmsift.data").joinpath(
            "allowlist.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    domains = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            domains.add(line)
    return frozenset(domains)


_ALLOWLIST: frozenset[str] | None = None


def default_allowlist() -> frozenset[str]:
    global _ALLOWLIST
    if _ALLOWLIST is None:
        _ALLOWLIST = load_allowlist()
    return _ALLOWLIST


def judge_url(url: str, allowlist: frozenset[str] | None = None,
              model=None, scorer: GibberishScorer | None = None):
    """Allowlist hit on the registered domain short-circuits to benign;
    otherwise the tree-ensemble score decides at 0.5."""
    from .shellcmd import UrlVerdict
    allowlist = allowlist if allowlist is not None else default_allowlist()
    domain = registered_domain(url)   # raises UrlError on no hostname
    if domain in allowlist:
        return UrlVerdict(url=url, label="benign", score=0.0)
    if model is None:
        from .models import default_url_model
        model = default_url_model()
    vector = extract_url_features(url, scorer=scorer)
    label, score = model.predict_one(vector.trainable())
    verdict = "malicious" if score >= 0.5 else "benign"
    return UrlVerdict(url=url, label=verdict, score=score)
