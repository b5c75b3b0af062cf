"""Text normalization pipeline and tokenizer.

Every model in the package consumes tokens produced here, so the pipeline
is deliberately small, order-stable, and idempotent: applying it twice
yields the same string as applying it once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError, DataError

MENTION_PLACEHOLDER = "@user"
DEFAULT_URL_PLACEHOLDER = "<url>"
DEFAULT_NUMBER_PLACEHOLDER = "<number>"

MENTION_MODES = ("mask_all", "strip_at")

_MENTION_RE = re.compile(r"@+(\w+)")
_URL_PREFIXES = ("http://", "https://", "www.")
_NUMBER_SEPARATORS = set("+-()./")


@dataclass(frozen=True)
class PreprocessConfig:
    """Settings for the normalization pipeline.

    mention_mode: "mask_all" replaces @handles with "@user"; "strip_at"
    drops the leading @ and keeps the handle as a plain token.
    max_char_repeat: longest run of identical characters kept in the output.
    """

    mention_mode: str = "mask_all"
    url_placeholder: str = DEFAULT_URL_PLACEHOLDER
    number_placeholder: str = DEFAULT_NUMBER_PLACEHOLDER
    max_char_repeat: int = 2

    def __post_init__(self):
        if self.mention_mode not in MENTION_MODES:
            raise ConfigError(f"mention_mode must be one of {MENTION_MODES}, got {self.mention_mode!r}")
        if self.max_char_repeat < 1:
            raise ConfigError("max_char_repeat must be >= 1")
        for name, ph in (("url_placeholder", self.url_placeholder),
                         ("number_placeholder", self.number_placeholder)):
            # Each check guards idempotence: a placeholder must never be
            # re-masked or re-reduced by a second pipeline pass.
            if not ph:
                raise ConfigError(f"{name} must be non-empty")
            if any(c.isdigit() for c in ph):
                raise ConfigError(f"{name} must not contain digits: {ph!r}")
            if ph.startswith("@"):
                raise ConfigError(f"{name} must not start with '@': {ph!r}")
            if ph.lower().startswith(_URL_PREFIXES):
                raise ConfigError(f"{name} must not look like a URL: {ph!r}")
            if any(c.isspace() for c in ph):
                raise ConfigError(f"{name} must not contain whitespace: {ph!r}")
            if re.search(r"(.)\1{%d,}" % self.max_char_repeat, ph):
                raise ConfigError(f"{name} has a character run longer than max_char_repeat: {ph!r}")


def _mask_mentions(text, mode):
    if mode == "mask_all":
        return _MENTION_RE.sub(MENTION_PLACEHOLDER, text)
    return _MENTION_RE.sub(r"\1", text)


def _is_url_token(token):
    return token.startswith(_URL_PREFIXES)


def _is_number_token(token):
    digits = 0
    for ch in token:
        if ch.isdigit():
            digits += 1
        elif ch not in _NUMBER_SEPARATORS:
            return False
    return digits >= 2


def _mask_tokens(text, config):
    out = []
    for token in text.split(" "):
        if _is_url_token(token):
            out.append(config.url_placeholder)
        elif _is_number_token(token):
            out.append(config.number_placeholder)
        else:
            out.append(token)
    return " ".join(out)


def _reduce_repeats(text, limit):
    return re.sub(r"(.)\1{%d,}" % limit, lambda m: m.group(1) * limit, text)


def preprocess_text(raw: str, config: PreprocessConfig = PreprocessConfig()) -> str:
    """Normalize a raw post.

    Steps, in order: collapse whitespace runs and trim; lowercase; handle
    @mentions; mask URL and number tokens; reduce character runs longer
    than max_char_repeat. Masking is applied once more after reduction
    because reduction can expose masquerading patterns (e.g. "htttp://x"
    reduces to a real URL prefix); without the second pass the pipeline
    would not be idempotent.
    """
    text = " ".join(raw.split())
    text = text.lower()
    text = _mask_mentions(text, config.mention_mode)
    text = _mask_tokens(text, config)
    text = _reduce_repeats(text, config.max_char_repeat)
    text = _mask_mentions(text, config.mention_mode)
    text = _mask_tokens(text, config)
    return text


_KEEP_EDGE = set("#@<>")


def _keep_edge_char(ch):
    return ch.isalpha() or ch.isdigit() or ch in _KEEP_EDGE


def tokenize(normalized: str) -> list[str]:
    """Split a normalized string into tokens.

    Splits on single spaces and strips leading/trailing characters that are
    not letters, digits, or one of '#', '@', '<', '>'. Interior punctuation
    (hyphens, apostrophes) is preserved, so "self-titled", "#tag" and
    "@user" survive intact. Empty tokens are dropped.
    """
    tokens = []
    for piece in normalized.split(" "):
        start = 0
        end = len(piece)
        while start < end and not _keep_edge_char(piece[start]):
            start += 1
        while end > start and not _keep_edge_char(piece[end - 1]):
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return tokens


def preprocess_corpus(corpus, config: PreprocessConfig = PreprocessConfig()):
    """Run the pipeline over every post, returning a new tokenized corpus.

    The input corpus is left untouched; the result has preprocessed=True,
    per-post token lists, and per-user token counts filled in.
    """
    from .corpus import Corpus, Post, UserRecord

    if corpus.preprocessed:
        raise DataError("corpus is already preprocessed")
    new_posts = {}
    new_users = {}
    for user_id in corpus.user_ids():
        posts = []
        token_total = 0
        for post in corpus.posts[user_id]:
            tokens = tuple(tokenize(preprocess_text(post.raw_text, config)))
            token_total += len(tokens)
            posts.append(Post(post.user_id, post.post_id, post.raw_text, tokens))
        new_posts[user_id] = posts
        rec = corpus.users[user_id]
        new_users[user_id] = UserRecord(user_id, rec.labels, rec.post_count, token_total)
    return Corpus(users=new_users, posts=new_posts, preprocessed=True)
