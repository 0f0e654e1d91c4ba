from __future__ import annotations

import re

from .errors import MalformedId

ID_PATTERN = re.compile(r"[A-Za-z0-9_.-]+")


def is_id(text: str) -> bool:
    return isinstance(text, str) and ID_PATTERN.fullmatch(text) is not None


def check_id(text: str, what: str = "identifier") -> str:
    if not is_id(text):
        raise MalformedId(f"malformed {what}: {text!r}")
    return text
