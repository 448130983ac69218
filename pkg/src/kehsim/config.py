"""Flat key-value config files and deterministic seed derivation.

The config format is one `key = value` pair per line, `#` comments, blank
lines ignored. Keys are dotted paths (`mode.car.harmonics`, `transducer.mass`).
Values stay strings here; consumers parse them with the helpers below.
"""

from __future__ import annotations

import hashlib
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed config files or invalid config values."""


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse flat key-value text into an ordered dict of raw string values."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv_text(path.read_text(), source=str(path))


def parse_float_list(value: str) -> list[float]:
    """Parse 'a, b, c' into floats; empty string gives []."""
    value = value.strip()
    if not value:
        return []
    return [float(tok) for tok in value.replace(",", " ").split()]


def parse_str_list(value: str) -> list[str]:
    value = value.strip()
    if not value:
        return []
    return [tok.strip() for tok in value.split(",") if tok.strip()]


def parse_tuple_list(value: str, arity: int) -> list[tuple[float, ...]]:
    """Parse 'a:b:c, d:e:f' into tuples of `arity` floats.

    Used for band-noise (low:high:rms) and harmonic (freq:amp) lists.
    """
    value = value.strip()
    if not value:
        return []
    out = []
    for tok in value.split(","):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) != arity:
            raise ConfigError(f"expected {arity} colon-separated numbers, got {tok!r}")
        out.append(tuple(float(p) for p in parts))
    return out


def derive_seed(global_seed: int, *labels: object) -> int:
    """Derive a per-stage seed from a global seed and a label path.

    Hash-based fan-out: every pipeline stage gets an independent,
    reproducible stream so stages can be re-run in isolation. Stable
    across platforms and processes.
    """
    tag = str(int(global_seed)) + "/" + "/".join(str(x) for x in labels)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)
