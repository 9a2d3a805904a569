"""GHS hazard codes from PubChem, behind an on-disk cache.

Cache hits never open a connection.  Writers take a file lock and replace the
cache atomically, so concurrent benchmark workers cannot corrupt it.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path
from typing import Any

import httpx
from filelock import FileLock

from mmorf.errors import HttpError, NotFound, ParseError

PUG_VIEW_URL = "https://pubchem.ncbi.nlm.nih.gov/rest/pug_view/data/compound/{cid}/JSON"
_HCODE = re.compile(r"\bH\d{3}\b")


def read_cache(path: str | Path) -> dict[str, list[str]]:
    p = Path(path)
    if not p.exists():
        return {}
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{p}: cache must be a JSON object")
    return data


def _write_cache(path: Path, data: dict[str, list[str]]) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)


def _strings(node: Any):
    if isinstance(node, dict):
        for k, v in node.items():
            if k == "String" and isinstance(v, str):
                yield v
            else:
                yield from _strings(v)
    elif isinstance(node, list):
        for v in node:
            yield from _strings(v)


def parse_pug_view(payload: Any) -> set[str]:
    """Hazard statement codes anywhere in a PUG View record."""
    if not isinstance(payload, dict) or "Record" not in payload:
        raise ParseError("response is not a PUG View record")
    return {code for s in _strings(payload["Record"]) for code in _HCODE.findall(s)}


def fetch_ghs_remote(
    identifier: str,
    cache_path: str | Path,
    client: httpx.Client | None = None,
    url_template: str = PUG_VIEW_URL,
    timeout: float = 30.0,
) -> set[str]:
    cid = str(identifier).strip()
    if not cid.isdigit():
        raise NotFound(f"{identifier!r} is not a PubChem compound id")
    cache_path = Path(cache_path)
    cached = read_cache(cache_path)
    if cid in cached:
        return set(cached[cid])

    own = client is None
    client = client or httpx.Client(timeout=timeout)
    try:
        resp = client.get(url_template.format(cid=cid), params={"heading": "GHS Classification"})
    except httpx.HTTPError as exc:
        raise HttpError(None, str(exc)) from exc
    finally:
        if own:
            client.close()
    if resp.status_code == 404:
        raise NotFound(f"no GHS record for compound {cid}")
    if resp.status_code != 200:
        raise HttpError(resp.status_code, resp.text[:500])
    try:
        payload = resp.json()
    except ValueError as exc:
        raise ParseError(f"compound {cid}: body is not JSON") from exc
    codes = parse_pug_view(payload)

    cache_path.parent.mkdir(parents=True, exist_ok=True)
    with FileLock(str(cache_path) + ".lock"):
        data = read_cache(cache_path)
        data[cid] = sorted(codes)
        _write_cache(cache_path, data)
    return codes
