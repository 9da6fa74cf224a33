"""Small shared helpers: ordered parallel map, canonical JSON, hashing."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map preserving input order; threads <= 1 degrades to a plain loop."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj) -> str:
    """Short stable digest of a JSON-serialisable config mapping."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
