"""Small JSON-over-HTTP helper with retries, shared by the embeddings and
chat-completion clients."""

from __future__ import annotations

import time

import httpx

from .errors import ServiceError

DEFAULT_RETRIES = 3
DEFAULT_TIMEOUT = 60.0


def post_json(
    url: str,
    payload: dict,
    api_key: str | None = None,
    retries: int = DEFAULT_RETRIES,
    timeout: float = DEFAULT_TIMEOUT,
    backoff: float = 0.5,
    transport=None,
) -> dict:
    """POST a JSON payload, retrying transport failures and 5xx responses.

    Raises ServiceError carrying the attempt count after retries are spent.
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: Exception | None = None
    for attempt in range(1, retries + 1):
        try:
            with httpx.Client(timeout=timeout, transport=transport) as client:
                resp = client.post(url, json=payload, headers=headers)
            if resp.status_code >= 500:
                last_error = ServiceError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            elif resp.status_code >= 400:
                raise ServiceError(f"HTTP {resp.status_code}: {resp.text[:200]}", attempts=attempt)
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ServiceError(f"non-JSON response: {exc}", attempts=attempt) from exc
        except ServiceError:
            raise
        except httpx.HTTPError as exc:
            last_error = exc
        if attempt < retries:
            time.sleep(backoff * attempt)
    raise ServiceError(f"request to {url} failed: {last_error}", attempts=retries)
