"""
Shared request/response transport for the remote clients (MLLM, LLM judge,
face detector).

One httpx.Client per remote endpoint, shared across worker threads. A
semaphore caps the number of requests in flight, and failed attempts
(connection errors, timeouts, 5xx) are retried with exponential backoff.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Any, Callable, Dict, Optional, Type

import httpx
from prometheus_client import Counter

from app.core import app_config
from app.core.errors import ClientUnavailableError, ToolkitError

logger = logging.getLogger(__name__)

REMOTE_CALLS = Counter(
    "eald_remote_calls_total",
    "Remote client requests by client kind and outcome",
    ["client", "outcome"],
)

RETRY_STATUS = {500, 502, 503, 504}


class JsonTransport:
    """POST JSON to one endpoint with bounded concurrency and retries."""

    def __init__(
            self,
            endpoint: str,
            client_kind: str,
            token: Optional[str] = None,
            timeout_s: float = app_config.CLIENT_TIMEOUT_S,
            max_attempts: int = app_config.CLIENT_MAX_ATTEMPTS,
            max_in_flight: int = app_config.CLIENT_MAX_IN_FLIGHT,
            backoff_s: float = 0.5,
            unavailable: Type[ToolkitError] = ClientUnavailableError,
            http_client: Optional[httpx.Client] = None,
            sleep: Callable[[float], None] = time.sleep,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self.endpoint = endpoint
        self.client_kind = client_kind
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.unavailable = unavailable
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = http_client or httpx.Client(timeout=timeout_s,
                                                   headers=headers)

    def close(self) -> None:
        self._client.close()

    def post(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        last_error = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._slots:
                    response = self._client.post(self.endpoint, json=payload)
                if response.status_code in RETRY_STATUS:
                    last_error = f"HTTP {response.status_code}"
                else:
                    response.raise_for_status()
                    REMOTE_CALLS.labels(self.client_kind, "success").inc()
                    return response.json()
            except httpx.HTTPStatusError as e:
                # 4xx is not worth retrying
                REMOTE_CALLS.labels(self.client_kind, "error").inc()
                raise self.unavailable(
                    f"{self.client_kind} rejected request: {e}") from None
            except (httpx.TransportError, ValueError) as e:
                last_error = f"{type(e).__name__}: {e}"

            REMOTE_CALLS.labels(self.client_kind, "retry").inc()
            if attempt < self.max_attempts:
                delay = self.backoff_s * (2 ** (attempt - 1))
                logger.warning("%s attempt %d/%d failed (%s); retrying in "
                               "%.2fs", self.client_kind, attempt,
                               self.max_attempts, last_error, delay)
                self._sleep(delay)

        REMOTE_CALLS.labels(self.client_kind, "error").inc()
        raise self.unavailable(
            f"{self.client_kind} at {self.endpoint} unavailable after "
            f"{self.max_attempts} attempts: {last_error}")
