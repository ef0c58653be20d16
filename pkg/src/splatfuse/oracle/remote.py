"""HTTP client for an oracle served over the wire protocol."""

from __future__ import annotations

import requests

from ..errors import BadResponse, OracleUnavailable
from .base import Oracle, OracleRequest, OracleResponse
from .wire import PROTOCOL, decode_response, encode_request


class RemoteOracle(Oracle):
    name = "remote"

    def __init__(self, url: str, timeout: float = 300.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def health(self) -> dict:
        try:
            r = self.session.get(f"{self.url}/v1/health", timeout=self.timeout)
            r.raise_for_status()
            return r.json()
        except requests.RequestException as exc:
            raise OracleUnavailable(f"oracle at {self.url} unreachable: {exc}") from None

    def restore(self, request: OracleRequest) -> OracleResponse:
        request.validate()
        body, ctype = encode_request(request)
        try:
            r = self.session.post(f"{self.url}/v1/restore", data=body,
                                  headers={"Content-Type": ctype}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise OracleUnavailable(f"oracle at {self.url} unreachable: {exc}") from None
        if r.status_code >= 500:
            raise OracleUnavailable(f"oracle error {r.status_code}: {r.text[:200]}")
        if r.status_code != 200:
            raise BadResponse(f"oracle rejected request ({r.status_code}): {r.text[:200]}")
        resp = decode_response(r.content, r.headers.get("Content-Type", ""))
        return resp.validate(request)

    def close(self):
        self.session.close()


__all__ = ["RemoteOracle", "PROTOCOL"]
