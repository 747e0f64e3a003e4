"""Wire protocol for external agents (advisors, planner, rationale writers).

A request is one JSON document ``{"system", "input", "params"}`` and the reply
is ``{"output"}``. Endpoints:

* ``pipe:<command>``: the command is started per request, receives the request
  as a single line on stdin and answers with a single line on stdout.
* ``http://...`` / ``https://...``: the request is POSTed as JSON.
* any callable taking the request dict and returning the reply dict (used for
  in-process backends and tests).
"""
from __future__ import annotations

import json
import shlex
import subprocess
import urllib.error
import urllib.request
from typing import Callable, Union

Endpoint = Union[str, Callable[[dict], dict]]


class Timeout(TimeoutError):
    """The endpoint did not answer in time or could not be reached at all."""


class MalformedReply(ValueError):
    pass


def make_request(system: str, input_text: str, temperature: float = 0.7, max_actions: int = 20) -> dict:
    return {"system": system, "input": input_text,
            "params": {"temperature": temperature, "max_actions": max_actions}}


def _decode(raw) -> str:
    try:
        reply = json.loads(raw) if isinstance(raw, (str, bytes)) else raw
    except json.JSONDecodeError as exc:
        raise MalformedReply(f"reply is not JSON: {exc}") from exc
    if not isinstance(reply, dict) or not isinstance(reply.get("output"), str):
        raise MalformedReply("reply lacks a string 'output' field")
    return reply["output"]


def _pipe(command: str, request: dict, timeout: float) -> str:
    line = json.dumps(request) + "\n"
    try:
        proc = subprocess.run(shlex.split(command), input=line, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise Timeout(f"pipe agent exceeded {timeout} s") from exc
    except OSError as exc:
        raise Timeout(f"pipe agent could not be started: {exc}") from exc
    first = proc.stdout.strip().splitlines()
    if not first:
        raise MalformedReply(f"pipe agent wrote nothing (exit {proc.returncode})")
    return _decode(first[0])


def _http(url: str, request: dict, timeout: float) -> str:
    data = json.dumps(request).encode()
    req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise Timeout(f"agent endpoint {url} unreachable: {exc}") from exc
    return _decode(body)


def exchange(endpoint: Endpoint, request: dict, timeout: float = 60.0) -> str:
    """Send one request and return the reply's ``output`` text."""
    if endpoint is None:
        raise Timeout("no agent endpoint configured")
    if callable(endpoint):
        return _decode(endpoint(request))
    if endpoint.startswith("pipe:"):
        return _pipe(endpoint[len("pipe:"):], request, timeout)
    if endpoint.startswith(("http://", "https://")):
        return _http(endpoint, request, timeout)
    raise Timeout(f"unsupported endpoint {endpoint!r}")
