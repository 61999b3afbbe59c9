"""Framed binary protocol for external gradient providers.

Request (all integers little-endian)::

    "PGRD" | version u8 = 1 | op u8 = 1 (forward + gradient)
    W u32 | H u32 | K u32 | L_d u32 | L_i u32 (0xFFFFFFFF when absent)
    W*H*3 float32 pixels, row-major, RGB interleaved

Reply::

    "PGRR" | status u8
    status 0: K float32 probabilities, then W*H*3 float32 values of dC/dI
    other statuses carry no payload

A provider is any process that reads requests on its standard input (or a
socket) and writes replies.  ``python -m paramball.protocol`` runs one backed
by a saved toy classifier, or an echo provider that returns zero gradients.
"""

import argparse
import os
import select
import socket
import struct
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np

from .errors import MalformedFrameError, ProviderFailure, ProviderTimeout

REQUEST_MAGIC = b"PGRD"
REPLY_MAGIC = b"PGRR"
VERSION = 1
OP_FORWARD_GRAD = 1
NO_TARGET = 0xFFFFFFFF
_HEADER = struct.Struct("<4sBB5I")

STATUS_OK = 0
STATUS_MALFORMED = 1
STATUS_BAD_DIMS = 2
STATUS_FAILURE = 3

# refuse frames that would need absurd allocations
MAX_SIDE = 1 << 14
MAX_PIXELS = 1 << 24
MAX_CLASSES = 1 << 16


@dataclass
class GradientRequest:
    image: np.ndarray  # (H, W, 3) float32
    n_classes: int
    label: int
    target: int = None

    @property
    def width(self):
        return self.image.shape[1]

    @property
    def height(self):
        return self.image.shape[0]


@dataclass
class GradientReply:
    status: int
    probs: np.ndarray = None  # (K,) float32
    grad: np.ndarray = None  # (H, W, 3) float32


def _check_dims(w, h, k, label, target):
    if not (1 <= w <= MAX_SIDE and 1 <= h <= MAX_SIDE and w * h <= MAX_PIXELS):
        raise MalformedFrameError(f"image size {w}x{h} out of range")
    if not 1 <= k <= MAX_CLASSES:
        raise MalformedFrameError(f"class count {k} out of range")
    if label >= k:
        raise MalformedFrameError(f"label {label} >= class count {k}")
    if target != NO_TARGET and target >= k:
        raise MalformedFrameError(f"target {target} >= class count {k}")


def encode_request(req):
    img = np.ascontiguousarray(req.image, dtype="<f4")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("request image must be (H, W, 3)")
    h, w = img.shape[:2]
    target = NO_TARGET if req.target is None else int(req.target)
    _check_dims(w, h, int(req.n_classes), int(req.label), target)
    head = _HEADER.pack(REQUEST_MAGIC, VERSION, OP_FORWARD_GRAD, w, h, int(req.n_classes), int(req.label), target)
    return head + img.tobytes()


def parse_request_header(head):
    if len(head) < _HEADER.size:
        raise MalformedFrameError(f"truncated header: {len(head)} of {_HEADER.size} bytes")
    magic, version, op, w, h, k, label, target = _HEADER.unpack(head[: _HEADER.size])
    if magic != REQUEST_MAGIC:
        raise MalformedFrameError(f"bad request magic {magic!r}")
    if version != VERSION:
        raise MalformedFrameError(f"unsupported version {version}")
    if op != OP_FORWARD_GRAD:
        raise MalformedFrameError(f"unsupported operation {op}")
    _check_dims(w, h, k, label, target)
    return w, h, k, label, target


def decode_request(data):
    """Parse one complete request frame; trailing bytes are an error."""
    w, h, k, label, target = parse_request_header(data)
    n = _HEADER.size + 12 * w * h
    if len(data) != n:
        raise MalformedFrameError(f"request frame is {len(data)} bytes, expected {n}")
    img = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w, 3)
    return GradientRequest(img.astype(np.float32), k, label, None if target == NO_TARGET else target)


def encode_reply(reply, width=None, height=None, n_classes=None):
    if reply.status != STATUS_OK:
        return REPLY_MAGIC + bytes([reply.status])
    probs = np.ascontiguousarray(reply.probs, dtype="<f4").reshape(-1)
    grad = np.ascontiguousarray(reply.grad, dtype="<f4")
    if n_classes is not None and len(probs) != n_classes:
        raise ValueError(f"{len(probs)} probabilities for {n_classes} classes")
    if width is not None and grad.shape != (height, width, 3):
        raise ValueError(f"gradient shape {grad.shape} does not match request {(height, width, 3)}")
    return REPLY_MAGIC + bytes([STATUS_OK]) + probs.tobytes() + grad.tobytes()


def decode_reply(data, width, height, n_classes):
    if len(data) < 5:
        raise MalformedFrameError("truncated reply header")
    if data[:4] != REPLY_MAGIC:
        raise MalformedFrameError(f"bad reply magic {data[:4]!r}")
    status = data[4]
    if status != STATUS_OK:
        if len(data) != 5:
            raise MalformedFrameError("error reply carries a payload")
        return GradientReply(status)
    n = 5 + 4 * n_classes + 12 * width * height
    if len(data) != n:
        raise MalformedFrameError(f"reply frame is {len(data)} bytes, expected {n}")
    probs = np.frombuffer(data, dtype="<f4", count=n_classes, offset=5).astype(np.float32)
    grad = np.frombuffer(data, dtype="<f4", offset=5 + 4 * n_classes).reshape(height, width, 3).astype(np.float32)
    return GradientReply(STATUS_OK, probs, grad)


def reply_size(status, width, height, n_classes):
    return 5 + (4 * n_classes + 12 * width * height if status == STATUS_OK else 0)


# ---------------------------------------------------------------------------
# Byte streams


class _Stream:
    """Exact reads with a deadline over a pipe pair or a socket."""

    def __init__(self, read_fd=None, write_fd=None, sock=None, timeout=30.0):
        """``timeout=None`` blocks indefinitely."""
        self.read_fd = read_fd
        self.write_fd = write_fd
        self.sock = sock
        self.timeout = timeout

    def send(self, data):
        if self.sock is not None:
            self.sock.settimeout(self.timeout)
            try:
                self.sock.sendall(data)
            except socket.timeout:
                raise ProviderTimeout("timed out sending request") from None
            return
        view = memoryview(data)
        while view:
            n = os.write(self.write_fd, view)
            view = view[n:]

    def recv_exact(self, n, allow_eof=False):
        buf = bytearray()
        deadline = None if self.timeout is None else time.monotonic() + self.timeout
        while len(buf) < n:
            left = None if deadline is None else deadline - time.monotonic()
            if left is not None and left <= 0:
                raise ProviderTimeout(f"timed out after {self.timeout}s waiting for {n - len(buf)} bytes")
            if self.sock is not None:
                self.sock.settimeout(left)
                try:
                    chunk = self.sock.recv(n - len(buf))
                except socket.timeout:
                    raise ProviderTimeout(f"timed out after {self.timeout}s") from None
            else:
                ready, _, _ = select.select([self.read_fd], [], [], left)
                if not ready:
                    continue
                chunk = os.read(self.read_fd, n - len(buf))
            if not chunk:
                if allow_eof and not buf:
                    return b""
                raise MalformedFrameError(f"stream closed after {len(buf)} of {n} bytes")
            buf += chunk
        return bytes(buf)


def read_request(stream):
    """Read one request frame from a stream; None on clean end of stream."""
    head = stream.recv_exact(_HEADER.size, allow_eof=True)
    if not head:
        return None
    w, h, *_ = parse_request_header(head)
    body = stream.recv_exact(12 * w * h)
    return decode_request(head + body)


def exchange(stream, req):
    """Send a request and read its reply."""
    stream.send(encode_request(req))
    head = stream.recv_exact(5)
    if head[:4] != REPLY_MAGIC:
        raise MalformedFrameError(f"bad reply magic {head[:4]!r}")
    rest = stream.recv_exact(reply_size(head[4], req.width, req.height, req.n_classes) - 5)
    return decode_reply(head + rest, req.width, req.height, req.n_classes)


def external_grad(endpoint, request):
    """Round-trip one request to a provider; non-zero status raises :class:`ProviderFailure`."""
    stream = endpoint.stream if hasattr(endpoint, "stream") else endpoint
    reply = exchange(stream, request)
    if reply.status != STATUS_OK:
        raise ProviderFailure(reply.status)
    return reply


class _ProviderBase:
    """Classifier handle backed by an external provider."""

    n_classes: int

    def evaluate(self, image, label, target=None):
        req = GradientRequest(np.asarray(image, dtype=np.float32), self.n_classes, label, target)
        reply = external_grad(self, req)
        return reply.probs.astype(float), reply.grad.astype(float)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessProvider(_ProviderBase):
    """Provider speaking the protocol over a child process's stdin/stdout."""

    def __init__(self, argv, n_classes, timeout=30.0):
        self.n_classes = int(n_classes)
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
        self.stream = _Stream(self.proc.stdout.fileno(), self.proc.stdin.fileno(), timeout=timeout)

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self.proc.stdout.close()


class SocketProvider(_ProviderBase):
    def __init__(self, address, n_classes, timeout=30.0):
        self.n_classes = int(n_classes)
        self.sock = socket.create_connection(address, timeout=timeout)
        self.stream = _Stream(sock=self.sock, timeout=timeout)

    def close(self):
        self.sock.close()


def connect(endpoint, n_classes, timeout=30.0):
    """``host:port`` connects a socket; anything else is a command line to spawn."""
    if isinstance(endpoint, str) and ":" in endpoint and " " not in endpoint:
        host, port = endpoint.rsplit(":", 1)
        if port.isdigit():
            return SocketProvider((host, int(port)), n_classes, timeout)
    argv = endpoint.split() if isinstance(endpoint, str) else list(endpoint)
    return SubprocessProvider(argv, n_classes, timeout)


# ---------------------------------------------------------------------------
# Serving


def classifier_handler(clf):
    """Loopback handler: the toy classifier evaluated on the float32 request pixels."""

    def handle(req):
        if req.image.shape != clf.image_shape or req.n_classes != clf.n_classes:
            return GradientReply(STATUS_BAD_DIMS)
        probs, grad = clf.evaluate(req.image.astype(float), req.label, req.target)
        return GradientReply(STATUS_OK, probs.astype(np.float32), grad.astype(np.float32))

    return handle


def echo_handler(req):
    """Uniform probabilities and an all-zero gradient."""
    k = req.n_classes
    return GradientReply(STATUS_OK, np.full(k, 1.0 / k, np.float32), np.zeros(req.image.shape, np.float32))


def serve(handler, stream):
    """Answer requests until the peer closes the stream.

    A malformed request is answered with status 1 and ends the session, since
    the stream can no longer be resynchronized.
    """
    while True:
        try:
            req = read_request(stream)
        except MalformedFrameError:
            stream.send(encode_reply(GradientReply(STATUS_MALFORMED)))
            return
        if req is None:
            return
        try:
            reply = handler(req)
            data = encode_reply(reply, req.width, req.height, req.n_classes)
        except Exception:
            data = encode_reply(GradientReply(STATUS_FAILURE))
        stream.send(data)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Serve classifier gradients over the PGRD protocol")
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--classifier", help="saved toy classifier (.npz)")
    src.add_argument("--echo", action="store_true", help="reply with zero gradients")
    parser.add_argument("--port", type=int, help="listen on localhost:PORT instead of stdio")
    args = parser.parse_args(argv)
    if args.echo:
        handler = echo_handler
    else:
        from .classifier import ToyClassifier

        handler = classifier_handler(ToyClassifier.load(args.classifier))
    if args.port is None:
        serve(handler, _Stream(sys.stdin.fileno(), sys.stdout.fileno(), timeout=None))
        return 0
    with socket.create_server(("127.0.0.1", args.port)) as srv:
        while True:
            conn, _ = srv.accept()
            with conn:
                serve(handler, _Stream(sock=conn, timeout=None))


if __name__ == "__main__":
    sys.exit(main())

